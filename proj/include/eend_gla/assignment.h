// eend_gla/assignment.h
//
// Rectangular linear assignment (Hungarian method with potentials,
// O(n^2 m)). Used for permutation-free losses, permutation alignment of
// streaming chunks and the reference/hypothesis speaker mapping in scoring.

#ifndef EEND_GLA_ASSIGNMENT_H_
#define EEND_GLA_ASSIGNMENT_H_

#include <vector>

#include "eend_gla/core.h"

namespace eend_gla {

// Minimises sum_i cost(i, result[i]) over injective maps rows -> cols.
// Requires rows <= cols. Returns the chosen column for every row.
std::vector<int> MinCostAssignment(const Matrix &cost);

// Same, maximising the total instead. Requires rows <= cols.
std::vector<int> MaxWeightAssignment(const Matrix &weight);

}  // namespace eend_gla

#endif  // EEND_GLA_ASSIGNMENT_H_
