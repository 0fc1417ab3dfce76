#include <cmath>
#include <random>

#include "doctest.h"
#include "eend_gla/core.h"

using namespace eend_gla;

TEST_CASE("posteriors are sigmoids of dot products") {
  EmbeddingMatrix e(2, 3);
  e << 1, 2, 3, 4, 5, 6;
  AttractorSet a;
  a.vectors = {Vector::Zero(2)};
  a.existence = {0.9};
  PosteriorMatrix p = Posteriors(e, a, 1);
  CHECK(p.rows() == 1);
  for (int t = 0; t < 3; ++t) CHECK(p(0, t) == 0.5);

  EmbeddingMatrix e1(1, 1);
  e1 << 1;
  AttractorSet a1{{Vector::Constant(1, 2.0)}, {0.9}};
  CHECK(Posteriors(e1, a1, 1)(0, 0) == doctest::Approx(0.8807970779778823).epsilon(1e-12));

  PosteriorMatrix empty = Posteriors(e, a, 0);
  CHECK(empty.rows() == 0);
  CHECK(empty.cols() == 3);
}

TEST_CASE("posteriors reject bad shapes") {
  EmbeddingMatrix e = EmbeddingMatrix::Zero(3, 2);
  AttractorSet a{{Vector::Zero(2)}, {0.9}};
  CHECK_THROWS_AS(Posteriors(e, a, 1), std::invalid_argument);
  AttractorSet ok{{Vector::Zero(3)}, {0.9}};
  CHECK_THROWS_AS(Posteriors(e, ok, 2), std::invalid_argument);
}

TEST_CASE("posteriors are monotone in the dot product") {
  EmbeddingMatrix e(1, 5);
  e << -2, -1, 0, 1, 2;
  AttractorSet a{{Vector::Constant(1, 1.5)}, {0.9}};
  PosteriorMatrix p = Posteriors(e, a, 1);
  for (int t = 1; t < 5; ++t) CHECK(p(0, t) > p(0, t - 1));
}

TEST_CASE("sigmoid is stable at extremes") {
  CHECK(Sigmoid(800) == 1.0);
  CHECK(Sigmoid(-800) >= 0.0);
  CHECK(std::isfinite(Sigmoid(-800)));
  CHECK(Sigmoid(-30) > 0.0);
  CHECK(Sigmoid(1.0) + Sigmoid(-1.0) == doctest::Approx(1.0));
}

TEST_CASE("existence probabilities") {
  LinearHead zero{Vector::Zero(2), 0.0};
  std::vector<Vector> a = {Vector::Constant(2, 3.0), Vector::Constant(2, -1.0)};
  for (double z : ExistenceProbs(a, zero)) CHECK(z == 0.5);

  LinearHead head{Vector(2), 0.0};
  head.weight << 1, 0;
  Vector v(2);
  v << 3, 5;
  std::vector<Vector> one = {v};
  CHECK(ExistenceProbs(one, head)[0] == doctest::Approx(0.9525741268224334).epsilon(1e-12));
  CHECK(ExistenceProbs(std::vector<Vector>{}, head).empty());

  std::vector<Vector> wrong = {Vector::Zero(3)};
  CHECK_THROWS_AS(ExistenceProbs(wrong, head), std::invalid_argument);
}

TEST_CASE("speaker counting stops at the first sub-threshold probability") {
  std::vector<double> a = {0.9, 0.8, 0.3};
  CHECK(CountSpeakers(a).count == 2);
  CHECK_FALSE(CountSpeakers(a).saturated);
  std::vector<double> b = {0.3};
  CHECK(CountSpeakers(b).count == 0);
  std::vector<double> c = {0.9, 0.2, 0.7};
  CHECK(CountSpeakers(c).count == 1);
  std::vector<double> d = {0.9, 0.5, 0.7};
  CHECK(CountSpeakers(d).count == 3);
  CHECK(CountSpeakers(d).saturated);
  CHECK(CountSpeakers(std::vector<double>{}).count == 0);
}

TEST_CASE("speaker count never exceeds the list and saturates only when all pass") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> z(trial % 7);
    for (double &x : z) x = u(rng);
    SpeakerCount c = CountSpeakers(z);
    CHECK(c.count <= static_cast<int>(z.size()));
    bool all = std::all_of(z.begin(), z.end(), [](double x) { return x >= 0.5; });
    CHECK((c.count == static_cast<int>(z.size())) == all);
  }
}

TEST_CASE("matrix correlation") {
  Matrix i2 = Matrix::Identity(2, 2);
  Matrix swap(2, 2);
  swap << 0, 1, 1, 0;
  CHECK(MatrixCorrelation(i2, i2) == doctest::Approx(1.0));
  CHECK(MatrixCorrelation(i2, swap) == doctest::Approx(-1.0));
  Matrix c = Matrix::Constant(2, 2, 0.7);
  CHECK(MatrixCorrelation(c, swap) == 0.0);
  CHECK_THROWS_AS(MatrixCorrelation(i2, Matrix::Zero(2, 3)), std::invalid_argument);
}

TEST_CASE("matrix correlation symmetry and row-permutation invariance of means") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix a(4, 7), b(4, 7);
    for (int i = 0; i < a.size(); ++i) {
      a.data()[i] = u(rng);
      b.data()[i] = u(rng);
    }
    CHECK(MatrixCorrelation(a, b) == MatrixCorrelation(b, a));
    std::vector<int> perm = {2, 0, 3, 1};
    Matrix pb(4, 7);
    for (int i = 0; i < 4; ++i) pb.row(i) = b.row(perm[i]);
    CHECK(pb.mean() == doctest::Approx(b.mean()).epsilon(1e-14));
  }
}

TEST_CASE("pad speakers") {
  Matrix y(2, 3);
  y << 1, 2, 3, 4, 5, 6;
  CHECK(PadSpeakers(y, 2) == y);
  Matrix one(1, 3);
  one << 7, 8, 9;
  Matrix p = PadSpeakers(one, 3);
  CHECK(p.rows() == 3);
  CHECK(p.row(0) == one.row(0));
  CHECK(p.bottomRows(2).isZero());
  Matrix z = PadSpeakers(Matrix(0, 4), 1);
  CHECK(z.rows() == 1);
  CHECK(z.cols() == 4);
  CHECK(z.isZero());
  CHECK_THROWS_AS(PadSpeakers(y, 1), std::invalid_argument);
  CHECK(PadSpeakers(y, 5).topRows(2) == y);
}

TEST_CASE("binarize uses >=") {
  PosteriorMatrix p = PosteriorMatrix::Constant(2, 3, 0.9);
  CHECK((Binarize(p, 0.5).array() == 1).all());
  PosteriorMatrix h(1, 2);
  h << 0.5, 0.4999;
  ActivityMatrix b = Binarize(h, 0.5);
  CHECK(b(0, 0) == 1);
  CHECK(b(0, 1) == 0);
  CHECK(Binarize(PosteriorMatrix(0, 0), 0.5).size() == 0);
}

TEST_CASE("activity to segments and back") {
  ActivityMatrix y(1, 4);
  y << 0, 1, 1, 0;
  SegmentAnnotation ann = ActivityToSegments(y, 0.1, {"A"});
  REQUIRE(ann.segments.size() == 1);
  CHECK(ann.segments[0].speaker == "A");
  CHECK(ann.segments[0].onset == doctest::Approx(0.1));
  CHECK(ann.segments[0].offset == doctest::Approx(0.3));

  ActivityMatrix silent = ActivityMatrix::Zero(1, 5);
  CHECK(ActivityToSegments(silent, 0.1, {"A"}).segments.empty());

  std::mt19937_64 rng(3);
  std::bernoulli_distribution coin(0.4);
  for (int trial = 0; trial < 100; ++trial) {
    ActivityMatrix r(3, 37);
    for (int i = 0; i < r.size(); ++i) r.data()[i] = coin(rng);
    std::vector<std::string> labels = {"x", "y", "z"};
    SegmentAnnotation a = ActivityToSegments(r, 0.1, labels);
    CHECK(SegmentsToActivity(a, 0.1, 37, labels) == r);
  }
}

TEST_CASE("segments to activity uses the frame centre") {
  SegmentAnnotation ann{"rec", {{"A", 0.14, 0.26}}};
  ActivityMatrix a = SegmentsToActivity(ann, 0.1, 4, {"A"});
  // Centres at 0.05, 0.15, 0.25, 0.35.
  CHECK(a(0, 0) == 0);
  CHECK(a(0, 1) == 1);
  CHECK(a(0, 2) == 1);
  CHECK(a(0, 3) == 0);
  SegmentAnnotation other{"rec", {{"B", 0.0, 0.1}}};
  CHECK_THROWS_AS(SegmentsToActivity(other, 0.1, 4, {"A"}), DataError);
}

TEST_CASE("annotation helpers") {
  SegmentAnnotation ann{"rec", {{"B", 1.0, 2.0}, {"A", 0.5, 3.5}, {"B", 4.0, 4.5}}};
  auto labels = SpeakerLabels(ann);
  REQUIRE(labels.size() == 2);
  CHECK(labels[0] == "B");
  CHECK(labels[1] == "A");
  CHECK(AnnotationEnd(ann) == 4.5);
  CHECK_NOTHROW(ValidateAnnotation(ann));
  SegmentAnnotation bad{"rec", {{"A", 2.0, 2.0}}};
  CHECK_THROWS_AS(ValidateAnnotation(bad), DataError);
  SegmentAnnotation neg{"rec", {{"A", -1.0, 2.0}}};
  CHECK_THROWS_AS(ValidateAnnotation(neg), DataError);
}
