// eend_gla/binary_io.h
//
// Little-endian helpers shared by the GLAW (weights) and GLAF (features)
// file formats.

#ifndef EEND_GLA_BINARY_IO_H_
#define EEND_GLA_BINARY_IO_H_

#include <cstdint>
#include <string>
#include <string_view>

namespace eend_gla {

void AppendU32(std::string *out, std::uint32_t v);
void AppendF32(std::string *out, float v);

std::string ReadFileBytes(const std::string &path);
void WriteFileBytes(const std::string &path, std::string_view bytes);

// Sequential reader that raises DataError naming expected vs. actual byte
// counts on truncation.
class ByteReader {
 public:
  ByteReader(std::string_view bytes, std::string what)
      : bytes_(bytes), what_(std::move(what)) {}

  void ExpectMagic(const char (&magic)[4]);
  std::uint32_t U32();
  float F32();
  // Fails unless at least `n` more bytes are available.
  void Require(std::size_t n) const;
  void ExpectEnd() const;

 private:
  std::string_view bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace eend_gla

#endif  // EEND_GLA_BINARY_IO_H_
