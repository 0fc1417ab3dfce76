// eend_gla/binary_io.cc

#include "eend_gla/binary_io.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "eend_gla/core.h"

namespace eend_gla {

void AppendU32(std::string *out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out->push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void AppendF32(std::string *out, float v) {
  AppendU32(out, std::bit_cast<std::uint32_t>(v));
}

std::string ReadFileBytes(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

void WriteFileBytes(const std::string &path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for '" + path + "'");
}

void ByteReader::Require(std::size_t n) const {
  if (bytes_.size() - pos_ < n) {
    throw DataError(what_ + ": truncated, expected " +
                    std::to_string(pos_ + n) + " bytes, got " +
                    std::to_string(bytes_.size()));
  }
}

void ByteReader::ExpectMagic(const char (&magic)[4]) {
  Require(4);
  if (std::memcmp(bytes_.data() + pos_, magic, 4) != 0) {
    throw DataError(what_ + ": bad magic, expected '" +
                    std::string(magic, 4) + "'");
  }
  pos_ += 4;
}

std::uint32_t ByteReader::U32() {
  Require(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i]))
         << (8 * i);
  }
  pos_ += 4;
  return v;
}

float ByteReader::F32() { return std::bit_cast<float>(U32()); }

void ByteReader::ExpectEnd() const {
  if (pos_ != bytes_.size()) {
    throw DataError(what_ + ": " + std::to_string(bytes_.size() - pos_) +
                    " trailing bytes");
  }
}

}  // namespace eend_gla
