#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include "mvrd/error.hpp"
#include "mvrd/codec/transform.hpp"

namespace mvrd {

class BitWriter {
 public:
  void put_bit(unsigned bit) {
    if (bits_ % 8 == 0) bytes_.push_back(0);
    if (bit) bytes_.back() |= std::uint8_t(0x80u >> (bits_ % 8));
    ++bits_;
  }
  void put_bits(std::uint64_t value, int count) {
    for (int i = count - 1; i >= 0; --i) put_bit(unsigned(value >> i) & 1u);
  }

  std::size_t bit_count() const noexcept { return bits_; }
  const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
  std::size_t bits_ = 0;
};

/// Same interface as BitWriter, counting only.
class BitCounter {
 public:
  void put_bit(unsigned) noexcept { ++bits_; }
  void put_bits(std::uint64_t, int count) noexcept { bits_ += std::size_t(count); }
  std::size_t bit_count() const noexcept { return bits_; }

 private:
  std::size_t bits_ = 0;
};

class MalformedStream : public ValidationError {
 public:
  explicit MalformedStream(const std::string& what) : ValidationError("malformed stream: " + what) {}
};

class BitReader {
 public:
  BitReader(const std::uint8_t* data, std::size_t bit_length) : data_(data), length_(bit_length) {}

  unsigned get_bit() {
    if (pos_ >= length_) throw MalformedStream("read past end of payload");
    const unsigned b = (data_[pos_ / 8] >> (7 - pos_ % 8)) & 1u;
    ++pos_;
    return b;
  }
  std::uint64_t get_bits(int count) {
    std::uint64_t v = 0;
    for (int i = 0; i < count; ++i) v = (v << 1) | get_bit();
    return v;
  }

  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return length_ - pos_; }

 private:
  const std::uint8_t* data_;
  std::size_t length_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Exp-Golomb and unary codes

inline int ue_length(std::uint64_t v) noexcept {
  return 2 * (std::bit_width(v + 1) - 1) + 1;
}

inline std::uint64_t se_to_ue(long long v) noexcept {
  return v > 0 ? std::uint64_t(2 * v - 1) : std::uint64_t(-2 * v);
}

inline int se_length(long long v) noexcept { return ue_length(se_to_ue(v)); }

template <typename Sink>
void put_ue(Sink& out, std::uint64_t v) {
  const int len = std::bit_width(v + 1);
  out.put_bits(0, len - 1);
  out.put_bits(v + 1, len);
}

template <typename Sink>
void put_se(Sink& out, long long v) {
  put_ue(out, se_to_ue(v));
}

inline std::uint64_t get_ue(BitReader& in) {
  int zeros = 0;
  while (in.get_bit() == 0) {
    if (++zeros > 62) throw MalformedStream("exp-Golomb prefix too long");
  }
  return ((std::uint64_t(1) << zeros) | in.get_bits(zeros)) - 1;
}

inline long long get_se(BitReader& in) {
  const std::uint64_t u = get_ue(in);
  return (u & 1) ? (long long)((u + 1) / 2) : -(long long)(u / 2);
}

/// n zeros terminated by a one.
template <typename Sink>
void put_unary(Sink& out, int n) {
  out.put_bits(0, n);
  out.put_bit(1);
}

inline int get_unary(BitReader& in, int limit) {
  int n = 0;
  while (in.get_bit() == 0) {
    if (++n > limit) throw MalformedStream("zero run exceeds block size");
  }
  return n;
}

// ---------------------------------------------------------------------------
// Coefficient blocks

/// Zigzag scan positions (raster indices) of an n x n block.
inline const std::vector<int>& zigzag_order(int n) {
  static const std::array<std::vector<int>, 7> orders = [] {
    std::array<std::vector<int>, 7> o;
    for (int log2n = 2; log2n <= 6; ++log2n) {
      const int size = 1 << log2n;
      std::vector<int>& v = o[log2n];
      for (int d = 0; d < 2 * size - 1; ++d) {
        for (int t = 0; t <= d; ++t) {
          const int row = (d % 2 == 0) ? d - t : t;
          const int col = d - row;
          if (row < size && col < size) v.push_back(row * size + col);
        }
      }
    }
    return o;
  }();
  if (!valid_transform_size(n)) throw ValidationError("unsupported block size " + std::to_string(n));
  return orders[std::countr_zero(unsigned(n))];
}

/// Each non-zero level in zigzag order is coded as: flag 1, unary zero-run,
/// signed exp-Golomb level. A flag 0 ends the block.
template <typename Sink>
void put_coefficients(Sink& out, const Coefficients& levels) {
  int run = 0;
  for (int pos : zigzag_order(levels.width())) {
    const int v = levels.samples()[pos];
    if (v == 0) {
      ++run;
      continue;
    }
    out.put_bit(1);
    put_unary(out, run);
    put_se(out, v);
    run = 0;
  }
  out.put_bit(0);
}

inline std::size_t coefficient_bits(const Coefficients& levels) {
  BitCounter c;
  put_coefficients(c, levels);
  return c.bit_count();
}

inline Coefficients get_coefficients(BitReader& in, int n) {
  Coefficients levels(n, n);
  const std::vector<int>& order = zigzag_order(n);
  std::size_t idx = 0;
  while (in.get_bit() == 1) {
    idx += std::size_t(get_unary(in, n * n));
    if (idx >= order.size()) throw MalformedStream("coefficient position beyond block");
    const long long v = get_se(in);
    if (v == 0) throw MalformedStream("zero level in run/level pair");
    levels.samples()[order[idx]] = int(v);
    ++idx;
  }
  return levels;
}

/// Convenience wrappers over a standalone buffer.
inline std::vector<std::uint8_t> entropy_code(const Coefficients& levels, std::size_t* bit_length = nullptr) {
  BitWriter w;
  put_coefficients(w, levels);
  if (bit_length) *bit_length = w.bit_count();
  return w.bytes();
}

inline Coefficients entropy_decode(const std::vector<std::uint8_t>& bytes, std::size_t bit_length, int n) {
  BitReader r(bytes.data(), bit_length);
  return get_coefficients(r, n);
}

}  // namespace mvrd
