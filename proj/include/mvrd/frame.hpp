#pragma once

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "mvrd/error.hpp"

namespace mvrd {

/// Dense row-major 2-D array. Frames, extracted blocks and residuals are all
/// planes that differ only in their sample type.
template <typename T>
class Plane {
 public:
  using value_type = T;

  Plane() = default;
  Plane(int width, int height, T fill = T{})
      : width_(width), height_(height), data_(checked_area(width, height), fill) {}
  Plane(int width, int height, std::vector<T> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (data_.size() != checked_area(width, height)) {
      throw ValidationError("plane sample count does not match " + std::to_string(width) +
                            "x" + std::to_string(height));
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t area() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int x, int y) noexcept { return data_[std::size_t(y) * width_ + x]; }
  const T& operator()(int x, int y) const noexcept {
    return data_[std::size_t(y) * width_ + x];
  }

  T* row(int y) noexcept { return data_.data() + std::size_t(y) * width_; }
  const T* row(int y) const noexcept { return data_.data() + std::size_t(y) * width_; }

  std::vector<T>& samples() noexcept { return data_; }
  const std::vector<T>& samples() const noexcept { return data_; }

  friend bool operator==(const Plane&, const Plane&) = default;

 private:
  static std::size_t checked_area(int width, int height) {
    if (width <= 0 || height <= 0) {
      throw ValidationError("plane dimensions must be positive, got " + std::to_string(width) +
                            "x" + std::to_string(height));
    }
    return std::size_t(width) * std::size_t(height);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

/// 8-bit single-plane (luma) picture.
using Frame = Plane<std::uint8_t>;
using Block = Plane<std::uint8_t>;

struct BlockRegion {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  long long area() const noexcept { return (long long)w * h; }
  int right() const noexcept { return x + w; }
  int bottom() const noexcept { return y + h; }

  friend bool operator==(const BlockRegion&, const BlockRegion&) = default;
  friend auto operator<=>(const BlockRegion&, const BlockRegion&) = default;
};

inline BlockRegion intersect(const BlockRegion& a, const BlockRegion& b) noexcept {
  const int x0 = std::max(a.x, b.x);
  const int y0 = std::max(a.y, b.y);
  const int x1 = std::min(a.right(), b.right());
  const int y1 = std::min(a.bottom(), b.bottom());
  if (x1 <= x0 || y1 <= y0) return {x0, y0, 0, 0};
  return {x0, y0, x1 - x0, y1 - y0};
}

template <typename T>
BlockRegion bounds(const Plane<T>& p) noexcept {
  return {0, 0, p.width(), p.height()};
}

// ---------------------------------------------------------------------------
// CTU grid

/// Raster-ordered CTU tiling of a frame. Border CTUs are clipped.
class CtuGrid {
 public:
  CtuGrid() = default;
  CtuGrid(int frame_width, int frame_height, int ctu_size)
      : frame_width_(frame_width),
        frame_height_(frame_height),
        ctu_size_(ctu_size),
        cols_((frame_width + ctu_size - 1) / ctu_size),
        rows_((frame_height + ctu_size - 1) / ctu_size) {}

  int ctu_size() const noexcept { return ctu_size_; }
  int cols() const noexcept { return cols_; }
  int rows() const noexcept { return rows_; }
  int count() const noexcept { return cols_ * rows_; }
  int frame_width() const noexcept { return frame_width_; }
  int frame_height() const noexcept { return frame_height_; }

  int col_of(int k) const noexcept { return k % cols_; }
  int row_of(int k) const noexcept { return k / cols_; }
  int index(int col, int row) const noexcept { return row * cols_ + col; }

  BlockRegion region(int k) const noexcept {
    const int x = col_of(k) * ctu_size_;
    const int y = row_of(k) * ctu_size_;
    return {x, y, std::min(ctu_size_, frame_width_ - x), std::min(ctu_size_, frame_height_ - y)};
  }

  bool adjacent(int i, int j) const noexcept {
    if (i < 0 || j < 0 || i >= count() || j >= count()) return false;
    const int dc = std::abs(col_of(i) - col_of(j));
    const int dr = std::abs(row_of(i) - row_of(j));
    return dc + dr == 1;
  }

  /// 4-neighbours of k in the order left, top, right, bottom (missing ones skipped).
  std::vector<int> neighbours(int k) const {
    std::vector<int> out;
    const int c = col_of(k), r = row_of(k);
    if (c > 0) out.push_back(k - 1);
    if (r > 0) out.push_back(k - cols_);
    if (c + 1 < cols_) out.push_back(k + 1);
    if (r + 1 < rows_) out.push_back(k + cols_);
    return out;
  }

 private:
  int frame_width_ = 0;
  int frame_height_ = 0;
  int ctu_size_ = 0;
  int cols_ = 0;
  int rows_ = 0;
};

inline CtuGrid partition_ctus(int frame_width, int frame_height, int ctu_size) {
  if (ctu_size != 16 && ctu_size != 32 && ctu_size != 64 && ctu_size != 128) {
    throw ValidationError("ctu size must be one of 16, 32, 64, 128 (got " +
                          std::to_string(ctu_size) + ")");
  }
  if (ctu_size > frame_width && ctu_size > frame_height) {
    throw ValidationError("ctu size " + std::to_string(ctu_size) + " exceeds both frame dimensions " +
                          std::to_string(frame_width) + "x" + std::to_string(frame_height));
  }
  return CtuGrid(frame_width, frame_height, ctu_size);
}

inline CtuGrid partition_ctus(const Frame& frame, int ctu_size) {
  return partition_ctus(frame.width(), frame.height(), ctu_size);
}

// ---------------------------------------------------------------------------
// Block extraction

/// Copies `region` out of `src`. With `pad` set, samples outside the plane take
/// the value of the nearest edge sample; without it the region must lie inside.
template <typename T>
Plane<T> extract_block(const Plane<T>& src, const BlockRegion& region, bool pad) {
  if (region.w <= 0 || region.h <= 0) {
    throw ValidationError("cannot extract a zero-area block");
  }
  const bool inside = region.x >= 0 && region.y >= 0 && region.right() <= src.width() &&
                      region.bottom() <= src.height();
  if (!inside && !pad) {
    throw ValidationError("block region (" + std::to_string(region.x) + "," +
                          std::to_string(region.y) + "," + std::to_string(region.w) + "," +
                          std::to_string(region.h) + ") leaves the frame and padding is off");
  }
  Plane<T> out(region.w, region.h);
  if (inside) {
    for (int y = 0; y < region.h; ++y) {
      const T* s = src.row(region.y + y) + region.x;
      std::copy(s, s + region.w, out.row(y));
    }
    return out;
  }
  for (int y = 0; y < region.h; ++y) {
    const T* s = src.row(std::clamp(region.y + y, 0, src.height() - 1));
    T* d = out.row(y);
    for (int x = 0; x < region.w; ++x) d[x] = s[std::clamp(region.x + x, 0, src.width() - 1)];
  }
  return out;
}

/// Writes `block` into `dst` at (x, y); parts falling outside `dst` are dropped.
template <typename T>
void paste_block(Plane<T>& dst, const Plane<T>& block, int x, int y) {
  const BlockRegion r = intersect(bounds(dst), {x, y, block.width(), block.height()});
  for (int yy = r.y; yy < r.bottom(); ++yy) {
    const T* s = block.row(yy - y) + (r.x - x);
    std::copy(s, s + r.w, dst.row(yy) + r.x);
  }
}

// ---------------------------------------------------------------------------
// PGM / PPM input and PGM output

enum class ImageErrorKind { unsupported_format, malformed_header, truncated_payload, bad_maxval };

class ImageError : public IoError {
 public:
  ImageError(ImageErrorKind kind, const std::string& what) : IoError(what), kind_(kind) {}
  ImageErrorKind kind() const noexcept { return kind_; }

 private:
  ImageErrorKind kind_;
};

namespace detail {

class HeaderReader {
 public:
  explicit HeaderReader(const std::string& bytes) : bytes_(bytes) {}

  void skip_space_and_comment(bool allow_comment) {
    skip_space();
    if (allow_comment && pos_ < bytes_.size() && bytes_[pos_] == '#') {
      while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      skip_space();
    }
  }

  int read_uint(const char* field) {
    if (pos_ >= bytes_.size() || !std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      throw ImageError(ImageErrorKind::malformed_header, std::string("missing ") + field);
    }
    long long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      v = v * 10 + (bytes_[pos_++] - '0');
      if (v > (1 << 24)) {
        throw ImageError(ImageErrorKind::malformed_header, std::string(field) + " too large");
      }
    }
    return int(v);
  }

  // Exactly one whitespace byte separates maxval from the raster.
  void expect_single_space() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      throw ImageError(ImageErrorKind::malformed_header, "missing separator before raster");
    }
    ++pos_;
  }

  std::size_t position() const noexcept { return pos_; }

 private:
  void skip_space() {
    while (pos_ < bytes_.size() && std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
  }

  const std::string& bytes_;
  std::size_t pos_ = 2;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace detail

/// BT.601 luma with integer rounding.
inline std::uint8_t rgb_to_luma(int r, int g, int b) noexcept {
  return std::uint8_t((299 * r + 587 * g + 114 * b + 500) / 1000);
}

/// Parses binary PGM (P5). Binary PPM (P6) is accepted and converted to luma.
inline Frame decode_pnm(const std::string& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P') {
    throw ImageError(ImageErrorKind::unsupported_format, "unsupported format: not a PNM file");
  }
  const char magic = bytes[1];
  if (magic != '5' && magic != '6') {
    throw ImageError(ImageErrorKind::unsupported_format,
                     std::string("unsupported format: P") + magic + " (only binary P5/P6)");
  }
  detail::HeaderReader hdr(bytes);
  hdr.skip_space_and_comment(true);
  const int width = hdr.read_uint("width");
  hdr.skip_space_and_comment(false);
  const int height = hdr.read_uint("height");
  hdr.skip_space_and_comment(false);
  const int maxval = hdr.read_uint("maxval");
  if (width <= 0 || height <= 0) {
    throw ImageError(ImageErrorKind::malformed_header, "image dimensions must be positive");
  }
  if (maxval != 255) {
    throw ImageError(ImageErrorKind::bad_maxval,
                     "maxval must be 255, got " + std::to_string(maxval));
  }
  hdr.expect_single_space();

  const std::size_t channels = magic == '6' ? 3 : 1;
  const std::size_t need = std::size_t(width) * height * channels;
  const std::size_t have = bytes.size() - hdr.position();
  if (have < need) {
    throw ImageError(ImageErrorKind::truncated_payload,
                     "truncated raster: expected " + std::to_string(need) + " bytes, found " +
                         std::to_string(have));
  }
  const auto* p = reinterpret_cast<const std::uint8_t*>(bytes.data() + hdr.position());
  std::vector<std::uint8_t> samples(std::size_t(width) * height);
  if (channels == 1) {
    std::copy(p, p + samples.size(), samples.begin());
  } else {
    for (std::size_t i = 0; i < samples.size(); ++i) {
      samples[i] = rgb_to_luma(p[3 * i], p[3 * i + 1], p[3 * i + 2]);
    }
  }
  return Frame(width, height, std::move(samples));
}

inline std::string encode_pgm(const Frame& frame) {
  std::string out = "P5\n" + std::to_string(frame.width()) + " " +
                    std::to_string(frame.height()) + "\n255\n";
  out.append(reinterpret_cast<const char*>(frame.samples().data()), frame.samples().size());
  return out;
}

inline Frame load_image(const std::string& path) { return decode_pnm(detail::read_file(path)); }

inline void store_image(const Frame& frame, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  const std::string bytes = encode_pgm(frame);
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw IoError("short write to " + path);
}

}  // namespace mvrd
