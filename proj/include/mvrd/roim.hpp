#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvrd/error.hpp"
#include "mvrd/frame.hpp"

namespace mvrd {

/// Axis-aligned proposal box in pixel coordinates, half-open on the right/bottom.
struct Box {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
  std::optional<double> score;

  BlockRegion region() const noexcept { return {x, y, w, h}; }
  friend bool operator==(const Box&, const Box&) = default;
};

/// Region-proposal boxes for one image, clipped to the image at construction.
class BoxSet {
 public:
  BoxSet() = default;
  BoxSet(int image_width, int image_height, const std::vector<Box>& boxes)
      : width_(image_width), height_(image_height) {
    const BlockRegion frame{0, 0, image_width, image_height};
    for (const Box& b : boxes) {
      const BlockRegion c = intersect(frame, b.region());
      if (c.w <= 0 || c.h <= 0) continue;
      boxes_.push_back({c.x, c.y, c.w, c.h, b.score});
    }
  }

  int image_width() const noexcept { return width_; }
  int image_height() const noexcept { return height_; }
  const std::vector<Box>& boxes() const noexcept { return boxes_; }
  bool empty() const noexcept { return boxes_.empty(); }
  std::size_t size() const noexcept { return boxes_.size(); }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<Box> boxes_;
};

/// Pixel count of the intersection; edge-touching rectangles do not overlap.
inline long long overlap_pixels(const BlockRegion& ctu, const BlockRegion& box) noexcept {
  return intersect(ctu, box).area();
}

/// Per-CTU importance: summed box coverage of each CTU, normalised by the
/// largest sum. A pixel inside n boxes counts n times. All zero without overlap.
inline std::vector<double> compute_importance(const CtuGrid& grid, const BoxSet& boxes) {
  std::vector<double> raw(grid.count(), 0.0);
  for (int k = 0; k < grid.count(); ++k) {
    long long sum = 0;
    for (const Box& b : boxes.boxes()) sum += overlap_pixels(grid.region(k), b.region());
    raw[k] = double(sum);
  }
  const double peak = raw.empty() ? 0.0 : *std::max_element(raw.begin(), raw.end());
  if (peak <= 0.0) return std::vector<double>(raw.size(), 0.0);
  for (double& v : raw) v /= peak;
  return raw;
}

/// Shared boundary of two 4-adjacent CTUs, as the two pixel lines meeting at it.
struct CtuBoundary {
  bool horizontal_pair = false;  // CTUs side by side: the boundary runs vertically
  int interface = 0;             // first column (or row) of the right (or lower) CTU
  int start = 0;                 // first boundary row (or column)
  int length = 0;                // L(i, j)
};

inline CtuBoundary shared_boundary(const CtuGrid& grid, int i, int j) {
  if (!grid.adjacent(i, j)) {
    throw ValidationError("CTUs " + std::to_string(i) + " and " + std::to_string(j) +
                          " are not 4-adjacent");
  }
  const BlockRegion a = grid.region(std::min(i, j));
  const BlockRegion b = grid.region(std::max(i, j));
  if (grid.row_of(i) == grid.row_of(j)) return {true, b.x, a.y, a.h};
  return {false, b.y, a.x, a.w};
}

/// Fraction of the shared boundary covered by the union of boxes. A boundary
/// line counts as covered when a box contains it on either side of the interface.
inline double connectivity_between(const CtuGrid& grid, const BoxSet& boxes, int i, int j) {
  const CtuBoundary edge = shared_boundary(grid, i, j);
  std::vector<char> covered(edge.length, 0);
  for (const Box& b : boxes.boxes()) {
    // across: extent perpendicular to the boundary; along: extent parallel to it.
    const int across0 = edge.horizontal_pair ? b.x : b.y;
    const int across1 = across0 + (edge.horizontal_pair ? b.w : b.h);
    if (across0 > edge.interface || across1 < edge.interface) continue;
    const int along0 = edge.horizontal_pair ? b.y : b.x;
    const int along1 = along0 + (edge.horizontal_pair ? b.h : b.w);
    const int lo = std::max(along0, edge.start) - edge.start;
    const int hi = std::min(along1, edge.start + edge.length) - edge.start;
    for (int t = lo; t < hi; ++t) covered[t] = 1;
  }
  const auto hits = std::count(covered.begin(), covered.end(), 1);
  return double(hits) / double(edge.length);
}

/// Importance and connectivity over one CTU grid.
class RoimMap {
 public:
  struct Pair {
    int i = 0;
    int j = 0;
    double value = 0.0;
    friend bool operator==(const Pair&, const Pair&) = default;
  };

  RoimMap() = default;
  RoimMap(int ctu_size, int cols, int rows)
      : ctu_size_(ctu_size),
        cols_(cols),
        rows_(rows),
        importance_(std::size_t(cols) * rows, 0.0),
        horizontal_(std::size_t(std::max(cols - 1, 0)) * rows, 0.0),
        vertical_(std::size_t(cols) * std::max(rows - 1, 0), 0.0) {}

  int ctu_size() const noexcept { return ctu_size_; }
  int cols() const noexcept { return cols_; }
  int rows() const noexcept { return rows_; }
  int count() const noexcept { return cols_ * rows_; }

  double importance(int k) const { return importance_.at(k); }
  const std::vector<double>& importance() const noexcept { return importance_; }
  void set_importance(int k, double v) { importance_.at(k) = checked(v, "importance"); }

  /// Symmetric; throws for pairs that are not 4-adjacent.
  double connectivity(int i, int j) const { return slot(i, j); }
  void set_connectivity(int i, int j, double v) { slot(i, j) = checked(v, "connectivity"); }

  bool adjacent(int i, int j) const noexcept {
    if (i < 0 || j < 0 || i >= count() || j >= count()) return false;
    const int dc = std::abs(i % cols_ - j % cols_);
    const int dr = std::abs(i / cols_ - j / cols_);
    return dc + dr == 1;
  }

  /// Every adjacent pair once, i < j, in raster order of i (right neighbour first).
  std::vector<Pair> pairs() const {
    std::vector<Pair> out;
    for (int k = 0; k < count(); ++k) {
      if (k % cols_ + 1 < cols_) out.push_back({k, k + 1, connectivity(k, k + 1)});
      if (k / cols_ + 1 < rows_) out.push_back({k, k + cols_, connectivity(k, k + cols_)});
    }
    return out;
  }

  bool matches(const CtuGrid& grid) const noexcept {
    return grid.ctu_size() == ctu_size_ && grid.cols() == cols_ && grid.rows() == rows_;
  }

  std::vector<Box>& boxes() noexcept { return boxes_; }
  const std::vector<Box>& boxes() const noexcept { return boxes_; }

  friend bool operator==(const RoimMap&, const RoimMap&) = default;

 private:
  static double checked(double v, const char* what) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ValidationError(std::string(what) + " value " + std::to_string(v) +
                            " outside [0, 1]");
    }
    return v;
  }

  double& slot(int i, int j) {
    return const_cast<double&>(static_cast<const RoimMap&>(*this).slot(i, j));
  }
  const double& slot(int i, int j) const {
    if (!adjacent(i, j)) {
      throw ValidationError("CTUs " + std::to_string(i) + " and " + std::to_string(j) +
                            " are not 4-adjacent");
    }
    const int a = std::min(i, j);
    const int b = std::max(i, j);
    if (b == a + 1 && a / cols_ == b / cols_) return horizontal_[std::size_t(a / cols_) * (cols_ - 1) + a % cols_];
    return vertical_[a];
  }

  int ctu_size_ = 0;
  int cols_ = 0;
  int rows_ = 0;
  std::vector<double> importance_;
  std::vector<double> horizontal_;
  std::vector<double> vertical_;
  std::vector<Box> boxes_;
};

inline RoimMap build_roim(const CtuGrid& grid, const BoxSet& boxes) {
  RoimMap map(grid.ctu_size(), grid.cols(), grid.rows());
  const std::vector<double> imp = compute_importance(grid, boxes);
  for (int k = 0; k < grid.count(); ++k) map.set_importance(k, imp[k]);
  for (const RoimMap::Pair& p : map.pairs()) {
    map.set_connectivity(p.i, p.j, connectivity_between(grid, boxes, p.i, p.j));
  }
  map.boxes() = boxes.boxes();
  return map;
}

/// An importance map with no boxes: allocation degenerates to texture only.
inline RoimMap empty_roim(const CtuGrid& grid) {
  return RoimMap(grid.ctu_size(), grid.cols(), grid.rows());
}

// ---------------------------------------------------------------------------
// JSON documents

namespace detail {

inline int rounded_int(const nlohmann::json& v, const char* field) {
  if (!v.is_number()) throw ValidationError(std::string("field '") + field + "' is not a number");
  return int(std::lround(v.get<double>()));
}

inline nlohmann::json box_to_json(const Box& b) {
  nlohmann::json j{{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}};
  if (b.score) j["score"] = *b.score;
  return j;
}

inline Box box_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("box entry is not an object");
  for (const char* f : {"x", "y", "w", "h"}) {
    if (!j.contains(f)) throw ValidationError(std::string("box entry lacks '") + f + "'");
  }
  // Fractional proposals are snapped edge-wise to the pixel grid.
  const double x = j.at("x").get<double>(), y = j.at("y").get<double>();
  const double w = j.at("w").get<double>(), h = j.at("h").get<double>();
  Box b;
  b.x = int(std::lround(x));
  b.y = int(std::lround(y));
  b.w = int(std::lround(x + w)) - b.x;
  b.h = int(std::lround(y + h)) - b.y;
  if (j.contains("score") && !j.at("score").is_null()) b.score = j.at("score").get<double>();
  return b;
}

inline nlohmann::json parse_json(const std::string& text, const char* what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string(what) + " is not valid JSON: " + e.what());
  }
}

}  // namespace detail

/// Box document: {image_width, image_height, boxes: [{x, y, w, h, score?}]}.
/// Boxes entirely outside the image are dropped; the rest are clipped.
inline BoxSet parse_boxes(const std::string& text) {
  const nlohmann::json doc = detail::parse_json(text, "box document");
  try {
    const int w = detail::rounded_int(doc.at("image_width"), "image_width");
    const int h = detail::rounded_int(doc.at("image_height"), "image_height");
    if (w <= 0 || h <= 0) throw ValidationError("box document has non-positive image size");
    std::vector<Box> boxes;
    for (const auto& b : doc.at("boxes")) boxes.push_back(detail::box_from_json(b));
    return BoxSet(w, h, boxes);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed box document: ") + e.what());
  }
}

inline std::string serialize_boxes(const BoxSet& set) {
  nlohmann::json doc{{"image_width", set.image_width()},
                     {"image_height", set.image_height()},
                     {"boxes", nlohmann::json::array()}};
  for (const Box& b : set.boxes()) doc["boxes"].push_back(detail::box_to_json(b));
  return doc.dump(2);
}

inline BoxSet load_boxes(const std::string& path) { return parse_boxes(detail::read_file(path)); }

/// Doubles are written with round-trip precision (17 significant digits).
inline std::string roim_serialize(const RoimMap& map) {
  nlohmann::json doc{{"ctu_size", map.ctu_size()},
                     {"cols", map.cols()},
                     {"rows", map.rows()},
                     {"importance", map.importance()},
                     {"connectivity", nlohmann::json::array()}};
  for (const RoimMap::Pair& p : map.pairs()) {
    doc["connectivity"].push_back({{"i", p.i}, {"j", p.j}, {"value", p.value}});
  }
  if (!map.boxes().empty()) {
    doc["boxes"] = nlohmann::json::array();
    for (const Box& b : map.boxes()) doc["boxes"].push_back(detail::box_to_json(b));
  }
  return doc.dump(2);
}

inline RoimMap roim_parse(const std::string& text) {
  const nlohmann::json doc = detail::parse_json(text, "ROIM document");
  try {
    const int ctu = doc.at("ctu_size").get<int>();
    const int cols = doc.at("cols").get<int>();
    const int rows = doc.at("rows").get<int>();
    if (ctu <= 0 || cols <= 0 || rows <= 0) {
      throw ValidationError("ROIM grid fields must be positive");
    }
    RoimMap map(ctu, cols, rows);
    const auto& imp = doc.at("importance");
    if (!imp.is_array() || int(imp.size()) != map.count()) {
      throw ValidationError("ROIM importance has " + std::to_string(imp.size()) +
                            " entries, grid needs " + std::to_string(map.count()));
    }
    for (int k = 0; k < map.count(); ++k) map.set_importance(k, imp[k].get<double>());

    std::vector<char> seen(map.pairs().size(), 0);
    const std::vector<RoimMap::Pair> order = map.pairs();
    for (const auto& e : doc.at("connectivity")) {
      const int i = e.at("i").get<int>(), j = e.at("j").get<int>();
      map.set_connectivity(i, j, e.at("value").get<double>());
      const auto it = std::find_if(order.begin(), order.end(), [&](const RoimMap::Pair& p) {
        return p.i == std::min(i, j) && p.j == std::max(i, j);
      });
      if (seen[it - order.begin()]++) {
        throw ValidationError("duplicate connectivity entry for pair " + std::to_string(i) +
                              "," + std::to_string(j));
      }
    }
    if (std::count(seen.begin(), seen.end(), 0) != 0) {
      throw ValidationError("ROIM connectivity is missing adjacent pairs");
    }
    if (doc.contains("boxes")) {
      for (const auto& b : doc.at("boxes")) map.boxes().push_back(detail::box_from_json(b));
    }
    return map;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed ROIM document: ") + e.what());
  }
}

inline RoimMap load_roim(const std::string& path) { return roim_parse(detail::read_file(path)); }

/// Rejects a map whose grid differs from the grid the encoder will use.
inline void require_matching_grid(const RoimMap& map, const CtuGrid& grid) {
  if (!map.matches(grid)) {
    throw ValidationError("ROIM grid " + std::to_string(map.cols()) + "x" +
                          std::to_string(map.rows()) + " @" + std::to_string(map.ctu_size()) +
                          " does not match frame grid " + std::to_string(grid.cols()) + "x" +
                          std::to_string(grid.rows()) + " @" + std::to_string(grid.ctu_size()));
  }
}

}  // namespace mvrd
