#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mvrd/codec/entropy.hpp"
#include "mvrd/codec/rdo.hpp"
#include "mvrd/rate_control.hpp"
#include "mvrd/roim.hpp"
#include "mvrd/satd.hpp"

namespace mvrd {

inline constexpr char kStreamMagic[4] = {'R', 'D', 'M', 'C'};
inline constexpr std::uint16_t kStreamVersion = 1;
// magic, version, width, height, ctu size, picture QP, payload bit length
inline constexpr std::size_t kStreamHeaderBytes = 4 + 2 + 4 + 4 + 2 + 1 + 4;

struct EncoderConfig {
  int ctu_size = 64;
  double alpha = 10000.0;
  // Exactly one of these selects the operating point.
  std::optional<double> target_bpp;
  std::optional<int> qp_anchor;
  // Codes every CTU at the QP anchor, bypassing rate control (calibration).
  bool constant_qp = false;
  LambdaModel rate_model = kCalibratedRateModel;
  RdoConfig rdo;
};

/// Per-CTU record of the rate-control decisions.
struct CtuStats {
  int index = 0;
  double satd = 0.0;
  double importance = 0.0;
  double cost = 0.0;
  long long target_bits = 0;
  long long actual_bits = 0;
  int qp_est = 0;
  int qp_final = 0;
  int anchor_index = -1;
  double anchor_connectivity = std::numeric_limits<double>::quiet_NaN();
  int anchor_qp = -1;
  // Centre of the running-mean band (the picture QP for the first CTU).
  std::optional<double> mean_reference;
  // Budget bookkeeping right after this CTU's allocation.
  long long remaining_before = 0;
  long long uncoded_target_sum = 0;
  int uncoded_count = 0;
  bool overrun = false;
};

struct EncodeResult {
  std::vector<std::uint8_t> bitstream;
  Frame recon;  // cropped to the input size
  std::vector<CtuStats> ctus;
  std::vector<CuDecision> leaves;
  long long target_pic = 0;
  int qp_pic = 0;
  int overruns = 0;

  long long total_bits() const noexcept { return (long long)bitstream.size() * 8; }
  double bpp() const noexcept { return double(total_bits()) / double(recon.area()); }
};

namespace detail {

inline int padded(int v) { return (v + kMinCuSize - 1) / kMinCuSize * kMinCuSize; }

/// Edge-replicated copy whose dimensions are multiples of the minimum CU.
inline Frame pad_to_cu_grid(const Frame& f) {
  if (padded(f.width()) == f.width() && padded(f.height()) == f.height()) return f;
  return extract_block(f, {0, 0, padded(f.width()), padded(f.height())}, true);
}

template <typename Sink>
void put_ctu(Sink& out, const CtuDecision& ctu, int qp_delta, int min_cu) {
  put_se(out, qp_delta);
  for (const CuDecision& n : ctu.nodes) {
    if (n.split) {
      if (!n.forced_split) out.put_bit(1);
      continue;
    }
    if (n.region.w > min_cu) out.put_bit(0);
    out.put_bits(unsigned(n.mode), kModeBits);
    put_coefficients(out, n.levels);
  }
}

inline void write_u16(std::vector<std::uint8_t>& o, unsigned v) {
  o.push_back(std::uint8_t(v & 0xFF));
  o.push_back(std::uint8_t(v >> 8));
}
inline void write_u32(std::vector<std::uint8_t>& o, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) o.push_back(std::uint8_t(v >> (8 * i)));
}
inline std::uint32_t read_u32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}

}  // namespace detail

/// Picture QP and frame budget for the configured operating point.
inline std::pair<long long, int> picture_operating_point(const EncoderConfig& cfg, long long pixels,
                                                         double cpp = 1.0) {
  if (cfg.target_bpp.has_value() == cfg.qp_anchor.has_value()) {
    throw UsageError("set exactly one of target bpp and QP anchor");
  }
  if (cfg.target_bpp) {
    if (!(*cfg.target_bpp > 0.0)) throw ValidationError("target bpp must be positive");
    const long long target = std::llround(*cfg.target_bpp * double(pixels));
    return {target, derive_qp(target, pixels, cfg.rate_model, cpp)};
  }
  const int qp = *cfg.qp_anchor;
  if (qp < kMinQp || qp > kMaxQp) throw ValidationError("QP anchor outside [0, 51]");
  return {std::llround(cfg.rate_model.bpp_for_qp(qp, cpp) * double(pixels)), qp};
}

/// Area-weighted mean of the per-CTU QPs implied by splitting `budget` over
/// `costs`, rounded.
inline int planned_picture_qp(long long budget, const std::vector<double>& costs, const SatdReport& satd,
                              const CtuGrid& grid, const LambdaModel& model) {
  double sum_cost = 0.0;
  for (double c : costs) sum_cost += c;
  double qp_sum = 0.0, area_sum = 0.0;
  for (int k = 0; k < grid.count(); ++k) {
    const double share = sum_cost > 0.0 ? costs[k] / sum_cost : 1.0 / grid.count();
    const long long bits = std::max(1LL, std::llround(double(std::max(budget, 1LL)) * share));
    const double area = double(grid.region(k).area());
    qp_sum += area * derive_qp(bits, (long long)area, model, satd.per_ctu[k] / area);
    area_sum += area;
  }
  return int(std::lround(qp_sum / area_sum));
}

/// Encodes one picture: SATD pre-analysis, then per CTU in raster order
/// allocate -> derive QP -> constrain QP -> RDO -> entropy code -> update.
inline EncodeResult encode_frame(const Frame& input, const RoimMap& roim, const EncoderConfig& cfg,
                                 WindowDistance& source) {
  cfg.rdo.distortion.validate();
  const CtuGrid grid = partition_ctus(input, cfg.ctu_size);
  require_matching_grid(roim, grid);
  if (cfg.alpha < 0.0) throw ValidationError("alpha must be non-negative");
  if (cfg.constant_qp && !cfg.qp_anchor) throw UsageError("constant QP coding needs a QP anchor");

  const long long pixels = (long long)input.area();
  const SatdReport satd = analyze_satd(input, grid);
  auto [target_pic, qp_pic] = picture_operating_point(cfg, pixels, satd.total() / double(pixels));
  if (target_pic <= 0) throw ValidationError("zero bit budget");

  const Frame orig = detail::pad_to_cu_grid(input);
  Frame recon(orig.width(), orig.height(), std::uint8_t(0));

  std::vector<double> costs(grid.count());
  for (int k = 0; k < grid.count(); ++k) {
    costs[k] = ctu_cost(satd.per_ctu[k], roim.importance(k), cfg.alpha);
  }

  // The band around the running mean keeps every CTU near qp_pic, so under a
  // rate target qp_pic is the mean of the QPs the initial allocation implies.
  if (cfg.target_bpp && !cfg.constant_qp) {
    qp_pic = planned_picture_qp(target_pic - (long long)kStreamHeaderBytes * 8, costs, satd, grid,
                                cfg.rate_model);
  }

  EncodeResult res;
  res.target_pic = target_pic;
  res.qp_pic = qp_pic;

  BudgetState budget(target_pic, grid.count(), qp_pic);
  budget.charge_overhead((long long)kStreamHeaderBytes * 8);
  AdaptiveLambda model(cfg.rate_model);
  std::vector<int> final_qp(grid.count(), -1);
  BitWriter payload;
  int prev_qp = qp_pic;

  for (int k = 0; k < grid.count(); ++k) {
    CtuStats st;
    st.index = k;
    st.satd = satd.per_ctu[k];
    st.importance = roim.importance(k);
    st.cost = costs[k];
    st.remaining_before = budget.remaining();
    st.target_bits = budget.allocate(costs);
    st.overrun = budget.last_allocation_overran();
    st.uncoded_target_sum = budget.uncoded_target_sum();
    st.uncoded_count = int(budget.uncoded().size());

    const BlockRegion area = grid.region(k);
    st.qp_est = derive_qp(st.target_bits, area.area(), model.model(), st.satd / double(area.area()));

    std::optional<int> anchor_qp;
    std::optional<double> m_c;
    if (auto anchor = select_anchor_neighbor(k, roim, budget.coded_mask())) {
      st.anchor_index = *anchor;
      st.anchor_connectivity = roim.connectivity(k, *anchor);
      st.anchor_qp = final_qp[*anchor];
      anchor_qp = st.anchor_qp;
      m_c = st.anchor_connectivity;
    }
    st.mean_reference = budget.mean_qp();
    if (!st.mean_reference) st.mean_reference = double(qp_pic);
    st.qp_final = constrain_qp(st.qp_est, anchor_qp, m_c, st.mean_reference);
    if (cfg.constant_qp) st.qp_est = st.qp_final = qp_pic;

    source.reset();
    CtuDecision ctu = rdo_select(orig, recon, area.x, area.y, cfg.ctu_size, st.qp_final, cfg.rdo, source);

    const std::size_t before = payload.bit_count();
    detail::put_ctu(payload, ctu, st.qp_final - prev_qp, cfg.rdo.min_cu);
    st.actual_bits = (long long)(payload.bit_count() - before);
    prev_qp = st.qp_final;
    final_qp[k] = st.qp_final;

    budget.retire(k, st.actual_bits, st.qp_final);
    model.update(st.actual_bits, st.target_bits);
    for (CuDecision& n : ctu.nodes) {
      if (!n.split) res.leaves.push_back(std::move(n));
    }
    res.ctus.push_back(st);
  }
  res.overruns = budget.overruns();

  std::vector<std::uint8_t>& out = res.bitstream;
  out.insert(out.end(), kStreamMagic, kStreamMagic + 4);
  detail::write_u16(out, kStreamVersion);
  detail::write_u32(out, std::uint32_t(input.width()));
  detail::write_u32(out, std::uint32_t(input.height()));
  detail::write_u16(out, unsigned(cfg.ctu_size));
  out.push_back(std::uint8_t(qp_pic));
  detail::write_u32(out, std::uint32_t(payload.bit_count()));
  out.insert(out.end(), payload.bytes().begin(), payload.bytes().end());

  res.recon = extract_block(recon, bounds(input), false);
  return res;
}

namespace detail {

class CtuParser {
 public:
  CtuParser(BitReader& in, Frame& recon, int qp, int min_cu)
      : in_(in), recon_(recon), qp_(qp), min_cu_(min_cu) {}

  void parse(int x, int y, int size) {
    if (x >= recon_.width() || y >= recon_.height()) return;
    bool split = !node_fits(recon_, x, y, size);
    if (!split && size > min_cu_) split = in_.get_bit() == 1;
    if (split) {
      if (size <= min_cu_) throw MalformedStream("split below minimum CU size");
      const int h = size / 2;
      parse(x, y, h);
      parse(x + h, y, h);
      parse(x, y + h, h);
      parse(x + h, y + h, h);
      return;
    }
    const BlockRegion r{x, y, size, size};
    const auto mode = IntraMode(in_.get_bits(kModeBits));
    const Coefficients levels = get_coefficients(in_, size);
    const Block pred = predict_intra(recon_, r, mode);
    paste_block(recon_, reconstruct(pred, dequantize_inverse(levels, qp_)), x, y);
  }

 private:
  BitReader& in_;
  Frame& recon_;
  int qp_;
  int min_cu_;
};

}  // namespace detail

struct StreamHeader {
  int width = 0;
  int height = 0;
  int ctu_size = 0;
  int qp_pic = 0;
  std::size_t payload_bits = 0;
};

inline StreamHeader parse_stream_header(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kStreamHeaderBytes || !std::equal(kStreamMagic, kStreamMagic + 4, bytes.begin())) {
    throw MalformedStream("bad magic or short header");
  }
  const unsigned version = bytes[4] | unsigned(bytes[5]) << 8;
  if (version != kStreamVersion) throw MalformedStream("unsupported version " + std::to_string(version));
  StreamHeader h;
  h.width = int(detail::read_u32(&bytes[6]));
  h.height = int(detail::read_u32(&bytes[10]));
  h.ctu_size = bytes[14] | int(bytes[15]) << 8;
  h.qp_pic = bytes[16];
  h.payload_bits = detail::read_u32(&bytes[17]);
  if (h.width <= 0 || h.height <= 0 || h.width > (1 << 16) || h.height > (1 << 16)) {
    throw MalformedStream("implausible picture size");
  }
  if (h.ctu_size != 16 && h.ctu_size != 32 && h.ctu_size != 64 && h.ctu_size != 128) {
    throw MalformedStream("bad CTU size");
  }
  if (h.qp_pic > kMaxQp) throw MalformedStream("bad picture QP");
  if ((h.payload_bits + 7) / 8 != bytes.size() - kStreamHeaderBytes) {
    throw MalformedStream("payload length does not match header");
  }
  return h;
}

inline Frame decode_frame(const std::vector<std::uint8_t>& bytes) {
  const StreamHeader h = parse_stream_header(bytes);
  const CtuGrid grid(h.width, h.height, h.ctu_size);
  Frame recon(detail::padded(h.width), detail::padded(h.height), std::uint8_t(0));
  BitReader in(bytes.data() + kStreamHeaderBytes, h.payload_bits);
  int qp = h.qp_pic;
  for (int k = 0; k < grid.count(); ++k) {
    qp += int(get_se(in));
    if (qp < kMinQp || qp > kMaxQp) throw MalformedStream("CTU QP out of range");
    const BlockRegion r = grid.region(k);
    detail::CtuParser(in, recon, qp, kMinCuSize).parse(r.x, r.y, h.ctu_size);
  }
  if (in.remaining() != 0) throw MalformedStream("trailing payload bits");
  return extract_block(recon, {0, 0, h.width, h.height}, false);
}

// ---------------------------------------------------------------------------
// Files and reports

inline void store_bytes(const std::vector<std::uint8_t>& bytes, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

inline std::vector<std::uint8_t> load_bytes(const std::string& path) {
  const std::string s = detail::read_file(path);
  return {s.begin(), s.end()};
}

inline constexpr const char* kStatsHeader =
    "index,satd,m_i,cost,target_bits,actual_bits,qp_est,qp_final,anchor_index,m_c";

inline std::string stats_csv(const std::vector<CtuStats>& rows) {
  std::ostringstream os;
  os.precision(10);
  os << kStatsHeader << '\n';
  for (const CtuStats& s : rows) {
    os << s.index << ',' << s.satd << ',' << s.importance << ',' << s.cost << ',' << s.target_bits
       << ',' << s.actual_bits << ',' << s.qp_est << ',' << s.qp_final << ',' << s.anchor_index
       << ',';
    if (s.anchor_index >= 0) os << s.anchor_connectivity;
    os << '\n';
  }
  return os.str();
}

/// Picture-sized map of final CTU QPs, scaled so QP 51 is white.
inline Frame qp_map_image(const std::vector<CtuStats>& rows, const CtuGrid& grid) {
  Frame img(grid.frame_width(), grid.frame_height());
  for (const CtuStats& s : rows) {
    const BlockRegion r = grid.region(s.index);
    const auto v = std::uint8_t(std::lround(s.qp_final * 255.0 / kMaxQp));
    for (int y = r.y; y < r.bottom(); ++y)
      for (int x = r.x; x < r.right(); ++x) img(x, y) = v;
  }
  return img;
}

}  // namespace mvrd
