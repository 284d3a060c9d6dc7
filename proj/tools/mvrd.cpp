// mvrd: command-line front end for the machine-vision rate-distortion toolkit.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mvrd/mvrd.hpp"

namespace {

using namespace mvrd;

enum ExitCode { kOk = 0, kUsage = 1, kIo = 2, kValidation = 3 };

struct CodecOptions {
  int ctu = 64;
  double alpha = 10000.0;
  double beta = 0.02;
  std::string weights;
  std::uint64_t seed = 20210705;
  std::string roim;
};

void add_codec_options(CLI::App* cmd, CodecOptions& o) {
  cmd->add_option("--roim", o.roim, "ROIM document (default: no region of interest)");
  cmd->add_option("--ctu", o.ctu, "CTU size")->check(CLI::IsMember({16, 32, 64, 128}));
  cmd->add_option("--alpha", o.alpha, "ROI emphasis in the allocation cost")->check(CLI::NonNegativeNumber);
  cmd->add_option("--beta", o.beta, "MSE weight in the RDO distortion")->check(CLI::NonNegativeNumber);
  cmd->add_option("--weights", o.weights, "FTEN weight file (default: builtin extractor)");
  cmd->add_option("--seed", o.seed, "builtin extractor seed");
}

FeatureExtractor make_extractor(const CodecOptions& o) {
  FeatureProviderConfig pc;
  if (!o.weights.empty()) {
    pc.kind = FeatureProviderConfig::Kind::weight_file;
    pc.weight_path = o.weights;
  }
  pc.seed = o.seed;
  return FeatureExtractor::from_config(pc);
}

RoimMap load_or_empty_roim(const CodecOptions& o, const Frame& frame) {
  const CtuGrid grid = partition_ctus(frame, o.ctu);
  if (o.roim.empty()) return empty_roim(grid);
  RoimMap map = load_roim(o.roim);
  require_matching_grid(map, grid);
  return map;
}

EncoderConfig encoder_config(const CodecOptions& o) {
  EncoderConfig cfg;
  cfg.ctu_size = o.ctu;
  cfg.alpha = o.alpha;
  cfg.rdo.distortion.beta = o.beta;
  return cfg;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("not a number: '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError("empty value list");
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw IoError("cannot write " + path);
}

std::string format_psnr(double v) {
  if (std::isinf(v)) return "inf";
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << v;
  return os.str();
}

/// Reads (rate, quality) rows; a non-numeric first line is taken as a header.
std::vector<RdPoint> load_rd_csv(const std::string& path) {
  std::istringstream in(detail::read_file(path));
  std::vector<RdPoint> pts;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ValidationError(path + ":" + std::to_string(lineno) + ": expected rate,quality");
    try {
      std::size_t u1 = 0, u2 = 0;
      const std::string a = line.substr(0, comma);
      std::string b = line.substr(comma + 1);
      if (const auto c2 = b.find(','); c2 != std::string::npos) b = b.substr(0, c2);
      const double rate = std::stod(a, &u1), quality = std::stod(b, &u2);
      if (u1 != a.size() || u2 != b.size()) throw std::invalid_argument(line);
      pts.push_back({rate, quality});
    } catch (const std::exception&) {
      if (lineno == 1 && pts.empty()) continue;
      throw ValidationError(path + ":" + std::to_string(lineno) + ": malformed row '" + line + "'");
    }
  }
  return pts;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int run(int argc, char** argv) {
  CLI::App app{"Machine-vision-aware rate-distortion toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "mvrd 1.0");

  // roim-build
  std::string rb_image, rb_boxes, rb_out = "-";
  int rb_ctu = 64;
  auto* rb = app.add_subcommand("roim-build", "Build an ROIM document from a boxes document");
  rb->add_option("--image", rb_image, "PGM/PPM image")->required();
  rb->add_option("--boxes", rb_boxes, "boxes JSON document")->required();
  rb->add_option("--ctu", rb_ctu, "CTU size")->check(CLI::IsMember({16, 32, 64, 128}));
  rb->add_option("-o,--output", rb_out, "output ROIM JSON ('-' for stdout)");

  // encode
  CodecOptions enc_opt;
  std::string enc_image, enc_out, enc_stats, enc_qpmap, enc_recon;
  std::optional<double> enc_bpp;
  std::optional<int> enc_qp;
  bool enc_constant = false;
  auto* enc = app.add_subcommand("encode", "Encode an image");
  enc->add_option("--image", enc_image, "PGM/PPM image")->required();
  add_codec_options(enc, enc_opt);
  auto* bpp_opt = enc->add_option("--target-bpp", enc_bpp, "target bits per pixel")->check(CLI::PositiveNumber);
  auto* qp_opt = enc->add_option("--qp", enc_qp, "QP anchor instead of a rate target")->check(CLI::Range(0, 51));
  bpp_opt->excludes(qp_opt);
  enc->add_flag("--constant-qp", enc_constant, "code every CTU at --qp")->needs(qp_opt);
  enc->add_option("-o,--output", enc_out, "bitstream file")->required();
  enc->add_option("--stats", enc_stats, "per-CTU stats CSV");
  enc->add_option("--qp-map", enc_qpmap, "final CTU QPs as a PGM");
  enc->add_option("--recon", enc_recon, "encoder reconstruction as a PGM");

  // decode
  std::string dec_in, dec_out;
  auto* dec = app.add_subcommand("decode", "Decode a bitstream");
  dec->add_option("input", dec_in, "bitstream file")->required();
  dec->add_option("-o,--output", dec_out, "output PGM")->required();

  // metrics
  std::string met_ref, met_test;
  auto* met = app.add_subcommand("metrics", "PSNR and MSE between two images");
  met->add_option("--ref", met_ref, "reference image")->required();
  met->add_option("--test", met_test, "test image")->required();

  // sweep
  CodecOptions sw_opt;
  std::string sw_image, sw_rates, sw_qps, sw_out = "-";
  auto* sw = app.add_subcommand("sweep", "Encode at several operating points and emit RD rows");
  sw->add_option("--image", sw_image, "PGM/PPM image")->required();
  add_codec_options(sw, sw_opt);
  auto* sw_rates_opt = sw->add_option("--target-bpp", sw_rates, "comma-separated target rates");
  auto* sw_qps_opt = sw->add_option("--qp", sw_qps, "comma-separated QP anchors");
  sw_rates_opt->excludes(sw_qps_opt);
  sw->add_option("-o,--output", sw_out, "CSV output ('-' for stdout)");

  // bd-rate
  std::string bd_anchor, bd_test;
  auto* bd = app.add_subcommand("bd-rate", "Bjontegaard rate difference of two RD curves");
  bd->add_option("--anchor", bd_anchor, "CSV of rate,quality rows")->required();
  bd->add_option("--test", bd_test, "CSV of rate,quality rows")->required();

  // calibrate-beta
  CodecOptions cb_opt;
  std::vector<std::string> cb_images;
  int cb_qp = 40;
  auto* cb = app.add_subcommand("calibrate-beta", "Suggest beta so that beta * MSE matches MSFD at a QP");
  cb->add_option("--image", cb_images, "images (repeatable)")->required();
  add_codec_options(cb, cb_opt);
  cb->add_option("--qp", cb_qp, "constant QP")->check(CLI::Range(0, 51));

  // calibrate-lambda
  CodecOptions cl_opt;
  std::vector<std::string> cl_images;
  std::string cl_qps = "22,28,34,40,46";
  auto* cl = app.add_subcommand("calibrate-lambda", "Fit the rate model to constant-QP encodes");
  cl->add_option("--image", cl_images, "images (repeatable)")->required();
  add_codec_options(cl, cl_opt);
  cl->add_option("--qp", cl_qps, "comma-separated QPs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  if (rb->parsed()) {
    const Frame img = load_image(rb_image);
    const BoxSet boxes = load_boxes(rb_boxes);
    if (boxes.image_width() != img.width() || boxes.image_height() != img.height()) {
      throw ValidationError("boxes document is for a " + std::to_string(boxes.image_width()) + "x" +
                            std::to_string(boxes.image_height()) + " image, image is " +
                            std::to_string(img.width()) + "x" + std::to_string(img.height()));
    }
    write_text(rb_out, roim_serialize(build_roim(partition_ctus(img, rb_ctu), boxes)));
  } else if (enc->parsed()) {
    if (!enc_bpp && !enc_qp) throw UsageError("encode needs --target-bpp or --qp");
    const Frame img = load_image(enc_image);
    const RoimMap roim = load_or_empty_roim(enc_opt, img);
    const FeatureExtractor fx = make_extractor(enc_opt);
    ExtractorDistance source(fx);
    EncoderConfig cfg = encoder_config(enc_opt);
    cfg.target_bpp = enc_bpp;
    cfg.qp_anchor = enc_qp;
    cfg.constant_qp = enc_constant;
    const auto t0 = std::chrono::steady_clock::now();
    const EncodeResult r = encode_frame(img, roim, cfg, source);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    store_bytes(r.bitstream, enc_out);
    if (!enc_stats.empty()) write_text(enc_stats, stats_csv(r.ctus));
    if (!enc_qpmap.empty()) store_image(qp_map_image(r.ctus, partition_ctus(img, enc_opt.ctu)), enc_qpmap);
    if (!enc_recon.empty()) store_image(r.recon, enc_recon);
    std::printf("bits=%lld target=%lld bpp=%.5f qp_pic=%d psnr=%s overruns=%d time=%.1fs\n", r.total_bits(),
                r.target_pic, r.bpp(), r.qp_pic, format_psnr(psnr(img, r.recon)).c_str(), r.overruns, secs);
  } else if (dec->parsed()) {
    store_image(decode_frame(load_bytes(dec_in)), dec_out);
  } else if (met->parsed()) {
    const Frame a = load_image(met_ref), b = load_image(met_test);
    std::printf("psnr=%s mse=%.6f\n", format_psnr(psnr(a, b)).c_str(), mse(a, b));
  } else if (sw->parsed()) {
    if (sw_rates.empty() == sw_qps.empty()) throw UsageError("sweep needs exactly one of --target-bpp and --qp");
    const Frame img = load_image(sw_image);
    const RoimMap roim = load_or_empty_roim(sw_opt, img);
    const FeatureExtractor fx = make_extractor(sw_opt);
    std::ostringstream os;
    os << "point,bpp,bits,target_bits,qp_pic,psnr\n";
    const bool by_rate = !sw_rates.empty();
    for (double p : parse_list(by_rate ? sw_rates : sw_qps)) {
      ExtractorDistance source(fx);
      EncoderConfig cfg = encoder_config(sw_opt);
      if (by_rate) {
        cfg.target_bpp = p;
      } else {
        if (p != std::floor(p)) throw UsageError("QP anchors must be integers");
        cfg.qp_anchor = int(p);
      }
      const EncodeResult r = encode_frame(img, roim, cfg, source);
      os << p << ',' << r.bpp() << ',' << r.total_bits() << ',' << r.target_pic << ',' << r.qp_pic << ','
         << format_psnr(psnr(img, r.recon)) << '\n';
    }
    write_text(sw_out, os.str());
  } else if (bd->parsed()) {
    std::printf("bd_rate=%.4f%%\n", bd_rate(load_rd_csv(bd_anchor), load_rd_csv(bd_test)));
  } else if (cb->parsed()) {
    const FeatureExtractor fx = make_extractor(cb_opt);
    std::vector<double> msfds, mses;
    for (const std::string& path : cb_images) {
      const Frame img = load_image(path);
      ExtractorDistance source(fx);
      EncoderConfig cfg = encoder_config(cb_opt);
      cfg.qp_anchor = cb_qp;
      cfg.constant_qp = true;
      const EncodeResult r = encode_frame(img, empty_roim(partition_ctus(img, cb_opt.ctu)), cfg, source);
      for (const CuDecision& leaf : r.leaves) {
        const int t = cfg.rdo.distortion.small_block_threshold;
        if (leaf.region.w < t || leaf.region.h < t) continue;
        msfds.push_back(leaf.distortion.msfd);
        mses.push_back(leaf.distortion.mse);
      }
    }
    const double m_msfd = median(msfds), m_mse = median(mses);
    std::printf("leaves=%zu median_msfd=%.6g median_mse=%.6g suggested_beta=%.6g\n", msfds.size(), m_msfd, m_mse,
                m_mse > 0 ? m_msfd / m_mse : std::numeric_limits<double>::quiet_NaN());
  } else if (cl->parsed()) {
    const FeatureExtractor fx = make_extractor(cl_opt);
    std::vector<RateSample> samples;
    for (const std::string& path : cl_images) {
      const Frame img = load_image(path);
      const CtuGrid grid = partition_ctus(img, cl_opt.ctu);
      for (double q : parse_list(cl_qps)) {
        ExtractorDistance source(fx);
        EncoderConfig cfg = encoder_config(cl_opt);
        cfg.qp_anchor = int(q);
        cfg.constant_qp = true;
        const EncodeResult r = encode_frame(img, empty_roim(grid), cfg, source);
        for (const CtuStats& s : r.ctus) {
          const double area = double(grid.region(s.index).area());
          samples.push_back({int(q), double(s.actual_bits) / area, s.satd / area});
        }
      }
    }
    const LambdaModel m = fit_lambda_model(samples, LambdaModel{});
    std::printf("samples=%zu a=%.6g b=%.6g k=%.6g c1=%.6g c2=%.6g\n", samples.size(), m.a, m.b, m.k, m.c1, m.c2);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const mvrd::Error& e) {
    std::fprintf(stderr, "mvrd: %s\n", e.what());
    switch (e.category()) {
      case mvrd::ErrorCategory::usage: return kUsage;
      case mvrd::ErrorCategory::io: return kIo;
      case mvrd::ErrorCategory::validation: return kValidation;
    }
    return kValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "mvrd: %s\n", e.what());
    return kValidation;
  }
}
