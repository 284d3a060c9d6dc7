// Encodes a synthetic object scene with and without ROI emphasis and prints
// the rate, the QP split between object and background, and PSNR.
#include <chrono>
#include <cstdio>
#include <cstdlib>

#include "mvrd/mvrd.hpp"
#include "mvrd/synthetic.hpp"

int main(int argc, char** argv) {
  const int size = argc > 1 ? std::atoi(argv[1]) : 256;
  const double bpp = argc > 2 ? std::atof(argv[2]) : 0.1;
  auto scene = mvrd::synthetic::centred_object_scene(size, size, 7);
  const mvrd::CtuGrid grid = mvrd::partition_ctus(scene.frame, 64);
  const mvrd::RoimMap roim = mvrd::build_roim(grid, mvrd::BoxSet(size, size, {scene.object}));
  const auto extractor = mvrd::FeatureExtractor::builtin(20210705);

  for (double alpha : {0.0, 10000.0}) {
    mvrd::ExtractorDistance source(extractor);
    mvrd::EncoderConfig cfg;
    cfg.alpha = alpha;
    cfg.target_bpp = bpp;
    const auto t0 = std::chrono::steady_clock::now();
    const mvrd::EncodeResult r = mvrd::encode_frame(scene.frame, roim, cfg, source);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    double qin = 0, qout = 0;
    int nin = 0, nout = 0;
    for (const auto& c : r.ctus) {
      if (c.importance > 0) { qin += c.qp_final; ++nin; } else { qout += c.qp_final; ++nout; }
    }
    std::printf("alpha=%-6.0f bpp=%.4f (target %.4f) qp_pic=%d qp_in=%.2f qp_out=%.2f psnr=%.2f dB  %.1fs\n",
                alpha, r.bpp(), bpp, r.qp_pic, nin ? qin / nin : 0.0, nout ? qout / nout : 0.0,
                mvrd::psnr(scene.frame, r.recon), secs);
  }
  return 0;
}
