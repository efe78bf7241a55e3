#include <chrono>
#include <cstdio>
#include <random>
#include <vector>

#include "tomoforge/nn/kernels.hpp"

using namespace tomoforge::nn;

int main(int argc, char** argv) {
  const std::size_t hw = argc > 1 ? std::stoul(argv[1]) : 128;
  const int reps = argc > 2 ? std::stoi(argv[2]) : 5;
  ConvDims d{1, 64, 64, hw, hw};
  std::mt19937 rng(1);
  std::normal_distribution<float> nd;
  std::vector<float> in(d.input_size()), w(d.weight_size()), b(64), out(d.output_size());
  std::vector<float> gi(d.input_size()), gw(d.weight_size()), gb(64);
  for (auto& v : in) v = nd(rng);
  for (auto& v : w) v = nd(rng) * 0.05f;
  for (Isa isa : {Isa::avx512, Isa::avx2}) {
    if (!isa_supported(isa)) continue;
    const auto& k = conv_kernels(isa);
    double macs = double(d.weight_size()) * hw * hw;
    for (int pass = 0; pass < 3; ++pass) {
      auto t0 = std::chrono::steady_clock::now();
      for (int r = 0; r < reps; ++r) {
        if (pass == 0) k.forward(in, w, b, out, d);
        else if (pass == 1) k.backward(out, in, w, gi, gw, gb, d);
        else k.backward(out, in, w, {}, gw, gb, d);
      }
      double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / reps;
      double m = pass == 1 ? 2 * macs : macs;
      std::printf("%s %s: %.2f ms  %.1f GFLOP/s\n", std::string(to_string(isa)).c_str(),
                  pass == 0 ? "fwd" : pass == 1 ? "bwd" : "wgrad", s * 1e3, 2 * m / s / 1e9);
    }
  }
}
