#pragma once

// ISA-generic 3x3 convolution kernels. Included by one translation unit per
// ISA, each compiled with its own target flags and supplying a vector traits
// type V with: reg, width, zero, set1, loadu, storeu, fmadd, hsum.
//
// Forward (and backward-to-input, which is a forward pass with flipped,
// transposed weights) computes an MR x (NV * width) register tile of
// (output channel, frame position) accumulators. Weight gradients reduce over
// frame positions in L2-sized chunks with an MO x MC tile per tap.

#include <algorithm>
#include <array>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "padded_frames.hpp"
#include "tomoforge/nn/kernels.hpp"

#define TOMOFORGE_UNROLL _Pragma("GCC unroll 16")

namespace tomoforge::nn::detail {

template <class V, int MR, int NV>
struct ConvSimd {
  using reg = typename V::reg;
  static constexpr int kWidth = V::width;
  static constexpr int kNr = NV * kWidth;
  static_assert(kNr <= static_cast<int>(PaddedFrames::kMaxBlock));

  // packed[ob][c][t][r]: MR consecutive output channels per (input channel, tap).
  static void pack(std::span<const float> weights, std::size_t cin, std::size_t cout,
                   bool flip_transpose, float* packed) {
    const std::size_t nob = (cout + MR - 1) / MR;
    for (std::size_t ob = 0; ob < nob; ++ob) {
      for (std::size_t c = 0; c < cin; ++c) {
        for (int t = 0; t < 9; ++t) {
          float* dst = packed + ((ob * cin + c) * 9 + t) * MR;
          TOMOFORGE_UNROLL
          for (int r = 0; r < MR; ++r) {
            const std::size_t o = ob * MR + r;
            if (o >= cout) {
              dst[r] = 0.0f;
            } else if (flip_transpose) {
              // Forward weights are (in=o, out=c); tap mirrored.
              dst[r] = weights[(c * cout + o) * 9 + static_cast<std::size_t>(8 - t)];
            } else {
              dst[r] = weights[(o * cin + c) * 9 + static_cast<std::size_t>(t)];
            }
          }
        }
      }
    }
  }

  static void tile(const PaddedFrames& in, std::size_t cin, const float* packed,
                   const std::ptrdiff_t* off, const float* bias, std::size_t p,
                   PaddedFrames& out, std::size_t o0, std::size_t rows) {
    reg acc[MR][NV];
    TOMOFORGE_UNROLL
    for (int r = 0; r < MR; ++r) {
      const reg b = V::set1(bias != nullptr && static_cast<std::size_t>(r) < rows ? bias[o0 + r]
                                                                                  : 0.0f);
      TOMOFORGE_UNROLL
      for (int j = 0; j < NV; ++j) acc[r][j] = b;
    }
    const float* wp = packed;
    for (std::size_t c = 0; c < cin; ++c) {
      const float* xc = in.origin(c) + p;
      for (int t = 0; t < 9; ++t, wp += MR) {
        const float* xt = xc + off[t];
        reg x[NV];
        TOMOFORGE_UNROLL
        for (int j = 0; j < NV; ++j) x[j] = V::loadu(xt + j * kWidth);
        TOMOFORGE_UNROLL
        for (int r = 0; r < MR; ++r) {
          const reg w = V::set1(wp[r]);
          TOMOFORGE_UNROLL
          for (int j = 0; j < NV; ++j) acc[r][j] = V::fmadd(w, x[j], acc[r][j]);
        }
      }
    }
    TOMOFORGE_UNROLL
    for (int r = 0; r < MR; ++r) {
      if (static_cast<std::size_t>(r) >= rows) break;
      float* dst = out.origin(o0 + static_cast<std::size_t>(r)) + p;
      TOMOFORGE_UNROLL
      for (int j = 0; j < NV; ++j) V::storeu(dst + j * kWidth, acc[r][j]);
    }
  }

  static void run(const PaddedFrames& in, std::size_t cin, std::size_t cout,
                  const float* packed, const float* bias, PaddedFrames& out) {
    std::array<std::ptrdiff_t, 9> off{};
    for (int kh = 0; kh < 3; ++kh) {
      for (int kw = 0; kw < 3; ++kw) off[static_cast<std::size_t>(kh * 3 + kw)] = in.tap_offset(kh, kw);
    }
    const std::size_t nob = (cout + MR - 1) / MR;
    for (std::size_t p = in.begin(); p < in.end(); p += kNr) {
      for (std::size_t ob = 0; ob < nob; ++ob) {
        const std::size_t o0 = ob * MR;
        tile(in, cin, packed + ob * cin * 9 * MR, off.data(), bias, p, out, o0,
             std::min<std::size_t>(MR, cout - o0));
      }
    }
  }

  static void forward(std::span<const float> in, std::span<const float> weights,
                      std::span<const float> bias, std::span<float> out, const ConvDims& d) {
    auto& s = conv_scratch();
    const std::size_t nob = (d.out_channels + MR - 1) / MR;
    float* packed = s.packed_weights(nob * d.in_channels * 9 * MR);
    pack(weights, d.in_channels, d.out_channels, false, packed);
    const std::size_t plane = d.height * d.width;
    for (std::size_t n = 0; n < d.batch; ++n) {
      s.a.reshape(d.in_channels, d.height, d.width);
      s.a.load(in.data() + n * d.in_channels * plane);
      s.b.reshape(d.out_channels, d.height, d.width);
      run(s.a, d.in_channels, d.out_channels, packed, bias.data(), s.b);
      s.b.store(out.data() + n * d.out_channels * plane);
    }
  }
};

template <class V, int MO, int MC>
struct WeightGradSimd {
  using reg = typename V::reg;
  static constexpr int kWidth = V::width;
  static constexpr std::size_t kChunk = 2048;

  using TileFn = void (*)(const PaddedFrames&, const PaddedFrames&, std::size_t, std::size_t,
                          const std::ptrdiff_t*, std::size_t, std::size_t, std::size_t,
                          double*);

  // Accumulates sum_p dy[o][p] * x[c][p + off[t]] over [p0, p1) for an
  // mo x mc block of (output, input) channels into acc[(o*cin + c)*9 + t].
  template <int mo, int mc>
  static void tile(const PaddedFrames& dy, const PaddedFrames& x, std::size_t o0,
                   std::size_t c0, const std::ptrdiff_t* off, std::size_t p0, std::size_t p1,
                   std::size_t cin, double* acc) {
    const float* dyp[mo];
    const float* xp[mc];
    TOMOFORGE_UNROLL
    for (int o = 0; o < mo; ++o) dyp[o] = dy.origin(o0 + o);
    TOMOFORGE_UNROLL
    for (int c = 0; c < mc; ++c) xp[c] = x.origin(c0 + c);
    for (int t = 0; t < 9; ++t) {
      reg a[mo][mc];
      TOMOFORGE_UNROLL
      for (int o = 0; o < mo; ++o) {
        TOMOFORGE_UNROLL
        for (int c = 0; c < mc; ++c) a[o][c] = V::zero();
      }
      const std::ptrdiff_t ot = off[t];
      for (std::size_t q = p0; q < p1; q += kWidth) {
        reg g[mo];
        TOMOFORGE_UNROLL
        for (int o = 0; o < mo; ++o) g[o] = V::loadu(dyp[o] + q);
        TOMOFORGE_UNROLL
        for (int c = 0; c < mc; ++c) {
          const reg xv = V::loadu(xp[c] + q + ot);
          TOMOFORGE_UNROLL
          for (int o = 0; o < mo; ++o) a[o][c] = V::fmadd(g[o], xv, a[o][c]);
        }
      }
      TOMOFORGE_UNROLL
      for (int o = 0; o < mo; ++o) {
        TOMOFORGE_UNROLL
        for (int c = 0; c < mc; ++c) {
          acc[((o0 + o) * cin + c0 + c) * 9 + static_cast<std::size_t>(t)] +=
              static_cast<double>(V::hsum(a[o][c]));
        }
      }
    }
  }

  template <int... Os, int... Cs>
  static constexpr auto make_table(std::integer_sequence<int, Os...>,
                                   std::integer_sequence<int, Cs...>) {
    std::array<std::array<TileFn, MC>, MO> table{};
    auto row = [&table]<int o>(std::integral_constant<int, o>) {
      ((table[o][Cs] = &tile<o + 1, Cs + 1>), ...);
    };
    (row(std::integral_constant<int, Os>{}), ...);
    return table;
  }

  static void run(const PaddedFrames& dy, const PaddedFrames& x, std::size_t cout,
                  std::size_t cin, double* acc) {
    static constexpr auto table =
        make_table(std::make_integer_sequence<int, MO>{}, std::make_integer_sequence<int, MC>{});
    std::array<std::ptrdiff_t, 9> off{};
    for (int kh = 0; kh < 3; ++kh) {
      for (int kw = 0; kw < 3; ++kw) off[static_cast<std::size_t>(kh * 3 + kw)] = x.tap_offset(kh, kw);
    }
    const std::size_t begin = dy.begin();
    const std::size_t end = dy.end();
    for (std::size_t p0 = begin; p0 < end; p0 += kChunk) {
      // Positions past `end` read the zero last frame row and guard of dy.
      const std::size_t len = std::min(kChunk, end - p0);
      const std::size_t p1 = p0 + (len + kWidth - 1) / kWidth * kWidth;
      for (std::size_t o0 = 0; o0 < cout; o0 += MO) {
        const std::size_t mo = std::min<std::size_t>(MO, cout - o0);
        for (std::size_t c0 = 0; c0 < cin; c0 += MC) {
          const std::size_t mc = std::min<std::size_t>(MC, cin - c0);
          table[mo - 1][mc - 1](dy, x, o0, c0, off.data(), p0, p1, cin, acc);
        }
      }
    }
  }
};

// Weight gradients from a channels-last copy of the input: each step
// broadcasts one dy value per output channel and multiplies it with CV
// vectors of consecutive input channels, so no horizontal sums are needed.
// Input channels are zero-padded to a multiple of CV * width.
template <class V, int MO, int CV>
struct WeightGradChannelsLast {
  using reg = typename V::reg;
  static constexpr int kWidth = V::width;
  static constexpr std::size_t kBlock = static_cast<std::size_t>(CV * kWidth);
  static constexpr std::size_t kChunk = 256;

  std::size_t cpad = 0;
  std::size_t row = 0;
  std::size_t lead = 0;  // positions stored before frame position 0
  std::vector<float> xcl;

  void load(const float* in, std::size_t cin, std::size_t height, std::size_t width) {
    row = width + 2;
    lead = row + 2;
    cpad = (cin + kBlock - 1) / kBlock * kBlock;
    const std::size_t positions = (height + 2) * row + 2 * lead;
    xcl.assign(positions * cpad, 0.0f);
    for (std::size_t h = 0; h < height; ++h) {
      for (std::size_t w = 0; w < width; ++w) {
        float* dst = xcl.data() + (lead + (h + 1) * row + w + 1) * cpad;
        const float* src = in + h * width + w;
        for (std::size_t c = 0; c < cin; ++c) dst[c] = src[c * height * width];
      }
    }
  }

  template <int mo>
  static void tile(const float* const* dyp, const float* xbase, std::size_t cpad,
                   std::ptrdiff_t off, std::size_t p0, std::size_t p1, float* accum) {
    reg a[mo][CV];
    TOMOFORGE_UNROLL
    for (int o = 0; o < mo; ++o) {
      TOMOFORGE_UNROLL
      for (int j = 0; j < CV; ++j) a[o][j] = V::loadu(accum + (o * CV + j) * kWidth);
    }
    const float* xp = xbase + static_cast<std::ptrdiff_t>(p0 * cpad) + off * static_cast<std::ptrdiff_t>(cpad);
    for (std::size_t q = p0; q < p1; ++q, xp += cpad) {
      reg xv[CV];
      TOMOFORGE_UNROLL
      for (int j = 0; j < CV; ++j) xv[j] = V::loadu(xp + j * kWidth);
      TOMOFORGE_UNROLL
      for (int o = 0; o < mo; ++o) {
        const reg g = V::set1(dyp[o][q]);
        TOMOFORGE_UNROLL
        for (int j = 0; j < CV; ++j) a[o][j] = V::fmadd(g, xv[j], a[o][j]);
      }
    }
    TOMOFORGE_UNROLL
    for (int o = 0; o < mo; ++o) {
      TOMOFORGE_UNROLL
      for (int j = 0; j < CV; ++j) V::storeu(accum + (o * CV + j) * kWidth, a[o][j]);
    }
  }

  using TileFn = void (*)(const float* const*, const float*, std::size_t, std::ptrdiff_t,
                          std::size_t, std::size_t, float*);

  template <int... Os>
  static constexpr auto make_table(std::integer_sequence<int, Os...>) {
    return std::array<TileFn, MO>{&tile<Os + 1>...};
  }

  // Adds the weight gradient of one batch item to acc[(o*cin + c)*9 + t].
  void run(const PaddedFrames& dy, std::size_t cout, std::size_t cin, double* acc) {
    static constexpr auto table = make_table(std::make_integer_sequence<int, MO>{});
    const std::size_t nob = (cout + MO - 1) / MO;
    const std::size_t ncb = cpad / kBlock;
    constexpr std::size_t tile_floats = MO * kBlock;
    std::vector<float> accum(9 * nob * ncb * tile_floats, 0.0f);
    const float* xbase = xcl.data() + lead * cpad;
    const std::size_t begin = dy.begin();
    const std::size_t end = dy.end();
    for (std::size_t p0 = begin; p0 < end; p0 += kChunk) {
      const std::size_t p1 = std::min(p0 + kChunk, end);
      for (std::size_t ob = 0; ob < nob; ++ob) {
        const std::size_t o0 = ob * MO;
        const std::size_t mo = std::min<std::size_t>(MO, cout - o0);
        const float* dyp[MO];
        for (std::size_t o = 0; o < MO; ++o) dyp[o] = dy.origin(o0 + std::min(o, mo - 1));
        for (std::size_t cb = 0; cb < ncb; ++cb) {
          for (int kh = 0; kh < 3; ++kh) {
            for (int kw = 0; kw < 3; ++kw) {
              const std::size_t t = static_cast<std::size_t>(kh * 3 + kw);
              float* tacc = accum.data() + ((t * nob + ob) * ncb + cb) * tile_floats;
              table[mo - 1](dyp, xbase + cb * kBlock, cpad, dy.tap_offset(kh, kw), p0, p1,
                            tacc);
            }
          }
        }
      }
    }
    for (std::size_t t = 0; t < 9; ++t) {
      for (std::size_t ob = 0; ob < nob; ++ob) {
        for (std::size_t cb = 0; cb < ncb; ++cb) {
          const float* tacc = accum.data() + ((t * nob + ob) * ncb + cb) * tile_floats;
          for (std::size_t o = 0; o < MO && ob * MO + o < cout; ++o) {
            for (std::size_t j = 0; j < kBlock && cb * kBlock + j < cin; ++j) {
              acc[((ob * MO + o) * cin + cb * kBlock + j) * 9 + t] += tacc[o * kBlock + j];
            }
          }
        }
      }
    }
  }
};

template <class V, int MR, int NV, int MO, int MC, int CLO, int CLV>
void conv_backward_simd(std::span<const float> grad_out, std::span<const float> in,
                        std::span<const float> weights, std::span<float> grad_in,
                        std::span<float> grad_weights, std::span<float> grad_bias,
                        const ConvDims& d) {
  using Fwd = ConvSimd<V, MR, NV>;
  using Wg = WeightGradSimd<V, MO, MC>;
  using Wcl = WeightGradChannelsLast<V, CLO, CLV>;
  auto& s = conv_scratch();
  const std::size_t plane = d.height * d.width;
  const std::size_t cin = d.in_channels;
  const std::size_t cout = d.out_channels;

  std::vector<double> wacc(d.weight_size(), 0.0);
  std::vector<double> bacc(cout, 0.0);

  float* packed = nullptr;
  if (!grad_in.empty()) {
    const std::size_t nob = (cin + MR - 1) / MR;
    packed = s.packed_weights(nob * cout * 9 * MR);
    Fwd::pack(weights, cout, cin, true, packed);
  }

  for (std::size_t n = 0; n < d.batch; ++n) {
    const float* g = grad_out.data() + n * cout * plane;
    for (std::size_t o = 0; o < cout; ++o) {
      double sum = 0.0;
      for (std::size_t i = 0; i < plane; ++i) sum += g[o * plane + i];
      bacc[o] += sum;
    }
    s.a.reshape(cout, d.height, d.width);
    s.a.load(g);
    if (cin >= Wcl::kBlock / 2) {
      Wcl wcl;
      wcl.load(in.data() + n * cin * plane, cin, d.height, d.width);
      wcl.run(s.a, cout, cin, wacc.data());
    } else {
      s.b.reshape(cin, d.height, d.width);
      s.b.load(in.data() + n * cin * plane);
      Wg::run(s.a, s.b, cout, cin, wacc.data());
    }
    if (!grad_in.empty()) {
      s.c.reshape(cin, d.height, d.width);
      Fwd::run(s.a, cout, cin, packed, nullptr, s.c);
      s.c.store(grad_in.data() + n * cin * plane);
    }
  }
  for (std::size_t i = 0; i < wacc.size(); ++i) grad_weights[i] = static_cast<float>(wacc[i]);
  for (std::size_t o = 0; o < cout; ++o) grad_bias[o] = static_cast<float>(bacc[o]);
}

}  // namespace tomoforge::nn::detail
