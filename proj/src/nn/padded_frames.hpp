#pragma once

// Zero-bordered per-channel frames used by the SIMD convolution kernels.
//
// Each channel occupies a slot of `slot` floats: a guard band, the
// (height+2) x (width+2) padded frame, and another guard band. With this
// layout every 3x3 tap of a flattened frame position p is a constant offset
// from p, so the kernels run over contiguous spans without bounds checks.
// Positions in the border columns produce garbage that is never extracted;
// guards absorb over-reads and over-writes of the last vector block.

#include <cstddef>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>

namespace tomoforge::nn::detail {

struct FreeDeleter {
  void operator()(float* p) const noexcept { std::free(p); }
};

class PaddedFrames {
 public:
  static constexpr std::size_t kAlign = 64;
  static constexpr std::size_t kMaxBlock = 128;  // widest vector block a kernel may touch

  PaddedFrames() = default;

  void reshape(std::size_t channels, std::size_t height, std::size_t width) {
    channels_ = channels;
    height_ = height;
    width_ = width;
    row_ = width + 2;
    const std::size_t frame = (height + 2) * row_;
    guard_ = round_up(row_ + 1 + kMaxBlock, kAlign / sizeof(float));
    slot_ = round_up(frame + 2 * guard_, kAlign / sizeof(float));
    const std::size_t need = slot_ * channels;
    if (need > capacity_) {
      void* raw = std::aligned_alloc(kAlign, round_up(need * sizeof(float), kAlign));
      if (raw == nullptr) throw std::bad_alloc();
      buf_.reset(static_cast<float*>(raw));
      capacity_ = need;
    }
    std::memset(buf_.get(), 0, need * sizeof(float));
  }

  /// Copies an unpadded (channels, height, width) block into the frame interiors.
  void load(const float* src) {
    for (std::size_t c = 0; c < channels_; ++c) {
      float* dst = origin(c);
      for (std::size_t h = 0; h < height_; ++h) {
        std::memcpy(dst + (h + 1) * row_ + 1, src + (c * height_ + h) * width_,
                    width_ * sizeof(float));
      }
    }
  }

  /// Copies frame interiors out to an unpadded (channels, height, width) block.
  void store(float* dst) const {
    for (std::size_t c = 0; c < channels_; ++c) {
      const float* src = origin(c);
      for (std::size_t h = 0; h < height_; ++h) {
        std::memcpy(dst + (c * height_ + h) * width_, src + (h + 1) * row_ + 1,
                    width_ * sizeof(float));
      }
    }
  }

  /// Zeroes the border columns inside the compute range of every channel.
  void clear_border_columns() {
    for (std::size_t c = 0; c < channels_; ++c) {
      float* f = origin(c);
      for (std::size_t h = 1; h <= height_; ++h) {
        f[h * row_] = 0.0f;
        f[h * row_ + width_ + 1] = 0.0f;
      }
    }
  }

  /// Pointer to padded position (0, 0) of channel c.
  [[nodiscard]] float* origin(std::size_t c) noexcept { return buf_.get() + c * slot_ + guard_; }
  [[nodiscard]] const float* origin(std::size_t c) const noexcept {
    return buf_.get() + c * slot_ + guard_;
  }

  [[nodiscard]] std::size_t row() const noexcept { return row_; }
  [[nodiscard]] std::size_t slot() const noexcept { return slot_; }
  /// Flattened frame positions [begin, end) cover interior rows, border columns included.
  [[nodiscard]] std::size_t begin() const noexcept { return row_; }
  [[nodiscard]] std::size_t end() const noexcept { return (height_ + 1) * row_; }

  /// Offset of tap (kh, kw) relative to the output position.
  [[nodiscard]] std::ptrdiff_t tap_offset(int kh, int kw) const noexcept {
    return static_cast<std::ptrdiff_t>(kh - 1) * static_cast<std::ptrdiff_t>(row_) + (kw - 1);
  }

 private:
  static std::size_t round_up(std::size_t v, std::size_t m) { return (v + m - 1) / m * m; }

  std::unique_ptr<float, FreeDeleter> buf_;
  std::size_t capacity_ = 0;
  std::size_t channels_ = 0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t row_ = 0;
  std::size_t guard_ = 0;
  std::size_t slot_ = 0;
};

/// Per-thread scratch reused across kernel calls.
struct ConvScratch {
  PaddedFrames a;
  PaddedFrames b;
  PaddedFrames c;
  std::unique_ptr<float, FreeDeleter> packed;
  std::size_t packed_capacity = 0;

  float* packed_weights(std::size_t n) {
    if (n > packed_capacity) {
      void* raw = std::aligned_alloc(PaddedFrames::kAlign,
                                     (n * sizeof(float) + PaddedFrames::kAlign - 1) /
                                         PaddedFrames::kAlign * PaddedFrames::kAlign);
      if (raw == nullptr) throw std::bad_alloc();
      packed.reset(static_cast<float*>(raw));
      packed_capacity = n;
    }
    return packed.get();
  }
};

inline ConvScratch& conv_scratch() {
  thread_local ConvScratch s;
  return s;
}

}  // namespace tomoforge::nn::detail
