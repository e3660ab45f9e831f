#pragma once

#include "scatent/twophoton.hpp"

#include <array>
#include <filesystem>

namespace scatent::spadsim {

/// Cross-talk trigger probabilities over neighbor offsets |dx|, |dy| <= 3.
class CrosstalkKernel {
 public:
  static constexpr int kReach = 3;
  static constexpr int kSide = 2 * kReach + 1;

  double at(int dx, int dy) const { return p_[slot(dx, dy)]; }
  void set(int dx, int dy, double p);
  bool empty() const;
  double total() const;

  /// Decaying nearest-neighbor-dominated kernel; `strength` is the (1,0) probability.
  static CrosstalkKernel exponential(double strength);

 private:
  static std::size_t slot(int dx, int dy);
  std::array<double, kSide * kSide> p_{};
};

struct HotPixel {
  std::size_t pixel = 0;
  double excess_rate = 0;  ///< extra mean counts per frame
};

struct SensorSpec {
  std::size_t width = 64;
  std::size_t height = 32;
  double pair_rate = 1.0;     ///< mean detected pairs per frame
  double singles_rate = 0.0;  ///< mean unpaired detections per frame
  double dark_rate = 0.0;     ///< mean dark counts per pixel per frame
  std::vector<HotPixel> hot_pixels;
  CrosstalkKernel crosstalk;
  std::uint64_t seed = 0;

  std::size_t pixels() const { return width * height; }
  void validate() const;
};

/// Binary frames packed one bit per pixel, row-major, least significant bit
/// first; each frame starts on a byte boundary.
class FrameStack {
 public:
  FrameStack() = default;
  FrameStack(std::size_t width, std::size_t height, std::size_t frames, std::uint64_t seed);

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t pixels() const { return width_ * height_; }
  std::size_t frame_count() const { return frames_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t bytes_per_frame() const { return (pixels() + 7) / 8; }

  std::uint64_t state_hash = 0;  ///< hash of the generating two-photon state (0 for dark stacks)

  bool lit(std::size_t frame, std::size_t pixel) const {
    return (bits_[frame * bytes_per_frame() + pixel / 8] >> (pixel % 8)) & 1u;
  }
  void set(std::size_t frame, std::size_t pixel) {
    bits_[frame * bytes_per_frame() + pixel / 8] |= static_cast<std::uint8_t>(1u << (pixel % 8));
  }
  void clear(std::size_t frame, std::size_t pixel) {
    bits_[frame * bytes_per_frame() + pixel / 8] &= static_cast<std::uint8_t>(~(1u << (pixel % 8)));
  }
  std::span<const std::uint8_t> frame(std::size_t i) const {
    return {bits_.data() + i * bytes_per_frame(), bytes_per_frame()};
  }
  std::span<std::uint8_t> frame(std::size_t i) { return {bits_.data() + i * bytes_per_frame(), bytes_per_frame()}; }
  /// Appends the indices of lit pixels in `frame`, ascending.
  void lit_pixels(std::size_t frame, std::vector<std::uint32_t>& out) const;
  std::span<const std::uint8_t> raw() const { return bits_; }

  /// Per-pixel count of lit frames.
  std::vector<std::uint64_t> count_image() const;
  /// Per-pixel fraction of lit frames.
  std::vector<double> mean_image() const;
  std::uint64_t content_hash() const;

 private:
  std::size_t width_ = 0, height_ = 0, frames_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Poisson pair emission drawn from |psi|^2, singles, dark counts, hot pixels,
/// one generation of cross-talk, then binary clipping.
FrameStack simulate_frames(const twophoton::TwoPhotonState& psi, const SensorSpec& sensor, std::size_t frames,
                           int workers = worker_count());

/// Shutter-closed acquisition: dark counts, hot pixels and cross-talk only.
FrameStack dark_stack(const SensorSpec& sensor, std::size_t frames, int workers = worker_count());

// "SPADSTK1", u32 width, u32 height, u64 frame_count, u64 seed, packed frames.
void write_stack(std::ostream& os, const FrameStack& stack);
FrameStack read_stack(std::istream& is);
void save(const std::filesystem::path& path, const FrameStack& stack);
FrameStack load_stack(const std::filesystem::path& path);

}  // namespace scatent::spadsim
