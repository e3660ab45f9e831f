#pragma once

#include "scatent/jpd.hpp"

namespace scatent::calibration {

struct HotPixelMask {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> masked;  ///< one flag per pixel, row-major
  double threshold_fraction = 0.10;

  std::size_t count() const;
  bool is_masked(std::size_t pixel) const { return !masked.empty() && masked[pixel] != 0; }
  static HotPixelMask none(std::size_t width, std::size_t height);
};

/// Significance, in Poisson standard deviations above the median count, that
/// the brightest dark pixel needs before any pixel is called hot.
inline constexpr double kHotPixelSigmas = 6.0;

/// Masks pixels whose summed dark counts exceed threshold_fraction * max.
/// Returns an empty mask when the maximum is not an outlier.
HotPixelMask find_hot_pixels(const spadsim::FrameStack& dark, double threshold_fraction = 0.10);

/// Zeroes masked pixels in every frame.
void apply_mask(spadsim::FrameStack& stack, const HotPixelMask& mask);
void apply_mask(jpd::Jpd& gamma, const HotPixelMask& mask);

struct CrosstalkReference {
  jpd::Jpd gamma0;                 ///< dark-stack JPD
  std::vector<double> intensity;   ///< mean dark image (fraction of frames lit)
  std::size_t frames_used = 0;
  bool support_violation = false;  ///< significant correlation beyond +-3 pixels
  std::vector<std::string> warnings;
};

inline constexpr std::size_t kRecommendedDarkFrames = 100000;

CrosstalkReference characterize_crosstalk(const spadsim::FrameStack& dark, int workers = worker_count());

/// True when any minus-projection cell beyond +-3 pixels exceeds `sigmas` standard errors.
bool crosstalk_support_violated(const jpd::Jpd& gamma0, double sigmas = 5.0);

/// Per-offset trigger probabilities recovered from a dark reference, assuming a
/// point-symmetric kernel: Gamma0(a, a + delta) = kappa(delta) (p_a + p_{a+delta})
/// with p the primary (pre-cross-talk) detection probability.
struct KernelEstimate {
  std::array<double, spadsim::CrosstalkKernel::kSide * spadsim::CrosstalkKernel::kSide> value{};
  std::array<double, spadsim::CrosstalkKernel::kSide * spadsim::CrosstalkKernel::kSide> standard_error{};

  static std::size_t slot(int dx, int dy) {
    return static_cast<std::size_t>((dy + spadsim::CrosstalkKernel::kReach) * spadsim::CrosstalkKernel::kSide +
                                    (dx + spadsim::CrosstalkKernel::kReach));
  }
  double at(int dx, int dy) const { return value[slot(dx, dy)]; }
  double error(int dx, int dy) const { return standard_error[slot(dx, dy)]; }
};

KernelEstimate estimate_kernel(const CrosstalkReference& ref);

struct CrosstalkCorrection {
  jpd::Jpd corrected;
  std::vector<double> alpha;       ///< per reference pixel
  std::size_t alpha_fallbacks = 0; ///< pixels that used the global ratio
};

enum class CrosstalkModel {
  /// Gamma0 * alpha_b * sqrt(I_a / mean I), alpha_b from pairs three rows apart.
  reference_pairs,
  /// Gamma0 scaled by the first-order trigger rate ratio between the measured
  /// and dark intensities; follows steep intensity gradients.
  first_order,
};

std::string to_string(CrosstalkModel m);
CrosstalkModel crosstalk_model_from_string(const std::string& s);

/// Subtracts the scaled dark correlations within the +-3 pixel support.
/// For reference_pairs, alpha_b is the ratio of raw to weighted dark
/// correlations on the pairs three rows apart, pooled over reference pixels
/// within `alpha_window` of b (0: b alone). first_order leaves alpha empty.
CrosstalkCorrection correct_crosstalk(const jpd::Jpd& raw, const CrosstalkReference& ref,
                                      std::span<const double> intensity, std::size_t alpha_window = 2,
                                      CrosstalkModel model = CrosstalkModel::reference_pairs);

/// Plain-text pixel list: header line, then "x y" per masked pixel.
void write_mask(std::ostream& os, const HotPixelMask& mask);
HotPixelMask read_mask(std::istream& is);

}  // namespace scatent::calibration
