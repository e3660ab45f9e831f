#pragma once

#include "scatent/spadsim.hpp"

#include <filesystem>
#include <optional>

namespace scatent::jpd {

/// Joint probability Gamma(a, b) of detecting one photon at pixel a and its
/// partner at pixel b, with a per-entry variance estimate.
class Jpd {
 public:
  Jpd() = default;
  Jpd(std::size_t width, std::size_t height, std::size_t frames_used);

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t pixels() const { return width_ * height_; }
  std::size_t frames_used() const { return frames_used_; }

  double& at(std::size_t a, std::size_t b) { return gamma_[a * pixels() + b]; }
  double at(std::size_t a, std::size_t b) const { return gamma_[a * pixels() + b]; }
  double& variance(std::size_t a, std::size_t b) { return variance_[a * pixels() + b]; }
  double variance(std::size_t a, std::size_t b) const { return variance_[a * pixels() + b]; }
  double standard_error(std::size_t a, std::size_t b) const;

  std::span<const double> values() const { return gamma_; }
  std::span<double> values() { return gamma_; }
  std::span<const double> variances() const { return variance_; }
  double total() const;

  std::size_t pixel(std::size_t x, std::size_t y) const { return y * width_ + x; }

  /// Replaces Gamma by (Gamma + Gamma^t) / 2.
  void symmetrize();
  /// Sets every same-pixel entry Gamma(a, a) to zero.
  void zero_same_pixel();

 private:
  std::size_t width_ = 0, height_ = 0, frames_used_ = 0;
  std::vector<double> gamma_;
  std::vector<double> variance_;
};

/// Gamma = (1/M) sum_l [I_l(a) I_l(b) - I_l(a) I_{l+1}(b)] over the first
/// `frame_limit` frames (all when empty), symmetrized, same-pixel terms zeroed.
Jpd accumulate_jpd(const spadsim::FrameStack& stack, std::optional<std::size_t> frame_limit = std::nullopt,
                   int workers = worker_count());

/// Exact coincidence law |psi|^2 on the sensor grid, as a Jpd.
Jpd jpd_from_law(const RMatrix& law, std::size_t width, std::size_t height, bool keep_same_pixel = false);

/// Zeroes the rows and columns of masked pixels.
void apply_pixel_mask(Jpd& jpd, std::span<const std::uint8_t> masked);

enum class ProjectionKind : std::uint32_t { sum = 0, minus = 1 };

/// Sum- or minus-coordinate marginal of a Jpd over a (2W-1) x (2H-1) grid.
struct Projection {
  ProjectionKind kind = ProjectionKind::minus;
  std::size_t width = 0, height = 0;
  long origin_x = 0, origin_y = 0;  ///< cell of zero offset (minus) or of the parity-pair sum (sum)
  std::vector<double> values;
  std::vector<double> variances;

  double& at(std::size_t cx, std::size_t cy) { return values[cy * width + cx]; }
  double at(std::size_t cx, std::size_t cy) const { return values[cy * width + cx]; }
  double at_offset(long dx, long dy) const;
  double total() const;
  /// Number of ordered pixel pairs contributing to each cell.
  std::vector<double> overlap_counts(std::size_t sensor_width, std::size_t sensor_height,
                                     bool same_pixel_included = false) const;
};

Projection project_sum(const Jpd& jpd);
Projection project_minus(const Jpd& jpd);

/// Gamma(a, ref) over all a, as a width x height image.
std::vector<double> conditional_image(const Jpd& jpd, std::size_t ref_pixel,
                                      std::span<const std::uint8_t> masked = {});

/// Center-cell value over the mean of all other cells, each divided by its pair overlap.
double peak_to_background(const Projection& proj, std::size_t sensor_width, std::size_t sensor_height,
                          bool same_pixel_included = false);

// "EJPD0001", u32 width, u32 height, u64 frames_used, gamma (f64), variance (f64).
void write_jpd(std::ostream& os, const Jpd& jpd);
Jpd read_jpd(std::istream& is);
void save(const std::filesystem::path& path, const Jpd& jpd);
Jpd load_jpd(const std::filesystem::path& path);

// "EPRJ0001", u32 kind, u32 width, u32 height, i32 origin_x, i32 origin_y, values (f64).
void write_projection(std::ostream& os, const Projection& p);
Projection read_projection(std::istream& is);
void write_projection_csv(std::ostream& os, const Projection& p);

}  // namespace scatent::jpd
