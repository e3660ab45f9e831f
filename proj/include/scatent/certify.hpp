#pragma once

#include "scatent/epr.hpp"

#include <iosfwd>

namespace scatent::certify {

/// d sensor pixels on a lattice disk, ordered by distance from the center.
struct PixelSet {
  std::size_t sensor_width = 0, sensor_height = 0;
  std::size_t spacing = 2;
  long center_x = 0, center_y = 0;
  std::vector<std::size_t> pixels;  ///< sensor indices, row-major
  std::string layout = "disk";

  std::size_t d() const { return pixels.size(); }
  long x(std::size_t i) const { return static_cast<long>(pixels[i] % sensor_width); }
  long y(std::size_t i) const { return static_cast<long>(pixels[i] / sensor_width); }
};

/// Lattice points spacing*(i, j) about the rounded intensity centroid, taken in
/// order of increasing radius and skipping masked or off-sensor points.
PixelSet select_pixel_set(std::span<const double> intensity, std::size_t width, std::size_t height,
                          std::size_t d = 45, std::size_t spacing = 2,
                          std::span<const std::uint8_t> masked = {});

struct CorrelationMatrix {
  RMatrix counts;
  epr::Basis basis = epr::Basis::position;
  std::size_t inferred_entries = 0;  ///< same-pixel entries filled from neighbors

  std::size_t d() const { return static_cast<std::size_t>(counts.rows()); }
};

/// Pixel coordinates summing to twice the point-reflection center.
struct MirrorSum {
  long x = 0, y = 0;
};

/// Position: M_mn = Gamma(m, n). Momentum: M_pv = Gamma(p, mirror(v)) with
/// mirror(v) = sum - v, so that parity pairs sit on the diagonal; the sum
/// defaults to twice the set center. Same-pixel entries are replaced by the
/// mean coincidence with the 4-neighbors.
CorrelationMatrix correlation_matrix(const jpd::Jpd& jpd, const PixelSet& set, epr::Basis basis,
                                     std::span<const std::uint8_t> masked = {},
                                     std::optional<MirrorSum> mirror = std::nullopt);

struct WitnessReport {
  std::size_t d = 0;
  double f1 = 0;             ///< (1/d) sum_m P_mm
  double f1_unweighted = 0;  ///< sum_m P_mm
  double f2_tilde = 0;
  double f_tilde = 0;
  std::size_t certified_r = 0;
  bool entangled = false;
  std::size_t clamped_entries = 0;  ///< negative probabilities set to 0 inside square roots
};

/// Certified Schmidt number for a fidelity bound: max r with r < f*d + 1, reported as 0 below 2.
std::size_t certified_dimension(double f_tilde, std::size_t d);

WitnessReport fidelity_bound(const CorrelationMatrix& pos, const CorrelationMatrix& mom);
WitnessReport fidelity_bound(const RMatrix& pos, const RMatrix& mom);
/// Same bound on matrices already holding probabilities; no renormalization.
WitnessReport fidelity_bound_probabilities(const RMatrix& P, const RMatrix& Q);

/// Shannon entropy in bits of a distribution (normalized internally).
double entropy_bits(std::span<const double> p);

struct UnbiasednessReport {
  std::vector<double> per_mode;  ///< E_n for each position pixel
  double mean = 0;
  double maximum = 0;            ///< log2 d
};

/// Conditional distribution of momentum pixels given a position pixel, from the
/// far-field sinc^2 pattern of a square pixel of the crystal-plane width.
UnbiasednessReport unbiasedness(const PixelSet& set, const epr::OpticalCalibration& cal);

void write_matrix_csv(std::ostream& os, const CorrelationMatrix& m);
CorrelationMatrix read_matrix_csv(std::istream& is, epr::Basis basis);
void write_witness_report(std::ostream& os, const WitnessReport& r);

}  // namespace scatent::certify
