#pragma once

#include "scatent/certify.hpp"

#include <iosfwd>

namespace scatent::montecarlo {

/// Half-decades from 1e3 to 1e9, plus 2.5e8 so the top point has a quarter-N partner.
std::vector<double> default_frame_counts();

struct PlateauSpec {
  std::size_t d = 45;
  double alpha = 1.0 / 45.0;  ///< diagonal mean
  double alpha_prime = 0.0;   ///< off-diagonal mean
  double K = 1.0;             ///< noise scale, sigma = K / sqrt(N)
  std::vector<double> frame_counts = default_frame_counts();
  std::size_t trials = 100;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Normal(alpha, K/sqrt(N)) diagonals and Normal(alpha', K/sqrt(N)) off-diagonals, independently
/// per basis. The standard normals depend only on (seed, trial), so trials are paired across N.
std::pair<certify::CorrelationMatrix, certify::CorrelationMatrix> synth_correlation_pair(
    const PlateauSpec& spec, double frames, std::size_t trial = 0);

struct PlateauPoint {
  double frames = 0;
  double mean_f = 0, std_f = 0;  ///< over trials
  double mean_r = 0, std_r = 0;
  std::size_t r_of_mean_f = 0;

  double se_f(std::size_t trials) const { return std_f / std::sqrt(static_cast<double>(trials)); }
  double se_r(std::size_t trials) const { return std_r / std::sqrt(static_cast<double>(trials)); }
};

/// The sampled matrices are read as probabilities and passed to the witness unnormalized.
std::vector<PlateauPoint> plateau_curve(const PlateauSpec& spec, int workers = worker_count());

/// Columns N, mean_F, std_F, mean_r.
void write_curve_csv(std::ostream& os, const std::vector<PlateauPoint>& curve);

}  // namespace scatent::montecarlo
