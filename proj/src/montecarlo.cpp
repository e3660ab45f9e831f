#include "scatent/montecarlo.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>

namespace scatent::montecarlo {

namespace {
constexpr std::uint64_t kNoiseTag = 0x504c4154;  // "PLAT"

RMatrix standard_normals(std::uint64_t seed, std::size_t trial, std::uint64_t basis, std::size_t d) {
  Engine rng(derive_seed(seed, kNoiseTag + basis, trial));
  std::normal_distribution<double> normal;
  RMatrix z(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (Eigen::Index r = 0; r < z.rows(); ++r)
    for (Eigen::Index c = 0; c < z.cols(); ++c) z(r, c) = normal(rng);
  return z;
}

RMatrix mean_matrix(const PlateauSpec& spec) {
  const auto d = static_cast<Eigen::Index>(spec.d);
  RMatrix m = RMatrix::Constant(d, d, spec.alpha_prime);
  m.diagonal().setConstant(spec.alpha);
  return m;
}
}  // namespace

std::vector<double> default_frame_counts() {
  std::vector<double> n;
  for (int k = 6; k <= 18; ++k) n.push_back(std::pow(10.0, k / 2.0));
  n.insert(n.end() - 2, 2.5e8);
  return n;
}

void PlateauSpec::validate() const {
  if (d < 2) throw std::invalid_argument("plateau study needs d >= 2");
  if (!(alpha > alpha_prime && alpha_prime >= 0)) throw std::invalid_argument("need alpha > alpha_prime >= 0");
  if (!(K >= 0) || !std::isfinite(K)) throw std::invalid_argument("noise scale K must be non-negative");
  if (trials == 0) throw std::invalid_argument("need at least one trial");
  for (double n : frame_counts)
    if (!(n >= 1)) throw std::invalid_argument("frame counts must be >= 1");
}

std::pair<certify::CorrelationMatrix, certify::CorrelationMatrix> synth_correlation_pair(const PlateauSpec& spec,
                                                                                         double frames,
                                                                                         std::size_t trial) {
  spec.validate();
  if (!(frames >= 1)) throw std::invalid_argument("frame count must be >= 1");
  const double sigma = spec.K / std::sqrt(frames);
  const RMatrix mean = mean_matrix(spec);
  certify::CorrelationMatrix pos, mom;
  pos.basis = epr::Basis::position;
  mom.basis = epr::Basis::momentum;
  pos.counts = mean + sigma * standard_normals(spec.seed, trial, 0, spec.d);
  mom.counts = mean + sigma * standard_normals(spec.seed, trial, 1, spec.d);
  return {std::move(pos), std::move(mom)};
}

std::vector<PlateauPoint> plateau_curve(const PlateauSpec& spec, int workers) {
  spec.validate();
  const std::size_t points = spec.frame_counts.size();
  std::vector<double> f(spec.trials * points);
  std::vector<double> r(spec.trials * points);
  const RMatrix mean = mean_matrix(spec);
  parallel_chunks(spec.trials, workers, [&](std::size_t t) {
    const RMatrix zp = standard_normals(spec.seed, t, 0, spec.d);
    const RMatrix zm = standard_normals(spec.seed, t, 1, spec.d);
    for (std::size_t i = 0; i < points; ++i) {
      const double sigma = spec.K / std::sqrt(spec.frame_counts[i]);
      const auto rep = certify::fidelity_bound_probabilities(mean + sigma * zp, mean + sigma * zm);
      f[t * points + i] = rep.f_tilde;
      r[t * points + i] = static_cast<double>(rep.certified_r);
    }
  });

  std::vector<PlateauPoint> curve(points);
  const double n = static_cast<double>(spec.trials);
  for (std::size_t i = 0; i < points; ++i) {
    PlateauPoint& p = curve[i];
    p.frames = spec.frame_counts[i];
    double sf = 0, sr = 0;
    for (std::size_t t = 0; t < spec.trials; ++t) sf += f[t * points + i], sr += r[t * points + i];
    p.mean_f = sf / n;
    p.mean_r = sr / n;
    double vf = 0, vr = 0;
    for (std::size_t t = 0; t < spec.trials; ++t) {
      vf += std::pow(f[t * points + i] - p.mean_f, 2);
      vr += std::pow(r[t * points + i] - p.mean_r, 2);
    }
    p.std_f = spec.trials > 1 ? std::sqrt(vf / (n - 1)) : 0.0;
    p.std_r = spec.trials > 1 ? std::sqrt(vr / (n - 1)) : 0.0;
    p.r_of_mean_f = certify::certified_dimension(p.mean_f, spec.d);
  }
  return curve;
}

void write_curve_csv(std::ostream& os, const std::vector<PlateauPoint>& curve) {
  os << "N,mean_F,std_F,mean_r\n";
  char buf[128];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", p.frames, p.mean_f, p.std_f, p.mean_r);
    os << buf;
  }
}

}  // namespace scatent::montecarlo
