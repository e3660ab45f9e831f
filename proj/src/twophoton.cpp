#include "scatent/twophoton.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <sstream>

namespace scatent::twophoton {

double wrap_phase(double theta) {
  double w = std::fmod(theta, kTwoPi);
  if (w < 0) w += kTwoPi;
  if (w >= kTwoPi) w = 0.0;
  return w;
}

CVector PhaseMask::diagonal(int power) const {
  CVector d(static_cast<Eigen::Index>(thetas.size()));
  for (std::size_t k = 0; k < thetas.size(); ++k) d(static_cast<Eigen::Index>(k)) = std::polar(1.0, power * thetas[k]);
  return d;
}

PhaseMask flat_mask(const ModeGrid& grid) { return make_mask(grid, std::vector<double>(grid.modes(), 0.0)); }

PhaseMask make_mask(const ModeGrid& grid, std::vector<double> thetas) {
  grid.validate();
  if (thetas.size() != grid.modes()) throw std::invalid_argument("mask length does not match SLM grid");
  for (auto& t : thetas) t = wrap_phase(t);
  return PhaseMask{std::move(thetas), grid, {}};
}

TwoPhotonState identity_state(const ModeGrid& grid) {
  grid.validate();
  const auto n = static_cast<Eigen::Index>(grid.modes());
  TwoPhotonState s;
  s.psi = CMatrix::Identity(n, n) / std::sqrt(static_cast<double>(n));
  s.grid = grid;
  s.basis = grid.plane;
  return s;
}

TwoPhotonState gaussian_state(const ModeGrid& grid, const GaussianPairSpec& spec) {
  grid.validate();
  if (!(spec.sigma_r > 0) || !(spec.sigma_k > 0)) throw std::invalid_argument("correlation widths must be positive");
  const auto n = grid.modes();
  std::vector<double> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = static_cast<double>(grid.centered_column(i)) * grid.pitch;
    ys[i] = static_cast<double>(grid.centered_row(i)) * grid.pitch;
  }
  TwoPhotonState s;
  s.grid = grid;
  s.basis = grid.plane;
  s.psi.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  const double inv_r = 1.0 / (4.0 * spec.sigma_r * spec.sigma_r);
  const double k2 = spec.sigma_k * spec.sigma_k / 4.0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      const double dx = xs[a] - xs[b], dy = ys[a] - ys[b];
      const double sx = xs[a] + xs[b], sy = ys[a] + ys[b];
      s.psi(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
          spec.amplitude * std::exp(-(dx * dx + dy * dy) * inv_r - (sx * sx + sy * sy) * k2);
    }
  }
  const double norm = s.psi.norm();
  if (!(norm > 0)) throw std::invalid_argument("gaussian state vanishes on this grid");
  s.psi /= norm;
  if (spec.sigma_r < grid.pitch) s.warnings.push_back("sigma_r below grid pitch: correlations under-resolved");
  return s;
}

TwoPhotonState propagate(const TwoPhotonState& in, const TransferMatrix& medium, const PhaseMask& mask,
                         PlaneKind basis) {
  medium.validate();
  if (in.modes() != medium.in_modes() || mask.thetas.size() != medium.in_modes()) {
    throw std::invalid_argument("state, mask and medium input dimensions disagree");
  }
  if (in.psi.rows() != in.psi.cols()) throw std::invalid_argument("two-photon matrix must be square");

  CMatrix system = medium.entries * mask.diagonal().asDiagonal();
  if (basis == PlaneKind::position) system = optics::dft_matrix(medium.out_grid).entries * system;

  TwoPhotonState out;
  out.psi = system * in.psi * system.transpose();
  out.grid = medium.out_grid;
  out.grid.plane = basis;
  out.basis = basis;
  const double in_norm2 = in.psi.squaredNorm();
  const double out_norm2 = out.psi.squaredNorm();
  out.transmission = in_norm2 > 0 ? out_norm2 / in_norm2 : 0.0;
  if (out_norm2 > 0) out.psi /= std::sqrt(out_norm2);
  return out;
}

PhaseMask correction_mask(const TransferMatrix& tm, std::optional<std::size_t> focus_mode) {
  tm.validate();
  const std::size_t p = focus_mode.value_or(tm.out_grid.center_index());
  if (p >= tm.out_modes()) throw std::invalid_argument("focus mode outside output grid");
  std::vector<double> thetas(tm.in_modes(), 0.0);
  const auto row = tm.entries.row(static_cast<Eigen::Index>(p));
  PhaseMask mask;
  if (row.cwiseAbs().maxCoeff() == 0.0) {
    mask = make_mask(tm.in_grid, std::move(thetas));
    mask.warnings.push_back("focus row of transfer matrix is zero; returning flat mask");
    return mask;
  }
  for (std::size_t k = 0; k < thetas.size(); ++k) thetas[k] = std::arg(std::conj(row(static_cast<Eigen::Index>(k))));
  return make_mask(tm.in_grid, std::move(thetas));
}

ConditionScores condition_scores(const TwoPhotonState& momentum, const TwoPhotonState& position) {
  if (!momentum.grid.same_shape(position.grid) || momentum.modes() != position.modes()) {
    throw std::invalid_argument("condition scores need both states on the same grid");
  }
  ConditionScores s;
  const double mass_m = momentum.psi.squaredNorm();
  const double mass_p = position.psi.squaredNorm();
  double on_parity = 0, on_diag = 0;
  for (std::size_t a = 0; a < momentum.modes(); ++a) {
    const auto ia = static_cast<Eigen::Index>(a);
    on_parity += std::norm(momentum.psi(ia, static_cast<Eigen::Index>(momentum.grid.parity_partner(a))));
    on_diag += std::norm(position.psi(ia, ia));
  }
  s.score2 = mass_m > 0 ? on_parity / mass_m : 0.0;
  s.score3 = mass_p > 0 ? on_diag / mass_p : 0.0;
  return s;
}

void write_state(std::ostream& os, const TwoPhotonState& state) {
  TransferMatrix container{state.psi, state.grid, state.grid, {}};
  optics::write_transfer_matrix(os, container);
  le::put<std::uint32_t>(os, static_cast<std::uint32_t>(state.basis));
}

TwoPhotonState read_state(std::istream& is) {
  TransferMatrix container = optics::read_transfer_matrix(is);
  if (container.entries.rows() != container.entries.cols()) throw FormatError("two-photon state must be square");
  TwoPhotonState s;
  s.psi = std::move(container.entries);
  s.grid = container.in_grid;
  const auto tag = le::get<std::uint32_t>(is);
  if (tag > 1) throw FormatError("unknown basis tag");
  s.basis = static_cast<PlaneKind>(tag);
  return s;
}

void write_mask(std::ostream& os, const PhaseMask& mask) {
  os << "# phase mask " << mask.grid.width << "x" << mask.grid.height << " radians\n";
  os << std::setprecision(17);
  for (std::size_t r = 0; r < mask.grid.height; ++r) {
    for (std::size_t c = 0; c < mask.grid.width; ++c) {
      if (c) os << ' ';
      os << mask.thetas[mask.grid.index(c, r)];
    }
    os << '\n';
  }
}

PhaseMask read_mask(std::istream& is, const ModeGrid& grid) {
  std::vector<double> thetas;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    double v;
    while (ls >> v) thetas.push_back(v);
  }
  if (thetas.size() != grid.modes()) throw FormatError("mask file has wrong number of phases");
  return make_mask(grid, std::move(thetas));
}

}  // namespace scatent::twophoton
