#pragma once

#include "scatent/optics.hpp"

#include <optional>

namespace scatent::twophoton {

using optics::ModeGrid;
using optics::PlaneKind;
using optics::TransferMatrix;

/// Discrete two-photon amplitude psi(a, b) over the modes of `grid`.
struct TwoPhotonState {
  CMatrix psi;
  ModeGrid grid;
  PlaneKind basis = PlaneKind::position;
  /// Norm retained by the last propagation, before renormalization.
  double transmission = 1.0;
  std::vector<std::string> warnings;

  std::size_t modes() const { return static_cast<std::size_t>(psi.rows()); }
  /// |psi|^2, summing to one for a normalized state.
  RMatrix coincidence_law() const { return psi.cwiseAbs2(); }
};

/// One phase per SLM macro-pixel, wrapped to [0, 2pi).
struct PhaseMask {
  std::vector<double> thetas;
  ModeGrid grid;
  std::vector<std::string> warnings;

  /// diag(exp(i * power * theta)).
  CVector diagonal(int power = 1) const;
};

PhaseMask flat_mask(const ModeGrid& grid);
PhaseMask make_mask(const ModeGrid& grid, std::vector<double> thetas);
double wrap_phase(double theta);

struct GaussianPairSpec {
  double sigma_r = 10e-6;  ///< position correlation width, meters
  double sigma_k = 1e4;    ///< momentum correlation width, 1/meters
  double amplitude = 1.0;
};

/// psi = identity / sqrt(modes): perfectly position-correlated pairs.
TwoPhotonState identity_state(const ModeGrid& grid);

/// Double-Gaussian SPDC amplitude sampled at pixel centers and normalized.
TwoPhotonState gaussian_state(const ModeGrid& grid, const GaussianPairSpec& spec);

/// T D psi D^t T^t in the momentum basis, or with T replaced by F T in the
/// position basis. Each photon picks up the mask phase once.
TwoPhotonState propagate(const TwoPhotonState& in, const TransferMatrix& medium, const PhaseMask& mask,
                         PlaneKind basis);

/// theta_k = arg(conj(T_pk)) for focus row p (default: center of the output grid).
PhaseMask correction_mask(const TransferMatrix& tm, std::optional<std::size_t> focus_mode = std::nullopt);

struct ConditionScores {
  double score2 = 0;  ///< momentum-basis mass on exact parity pairs
  double score3 = 0;  ///< position-basis mass on the diagonal
};

ConditionScores condition_scores(const TwoPhotonState& momentum, const TwoPhotonState& position);

/// ETMX0001 container (grid, grid, entries) followed by a u32 basis tag.
void write_state(std::ostream& os, const TwoPhotonState& state);
TwoPhotonState read_state(std::istream& is);

/// Plain-text phase list in SLM grid order.
void write_mask(std::ostream& os, const PhaseMask& mask);
PhaseMask read_mask(std::istream& is, const ModeGrid& grid);

}  // namespace scatent::twophoton
