#pragma once

#include "scatent/twophoton.hpp"

#include <optional>

namespace scatent::shaping {

using twophoton::PhaseMask;

/// Second SLM plane a free-space distance after the first.
struct SecondPlane {
  double distance = 200e-3;   ///< meters
  double wavelength = 810e-9; ///< meters
};

struct ShapingProblem {
  optics::TransferMatrix medium;      ///< maps SLM modes to output modes
  std::optional<SecondPlane> second;  ///< absent: single-SLM problem
  PhaseMask d1;
  PhaseMask d2;                       ///< ignored without a second plane
  double weight_position = 1.0;
  double weight_momentum = 1.0;

  const optics::ModeGrid& slm_grid() const { return medium.in_grid; }
  void validate() const;
};

/// Problem with flat masks on the medium's input grid.
ShapingProblem make_problem(optics::TransferMatrix medium, std::optional<SecondPlane> second = std::nullopt);

struct ShapedStates {
  CMatrix momentum;  ///< S S^t / sqrt(N), S = T D2 P D1 (P = identity, D2 = identity for one plane)
  CMatrix position;  ///< F momentum F^t
};

/// Output amplitudes for the identity input state, not renormalized.
ShapedStates shaped_states(const ShapingProblem& problem);

/// w_pos * sum_a |psi_pos(a, a)|^2 + w_mom * sum_a |psi_mom(a, parity(a))|^2.
double objective(const ShapingProblem& problem);

struct ShapingOptions {
  std::size_t phase_steps = 16;
  std::size_t max_passes = 6;
  double tolerance = 1e-9;  ///< stop once a full pass gains less than this (relative)
};

struct ShapingResult {
  PhaseMask d1;
  PhaseMask d2;
  std::vector<double> trace;  ///< objective after each macro-pixel update
  std::size_t evaluations = 0;
  bool budget_exhausted = false;
};

/// Sequential coordinate ascent over macro-pixels on a fixed phase grid.
/// Each candidate phase costs one evaluation. Passes alternate D1 and D2.
ShapingResult optimize_masks(const ShapingProblem& problem, std::size_t budget, const ShapingOptions& options = {});

struct PeakToBackground {
  double position = 0;  ///< minus-coordinate projection
  double momentum = 0;  ///< sum-coordinate projection
};

PeakToBackground peak_to_background(const ShapingProblem& problem);

}  // namespace scatent::shaping
