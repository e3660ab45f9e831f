#pragma once

#include "scatent/jpd.hpp"

#include <iosfwd>

namespace scatent::epr {

struct OpticalCalibration {
  double pixel_pitch = 45e-6;             ///< sensor pixel pitch (m)
  double magnification = 10.0;            ///< imaging magnification, position configuration
  double effective_focal_length = 75e-3;  ///< Fourier lens, momentum configuration (m)
  double wavelength = 810e-9;             ///< photon wavelength (m)

  void validate() const;
};

enum class Basis { position, momentum };

struct FitOptions {
  std::size_t noise_window = 15;  ///< side of the square region around the peak
  bool full_2d = false;           ///< fit a 2D Gaussian with free center instead of the radial profile
};

struct GaussianFit {
  double amplitude = 0;
  double delta = 0;              ///< width in pixels
  double delta_uncertainty = 0;  ///< first-order propagation of the residual noise
  double center_x = 0, center_y = 0;  ///< peak center in projection cells
  double noise = 0;              ///< residual standard deviation
  bool approximate = false;      ///< no significant peak; delta is an envelope width
};

/// Fits f(r) = a exp(-r^2 / 2 delta^2) around the projection peak.
GaussianFit fit_gaussian_width(const jpd::Projection& proj, const FitOptions& options = {});

/// Converts a width in sensor pixels to crystal-plane units (m or 1/m).
double pixel_to_physical(double delta_pixels, const OpticalCalibration& cal, Basis basis);

struct EprReport {
  double delta_r = 0, delta_r_uncertainty = 0;
  double delta_k = 0, delta_k_uncertainty = 0;
  double product = 0;
  double sigma = 0;
  double confidence = 0;
  bool confidence_infinite = false;
  bool violated = false;
  bool approximate = false;  ///< one of the widths came from an envelope estimate
};

EprReport epr_criterion(double delta_r, double delta_k, double delta_r_uncertainty = 0.0,
                        double delta_k_uncertainty = 0.0);

void write_report_text(std::ostream& os, const EprReport& report);
void write_report_json(std::ostream& os, const EprReport& report);

}  // namespace scatent::epr
