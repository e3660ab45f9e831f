#pragma once

#include "scatent/common.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace scatent::optics {

enum class PlaneKind : std::uint32_t { position = 0, momentum = 1 };

/// Discrete grid of spatial modes, indexed row-major: index = row * width + column.
struct ModeGrid {
  std::size_t width = 1;
  std::size_t height = 1;
  double pitch = 1.0;  ///< meters (or 1/meters in a momentum plane)
  PlaneKind plane = PlaneKind::position;

  std::size_t modes() const { return width * height; }
  std::size_t index(std::size_t column, std::size_t row) const { return row * width + column; }
  std::size_t column(std::size_t index) const { return index % width; }
  std::size_t row(std::size_t index) const { return index / width; }

  /// Coordinate of a column/row relative to the grid center pixel (floor(n/2)).
  long centered_column(std::size_t index) const;
  long centered_row(std::size_t index) const;
  /// Index of the geometric center pixel (floor(w/2), floor(h/2)).
  std::size_t center_index() const { return index(width / 2, height / 2); }
  /// Mode at the point-reflected coordinate (-x, -y), wrapped onto the grid.
  std::size_t parity_partner(std::size_t index) const;

  /// Throws std::invalid_argument if width/height are zero or pitch is not positive.
  void validate() const;

  bool same_shape(const ModeGrid& other) const { return width == other.width && height == other.height; }
  friend bool operator==(const ModeGrid&, const ModeGrid&) = default;
};

/// Complex linear map from the modes of `in_grid` to the modes of `out_grid`.
struct TransferMatrix {
  CMatrix entries;  ///< out_grid.modes() x in_grid.modes()
  ModeGrid in_grid;
  ModeGrid out_grid;
  /// Sampling or measurement caveats attached by the producer.
  std::vector<std::string> warnings;

  std::size_t in_modes() const { return static_cast<std::size_t>(entries.cols()); }
  std::size_t out_modes() const { return static_cast<std::size_t>(entries.rows()); }
  void validate() const;
};

/// Max-abs deviation of M M^dagger from the identity.
double unitarity_defect(const CMatrix& m);

enum class MediumKind : std::uint32_t { thin_phase = 0, thick_iid_gaussian = 1, multi_screen = 2 };

struct MediumSpec {
  MediumKind kind = MediumKind::thin_phase;
  std::uint64_t seed = 0;
  ModeGrid in_grid;
  ModeGrid out_grid;          ///< ignored for thin and multi-screen media (square)
  std::size_t screens = 2;    ///< multi_screen only
  double screen_distance = 0; ///< meters, multi_screen only
  double wavelength = 810e-9; ///< meters
};

/// Centered, unitary 2D DFT over the grid. Symmetric; F*F is the parity permutation.
TransferMatrix dft_matrix(const ModeGrid& grid);

/// Paraxial Fresnel propagator over `distance`, built in the angular-spectrum
/// representation. Adds a warning when lambda*d exceeds n*pitch^2 (aliasing).
TransferMatrix free_space_kernel(const ModeGrid& grid, double distance, double wavelength);

/// Random scattering medium. Thin: F * diag(random phases), so F*T is a
/// permutation times a diagonal. Thick: i.i.d. circular Gaussian scaled to unit
/// mean squared singular value. Multi-screen: F * D_s P_d ... P_d D_1.
TransferMatrix synth_medium(const MediumSpec& spec);

/// The diagonal phase screen of a thin medium built from `spec` (unit modulus).
CVector thin_screen(const MediumSpec& spec);

struct TmProbeOptions {
  /// Static reference: a single input mode, or a flat field over all modes when empty.
  std::optional<std::size_t> reference_mode;
  /// Mean detected counts per output pixel per exposure; 0 disables shot noise.
  double counts_per_pixel = 0.0;
  std::uint64_t seed = 0;
};

struct TmMeasurement {
  TransferMatrix estimate;        ///< equals diag(output_phase) * T in the noiseless limit
  CVector output_phase;           ///< the unknown diagonal D' (conjugate reference field)
  std::vector<bool> unreliable_rows;
};

/// Four-step phase-shifting interferometric measurement, intensity-only readout.
TmMeasurement measure_tm(const TransferMatrix& medium, const ModeGrid& slm_grid, const TmProbeOptions& options = {});

// On-disk container: "ETMX0001", input grid, output grid, row-major complex LE f64 pairs.
void write_grid(std::ostream& os, const ModeGrid& g);
ModeGrid read_grid(std::istream& is);
void write_transfer_matrix(std::ostream& os, const TransferMatrix& tm);
TransferMatrix read_transfer_matrix(std::istream& is);
void save(const std::filesystem::path& path, const TransferMatrix& tm);
TransferMatrix load_transfer_matrix(const std::filesystem::path& path);

}  // namespace scatent::optics
