#include "scatent/optics.hpp"

#include <cmath>
#include <fstream>

namespace scatent::optics {

long ModeGrid::centered_column(std::size_t idx) const {
  return static_cast<long>(column(idx)) - static_cast<long>(width / 2);
}

long ModeGrid::centered_row(std::size_t idx) const {
  return static_cast<long>(row(idx)) - static_cast<long>(height / 2);
}

std::size_t ModeGrid::parity_partner(std::size_t idx) const {
  const auto reflect = [](std::size_t v, std::size_t n) { return (2 * (n / 2) + n - v) % n; };
  return index(reflect(column(idx), width), reflect(row(idx), height));
}

void ModeGrid::validate() const {
  if (width == 0 || height == 0) throw std::invalid_argument("mode grid must have at least one mode per axis");
  if (!(pitch > 0.0) || !std::isfinite(pitch)) throw std::invalid_argument("mode grid pitch must be positive");
}

void TransferMatrix::validate() const {
  in_grid.validate();
  out_grid.validate();
  if (in_modes() != in_grid.modes() || out_modes() != out_grid.modes()) {
    throw std::invalid_argument("transfer matrix shape does not match its grids");
  }
  if (!entries.allFinite()) throw std::invalid_argument("transfer matrix has non-finite entries");
}

double unitarity_defect(const CMatrix& m) {
  const CMatrix g = m * m.adjoint();
  return (g - CMatrix::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff();
}

namespace {

CMatrix centered_dft_1d(std::size_t n) {
  CMatrix f(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  const long half = static_cast<long>(n / 2);
  const double norm = 1.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t x = 0; x < n; ++x) {
      // Reduce the phase index modulo n before converting to an angle.
      const long k = ((static_cast<long>(u) - half) * (static_cast<long>(x) - half)) % static_cast<long>(n);
      const double angle = -kTwoPi * static_cast<double>(k) / static_cast<double>(n);
      f(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(x)) = std::polar(norm, angle);
    }
  }
  return f;
}

CMatrix kron_grid(const CMatrix& fy, const CMatrix& fx) {
  const auto w = fx.rows();
  const auto h = fy.rows();
  CMatrix out(w * h, w * h);
  for (Eigen::Index v = 0; v < h; ++v)
    for (Eigen::Index y = 0; y < h; ++y)
      out.block(v * w, y * w, w, w) = fy(v, y) * fx;
  return out;
}

CVector random_phases(std::size_t n, Engine& rng) {
  CVector d(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = std::polar(1.0, kTwoPi * uniform01(rng));
  return d;
}

}  // namespace

TransferMatrix dft_matrix(const ModeGrid& grid) {
  grid.validate();
  TransferMatrix tm;
  tm.entries = kron_grid(centered_dft_1d(grid.height), centered_dft_1d(grid.width));
  tm.in_grid = grid;
  tm.out_grid = grid;
  tm.out_grid.plane = grid.plane == PlaneKind::position ? PlaneKind::momentum : PlaneKind::position;
  return tm;
}

TransferMatrix free_space_kernel(const ModeGrid& grid, double distance, double wavelength) {
  grid.validate();
  if (!(distance > 0.0)) throw std::invalid_argument("propagation distance must be positive");
  if (!(wavelength > 0.0)) throw std::invalid_argument("wavelength must be positive");

  const TransferMatrix f = dft_matrix(grid);
  CVector h(static_cast<Eigen::Index>(grid.modes()));
  for (std::size_t i = 0; i < grid.modes(); ++i) {
    const double fx = static_cast<double>(grid.centered_column(i)) / (static_cast<double>(grid.width) * grid.pitch);
    const double fy = static_cast<double>(grid.centered_row(i)) / (static_cast<double>(grid.height) * grid.pitch);
    h(static_cast<Eigen::Index>(i)) = std::polar(1.0, -kPi * wavelength * distance * (fx * fx + fy * fy));
  }

  TransferMatrix tm;
  tm.entries = f.entries.adjoint() * h.asDiagonal() * f.entries;
  tm.in_grid = grid;
  tm.out_grid = grid;
  const double n_min = static_cast<double>(std::min(grid.width, grid.height));
  if (wavelength * distance > n_min * grid.pitch * grid.pitch) {
    tm.warnings.push_back("fresnel sampling violated: lambda*d exceeds n*pitch^2, kernel aliases");
  }
  const double defect = unitarity_defect(tm.entries);
  if (defect > 1e-9) tm.warnings.push_back("unitarity defect " + std::to_string(defect));
  return tm;
}

CVector thin_screen(const MediumSpec& spec) {
  Engine rng(derive_seed(spec.seed, 0x7468696eULL));
  return random_phases(spec.in_grid.modes(), rng);
}

TransferMatrix synth_medium(const MediumSpec& spec) {
  spec.in_grid.validate();
  TransferMatrix tm;
  tm.in_grid = spec.in_grid;
  switch (spec.kind) {
    case MediumKind::thin_phase: {
      const TransferMatrix f = dft_matrix(spec.in_grid);
      tm.entries = f.entries * thin_screen(spec).asDiagonal();
      tm.out_grid = f.out_grid;
      break;
    }
    case MediumKind::thick_iid_gaussian: {
      spec.out_grid.validate();
      Engine rng(derive_seed(spec.seed, 0x746869636bULL));
      std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
      const auto rows = static_cast<Eigen::Index>(spec.out_grid.modes());
      const auto cols = static_cast<Eigen::Index>(spec.in_grid.modes());
      tm.entries.resize(rows, cols);
      for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) {
          const double re = normal(rng);
          const double im = normal(rng);
          tm.entries(r, c) = Complex(re, im);
        }
      // Mean squared singular value = ||T||_F^2 / min(rows, cols).
      const double scale = std::sqrt(static_cast<double>(std::min(rows, cols)) / tm.entries.squaredNorm());
      tm.entries *= scale;
      tm.out_grid = spec.out_grid;
      break;
    }
    case MediumKind::multi_screen: {
      if (spec.screens == 0) throw std::invalid_argument("multi-screen medium needs at least one screen");
      Engine rng(derive_seed(spec.seed, 0x6d756c7469ULL));
      const TransferMatrix prop = free_space_kernel(spec.in_grid, spec.screen_distance, spec.wavelength);
      CMatrix acc = random_phases(spec.in_grid.modes(), rng).asDiagonal();
      for (std::size_t s = 1; s < spec.screens; ++s) {
        acc = random_phases(spec.in_grid.modes(), rng).asDiagonal() * (prop.entries * acc);
      }
      const TransferMatrix f = dft_matrix(spec.in_grid);
      tm.entries = f.entries * acc;
      tm.out_grid = f.out_grid;
      tm.warnings = prop.warnings;
      break;
    }
  }
  return tm;
}

TmMeasurement measure_tm(const TransferMatrix& medium, const ModeGrid& slm_grid, const TmProbeOptions& options) {
  medium.validate();
  if (slm_grid.modes() != medium.in_modes()) throw std::invalid_argument("SLM grid does not match medium input modes");
  const auto n_in = static_cast<Eigen::Index>(medium.in_modes());
  const auto n_out = static_cast<Eigen::Index>(medium.out_modes());

  CVector reference_in = CVector::Zero(n_in);
  if (options.reference_mode) {
    if (*options.reference_mode >= medium.in_modes()) throw std::invalid_argument("reference mode out of range");
    reference_in(static_cast<Eigen::Index>(*options.reference_mode)) = 1.0;
  } else {
    reference_in.setConstant(1.0 / std::sqrt(static_cast<double>(n_in)));
  }
  const CVector reference_out = medium.entries * reference_in;

  double scale = 0.0;
  if (options.counts_per_pixel > 0.0) {
    const double mean_ref = reference_out.squaredNorm() / static_cast<double>(n_out);
    const double mean_probe = medium.entries.squaredNorm() / static_cast<double>(n_out * n_in);
    scale = options.counts_per_pixel / (mean_ref + mean_probe);
  }
  Engine rng(derive_seed(options.seed, 0x746d6d656173ULL));

  const Complex steps[4] = {1.0, Complex(0, 1), -1.0, Complex(0, -1)};
  TmMeasurement out;
  out.estimate.in_grid = slm_grid;
  out.estimate.out_grid = medium.out_grid;
  out.estimate.entries.resize(n_out, n_in);
  RVector intensity[4];
  for (Eigen::Index k = 0; k < n_in; ++k) {
    for (int s = 0; s < 4; ++s) {
      const CVector field = reference_out + steps[s] * medium.entries.col(k);
      intensity[s] = field.cwiseAbs2();
      if (scale > 0.0) {
        for (Eigen::Index p = 0; p < n_out; ++p) {
          std::poisson_distribution<long long> counts(scale * intensity[s](p));
          intensity[s](p) = static_cast<double>(counts(rng)) / scale;
        }
      }
    }
    for (Eigen::Index p = 0; p < n_out; ++p) {
      out.estimate.entries(p, k) =
          Complex(intensity[0](p) - intensity[2](p), intensity[3](p) - intensity[1](p)) / 4.0;
    }
  }

  out.output_phase = reference_out.conjugate();
  out.unreliable_rows.assign(static_cast<std::size_t>(n_out), false);
  const double mean_ref = reference_out.squaredNorm() / static_cast<double>(n_out);
  std::size_t flagged = 0;
  for (Eigen::Index p = 0; p < n_out; ++p) {
    if (std::norm(reference_out(p)) <= 1e-12 * std::max(mean_ref, 1e-300)) {
      out.unreliable_rows[static_cast<std::size_t>(p)] = true;
      ++flagged;
    }
  }
  if (flagged > 0) out.estimate.warnings.push_back(std::to_string(flagged) + " output rows have a vanishing reference");
  return out;
}

void write_grid(std::ostream& os, const ModeGrid& g) {
  le::put<std::uint32_t>(os, static_cast<std::uint32_t>(g.width));
  le::put<std::uint32_t>(os, static_cast<std::uint32_t>(g.height));
  le::put<double>(os, g.pitch);
  le::put<std::uint32_t>(os, static_cast<std::uint32_t>(g.plane));
}

ModeGrid read_grid(std::istream& is) {
  ModeGrid g;
  g.width = le::get<std::uint32_t>(is);
  g.height = le::get<std::uint32_t>(is);
  g.pitch = le::get<double>(is);
  const auto plane = le::get<std::uint32_t>(is);
  if (plane > 1) throw FormatError("unknown plane kind");
  g.plane = static_cast<PlaneKind>(plane);
  return g;
}

void write_transfer_matrix(std::ostream& os, const TransferMatrix& tm) {
  le::put_magic(os, "ETMX0001");
  write_grid(os, tm.in_grid);
  write_grid(os, tm.out_grid);
  for (Eigen::Index r = 0; r < tm.entries.rows(); ++r)
    for (Eigen::Index c = 0; c < tm.entries.cols(); ++c) {
      le::put<double>(os, tm.entries(r, c).real());
      le::put<double>(os, tm.entries(r, c).imag());
    }
}

TransferMatrix read_transfer_matrix(std::istream& is) {
  le::expect_magic(is, "ETMX0001");
  TransferMatrix tm;
  tm.in_grid = read_grid(is);
  tm.out_grid = read_grid(is);
  tm.in_grid.validate();
  tm.out_grid.validate();
  const auto rows = static_cast<Eigen::Index>(tm.out_grid.modes());
  const auto cols = static_cast<Eigen::Index>(tm.in_grid.modes());
  tm.entries.resize(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      const double re = le::get<double>(is);
      const double im = le::get<double>(is);
      tm.entries(r, c) = Complex(re, im);
    }
  return tm;
}

void save(const std::filesystem::path& path, const TransferMatrix& tm) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string());
  write_transfer_matrix(os, tm);
}

TransferMatrix load_transfer_matrix(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_transfer_matrix(is);
}

}  // namespace scatent::optics
