#include "scatent/certify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <tuple>

namespace scatent::certify {

PixelSet select_pixel_set(std::span<const double> intensity, std::size_t width, std::size_t height,
                          std::size_t d, std::size_t spacing, std::span<const std::uint8_t> masked) {
  if (d < 2) throw std::invalid_argument("pixel set needs d >= 2");
  if (spacing == 0) throw std::invalid_argument("pixel spacing must be positive");
  if (intensity.size() != width * height) throw std::invalid_argument("intensity image does not match sensor");
  if (!masked.empty() && masked.size() != width * height) throw std::invalid_argument("mask does not match sensor");

  double w = 0, sx = 0, sy = 0;
  for (std::size_t p = 0; p < intensity.size(); ++p) {
    const double v = std::max(intensity[p], 0.0);
    w += v;
    sx += v * static_cast<double>(p % width);
    sy += v * static_cast<double>(p / width);
  }
  PixelSet set;
  set.sensor_width = width;
  set.sensor_height = height;
  set.spacing = spacing;
  set.center_x = w > 0 ? std::lround(sx / w) : static_cast<long>(width / 2);
  set.center_y = w > 0 ? std::lround(sy / w) : static_cast<long>(height / 2);

  const long step = static_cast<long>(spacing);
  const long reach = static_cast<long>(std::max(width, height)) / step + 1;
  std::vector<std::tuple<long, long, long>> lattice;  // (r^2, j, i)
  for (long j = -reach; j <= reach; ++j)
    for (long i = -reach; i <= reach; ++i) lattice.emplace_back(i * i + j * j, j, i);
  std::sort(lattice.begin(), lattice.end());

  for (const auto& [r2, j, i] : lattice) {
    const long x = set.center_x + i * step, y = set.center_y + j * step;
    if (x < 0 || y < 0 || x >= static_cast<long>(width) || y >= static_cast<long>(height)) continue;
    const std::size_t p = static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x);
    if (!masked.empty() && masked[p]) continue;
    set.pixels.push_back(p);
    if (set.pixels.size() == d) return set;
  }
  throw std::runtime_error("not enough unmasked pixels for the requested pixel set");
}

namespace {

bool usable(long x, long y, const PixelSet& set, std::span<const std::uint8_t> masked) {
  if (x < 0 || y < 0 || x >= static_cast<long>(set.sensor_width) || y >= static_cast<long>(set.sensor_height)) {
    return false;
  }
  return masked.empty() || !masked[static_cast<std::size_t>(y) * set.sensor_width + static_cast<std::size_t>(x)];
}

}  // namespace

CorrelationMatrix correlation_matrix(const jpd::Jpd& jpd, const PixelSet& set, epr::Basis basis,
                                     std::span<const std::uint8_t> masked, std::optional<MirrorSum> mirror) {
  if (jpd.width() != set.sensor_width || jpd.height() != set.sensor_height) {
    throw std::invalid_argument("pixel set does not match the JPD sensor");
  }
  const std::size_t d = set.d();
  const std::size_t w = set.sensor_width;
  const MirrorSum sum = mirror.value_or(MirrorSum{2 * set.center_x, 2 * set.center_y});
  CorrelationMatrix m;
  m.basis = basis;
  m.counts = RMatrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < d; ++r) {
    const std::size_t a = set.pixels[r];
    for (std::size_t c = 0; c < d; ++c) {
      long bx = set.x(c), by = set.y(c);
      if (basis == epr::Basis::momentum) {
        bx = sum.x - bx;
        by = sum.y - by;
      }
      if (!usable(bx, by, set, masked)) continue;
      const std::size_t b = static_cast<std::size_t>(by) * w + static_cast<std::size_t>(bx);
      double value = 0;
      if (a != b) {
        value = jpd.at(a, b);
      } else {
        double total = 0;
        int count = 0;
        for (auto [dx, dy] : {std::pair{1L, 0L}, {-1L, 0L}, {0L, 1L}, {0L, -1L}}) {
          if (!usable(bx + dx, by + dy, set, masked)) continue;
          total += jpd.at(a, static_cast<std::size_t>(by + dy) * w + static_cast<std::size_t>(bx + dx));
          ++count;
        }
        value = count ? total / count : 0.0;
        ++m.inferred_entries;
      }
      m.counts(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = value;
    }
  }
  return m;
}

std::size_t certified_dimension(double f_tilde, std::size_t d) {
  if (!std::isfinite(f_tilde)) return 0;
  const double r = std::ceil(f_tilde * static_cast<double>(d) + 1.0 - 1e-9) - 1.0;
  const double clamped = std::clamp(r, 0.0, static_cast<double>(d));
  return clamped < 2.0 ? 0 : static_cast<std::size_t>(clamped);
}

namespace {
void check_shapes(const RMatrix& pos, const RMatrix& mom) {
  const auto d = pos.rows();
  if (d < 2 || pos.cols() != d || mom.rows() != d || mom.cols() != d) {
    throw std::invalid_argument("correlation matrices must both be d x d with d >= 2");
  }
  if (!pos.allFinite() || !mom.allFinite()) throw std::invalid_argument("correlation matrix has non-finite entries");
}
}  // namespace

WitnessReport fidelity_bound(const RMatrix& pos, const RMatrix& mom) {
  check_shapes(pos, mom);
  const double pos_total = pos.sum(), mom_total = mom.sum();
  if (!(pos_total > 0) || !(mom_total > 0)) throw std::invalid_argument("correlation matrix has zero total counts");
  return fidelity_bound_probabilities(pos / pos_total, mom / mom_total);
}

WitnessReport fidelity_bound_probabilities(const RMatrix& P, const RMatrix& Q) {
  check_shapes(P, Q);
  const auto d = P.rows();
  const double dd = static_cast<double>(d);

  WitnessReport rep;
  rep.d = static_cast<std::size_t>(d);
  rep.f1_unweighted = P.diagonal().sum();
  rep.f1 = rep.f1_unweighted / dd;

  // Cross terms grouped by m - n = delta (mod d): sum over distinct pairs of
  // sqrt(P_x P_y) equals (sum sqrt P)^2 - sum P within each group.
  double cross = 0;
  for (Eigen::Index delta = 1; delta < d; ++delta) {
    double root_sum = 0, sum = 0;
    for (Eigen::Index n = 0; n < d; ++n) {
      double v = P((n + delta) % d, n);
      if (v < 0) {
        v = 0;
        ++rep.clamped_entries;
      }
      root_sum += std::sqrt(v);
      sum += v;
    }
    cross += root_sum * root_sum - sum;
  }
  rep.f2_tilde = Q.diagonal().sum() - 1.0 / dd - cross / dd;
  rep.f_tilde = rep.f1 + rep.f2_tilde;
  rep.certified_r = certified_dimension(rep.f_tilde, rep.d);
  rep.entangled = rep.certified_r >= 2;
  return rep;
}

WitnessReport fidelity_bound(const CorrelationMatrix& pos, const CorrelationMatrix& mom) {
  if (pos.basis != epr::Basis::position || mom.basis != epr::Basis::momentum) {
    throw std::invalid_argument("expected a position and a momentum correlation matrix");
  }
  return fidelity_bound(pos.counts, mom.counts);
}

double entropy_bits(std::span<const double> p) {
  double total = 0;
  for (double v : p) {
    if (v < 0 || !std::isfinite(v)) throw std::invalid_argument("distribution entries must be finite and non-negative");
    total += v;
  }
  if (!(total > 0)) throw std::invalid_argument("distribution has zero mass");
  double h = 0;
  for (double v : p) {
    if (v <= 0) continue;
    const double q = v / total;
    h -= q * std::log2(q);
  }
  return h;
}

UnbiasednessReport unbiasedness(const PixelSet& set, const epr::OpticalCalibration& cal) {
  cal.validate();
  if (set.d() < 1) throw std::invalid_argument("empty pixel set");
  const double width = cal.pixel_pitch / cal.magnification;
  const double k_per_pixel = cal.pixel_pitch * kTwoPi / (cal.wavelength * cal.effective_focal_length);
  auto sinc = [](double x) { return x == 0.0 ? 1.0 : std::sin(x) / x; };

  // A square pixel of side `width` diffracts to sinc^2(k_x w/2) sinc^2(k_y w/2)
  // for every position pixel, so the conditional distribution is shared.
  std::vector<double> weights(set.d());
  for (std::size_t v = 0; v < set.d(); ++v) {
    const double kx = static_cast<double>(set.x(v) - set.center_x) * k_per_pixel;
    const double ky = static_cast<double>(set.y(v) - set.center_y) * k_per_pixel;
    const double sx = sinc(kx * width / 2), sy = sinc(ky * width / 2);
    weights[v] = sx * sx * sy * sy;
  }
  double total = 0;
  for (double v : weights) total += v;
  if (!(total > 0)) throw std::invalid_argument("pixel geometry has zero overlap with the momentum pixels");

  UnbiasednessReport rep;
  const double e = entropy_bits(weights);
  rep.per_mode.assign(set.d(), e);
  rep.mean = e;
  rep.maximum = std::log2(static_cast<double>(set.d()));
  return rep;
}

void write_matrix_csv(std::ostream& os, const CorrelationMatrix& m) {
  char buf[32];
  for (Eigen::Index r = 0; r < m.counts.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.counts.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", m.counts(r, c));
      os << (c ? "," : "") << buf;
    }
    os << '\n';
  }
}

CorrelationMatrix read_matrix_csv(std::istream& is, epr::Basis basis) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw FormatError("bad number in correlation matrix: " + cell);
      }
    }
    rows.push_back(std::move(row));
  }
  const auto d = static_cast<Eigen::Index>(rows.size());
  CorrelationMatrix m;
  m.basis = basis;
  m.counts.resize(d, d);
  for (Eigen::Index r = 0; r < d; ++r) {
    if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)].size()) != d) {
      throw FormatError("correlation matrix is not square");
    }
    for (Eigen::Index c = 0; c < d; ++c) m.counts(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  }
  return m;
}

void write_witness_report(std::ostream& os, const WitnessReport& r) {
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  os << "d=" << r.d << '\n'
     << "F1=" << num(r.f1) << '\n'
     << "F1_unweighted=" << num(r.f1_unweighted) << '\n'
     << "F2_tilde=" << num(r.f2_tilde) << '\n'
     << "F_tilde=" << num(r.f_tilde) << '\n'
     << "certified_r=" << r.certified_r << '\n'
     << "entangled=" << (r.entangled ? "true" : "false") << '\n'
     << "clamped_entries=" << r.clamped_entries << '\n';
}

}  // namespace scatent::certify
