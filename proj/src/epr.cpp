#include "scatent/epr.hpp"

#include <Eigen/Dense>

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <limits>
#include <ostream>

namespace scatent::epr {

void OpticalCalibration::validate() const {
  if (!(pixel_pitch > 0 && magnification > 0 && effective_focal_length > 0 && wavelength > 0)) {
    throw std::invalid_argument("optical calibration constants must be positive");
  }
}

namespace {

struct Cell {
  double x, y, v;
};

// Levenberg-Marquardt on a small parameter vector. `eval` fills residuals and
// their Jacobian for the given parameters.
template <class Eval>
Eigen::VectorXd levenberg_marquardt(Eigen::VectorXd p, Eval&& eval, int max_iter = 500) {
  Eigen::VectorXd r;
  Eigen::MatrixXd J;
  eval(p, r, J);
  double cost = r.squaredNorm();
  double lambda = 1e-3;
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::MatrixXd A = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    bool improved = false;
    for (int tries = 0; tries < 30 && !improved; ++tries) {
      Eigen::MatrixXd damped = A;
      damped.diagonal() += lambda * A.diagonal().cwiseMax(1e-300);
      const Eigen::VectorXd step = damped.ldlt().solve(-g);
      const Eigen::VectorXd trial = p + step;
      Eigen::VectorXd r2;
      Eigen::MatrixXd J2;
      eval(trial, r2, J2);
      const double c2 = r2.squaredNorm();
      if (std::isfinite(c2) && c2 <= cost) {
        const bool converged = step.norm() <= 1e-13 * (1.0 + p.norm()) || cost - c2 <= 1e-30;
        p = trial;
        r = std::move(r2);
        J = std::move(J2);
        cost = c2;
        lambda = std::max(lambda / 5.0, 1e-12);
        improved = true;
        if (converged) return p;
      } else {
        lambda *= 10.0;
      }
    }
    if (!improved) break;
  }
  return p;
}

double second_moment_width(const std::vector<Cell>& cells, double cx, double cy) {
  double w = 0, m = 0;
  for (const auto& c : cells) {
    if (c.v <= 0) continue;
    w += c.v;
    m += c.v * ((c.x - cx) * (c.x - cx) + (c.y - cy) * (c.y - cy));
  }
  return w > 0 ? std::sqrt(m / (2.0 * w)) : 0.0;
}

GaussianFit envelope_fit(const std::vector<Cell>& cells) {
  GaussianFit fit;
  fit.approximate = true;
  double w = 0, sx = 0, sy = 0, peak = 0;
  for (const auto& c : cells) {
    if (c.v <= 0) continue;
    w += c.v;
    sx += c.v * c.x;
    sy += c.v * c.y;
    peak = std::max(peak, c.v);
  }
  if (w <= 0) return fit;
  fit.center_x = sx / w;
  fit.center_y = sy / w;
  fit.delta = second_moment_width(cells, fit.center_x, fit.center_y);
  fit.amplitude = peak;
  return fit;
}

void finish_uncertainty(GaussianFit& fit, double sum_sq, std::size_t samples, std::size_t params) {
  const double dof = samples > params ? static_cast<double>(samples - params) : 1.0;
  fit.noise = std::sqrt(sum_sq / dof);
  fit.delta_uncertainty = fit.noise * std::sqrt(std::exp(1.0)) * fit.delta / fit.amplitude;
}

}  // namespace

GaussianFit fit_gaussian_width(const jpd::Projection& proj, const FitOptions& options) {
  if (proj.values.size() != proj.width * proj.height || proj.values.empty()) {
    throw std::invalid_argument("projection is empty or malformed");
  }
  if (options.noise_window < 3) throw std::invalid_argument("noise window must be at least 3 pixels");
  const bool skip_origin = proj.kind == jpd::ProjectionKind::minus;
  auto excluded = [&](long x, long y) { return skip_origin && x == proj.origin_x && y == proj.origin_y; };

  std::vector<Cell> all;
  all.reserve(proj.values.size());
  std::vector<double> grid(proj.values.size(), 0.0);
  std::vector<std::uint8_t> valid(proj.values.size(), 0);
  double vmax = -std::numeric_limits<double>::infinity();
  for (std::size_t y = 0; y < proj.height; ++y)
    for (std::size_t x = 0; x < proj.width; ++x) {
      if (excluded(static_cast<long>(x), static_cast<long>(y))) continue;
      const double v = proj.at(x, y);
      all.push_back({static_cast<double>(x), static_cast<double>(y), v});
      grid[y * proj.width + x] = v;
      valid[y * proj.width + x] = 1;
      vmax = std::max(vmax, v);
    }
  if (all.empty() || vmax <= 0) return envelope_fit(all);

  // Peak cell: largest mean over its valid 3x3 neighborhood, which also works
  // when the zero-offset cell of a minus projection is missing.
  long mx = -1, my = -1;
  double best_box = -std::numeric_limits<double>::infinity();
  for (long y = 0; y < static_cast<long>(proj.height); ++y)
    for (long x = 0; x < static_cast<long>(proj.width); ++x) {
      double sum = 0;
      int n = 0;
      for (long dy = -1; dy <= 1; ++dy)
        for (long dx = -1; dx <= 1; ++dx) {
          const long xx = x + dx, yy = y + dy;
          if (xx < 0 || yy < 0 || xx >= static_cast<long>(proj.width) || yy >= static_cast<long>(proj.height)) continue;
          const std::size_t c = static_cast<std::size_t>(yy) * proj.width + static_cast<std::size_t>(xx);
          if (!valid[c]) continue;
          sum += grid[c];
          ++n;
        }
      if (n > 0 && sum / n > best_box) best_box = sum / n, mx = x, my = y;
    }

  const long half = static_cast<long>(options.noise_window / 2);
  std::vector<Cell> window;
  double out_sum = 0, out_sq = 0;
  std::size_t out_n = 0;
  for (const auto& c : all) {
    const long dx = static_cast<long>(c.x) - mx, dy = static_cast<long>(c.y) - my;
    if (std::max(std::abs(dx), std::abs(dy)) <= half) {
      window.push_back(c);
    } else {
      out_sum += c.v;
      out_sq += c.v * c.v;
      ++out_n;
    }
  }
  if (out_n >= 10) {
    const double mean = out_sum / static_cast<double>(out_n);
    const double sd = std::sqrt(std::max(0.0, out_sq / static_cast<double>(out_n) - mean * mean));
    if (vmax - mean <= 5.0 * sd) return envelope_fit(all);
  }

  double wsum = 0, cx = 0, cy = 0;
  for (const auto& c : window) {
    if (std::abs(c.x - mx) > 2 || std::abs(c.y - my) > 2 || c.v <= 0) continue;
    wsum += c.v;
    cx += c.v * c.x;
    cy += c.v * c.y;
  }
  if (!(wsum > 0)) return envelope_fit(all);
  cx /= wsum;
  cy /= wsum;
  const double delta0 = std::max(second_moment_width(window, cx, cy), 0.3);

  // The 2D fit supplies the sub-pixel center for the radial profile.
  GaussianFit fit;
  {
    const auto n = static_cast<Eigen::Index>(window.size());
    auto eval = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd& J) {
      r.resize(n);
      J.resize(n, 4);
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& c = window[static_cast<std::size_t>(i)];
        const double dx = c.x - p[2], dy = c.y - p[3], s2 = p[1] * p[1];
        const double e = std::exp(-(dx * dx + dy * dy) / (2 * s2));
        r[i] = p[0] * e - c.v;
        J(i, 0) = e;
        J(i, 1) = p[0] * e * (dx * dx + dy * dy) / (s2 * p[1]);
        J(i, 2) = p[0] * e * dx / s2;
        J(i, 3) = p[0] * e * dy / s2;
      }
    };
    Eigen::VectorXd p(4);
    p << vmax, delta0, cx, cy;
    p = levenberg_marquardt(p, eval);
    Eigen::VectorXd r;
    Eigen::MatrixXd J;
    eval(p, r, J);
    fit.amplitude = p[0];
    fit.delta = std::abs(p[1]);
    fit.center_x = p[2];
    fit.center_y = p[3];
    const bool ok = fit.amplitude > 0 && std::isfinite(fit.delta) && std::abs(p[2] - mx) <= half &&
                    std::abs(p[3] - my) <= half;
    if (options.full_2d) {
      if (!ok) return envelope_fit(all);
      finish_uncertainty(fit, r.squaredNorm(), window.size(), 4);
      return fit;
    }
    if (ok) cx = p[2], cy = p[3];
  }

  // Azimuthal average: bin k holds the cells with floor(r + 0.5) == k.
  struct Bin {
    std::vector<double> r2;
    double mean = 0;
  };
  std::vector<Bin> bins(static_cast<std::size_t>(half) + 1);
  for (const auto& c : window) {
    const double r2 = (c.x - cx) * (c.x - cx) + (c.y - cy) * (c.y - cy);
    const auto k = static_cast<std::size_t>(std::floor(std::sqrt(r2) + 0.5));
    if (k >= bins.size()) continue;
    bins[k].r2.push_back(r2);
    bins[k].mean += c.v;
  }
  std::erase_if(bins, [](const Bin& b) { return b.r2.empty(); });
  for (auto& b : bins) b.mean /= static_cast<double>(b.r2.size());
  if (bins.size() < 3) return envelope_fit(all);

  const auto n = static_cast<Eigen::Index>(bins.size());
  auto eval = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd& J) {
    r.resize(n);
    J.resize(n, 2);
    const double s2 = p[1] * p[1];
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& b = bins[static_cast<std::size_t>(i)];
      double e_mean = 0, de_mean = 0;
      for (double r2 : b.r2) {
        const double e = std::exp(-r2 / (2 * s2));
        e_mean += e;
        de_mean += e * r2 / (s2 * p[1]);
      }
      const double cnt = static_cast<double>(b.r2.size());
      r[i] = p[0] * e_mean / cnt - b.mean;
      J(i, 0) = e_mean / cnt;
      J(i, 1) = p[0] * de_mean / cnt;
    }
  };
  Eigen::VectorXd p(2);
  p << vmax, delta0;
  p = levenberg_marquardt(p, eval);
  Eigen::VectorXd r;
  Eigen::MatrixXd J;
  eval(p, r, J);
  fit.amplitude = p[0];
  fit.delta = std::abs(p[1]);
  fit.center_x = cx;
  fit.center_y = cy;
  if (!(fit.amplitude > 0) || !std::isfinite(fit.delta)) return envelope_fit(all);
  finish_uncertainty(fit, r.squaredNorm(), bins.size(), 2);
  return fit;
}

double pixel_to_physical(double delta_pixels, const OpticalCalibration& cal, Basis basis) {
  cal.validate();
  if (basis == Basis::position) return delta_pixels * cal.pixel_pitch / cal.magnification;
  return delta_pixels * cal.pixel_pitch * kTwoPi / (cal.wavelength * cal.effective_focal_length);
}

EprReport epr_criterion(double delta_r, double delta_k, double delta_r_uncertainty, double delta_k_uncertainty) {
  if (!(delta_r > 0 && delta_k > 0)) throw std::invalid_argument("correlation widths must be positive");
  if (delta_r_uncertainty < 0 || delta_k_uncertainty < 0) throw std::invalid_argument("negative uncertainty");
  EprReport rep;
  rep.delta_r = delta_r;
  rep.delta_k = delta_k;
  rep.delta_r_uncertainty = delta_r_uncertainty;
  rep.delta_k_uncertainty = delta_k_uncertainty;
  rep.product = delta_r * delta_k;
  rep.sigma = rep.product * std::hypot(delta_k_uncertainty / delta_k, delta_r_uncertainty / delta_r);
  rep.violated = rep.product < 0.5;
  if (rep.sigma > 0) {
    rep.confidence = std::abs(0.5 - rep.product) / rep.sigma;
  } else {
    rep.confidence = std::numeric_limits<double>::infinity();
    rep.confidence_infinite = true;
  }
  return rep;
}

namespace {

std::string number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_report_text(std::ostream& os, const EprReport& r) {
  os << "delta_r=" << number(r.delta_r) << '\n'
     << "delta_r_uncertainty=" << number(r.delta_r_uncertainty) << '\n'
     << "delta_k=" << number(r.delta_k) << '\n'
     << "delta_k_uncertainty=" << number(r.delta_k_uncertainty) << '\n'
     << "product=" << number(r.product) << '\n'
     << "sigma=" << number(r.sigma) << '\n'
     << "confidence=" << number(r.confidence) << '\n'
     << "violated=" << (r.violated ? "true" : "false") << '\n'
     << "approximate=" << (r.approximate ? "true" : "false") << '\n';
}

void write_report_json(std::ostream& os, const EprReport& r) {
  nlohmann::ordered_json j;
  j["delta_r"] = r.delta_r;
  j["delta_r_uncertainty"] = r.delta_r_uncertainty;
  j["delta_k"] = r.delta_k;
  j["delta_k_uncertainty"] = r.delta_k_uncertainty;
  j["product"] = r.product;
  j["sigma"] = r.sigma;
  // JSON has no infinity; an infinite confidence is written as null with a flag.
  j["confidence"] = r.confidence_infinite ? nlohmann::ordered_json() : nlohmann::ordered_json(r.confidence);
  j["confidence_infinite"] = r.confidence_infinite;
  j["violated"] = r.violated;
  j["approximate"] = r.approximate;
  os << j.dump(2) << '\n';
}

}  // namespace scatent::epr
