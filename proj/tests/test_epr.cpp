#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "scatent/epr.hpp"

#include <cmath>
#include <random>
#include <sstream>

using namespace scatent;
using namespace scatent::epr;

namespace {

jpd::Projection gaussian_projection(std::size_t side, double delta, double amplitude, double cx, double cy,
                                    jpd::ProjectionKind kind = jpd::ProjectionKind::sum) {
  jpd::Projection p;
  p.kind = kind;
  p.width = p.height = side;
  p.origin_x = p.origin_y = static_cast<long>(side / 2);
  p.values.resize(side * side);
  p.variances.assign(side * side, 0.0);
  for (std::size_t y = 0; y < side; ++y)
    for (std::size_t x = 0; x < side; ++x) {
      const double dx = x - cx, dy = y - cy;
      p.at(x, y) = amplitude * std::exp(-(dx * dx + dy * dy) / (2 * delta * delta));
    }
  return p;
}

}  // namespace

TEST_CASE("noiseless Gaussian width is recovered exactly") {
  const auto proj = gaussian_projection(41, 3.0, 1.0, 20, 20);
  const auto fit = fit_gaussian_width(proj);
  CHECK(fit.delta == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(fit.delta_uncertainty < 1e-6);
  CHECK_FALSE(fit.approximate);
  CHECK(fit.center_x == doctest::Approx(20.0).epsilon(1e-6));

  FitOptions o2;
  o2.full_2d = true;
  const auto off = gaussian_projection(41, 2.5, 3.0, 19.6, 21.3);
  const auto f2 = fit_gaussian_width(off, o2);
  CHECK(f2.delta == doctest::Approx(2.5).epsilon(1e-5));
  CHECK(f2.center_x == doctest::Approx(19.6).epsilon(1e-5));
  CHECK(f2.center_y == doctest::Approx(21.3).epsilon(1e-5));
}

TEST_CASE("missing zero-offset cell of a minus projection does not bias the fit") {
  auto proj = gaussian_projection(41, 3.0, 1.0, 20, 20, jpd::ProjectionKind::minus);
  proj.at(20, 20) = 0.0;
  const auto fit = fit_gaussian_width(proj);
  CHECK(fit.delta == doctest::Approx(3.0).epsilon(1e-6));
}

TEST_CASE("width uncertainty matches the scatter of noisy fits") {
  const double sigma = 0.02;
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> noise(0.0, sigma);
  std::vector<double> widths;
  double mean_unc = 0;
  for (int draw = 0; draw < 100; ++draw) {
    auto proj = gaussian_projection(41, 3.0, 1.0, 20, 20);
    for (auto& v : proj.values) v += noise(rng);
    const auto fit = fit_gaussian_width(proj);
    REQUIRE_FALSE(fit.approximate);
    widths.push_back(fit.delta);
    mean_unc += fit.delta_uncertainty / 100;
  }
  double mean = 0, var = 0;
  for (double w : widths) mean += w / widths.size();
  for (double w : widths) var += (w - mean) * (w - mean) / (widths.size() - 1);
  const double scatter = std::sqrt(var);
  INFO("scatter ", scatter, " predicted ", mean_unc);
  CHECK(mean == doctest::Approx(3.0).epsilon(0.02));
  CHECK(mean_unc / scatter > 0.5);
  CHECK(mean_unc / scatter < 2.0);
}

TEST_CASE("flat or noise-only projections give an approximate envelope width") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(1.0, 0.1);
  jpd::Projection proj = gaussian_projection(31, 3.0, 0.0, 15, 15);
  for (auto& v : proj.values) v = noise(rng);
  const auto fit = fit_gaussian_width(proj);
  CHECK(fit.approximate);
  CHECK(fit.delta > 0);

  jpd::Projection zero = gaussian_projection(31, 3.0, 0.0, 15, 15);
  CHECK(fit_gaussian_width(zero).approximate);

  jpd::Projection bad;
  CHECK_THROWS_AS(fit_gaussian_width(bad), std::invalid_argument);
  FitOptions tiny;
  tiny.noise_window = 1;
  CHECK_THROWS_AS(fit_gaussian_width(gaussian_projection(31, 3, 1, 15, 15), tiny), std::invalid_argument);
}

TEST_CASE("pixel widths convert to crystal-plane units") {
  OpticalCalibration cal;
  CHECK(pixel_to_physical(1.0, cal, Basis::position) == doctest::Approx(4.5e-6).epsilon(1e-12));
  CHECK(pixel_to_physical(1.0, cal, Basis::momentum) == doctest::Approx(4.654e3).epsilon(1e-3));
  CHECK(pixel_to_physical(1.0, cal, Basis::momentum) ==
        doctest::Approx(45e-6 * 2 * M_PI / (810e-9 * 75e-3)).epsilon(1e-12));
  cal.magnification = 1.0;
  cal.pixel_pitch = 16e-6;
  CHECK(pixel_to_physical(2.5, cal, Basis::position) == doctest::Approx(40e-6).epsilon(1e-12));
  cal.wavelength = 0;
  CHECK_THROWS_AS(pixel_to_physical(1.0, cal, Basis::position), std::invalid_argument);
}

TEST_CASE("criterion fixtures") {
  const auto a = epr_criterion(6.77e-6, 1.495e4);
  CHECK(a.product == doctest::Approx(0.1012).epsilon(5e-4));
  CHECK(a.violated);
  const auto b = epr_criterion(8.82e-6, 1.72e4);
  CHECK(b.product == doctest::Approx(0.1517).epsilon(5e-4));
  CHECK(b.violated);
  const auto c = epr_criterion(8.32e-6, 9.8e4);
  CHECK(c.product == doctest::Approx(0.815).epsilon(1e-3));
  CHECK_FALSE(c.violated);
}

TEST_CASE("confidence definition and scale consistency") {
  // product 0.3 with relative errors chosen so that sigma = 0.02: |0.5 - 0.3| / 0.02 = 10
  const double dr = 3e-6, dk = 1e5;
  const double rel = 0.02 / 0.3 / std::sqrt(2.0);
  const auto r = epr_criterion(dr, dk, rel * dr, rel * dk);
  CHECK(r.product == doctest::Approx(0.3));
  CHECK(r.sigma == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(r.confidence == doctest::Approx(10.0).epsilon(1e-12));
  CHECK_FALSE(r.confidence_infinite);

  const auto s = epr_criterion(2 * dr, dk / 2, rel * 2 * dr, rel * dk / 2);
  CHECK(s.product == r.product);
  CHECK(s.violated == r.violated);

  const auto inf = epr_criterion(dr, dk);
  CHECK(inf.confidence_infinite);
  CHECK(inf.violated);

  CHECK_THROWS_AS(epr_criterion(0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(epr_criterion(1.0, -1.0), std::invalid_argument);
}

TEST_CASE("reports carry every field") {
  const auto r = epr_criterion(6.77e-6, 1.495e4, 1e-8, 2e1);
  std::ostringstream text, json;
  write_report_text(text, r);
  write_report_json(json, r);
  for (const char* key : {"delta_r", "delta_k", "product", "sigma", "confidence", "violated"}) {
    CHECK(text.str().find(key) != std::string::npos);
    CHECK(json.str().find(key) != std::string::npos);
  }
}
