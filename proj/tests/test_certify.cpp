#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "scatent/certify.hpp"

#include <cmath>
#include <complex>
#include <random>
#include <set>
#include <sstream>

using namespace scatent;
using namespace scatent::certify;
using cplx = std::complex<double>;

namespace {

struct TwoBasisCounts {
  RMatrix pos, mom;
  double fidelity = 0;
};

// Exact two-basis probabilities and the fidelity with the maximally entangled
// state, evaluated directly from a density matrix on C^d x C^d.
TwoBasisCounts evaluate(const CMatrix& rho, int d) {
  TwoBasisCounts out;
  out.pos.resize(d, d);
  out.mom.resize(d, d);
  auto idx = [d](int m, int n) { return m * d + n; };
  for (int m = 0; m < d; ++m)
    for (int n = 0; n < d; ++n) out.pos(m, n) = rho(idx(m, n), idx(m, n)).real();

  const double pi = std::acos(-1.0);
  auto phi = [&](int p, int m) { return std::polar(1.0 / std::sqrt(double(d)), 2 * pi * p * m / d); };
  for (int p = 0; p < d; ++p)
    for (int v = 0; v < d; ++v) {
      Eigen::VectorXcd vec(d * d);
      for (int m = 0; m < d; ++m)
        for (int n = 0; n < d; ++n) vec(idx(m, n)) = phi(p, m) * std::conj(phi(v, n));
      out.mom(p, v) = (vec.adjoint() * rho * vec)(0, 0).real();
    }

  Eigen::VectorXcd target = Eigen::VectorXcd::Zero(d * d);
  for (int m = 0; m < d; ++m) target(idx(m, m)) = 1.0 / std::sqrt(double(d));
  out.fidelity = (target.adjoint() * rho * target)(0, 0).real();
  return out;
}

CMatrix random_unitary(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  CMatrix a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = cplx(g(rng), g(rng));
  Eigen::HouseholderQR<CMatrix> qr(a);
  return qr.householderQ();
}

CMatrix random_mixed(int d, int rank, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  CMatrix a(d * d, rank);
  for (int i = 0; i < d * d; ++i)
    for (int j = 0; j < rank; ++j) a(i, j) = cplx(g(rng), g(rng));
  CMatrix rho = a * a.adjoint();
  return rho / rho.trace().real();
}

// Pure state sum_i c_i |u_i>|v_i> with r nonzero Schmidt coefficients.
CMatrix schmidt_state(int d, int r, bool equal, bool rotate, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::vector<double> c(r, 1.0);
  if (!equal)
    for (auto& x : c) x = u(rng);
  double norm = 0;
  for (double x : c) norm += x * x;
  const CMatrix U = rotate ? random_unitary(d, rng) : CMatrix::Identity(d, d);
  const CMatrix V = rotate ? random_unitary(d, rng) : CMatrix::Identity(d, d);
  Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(d * d);
  for (int i = 0; i < r; ++i)
    for (int m = 0; m < d; ++m)
      for (int n = 0; n < d; ++n) psi(m * d + n) += c[i] / std::sqrt(norm) * U(m, i) * V(n, i);
  return psi * psi.adjoint();
}

jpd::Jpd empty_jpd(std::size_t w, std::size_t h) { return jpd::Jpd(w, h, 1); }

std::vector<double> disk(std::size_t w, std::size_t h, double radius) {
  std::vector<double> img(w * h, 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double dx = x - (w - 1) / 2.0, dy = y - (h - 1) / 2.0;
      if (dx * dx + dy * dy <= radius * radius) img[y * w + x] = 1.0;
    }
  return img;
}

}  // namespace

TEST_CASE("certified dimension fixtures") {
  CHECK(certified_dimension(0.6138, 45) == 28);
  CHECK(certified_dimension(0.37, 45) == 17);
  CHECK(certified_dimension(1.0, 45) == 45);
  CHECK(certified_dimension(1.5, 45) == 45);
  CHECK(certified_dimension(1.0 / 45, 45) == 0);
  CHECK(certified_dimension(-0.2, 45) == 0);
  CHECK(certified_dimension(std::nan(""), 45) == 0);
}

TEST_CASE("perfect and maximally mixed matrices") {
  for (int d : {2, 5, 45}) {
    const RMatrix pos = RMatrix::Identity(d, d) * 7.0;
    const RMatrix mom = RMatrix::Identity(d, d) * 3.0;
    const auto r = fidelity_bound(pos, mom);
    CHECK(r.f1 == doctest::Approx(1.0 / d));
    CHECK(r.f1_unweighted == doctest::Approx(1.0));
    CHECK(r.f2_tilde == doctest::Approx(1.0 - 1.0 / d));
    CHECK(r.f_tilde == doctest::Approx(1.0));
    CHECK(r.certified_r == static_cast<std::size_t>(d));
    CHECK(r.entangled);
  }
  const RMatrix flat = RMatrix::Constant(5, 5, 1.0);
  const auto m = fidelity_bound(flat, flat);
  CHECK(m.f_tilde < 1.0 / 5);
  CHECK(m.certified_r <= 1);
  CHECK_FALSE(m.entangled);
}

TEST_CASE("fidelity bound preconditions and clamping") {
  CHECK_THROWS_AS(fidelity_bound(RMatrix::Zero(4, 4), RMatrix::Identity(4, 4)), std::invalid_argument);
  CHECK_THROWS_AS(fidelity_bound(RMatrix::Identity(4, 4), RMatrix::Identity(5, 5)), std::invalid_argument);
  CHECK_THROWS_AS(fidelity_bound(RMatrix::Identity(1, 1), RMatrix::Identity(1, 1)), std::invalid_argument);
  RMatrix pos = RMatrix::Identity(4, 4);
  pos(1, 0) = -0.05;
  const auto r = fidelity_bound(pos, RMatrix::Identity(4, 4));
  CHECK(r.clamped_entries == 1);
  CHECK(r.f_tilde == doctest::Approx(r.f1 + r.f2_tilde));
}

TEST_CASE("lower bound holds on random mixed states") {
  std::mt19937_64 rng(11);
  int checked = 0;
  double worst = -1;
  for (int d : {2, 3, 4, 5, 6}) {
    for (int i = 0; i < 40; ++i) {
      const int rank = 1 + static_cast<int>(rng() % (d * d));
      CMatrix rho = random_mixed(d, rank, rng);
      // bias part of the ensemble toward the target so F-tilde is not trivially negative
      if (i % 2 == 0) {
        const double w = (i % 8) / 8.0 + 0.1;
        CMatrix target = CMatrix::Zero(d * d, d * d);
        for (int m = 0; m < d; ++m)
          for (int n = 0; n < d; ++n) target(m * d + m, n * d + n) = 1.0 / d;
        rho = (1 - w) * rho + w * target;
      }
      const auto c = evaluate(rho, d);
      const auto r = fidelity_bound(c.pos, c.mom);
      CHECK(r.f_tilde <= c.fidelity + 1e-12);
      worst = std::max(worst, r.f_tilde - c.fidelity);
      ++checked;
    }
  }
  CHECK(checked == 200);
  MESSAGE("largest F-tilde minus F: ", worst);
}

TEST_CASE("certified dimension never exceeds the Schmidt rank") {
  std::mt19937_64 rng(12);
  for (int d : {2, 3, 4, 5, 6}) {
    for (int r = 1; r <= d; ++r) {
      const auto eq = evaluate(schmidt_state(d, r, true, false, rng), d);
      const auto rep = fidelity_bound(eq.pos, eq.mom);
      CHECK(eq.fidelity == doctest::Approx(double(r) / d));
      CHECK(rep.f_tilde == doctest::Approx(double(r) / d).epsilon(1e-9));
      CHECK(rep.certified_r == (r >= 2 ? static_cast<std::size_t>(r) : 0u));
      for (int k = 0; k < 5; ++k) {
        const auto any = evaluate(schmidt_state(d, r, k % 2 == 0, true, rng), d);
        const auto rr = fidelity_bound(any.pos, any.mom);
        CHECK(rr.certified_r <= static_cast<std::size_t>(r));
        CHECK(rr.f_tilde <= any.fidelity + 1e-12);
      }
    }
  }
}

TEST_CASE("cyclic relabeling preserves the certificate") {
  std::mt19937_64 rng(13);
  const int d = 5;
  CMatrix rho = 0.7 * schmidt_state(d, d, true, false, rng) + 0.3 * random_mixed(d, 3, rng);
  const auto c = evaluate(rho, d);
  const auto base = fidelity_bound(c.pos, c.mom);
  RMatrix pos(d, d), mom(d, d);
  for (int m = 0; m < d; ++m)
    for (int n = 0; n < d; ++n) {
      pos((m + 2) % d, (n + 2) % d) = c.pos(m, n);
      mom((m + 2) % d, (n + 2) % d) = c.mom(m, n);
    }
  const auto shifted = fidelity_bound(pos, mom);
  CHECK(shifted.f1 == doctest::Approx(base.f1));
  CHECK(shifted.f_tilde == doctest::Approx(base.f_tilde));
  CHECK(shifted.certified_r == base.certified_r);
}

TEST_CASE("pixel set selection") {
  const std::size_t w = 48, h = 40;
  const auto img = disk(w, h, 16);
  const auto set = select_pixel_set(img, w, h, 45, 2);
  REQUIRE(set.d() == 45);
  std::set<std::size_t> distinct(set.pixels.begin(), set.pixels.end());
  CHECK(distinct.size() == 45);
  for (std::size_t i = 0; i < set.d(); ++i) {
    CHECK(img[set.pixels[i]] == 1.0);
    CHECK((set.x(i) - set.center_x) % 2 == 0);
    CHECK((set.y(i) - set.center_y) % 2 == 0);
  }
  CHECK(set.pixels[0] == static_cast<std::size_t>(set.center_y) * w + static_cast<std::size_t>(set.center_x));

  CHECK_THROWS_AS(select_pixel_set(img, w, h, 1, 2), std::invalid_argument);
  CHECK_THROWS_AS(select_pixel_set(img, w, h, 45, 0), std::invalid_argument);
  CHECK_THROWS_AS(select_pixel_set(disk(8, 8, 2), 8, 8, 45, 2), std::runtime_error);

  std::vector<std::uint8_t> mask(w * h, 0);
  mask[set.pixels[0]] = 1;
  const auto masked = select_pixel_set(img, w, h, 45, 2, mask);
  CHECK(masked.d() == 45);
  for (auto p : masked.pixels) CHECK(p != set.pixels[0]);
}

TEST_CASE("correlation matrices from a Jpd") {
  const std::size_t w = 24, h = 24;
  const auto set = select_pixel_set(disk(w, h, 9), w, h, 9, 2);
  auto j = empty_jpd(w, h);
  // correlations only between horizontally adjacent pixels
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x + 1 < w; ++x) {
      j.at(j.pixel(x, y), j.pixel(x + 1, y)) = 1.0;
      j.at(j.pixel(x + 1, y), j.pixel(x, y)) = 1.0;
    }
  const auto pos = correlation_matrix(j, set, epr::Basis::position);
  CHECK(pos.basis == epr::Basis::position);
  CHECK(pos.inferred_entries == set.d());
  for (std::size_t m = 0; m < set.d(); ++m)
    for (std::size_t n = 0; n < set.d(); ++n) {
      if (m == n)
        CHECK(pos.counts(m, n) == doctest::Approx(0.5));
      else
        CHECK(pos.counts(m, n) == 0.0);
    }

  // parity pairs about the set center map to the momentum diagonal
  auto k = empty_jpd(w, h);
  const long sx = 2 * set.center_x, sy = 2 * set.center_y;
  for (std::size_t i = 0; i < set.d(); ++i) {
    const auto a = set.pixels[i];
    const auto b = k.pixel(static_cast<std::size_t>(sx - set.x(i)), static_cast<std::size_t>(sy - set.y(i)));
    k.at(a, b) = 2.0;
  }
  const auto mom = correlation_matrix(k, set, epr::Basis::momentum);
  // the center pixel is its own partner; its entry is a same-pixel cell
  CHECK(mom.counts(0, 0) == 0.0);
  for (std::size_t i = 1; i < set.d(); ++i) CHECK(mom.counts(i, i) == 2.0);
  CHECK(mom.counts.sum() == doctest::Approx(mom.counts.diagonal().sum()));
}

TEST_CASE("correlation matrix CSV round trip") {
  CorrelationMatrix m;
  m.counts = RMatrix::Random(6, 6);
  m.basis = epr::Basis::momentum;
  std::stringstream ss;
  write_matrix_csv(ss, m);
  const auto back = read_matrix_csv(ss, epr::Basis::momentum);
  CHECK(back.basis == epr::Basis::momentum);
  CHECK((back.counts - m.counts).cwiseAbs().maxCoeff() == 0.0);

  std::stringstream ragged("1,2\n3\n");
  CHECK_THROWS(read_matrix_csv(ragged, epr::Basis::position));

  std::ostringstream rep;
  write_witness_report(rep, fidelity_bound(RMatrix::Identity(3, 3), RMatrix::Identity(3, 3)));
  for (const char* key : {"d=", "F1=", "F2_tilde=", "F_tilde=", "certified_r=", "clamped_entries="})
    CHECK(rep.str().find(key) != std::string::npos);
}

TEST_CASE("entropy and unbiasedness") {
  std::vector<double> uniform(45, 1.0);
  CHECK(entropy_bits(uniform) == doctest::Approx(std::log2(45.0)).epsilon(1e-12));
  CHECK(std::log2(45.0) == doctest::Approx(5.4919).epsilon(1e-4));
  std::vector<double> single{1.0};
  CHECK(entropy_bits(single) == 0.0);
  std::vector<double> zero{0.0, 0.0};
  CHECK_THROWS_AS(entropy_bits(zero), std::invalid_argument);

  const std::size_t w = 64, h = 64;
  const auto set = select_pixel_set(disk(w, h, 24), w, h, 45, 2);
  const auto u = unbiasedness(set, epr::OpticalCalibration{});
  MESSAGE("E = ", u.mean, " of maximum ", u.maximum);
  CHECK(u.mean == doctest::Approx(5.479).epsilon(0.02));
  CHECK(u.maximum == doctest::Approx(std::log2(45.0)));
  CHECK(u.per_mode.size() == 45);
}
