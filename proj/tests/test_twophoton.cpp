#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "scatent/epr.hpp"
#include "scatent/twophoton.hpp"

#include <Eigen/SVD>

#include <sstream>

using namespace scatent;
using namespace scatent::twophoton;

namespace {

TransferMatrix identity_medium(const ModeGrid& g) {
  TransferMatrix t;
  t.in_grid = t.out_grid = g;
  t.entries = CMatrix::Identity(static_cast<Eigen::Index>(g.modes()), static_cast<Eigen::Index>(g.modes()));
  return t;
}

TransferMatrix thin(const ModeGrid& g, std::uint64_t seed) {
  optics::MediumSpec s;
  s.kind = optics::MediumKind::thin_phase;
  s.seed = seed;
  s.in_grid = g;
  return optics::synth_medium(s);
}

TransferMatrix thick(const ModeGrid& in, const ModeGrid& out, std::uint64_t seed) {
  optics::MediumSpec s;
  s.kind = optics::MediumKind::thick_iid_gaussian;
  s.seed = seed;
  s.in_grid = in;
  s.out_grid = out;
  return optics::synth_medium(s);
}

ConditionScores scores(const TwoPhotonState& in, const TransferMatrix& t, const PhaseMask& m) {
  return condition_scores(propagate(in, t, m, PlaneKind::momentum), propagate(in, t, m, PlaneKind::position));
}

}  // namespace

TEST_CASE("identity input state") {
  const auto s = identity_state(ModeGrid{32, 32, 10e-6});
  CHECK(s.modes() == 1024);
  CHECK(s.psi.squaredNorm() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((s.psi - CMatrix(s.psi.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gaussian state") {
  SUBCASE("factorizes when sigma_r * sigma_k = 1") {
    GaussianPairSpec spec;
    spec.sigma_r = 20e-6;
    spec.sigma_k = 1.0 / spec.sigma_r;
    const auto s = gaussian_state(ModeGrid{8, 8, 10e-6}, spec);
    Eigen::JacobiSVD<CMatrix> svd(s.psi);
    const auto sv = svd.singularValues();
    CHECK(sv(1) / sv(0) < 1e-6);
  }
  SUBCASE("is exchange symmetric and entangled for a small product") {
    GaussianPairSpec spec;
    spec.sigma_r = 10e-6;
    spec.sigma_k = 0.1 / spec.sigma_r;
    const auto s = gaussian_state(ModeGrid{8, 8, 10e-6}, spec);
    CHECK((s.psi - s.psi.transpose()).cwiseAbs().maxCoeff() < 1e-15);
    Eigen::JacobiSVD<CMatrix> svd(s.psi);
    CHECK(svd.singularValues()(1) / svd.singularValues()(0) > 0.1);
  }
  SUBCASE("minus-coordinate width equals sigma_r") {
    GaussianPairSpec spec;
    spec.sigma_r = 10e-6;
    spec.sigma_k = 1e4;
    const ModeGrid g{32, 32, 5e-6};
    const auto s = gaussian_state(g, spec);
    CHECK(s.warnings.empty());
    const auto proj = jpd::project_minus(jpd::jpd_from_law(s.coincidence_law(), g.width, g.height));
    const auto fit = epr::fit_gaussian_width(proj);
    CHECK(fit.delta * g.pitch == doctest::Approx(spec.sigma_r).epsilon(0.05));
  }
  SUBCASE("under-resolved widths are flagged") {
    GaussianPairSpec spec;
    spec.sigma_r = 1e-6;
    spec.sigma_k = 1e4;
    CHECK_FALSE(gaussian_state(ModeGrid{4, 4, 10e-6}, spec).warnings.empty());
  }
}

TEST_CASE("propagation") {
  const ModeGrid g{4, 4, 10e-6};
  GaussianPairSpec spec;
  spec.sigma_r = 10e-6;
  spec.sigma_k = 3e4;
  const auto in = gaussian_state(g, spec);

  SUBCASE("identity system leaves the state unchanged") {
    const auto out = propagate(in, identity_medium(g), flat_mask(g), PlaneKind::momentum);
    CHECK((out.psi - in.psi).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("exchange symmetry and normalization are preserved") {
    const auto t = thick(g, g, 4);
    std::vector<double> th(g.modes());
    for (std::size_t i = 0; i < th.size(); ++i) th[i] = 0.37 * static_cast<double>(i);
    const auto out = propagate(in, t, make_mask(g, th), PlaneKind::position);
    CHECK((out.psi - out.psi.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(out.psi.squaredNorm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out.transmission > 0);
  }
  SUBCASE("a global mask phase leaves the coincidence law unchanged") {
    const auto t = thick(g, g, 5);
    std::vector<double> a(g.modes()), b(g.modes());
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = 0.11 * static_cast<double>(i * i);
      b[i] = a[i] + 1.3;
    }
    const auto pa = propagate(in, t, make_mask(g, a), PlaneKind::momentum).coincidence_law();
    const auto pb = propagate(in, t, make_mask(g, b), PlaneKind::momentum).coincidence_law();
    CHECK((pa - pb).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("each photon picks up the mask once") {
    const auto id = identity_state(g);
    std::vector<double> th(g.modes(), 0.0);
    th[3] = kPi / 2;
    const auto out = propagate(id, identity_medium(g), make_mask(g, th), PlaneKind::momentum);
    // D Psi D^t with identity Psi is D^2: the phase doubles on the diagonal.
    CHECK(std::abs(out.psi(3, 3) / out.psi(0, 0) - Complex(-1, 0)) < 1e-12);
  }
  SUBCASE("mismatched shapes are rejected") {
    CHECK_THROWS_AS(propagate(in, identity_medium(ModeGrid{3, 3, 1.0}), flat_mask(g), PlaneKind::momentum),
                    std::invalid_argument);
  }
}

TEST_CASE("correction mask") {
  SUBCASE("real positive matrix gives a flat mask") {
    const ModeGrid g{3, 3, 1.0};
    TransferMatrix t;
    t.in_grid = t.out_grid = g;
    t.entries = CMatrix::Constant(9, 9, Complex(0.5, 0.0));
    const auto m = correction_mask(t);
    for (double th : m.thetas) CHECK(th == doctest::Approx(0.0));
  }
  SUBCASE("thin medium: mask conjugates the screen up to a global phase") {
    optics::MediumSpec s;
    s.kind = optics::MediumKind::thin_phase;
    s.seed = 17;
    s.in_grid = ModeGrid{8, 8, 10e-6};
    const auto t = optics::synth_medium(s);
    const auto screen = optics::thin_screen(s);
    const auto m = correction_mask(t);
    const Complex ref = std::polar(1.0, m.thetas[0]) * screen(0);
    for (std::size_t k = 0; k < m.thetas.size(); ++k)
      CHECK(std::abs(std::polar(1.0, m.thetas[k]) * screen(static_cast<Eigen::Index>(k)) - ref) < 1e-12);
  }
  SUBCASE("zero focus row warns") {
    const ModeGrid g{2, 2, 1.0};
    TransferMatrix t;
    t.in_grid = t.out_grid = g;
    t.entries = CMatrix::Zero(4, 4);
    CHECK_FALSE(correction_mask(t).warnings.empty());
  }
  SUBCASE("measured matrix gives the same refocusing as the true one") {
    const ModeGrid g{8, 8, 10e-6};
    const auto t = thin(g, 23);
    const auto measured = optics::measure_tm(t, g).estimate;
    const auto id = identity_state(g);
    const auto a = scores(id, t, correction_mask(t));
    const auto b = scores(id, t, correction_mask(measured));
    CHECK(a.score2 == doctest::Approx(b.score2).epsilon(1e-9));
    CHECK(a.score3 == doctest::Approx(b.score3).epsilon(1e-9));
  }
}

TEST_CASE("condition scores") {
  const ModeGrid g{8, 8, 10e-6};
  const auto id = identity_state(g);

  SUBCASE("no medium with a flat mask is perfectly correlated") {
    const auto sc = scores(id, optics::dft_matrix(g), flat_mask(g));
    CHECK(sc.score3 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sc.score2 == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("thin medium with the correction mask restores both conditions") {
    const auto t = thin(g, 31);
    const auto corrected = scores(id, t, correction_mask(t));
    CHECK(corrected.score2 >= 0.999);
    CHECK(corrected.score3 >= 0.999);
    const auto flat = scores(id, t, flat_mask(g));
    CHECK(flat.score2 < 0.1);
  }
  SUBCASE("thick medium with a flat mask sits at the speckle baseline") {
    double mean = 0;
    const int seeds = 20;
    for (int s = 0; s < seeds; ++s) mean += scores(id, thick(g, g, 100 + s), flat_mask(g)).score2;
    mean /= seeds;
    const double baseline = 1.0 / static_cast<double>(g.modes());
    CHECK(mean > 0.5 * baseline);
    CHECK(mean < 2.5 * baseline);
  }
}

TEST_CASE("thick 16 to 64 medium produces fully developed speckle") {
  const ModeGrid in{4, 4, 10e-6}, out{8, 8, 10e-6};
  const auto id = identity_state(in);
  double sum = 0, sum2 = 0;
  std::size_t n = 0;
  for (int s = 0; s < 20; ++s) {
    const auto law = propagate(id, thick(in, out, 200 + s), flat_mask(in), PlaneKind::momentum).coincidence_law();
    for (Eigen::Index a = 0; a < law.rows(); ++a)
      for (Eigen::Index b = 0; b < a; ++b) {
        sum += law(a, b);
        sum2 += law(a, b) * law(a, b);
        ++n;
      }
  }
  const double mean = sum / static_cast<double>(n);
  const double contrast = std::sqrt(sum2 / static_cast<double>(n) - mean * mean) / mean;
  CHECK(contrast == doctest::Approx(1.0).epsilon(0.15));
}

TEST_CASE("state and mask serialization") {
  const ModeGrid g{3, 2, 10e-6};
  GaussianPairSpec spec;
  spec.sigma_r = 10e-6;
  spec.sigma_k = 2e4;
  auto s = propagate(gaussian_state(g, spec), thick(g, g, 1), flat_mask(g), PlaneKind::momentum);
  std::stringstream ss;
  write_state(ss, s);
  const auto back = read_state(ss);
  CHECK(back.psi == s.psi);
  CHECK(back.basis == PlaneKind::momentum);

  std::vector<double> th{0.1, 1.2, 2.3, 3.4, 4.5, 5.6};
  const auto m = make_mask(g, th);
  std::stringstream ms;
  write_mask(ms, m);
  const auto mb = read_mask(ms, g);
  for (std::size_t i = 0; i < th.size(); ++i) CHECK(mb.thetas[i] == doctest::Approx(th[i]).epsilon(1e-15));
  CHECK(wrap_phase(-0.5) == doctest::Approx(kTwoPi - 0.5));
  std::stringstream shortm("0.1 0.2\n");
  CHECK_THROWS(read_mask(shortm, g));
}
