#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "scatent/shaping.hpp"

#include <cmath>

using namespace scatent;
using namespace scatent::shaping;

namespace {

optics::ModeGrid grid(std::size_t side, double pitch = 100e-6) {
  optics::ModeGrid g;
  g.width = g.height = side;
  g.pitch = pitch;
  return g;
}

optics::MediumSpec thin_spec(std::size_t side, std::uint64_t seed) {
  optics::MediumSpec s;
  s.kind = optics::MediumKind::thin_phase;
  s.seed = seed;
  s.in_grid = grid(side);
  s.out_grid = grid(side);
  return s;
}

optics::TransferMatrix thick_medium(std::uint64_t seed) {
  optics::MediumSpec s;
  s.kind = optics::MediumKind::thick_iid_gaussian;
  s.seed = seed;
  s.in_grid = grid(16);
  s.out_grid = grid(8);
  return optics::synth_medium(s);
}

}  // namespace

TEST_CASE("exact inverse mask restores the no-medium objective") {
  const auto spec = thin_spec(8, 3);
  const auto reference = objective(make_problem(optics::dft_matrix(grid(8))));
  auto problem = make_problem(optics::synth_medium(spec));
  const double scrambled = objective(problem);
  const CVector screen = optics::thin_screen(spec);
  std::vector<double> thetas;
  for (Eigen::Index i = 0; i < screen.size(); ++i) thetas.push_back(-std::arg(screen(i)));
  problem.d1 = twophoton::make_mask(problem.slm_grid(), thetas);
  CHECK(objective(problem) == doctest::Approx(reference).epsilon(1e-6));
  CHECK(scrambled < 0.6 * reference);
}

TEST_CASE("objective is invariant under a global mask phase") {
  auto problem = make_problem(thick_medium(4), SecondPlane{});
  std::vector<double> t1, t2;
  for (std::size_t i = 0; i < problem.slm_grid().modes(); ++i) {
    t1.push_back(0.37 * i);
    t2.push_back(1.1 * std::sin(double(i)));
  }
  problem.d1 = twophoton::make_mask(problem.slm_grid(), t1);
  problem.d2 = twophoton::make_mask(problem.slm_grid(), t2);
  const double base = objective(problem);
  for (auto& t : t1) t += 0.9;
  for (auto& t : t2) t += 2.3;
  problem.d1 = twophoton::make_mask(problem.slm_grid(), t1);
  problem.d2 = twophoton::make_mask(problem.slm_grid(), t2);
  CHECK(std::abs(objective(problem) - base) < 1e-12 * std::max(1.0, base));
}

TEST_CASE("thin medium optimization approaches the analytic optimum") {
  const auto spec = thin_spec(8, 7);
  const auto reference = objective(make_problem(optics::dft_matrix(grid(8))));
  const auto problem = make_problem(optics::synth_medium(spec));
  const auto result = optimize_masks(problem, 100000);
  auto tuned = problem;
  tuned.d1 = result.d1;
  CHECK(objective(tuned) >= 0.95 * reference);
  CHECK_FALSE(result.budget_exhausted);
  for (std::size_t i = 1; i < result.trace.size(); ++i) CHECK(result.trace[i] >= result.trace[i - 1]);
}

TEST_CASE("thick medium: both projections refocus, a second plane helps") {
  ShapingOptions opt;
  opt.max_passes = 12;
  double pos_sum = 0, mom_sum = 0;
  const int seeds = 3;
  for (int seed = 1; seed <= seeds; ++seed) {
    auto one = make_problem(thick_medium(seed));
    one.weight_momentum = 1.5;
    const auto flat = peak_to_background(one);
    const auto r1 = optimize_masks(one, 10000000, opt);
    one.d1 = r1.d1;
    const auto p1 = peak_to_background(one);
    pos_sum += p1.position;
    mom_sum += p1.momentum;

    auto two = make_problem(thick_medium(seed), SecondPlane{});
    two.weight_momentum = 1.5;
    const auto r2 = optimize_masks(two, 10000000, opt);
    two.d1 = r2.d1;
    two.d2 = r2.d2;
    const auto p2 = peak_to_background(two);
    MESSAGE("seed ", seed, ": flat ", flat.position, "/", flat.momentum, ", one mask ", p1.position, "/",
            p1.momentum, ", two masks ", p2.position, "/", p2.momentum);
    CHECK(p2.position > p1.position);
    CHECK(p2.momentum > p1.momentum);
    CHECK(p1.position > flat.position);
    CHECK(p1.momentum > flat.momentum);
    for (std::size_t i = 1; i < r2.trace.size(); ++i) CHECK(r2.trace[i] >= r2.trace[i - 1]);
  }
  CHECK(pos_sum / seeds > 5.0);
  CHECK(mom_sum / seeds > 5.0);
}

TEST_CASE("budget handling") {
  const auto problem = make_problem(thick_medium(9));
  const auto small = optimize_masks(problem, 300);
  CHECK(small.budget_exhausted);
  CHECK(small.evaluations <= 300);
  CHECK_FALSE(small.trace.empty());
  CHECK_THROWS_AS(optimize_masks(problem, 10), std::invalid_argument);
}
