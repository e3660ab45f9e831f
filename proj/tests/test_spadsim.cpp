#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "scatent/jpd.hpp"
#include "scatent/spadsim.hpp"

#include <sstream>

using namespace scatent;
using namespace scatent::spadsim;

namespace {

SensorSpec quiet(std::size_t w, std::size_t h, std::uint64_t seed) {
  SensorSpec s;
  s.width = w;
  s.height = h;
  s.pair_rate = 0;
  s.seed = seed;
  return s;
}

twophoton::TwoPhotonState random_state(const optics::ModeGrid& g, std::uint64_t seed) {
  Engine rng(seed);
  std::normal_distribution<double> n;
  const auto m = static_cast<Eigen::Index>(g.modes());
  CMatrix a(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) a(i, j) = Complex(n(rng), n(rng));
  twophoton::TwoPhotonState s;
  s.grid = g;
  s.psi = a + a.transpose();
  s.psi.diagonal().setZero();
  s.psi /= s.psi.norm();
  return s;
}

}  // namespace

TEST_CASE("kernel bookkeeping") {
  CrosstalkKernel k;
  CHECK(k.empty());
  k.set(1, 0, 0.02);
  CHECK(k.at(1, 0) == 0.02);
  CHECK(k.total() == doctest::Approx(0.02));
  CHECK_THROWS_AS(k.set(0, 0, 0.1), std::invalid_argument);
  CHECK_THROWS(k.set(4, 0, 0.1));
  CHECK_THROWS_AS(k.set(1, 0, -0.1), std::invalid_argument);
  const auto p = CrosstalkKernel::exponential(0.01);
  CHECK(p.at(1, 0) == doctest::Approx(0.01));
  CHECK(p.at(0, 0) == 0.0);
  for (int dy = -3; dy <= 3; ++dy)
    for (int dx = -3; dx <= 3; ++dx) CHECK(p.at(dx, dy) == p.at(-dx, -dy));
}

TEST_CASE("sensor validation") {
  SensorSpec s = quiet(4, 4, 1);
  s.dark_rate = -1;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = quiet(4, 4, 1);
  s.hot_pixels.push_back({16, 0.1});
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("silent sensor gives empty frames") {
  const auto st = twophoton::identity_state(optics::ModeGrid{4, 4, 1.0});
  const auto stack = simulate_frames(st, quiet(4, 4, 3), 1000, 1);
  for (auto byte : stack.raw()) CHECK(byte == 0);
}

TEST_CASE("dark counts follow the Poisson fire probability") {
  SensorSpec s = quiet(8, 8, 5);
  s.dark_rate = 0.05;
  const std::size_t frames = 100000;
  const auto stack = dark_stack(s, frames, 2);
  const double p = 1 - std::exp(-s.dark_rate);
  const double se = std::sqrt(p * (1 - p) / static_cast<double>(frames));
  double rms = 0, pooled = 0;
  for (auto m : stack.mean_image()) {
    const double z = (m - p) / se;
    rms += z * z;
    pooled += m;
    CHECK(std::abs(z) < 4.5);
  }
  rms = std::sqrt(rms / 64.0);
  CHECK(rms < 1.4);
  CHECK(std::abs(pooled / 64.0 - p) < 3 * se / 8.0);
}

TEST_CASE("perfectly correlated pairs collapse to single pixels") {
  const optics::ModeGrid g{4, 4, 1.0};
  const auto st = twophoton::identity_state(g);
  SensorSpec s = quiet(4, 4, 7);
  s.pair_rate = 0.2;
  const std::size_t frames = 200000;
  const auto stack = simulate_frames(st, s, frames, 1);
  // Each pair lands on a single pixel; a pixel is lit with probability 1 - exp(-rate / modes).
  const double p = 1 - std::exp(-s.pair_rate / 16.0);
  for (auto m : stack.mean_image()) CHECK(std::abs(m - p) < 5 * std::sqrt(p / static_cast<double>(frames)));
  const auto j = jpd::accumulate_jpd(stack, std::nullopt, 1);
  for (std::size_t a = 0; a < 16; ++a) {
    CHECK(j.at(a, a) == 0.0);
    for (std::size_t b = a + 1; b < 16; ++b) CHECK(std::abs(j.at(a, b)) < 5 * j.standard_error(a, b) + 1e-12);
  }
}

TEST_CASE("distinct-pixel coincidences converge to 2 rate |psi|^2") {
  const optics::ModeGrid g{3, 3, 1.0};
  const auto st = random_state(g, 13);
  SensorSpec s = quiet(3, 3, 17);
  s.pair_rate = 0.02;
  const std::size_t frames = 400000;
  const auto stack = simulate_frames(st, s, frames, 1);
  std::vector<std::uint32_t> lit;
  RMatrix both = RMatrix::Zero(9, 9);
  for (std::size_t f = 0; f < frames; ++f) {
    lit.clear();
    stack.lit_pixels(f, lit);
    for (auto a : lit)
      for (auto b : lit)
        if (a != b) both(a, b) += 1;
  }
  both /= static_cast<double>(frames);
  const RMatrix law = st.coincidence_law();
  for (Eigen::Index a = 0; a < 9; ++a)
    for (Eigen::Index b = 0; b < 9; ++b) {
      if (a == b) continue;
      // Probability that a single pair hits {a, b}, with a small multi-pair correction.
      const double expected = 2 * s.pair_rate * law(a, b);
      const double se = std::sqrt(expected / static_cast<double>(frames));
      CHECK(std::abs(both(a, b) - expected) < 4 * se + 0.02 * expected);
    }
}

TEST_CASE("only kernel offsets correlate in the dark") {
  SensorSpec s = quiet(8, 8, 19);
  s.dark_rate = 0.02;
  s.crosstalk.set(1, 0, 0.02);
  s.crosstalk.set(-1, 0, 0.02);
  const auto stack = dark_stack(s, 200000, 2);
  const auto minus = jpd::project_minus(jpd::accumulate_jpd(stack, std::nullopt, 2));
  for (long dy = -7; dy <= 7; ++dy)
    for (long dx = -7; dx <= 7; ++dx) {
      const std::size_t c = static_cast<std::size_t>((minus.origin_y + dy) * static_cast<long>(minus.width) + minus.origin_x + dx);
      const double z = minus.values[c] / std::sqrt(std::max(minus.variances[c], 1e-300));
      if (dy == 0 && std::abs(dx) == 1) {
        CHECK(z > 20);
      } else if (dx != 0 || dy != 0) {
        CHECK(std::abs(z) < 4.5);
      }
    }
}

TEST_CASE("generation is seeded and independent of worker count") {
  const optics::ModeGrid g{6, 6, 10e-6};
  twophoton::GaussianPairSpec gs;
  gs.sigma_r = 10e-6;
  gs.sigma_k = 1e4;
  const auto st = twophoton::gaussian_state(g, gs);
  SensorSpec s = quiet(6, 6, 23);
  s.pair_rate = 1;
  s.singles_rate = 0.5;
  s.dark_rate = 0.01;
  s.crosstalk = CrosstalkKernel::exponential(0.01);
  s.hot_pixels.push_back({5, 0.2});
  const auto a = simulate_frames(st, s, 5000, 1);
  const auto b = simulate_frames(st, s, 5000, 3);
  CHECK(a.content_hash() == b.content_hash());
  CHECK(std::equal(a.raw().begin(), a.raw().end(), b.raw().begin()));
  s.seed = 24;
  CHECK(simulate_frames(st, s, 5000, 1).content_hash() != a.content_hash());
  CHECK(a.state_hash != 0);
  CHECK(dark_stack(s, 10, 1).state_hash == 0);
}

TEST_CASE("unnormalized states and short stacks are rejected") {
  auto st = twophoton::identity_state(optics::ModeGrid{2, 2, 1.0});
  st.psi *= 2.0;
  CHECK_THROWS_AS(simulate_frames(st, quiet(2, 2, 1), 10, 1), std::invalid_argument);
  CHECK_THROWS_AS(dark_stack(quiet(2, 2, 1), 1, 1), std::invalid_argument);
}

TEST_CASE("frame stack container") {
  SensorSpec s = quiet(5, 3, 29);
  s.dark_rate = 0.3;
  const auto stack = dark_stack(s, 17, 1);
  std::stringstream ss;
  write_stack(ss, stack);
  const std::string bytes = ss.str();
  CHECK(bytes.substr(0, 8) == "SPADSTK1");
  CHECK(bytes.size() == 8 + 4 + 4 + 8 + 8 + 17 * 2);
  CHECK(static_cast<unsigned char>(bytes[8]) == 5);
  CHECK(static_cast<unsigned char>(bytes[12]) == 3);
  CHECK(static_cast<unsigned char>(bytes[16]) == 17);
  CHECK(static_cast<unsigned char>(bytes[24]) == 29);
  // Pixel 0 of frame 0 is the least significant bit of the first data byte.
  CHECK(((static_cast<unsigned char>(bytes[32]) & 1u) != 0) == stack.lit(0, 0));
  const auto back = read_stack(ss);
  CHECK(back.content_hash() == stack.content_hash());
  CHECK(back.seed() == 29);
  std::stringstream cut(bytes.substr(0, bytes.size() - 1));
  CHECK_THROWS_AS(read_stack(cut), FormatError);
}
