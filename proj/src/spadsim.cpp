#include "scatent/spadsim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace scatent::spadsim {

std::size_t CrosstalkKernel::slot(int dx, int dy) {
  if (std::abs(dx) > kReach || std::abs(dy) > kReach) throw std::out_of_range("cross-talk offset beyond +-3 pixels");
  return static_cast<std::size_t>((dy + kReach) * kSide + (dx + kReach));
}

void CrosstalkKernel::set(int dx, int dy, double p) {
  if (dx == 0 && dy == 0 && p != 0.0) throw std::invalid_argument("cross-talk kernel must vanish at (0,0)");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("cross-talk probability must lie in [0,1]");
  p_[slot(dx, dy)] = p;
}

bool CrosstalkKernel::empty() const {
  return std::all_of(p_.begin(), p_.end(), [](double v) { return v == 0.0; });
}

double CrosstalkKernel::total() const { return std::accumulate(p_.begin(), p_.end(), 0.0); }

CrosstalkKernel CrosstalkKernel::exponential(double strength) {
  CrosstalkKernel k;
  for (int dy = -kReach; dy <= kReach; ++dy)
    for (int dx = -kReach; dx <= kReach; ++dx) {
      if (dx == 0 && dy == 0) continue;
      const double r = std::hypot(dx, dy);
      k.set(dx, dy, strength * std::exp(-1.2 * (r - 1.0)));
    }
  return k;
}

void SensorSpec::validate() const {
  if (width == 0 || height == 0) throw std::invalid_argument("sensor must have pixels");
  if (!(pair_rate >= 0) || !(singles_rate >= 0) || !(dark_rate >= 0)) throw std::invalid_argument("rates must be >= 0");
  for (const auto& h : hot_pixels) {
    if (h.pixel >= pixels()) throw std::invalid_argument("hot pixel outside sensor");
    if (!(h.excess_rate >= 0)) throw std::invalid_argument("hot pixel rate must be >= 0");
  }
}

FrameStack::FrameStack(std::size_t width, std::size_t height, std::size_t frames, std::uint64_t seed)
    : width_(width), height_(height), frames_(frames), seed_(seed), bits_(frames * ((width * height + 7) / 8), 0) {}

void FrameStack::lit_pixels(std::size_t f, std::vector<std::uint32_t>& out) const {
  const auto bytes = frame(f);
  for (std::size_t b = 0; b < bytes.size(); ++b) {
    unsigned v = bytes[b];
    while (v) {
      const int bit = std::countr_zero(v);
      out.push_back(static_cast<std::uint32_t>(b * 8 + static_cast<std::size_t>(bit)));
      v &= v - 1;
    }
  }
}

std::vector<std::uint64_t> FrameStack::count_image() const {
  std::vector<std::uint64_t> counts(pixels(), 0);
  std::vector<std::uint32_t> lit;
  for (std::size_t f = 0; f < frames_; ++f) {
    lit.clear();
    lit_pixels(f, lit);
    for (auto p : lit) ++counts[p];
  }
  return counts;
}

std::vector<double> FrameStack::mean_image() const {
  const auto counts = count_image();
  std::vector<double> mean(counts.size(), 0.0);
  if (frames_ == 0) return mean;
  for (std::size_t i = 0; i < counts.size(); ++i) mean[i] = static_cast<double>(counts[i]) / static_cast<double>(frames_);
  return mean;
}

std::uint64_t FrameStack::content_hash() const { return fnv1a(std::as_bytes(std::span(bits_))); }

namespace {

/// Vose alias sampler over a discrete law.
class AliasTable {
 public:
  explicit AliasTable(std::span<const double> weights) : prob_(weights.size()), alias_(weights.size()) {
    const std::size_t n = weights.size();
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (n == 0 || !(total > 0)) throw std::invalid_argument("alias table needs positive total weight");
    std::vector<double> scaled(n);
    std::vector<std::size_t> small, large;
    for (std::size_t i = 0; i < n; ++i) {
      scaled[i] = weights[i] * static_cast<double>(n) / total;
      (scaled[i] < 1.0 ? small : large).push_back(i);
    }
    while (!small.empty() && !large.empty()) {
      const auto s = small.back();
      small.pop_back();
      const auto l = large.back();
      prob_[s] = scaled[s];
      alias_[s] = l;
      scaled[l] = (scaled[l] + scaled[s]) - 1.0;
      if (scaled[l] < 1.0) {
        large.pop_back();
        small.push_back(l);
      }
    }
    for (auto l : large) prob_[l] = 1.0, alias_[l] = l;
    for (auto s : small) prob_[s] = 1.0, alias_[s] = s;
  }

  std::size_t operator()(Engine& rng) const {
    const double u = uniform01(rng) * static_cast<double>(prob_.size());
    const auto i = std::min(static_cast<std::size_t>(u), prob_.size() - 1);
    return (u - static_cast<double>(i)) < prob_[i] ? i : alias_[i];
  }

 private:
  std::vector<double> prob_;
  std::vector<std::size_t> alias_;
};

constexpr std::size_t kChunkFrames = 1u << 14;
constexpr std::uint64_t kPrimaryTag = 0x7072696d617279ULL;
constexpr std::uint64_t kCrosstalkTag = 0x63726f7373ULL;

struct Offset {
  int dx, dy;
  double p;
};

struct Generator {
  const SensorSpec& sensor;
  const AliasTable* pairs = nullptr;    // over a * n + b
  const AliasTable* singles = nullptr;  // over pixels
  std::vector<Offset> offsets;
  std::vector<double> hot_rates;

  void run_chunk(FrameStack& stack, std::size_t chunk) const {
    const std::size_t n = sensor.pixels();
    const std::size_t begin = chunk * kChunkFrames;
    const std::size_t end = std::min(stack.frame_count(), begin + kChunkFrames);
    Engine primary(derive_seed(sensor.seed, kPrimaryTag, chunk));
    Engine crosstalk(derive_seed(sensor.seed, kCrosstalkTag, chunk));

    std::poisson_distribution<int> pair_count(std::max(pairs ? sensor.pair_rate : 0.0, 1e-300));
    std::poisson_distribution<int> single_count(std::max(singles ? sensor.singles_rate : 0.0, 1e-300));
    std::poisson_distribution<int> dark_count(std::max(sensor.dark_rate * static_cast<double>(n), 1e-300));
    const double hot_total = std::accumulate(hot_rates.begin(), hot_rates.end(), 0.0);
    std::poisson_distribution<int> hot_count(std::max(hot_total, 1e-300));
    std::optional<AliasTable> hot_pick;
    if (hot_total > 0) hot_pick.emplace(hot_rates);

    std::vector<std::uint32_t> primary_lit;
    for (std::size_t f = begin; f < end; ++f) {
      if (pairs && sensor.pair_rate > 0) {
        for (int k = pair_count(primary); k > 0; --k) {
          const auto ab = (*pairs)(primary);
          stack.set(f, ab / n);
          stack.set(f, ab % n);
        }
      }
      if (singles && sensor.singles_rate > 0) {
        for (int k = single_count(primary); k > 0; --k) stack.set(f, (*singles)(primary));
      }
      if (sensor.dark_rate > 0) {
        for (int k = dark_count(primary); k > 0; --k) {
          stack.set(f, std::min(n - 1, static_cast<std::size_t>(uniform01(primary) * static_cast<double>(n))));
        }
      }
      if (hot_pick) {
        for (int k = hot_count(primary); k > 0; --k) stack.set(f, sensor.hot_pixels[(*hot_pick)(primary)].pixel);
      }
      if (offsets.empty()) continue;
      primary_lit.clear();
      stack.lit_pixels(f, primary_lit);
      for (auto pix : primary_lit) {
        const long x = static_cast<long>(pix % sensor.width);
        const long y = static_cast<long>(pix / sensor.width);
        for (const auto& o : offsets) {
          if (uniform01(crosstalk) >= o.p) continue;
          const long nx = x + o.dx, ny = y + o.dy;
          if (nx < 0 || ny < 0 || nx >= static_cast<long>(sensor.width) || ny >= static_cast<long>(sensor.height)) continue;
          stack.set(f, static_cast<std::size_t>(ny) * sensor.width + static_cast<std::size_t>(nx));
        }
      }
    }
  }
};

FrameStack generate(const SensorSpec& sensor, std::size_t frames, const AliasTable* pairs, const AliasTable* singles,
                    int workers) {
  if (frames < 2) throw std::invalid_argument("a frame stack needs at least two frames");
  Generator gen{sensor, pairs, singles, {}, {}};
  constexpr int r = CrosstalkKernel::kReach;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx)
      if (sensor.crosstalk.at(dx, dy) > 0) gen.offsets.push_back({dx, dy, sensor.crosstalk.at(dx, dy)});
  for (const auto& h : sensor.hot_pixels) gen.hot_rates.push_back(h.excess_rate);

  FrameStack stack(sensor.width, sensor.height, frames, sensor.seed);
  const std::size_t chunks = (frames + kChunkFrames - 1) / kChunkFrames;
  parallel_chunks(chunks, workers, [&](std::size_t c) { gen.run_chunk(stack, c); });
  return stack;
}

std::uint64_t state_hash(const twophoton::TwoPhotonState& psi) {
  std::uint64_t h = fnv1a(std::as_bytes(std::span(psi.psi.data(), static_cast<std::size_t>(psi.psi.size()))));
  return h;
}

}  // namespace

FrameStack simulate_frames(const twophoton::TwoPhotonState& psi, const SensorSpec& sensor, std::size_t frames,
                           int workers) {
  sensor.validate();
  const std::size_t n = sensor.pixels();
  if (psi.modes() != n || psi.psi.cols() != static_cast<Eigen::Index>(n)) {
    throw std::invalid_argument("two-photon state grid does not match the sensor");
  }
  const RMatrix law = psi.coincidence_law();
  const double total = law.sum();
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("|psi|^2 is not normalized");

  // Row-major flattening: entry (a, b) at a * n + b.
  std::vector<double> weights(n * n);
  std::vector<double> marginal(n, 0.0);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) {
      const double w = law(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
      weights[a * n + b] = w;
      marginal[a] += 0.5 * w;
      marginal[b] += 0.5 * w;
    }
  const AliasTable pairs(weights);
  const AliasTable singles(marginal);
  FrameStack stack = generate(sensor, frames, &pairs, &singles, workers);
  stack.state_hash = state_hash(psi);
  return stack;
}

FrameStack dark_stack(const SensorSpec& sensor, std::size_t frames, int workers) {
  sensor.validate();
  return generate(sensor, frames, nullptr, nullptr, workers);
}

void write_stack(std::ostream& os, const FrameStack& stack) {
  le::put_magic(os, "SPADSTK1");
  le::put<std::uint32_t>(os, static_cast<std::uint32_t>(stack.width()));
  le::put<std::uint32_t>(os, static_cast<std::uint32_t>(stack.height()));
  le::put<std::uint64_t>(os, stack.frame_count());
  le::put<std::uint64_t>(os, stack.seed());
  const auto raw = stack.raw();
  os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

FrameStack read_stack(std::istream& is) {
  le::expect_magic(is, "SPADSTK1");
  const auto w = le::get<std::uint32_t>(is);
  const auto h = le::get<std::uint32_t>(is);
  const auto frames = le::get<std::uint64_t>(is);
  const auto seed = le::get<std::uint64_t>(is);
  if (w == 0 || h == 0) throw FormatError("empty sensor geometry");
  FrameStack stack(w, h, frames, seed);
  for (std::size_t f = 0; f < frames; ++f) {
    auto bytes = stack.frame(f);
    if (!is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
      throw FormatError("truncated frame stack");
    }
  }
  return stack;
}

void save(const std::filesystem::path& path, const FrameStack& stack) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string());
  write_stack(os, stack);
}

FrameStack load_stack(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_stack(is);
}

}  // namespace scatent::spadsim
