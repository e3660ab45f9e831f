#include "scatent/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace scatent::calibration {

std::size_t HotPixelMask::count() const {
  return static_cast<std::size_t>(std::count_if(masked.begin(), masked.end(), [](auto v) { return v != 0; }));
}

HotPixelMask HotPixelMask::none(std::size_t width, std::size_t height) {
  return HotPixelMask{width, height, std::vector<std::uint8_t>(width * height, 0), 0.10};
}

HotPixelMask find_hot_pixels(const spadsim::FrameStack& dark, double threshold_fraction) {
  if (!(threshold_fraction > 0.0 && threshold_fraction <= 1.0)) {
    throw std::invalid_argument("threshold fraction must lie in (0, 1]");
  }
  HotPixelMask mask = HotPixelMask::none(dark.width(), dark.height());
  mask.threshold_fraction = threshold_fraction;
  const auto counts = dark.count_image();
  const auto peak = counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
  if (peak == 0) return mask;
  // Without a Poisson outlier the brightest pixel is ordinary dark noise, and a
  // fraction of it would flag the whole sensor.
  std::vector<std::uint64_t> sorted = counts;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(sorted.size() / 2), sorted.end());
  const double median = static_cast<double>(sorted[sorted.size() / 2]);
  if (static_cast<double>(peak) <= median + kHotPixelSigmas * std::sqrt(median + 1.0)) return mask;
  const double threshold = threshold_fraction * static_cast<double>(peak);
  for (std::size_t p = 0; p < counts.size(); ++p) {
    // At threshold 1.0 only the maximum itself is masked.
    const double c = static_cast<double>(counts[p]);
    if (c > threshold || (threshold_fraction == 1.0 && counts[p] == peak)) mask.masked[p] = 1;
  }
  return mask;
}

void apply_mask(spadsim::FrameStack& stack, const HotPixelMask& mask) {
  if (mask.masked.size() != stack.pixels()) throw std::invalid_argument("mask does not match sensor");
  for (std::size_t f = 0; f < stack.frame_count(); ++f)
    for (std::size_t p = 0; p < stack.pixels(); ++p)
      if (mask.masked[p]) stack.clear(f, p);
}

void apply_mask(jpd::Jpd& gamma, const HotPixelMask& mask) { jpd::apply_pixel_mask(gamma, mask.masked); }

bool crosstalk_support_violated(const jpd::Jpd& gamma0, double sigmas) {
  const auto proj = jpd::project_minus(gamma0);
  for (std::size_t cy = 0; cy < proj.height; ++cy)
    for (std::size_t cx = 0; cx < proj.width; ++cx) {
      const long dx = static_cast<long>(cx) - proj.origin_x;
      const long dy = static_cast<long>(cy) - proj.origin_y;
      if (std::max(std::abs(dx), std::abs(dy)) <= spadsim::CrosstalkKernel::kReach) continue;
      const std::size_t c = cy * proj.width + cx;
      const double se = std::sqrt(proj.variances[c]);
      if (se > 0 && proj.values[c] > sigmas * se) return true;
    }
  return false;
}

CrosstalkReference characterize_crosstalk(const spadsim::FrameStack& dark, int workers) {
  if (dark.frame_count() == 0) throw std::invalid_argument("empty dark stack");
  CrosstalkReference ref;
  ref.gamma0 = jpd::accumulate_jpd(dark, std::nullopt, workers);
  ref.intensity = dark.mean_image();
  ref.frames_used = ref.gamma0.frames_used();
  if (dark.frame_count() < kRecommendedDarkFrames) {
    ref.warnings.push_back("fewer than 1e5 dark frames; cross-talk reference is noisy");
  }
  ref.support_violation = crosstalk_support_violated(ref.gamma0);
  if (ref.support_violation) ref.warnings.push_back("cross-talk extends beyond +-3 pixels");
  return ref;
}

KernelEstimate estimate_kernel(const CrosstalkReference& ref) {
  const jpd::Jpd& g = ref.gamma0;
  const long w = static_cast<long>(g.width()), h = static_cast<long>(g.height());
  constexpr int reach = spadsim::CrosstalkKernel::kReach;
  if (ref.intensity.size() != g.pixels()) throw std::invalid_argument("reference intensity does not match sensor");

  // Forward model: a pixel stays dark only if no primary count lands on it and no
  // lit neighbor triggers it. With independent primaries p_c and point-symmetric
  // trigger probabilities k, the covariance of two pixels is
  //   P(!a) P(!b) [ 1 / ((1 - p_a k_ab)(1 - p_b k_ab)) * prod_c r_c - 1 ],
  //   r_c = (1 - p_c (k_ca + k_cb - k_ca k_cb)) / ((1 - p_c k_ca)(1 - p_c k_cb)),
  // where the product runs over common neighbors c. The kernel and the primary
  // rates are solved for by fixed-point iteration.
  const auto& q = ref.intensity;
  std::vector<double> primary = q;
  KernelEstimate est;
  auto kappa = [&](long dx, long dy) {
    if (dx == 0 && dy == 0) return 0.0;
    if (std::abs(dx) > reach || std::abs(dy) > reach) return 0.0;
    return est.at(static_cast<int>(dx), static_cast<int>(dy));
  };
  auto inside = [&](long x, long y) { return x >= 0 && y >= 0 && x < w && y < h; };

  for (int iter = 0; iter < 8; ++iter) {
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        double keep = 1;
        for (long dy = -reach; dy <= reach; ++dy)
          for (long dx = -reach; dx <= reach; ++dx) {
            if ((dx == 0 && dy == 0) || !inside(x - dx, y - dy)) continue;
            keep *= 1 - primary[static_cast<std::size_t>((y - dy) * w + (x - dx))] * kappa(dx, dy);
          }
        const auto a = static_cast<std::size_t>(y * w + x);
        primary[a] = std::clamp(1 - (1 - q[a]) / keep, 0.0, 1.0);
      }

    KernelEstimate next;
    for (int dy = -reach; dy <= reach; ++dy)
      for (int dx = -reach; dx <= reach; ++dx) {
        if (dx == 0 && dy == 0) continue;
        double residual = 0, var = 0, slope = 0;
        for (long y = 0; y < h; ++y)
          for (long x = 0; x < w; ++x) {
            const long xb = x + dx, yb = y + dy;
            if (!inside(xb, yb)) continue;
            const auto a = static_cast<std::size_t>(y * w + x), b = static_cast<std::size_t>(yb * w + xb);
            const double k = kappa(dx, dy);
            double ratio = 1 / ((1 - primary[a] * k) * (1 - primary[b] * k));
            for (long cy = std::max(y, yb) - reach; cy <= std::min(y, yb) + reach; ++cy)
              for (long cx = std::max(x, xb) - reach; cx <= std::min(x, xb) + reach; ++cx) {
                if (!inside(cx, cy) || (cx == x && cy == y) || (cx == xb && cy == yb)) continue;
                const double pc = primary[static_cast<std::size_t>(cy * w + cx)];
                const double ka = kappa(x - cx, y - cy), kb = kappa(xb - cx, yb - cy);
                if (ka == 0 || kb == 0) continue;
                ratio *= (1 - pc * (ka + kb - ka * kb)) / ((1 - pc * ka) * (1 - pc * kb));
              }
            const double dark = (1 - q[a]) * (1 - q[b]);
            residual += g.at(a, b) - dark * (ratio - 1);
            slope += dark * (primary[a] + primary[b]);
            var += g.variance(a, b);
          }
        const std::size_t s = KernelEstimate::slot(dx, dy);
        next.value[s] = slope > 0 ? est.value[s] + residual / slope : 0.0;
        next.standard_error[s] = slope > 0 ? std::sqrt(var) / slope : 0.0;
      }
    est = next;
  }
  return est;
}

std::string to_string(CrosstalkModel m) {
  return m == CrosstalkModel::first_order ? "first_order" : "reference_pairs";
}

CrosstalkModel crosstalk_model_from_string(const std::string& s) {
  if (s == "reference_pairs") return CrosstalkModel::reference_pairs;
  if (s == "first_order") return CrosstalkModel::first_order;
  throw std::invalid_argument("unknown crosstalk model: " + s);
}

namespace {

// Covariance added by one-generation crosstalk from a pixel lit with
// probability p onto a neighbor lit with probability q.
double trigger_rate(double p, double q) { return p * (1 - p) * (1 - q); }

CrosstalkCorrection correct_first_order(const jpd::Jpd& raw, const CrosstalkReference& ref,
                                        std::span<const double> intensity) {
  const jpd::Jpd& g0 = ref.gamma0;
  const std::size_t w = raw.width(), h = raw.height(), n = raw.pixels();
  if (ref.intensity.size() != n) throw std::invalid_argument("reference intensity does not match sensor");
  constexpr long reach = spadsim::CrosstalkKernel::kReach;
  CrosstalkCorrection out;
  out.corrected = raw;
  for (std::size_t a = 0; a < n; ++a) {
    const long xa = static_cast<long>(a % w), ya = static_cast<long>(a / w);
    const double ia = std::clamp(intensity[a], 0.0, 1.0), da = std::clamp(ref.intensity[a], 0.0, 1.0);
    for (long dy = -reach; dy <= reach; ++dy)
      for (long dx = -reach; dx <= reach; ++dx) {
        if (dx == 0 && dy == 0) continue;
        const long xb = xa + dx, yb = ya + dy;
        if (xb < 0 || yb < 0 || xb >= static_cast<long>(w) || yb >= static_cast<long>(h)) continue;
        const std::size_t b = static_cast<std::size_t>(yb) * w + static_cast<std::size_t>(xb);
        const double ib = std::clamp(intensity[b], 0.0, 1.0), db = std::clamp(ref.intensity[b], 0.0, 1.0);
        const double dark = trigger_rate(da, db) + trigger_rate(db, da);
        if (dark <= 0) continue;
        const double scale = (trigger_rate(ia, ib) + trigger_rate(ib, ia)) / dark;
        out.corrected.at(a, b) -= g0.at(a, b) * scale;
        out.corrected.variance(a, b) += g0.variance(a, b) * scale * scale;
      }
  }
  out.corrected.zero_same_pixel();
  return out;
}

}  // namespace

CrosstalkCorrection correct_crosstalk(const jpd::Jpd& raw, const CrosstalkReference& ref,
                                      std::span<const double> intensity, std::size_t alpha_window,
                                      CrosstalkModel model) {
  const jpd::Jpd& g0 = ref.gamma0;
  if (raw.width() != g0.width() || raw.height() != g0.height()) throw std::invalid_argument("geometry mismatch");
  if (intensity.size() != raw.pixels()) throw std::invalid_argument("intensity image does not match sensor");
  if (model == CrosstalkModel::first_order) return correct_first_order(raw, ref, intensity);
  const std::size_t w = raw.width(), h = raw.height(), n = raw.pixels();
  constexpr long reach = spadsim::CrosstalkKernel::kReach;

  CrosstalkCorrection out;
  out.corrected = raw;
  out.alpha.assign(n, 0.0);

  double mean_intensity = 0;
  std::size_t lit = 0;
  for (double v : intensity)
    if (v > 0) mean_intensity += v, ++lit;
  mean_intensity = lit ? mean_intensity / static_cast<double>(lit) : 0.0;
  std::vector<double> weight(n, 0.0);
  if (mean_intensity > 0)
    for (std::size_t a = 0; a < n; ++a) weight[a] = std::sqrt(std::max(intensity[a], 0.0) / mean_intensity);

  // Reference pairs: pixel b against the pixels three rows above and below it.
  std::vector<double> num(n, 0.0), den(n, 0.0);
  double num_total = 0, den_total = 0;
  for (std::size_t b = 0; b < n; ++b) {
    const long x = static_cast<long>(b % w), y = static_cast<long>(b / w);
    for (long dy : {-reach, reach}) {
      const long yy = y + dy;
      if (yy < 0 || yy >= static_cast<long>(h)) continue;
      const std::size_t a = static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(x);
      num[b] += raw.at(a, b);
      den[b] += g0.at(a, b) * weight[a];
    }
    num_total += num[b];
    den_total += den[b];
  }
  const double global_alpha = den_total > 0 ? num_total / den_total : 0.0;
  const long win = static_cast<long>(alpha_window);
  for (std::size_t b = 0; b < n; ++b) {
    const long x = static_cast<long>(b % w), y = static_cast<long>(b / w);
    double nb = 0, db = 0;
    for (long yy = std::max(0L, y - win); yy <= std::min(static_cast<long>(h) - 1, y + win); ++yy)
      for (long xx = std::max(0L, x - win); xx <= std::min(static_cast<long>(w) - 1, x + win); ++xx) {
        const std::size_t c = static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx);
        nb += num[c];
        db += den[c];
      }
    if (db > 0 && nb > 0) {
      out.alpha[b] = nb / db;
    } else {
      out.alpha[b] = global_alpha;
      ++out.alpha_fallbacks;
    }
  }

  for (std::size_t a = 0; a < n; ++a) {
    const long xa = static_cast<long>(a % w), ya = static_cast<long>(a / w);
    for (long dy = -reach; dy <= reach; ++dy)
      for (long dx = -reach; dx <= reach; ++dx) {
        if (dx == 0 && dy == 0) continue;
        const long xb = xa + dx, yb = ya + dy;
        if (xb < 0 || yb < 0 || xb >= static_cast<long>(w) || yb >= static_cast<long>(h)) continue;
        const std::size_t b = static_cast<std::size_t>(yb) * w + static_cast<std::size_t>(xb);
        const double scale = out.alpha[b] * weight[a];
        out.corrected.at(a, b) -= g0.at(a, b) * scale;
        out.corrected.variance(a, b) += g0.variance(a, b) * scale * scale;
      }
  }
  out.corrected.symmetrize();
  out.corrected.zero_same_pixel();
  return out;
}

void write_mask(std::ostream& os, const HotPixelMask& mask) {
  os << "# hot pixels " << mask.width << "x" << mask.height << " threshold " << mask.threshold_fraction << '\n';
  for (std::size_t p = 0; p < mask.masked.size(); ++p)
    if (mask.masked[p]) os << p % mask.width << ' ' << p / mask.width << '\n';
}

HotPixelMask read_mask(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("empty hot pixel file");
  std::istringstream hs(line);
  std::string hash, word, dims, thr;
  double threshold = 0.1;
  hs >> hash >> word >> word >> dims >> thr >> threshold;
  const auto x = dims.find('x');
  if (hash != "#" || x == std::string::npos) throw FormatError("bad hot pixel header");
  HotPixelMask mask = HotPixelMask::none(std::stoul(dims.substr(0, x)), std::stoul(dims.substr(x + 1)));
  mask.threshold_fraction = threshold;
  std::size_t px, py;
  while (is >> px >> py) {
    if (px >= mask.width || py >= mask.height) throw FormatError("hot pixel outside sensor");
    mask.masked[py * mask.width + px] = 1;
  }
  return mask;
}

}  // namespace scatent::calibration
