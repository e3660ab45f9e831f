#include "scatent/jpd.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>

namespace scatent::jpd {

Jpd::Jpd(std::size_t width, std::size_t height, std::size_t frames_used)
    : width_(width),
      height_(height),
      frames_used_(frames_used),
      gamma_(width * height * width * height, 0.0),
      variance_(width * height * width * height, 0.0) {}

double Jpd::standard_error(std::size_t a, std::size_t b) const { return std::sqrt(variance(a, b)); }

double Jpd::total() const { return std::accumulate(gamma_.begin(), gamma_.end(), 0.0); }

void Jpd::symmetrize() {
  const std::size_t n = pixels();
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) {
      const double g = 0.5 * (at(a, b) + at(b, a));
      at(a, b) = at(b, a) = g;
      // Entries are strongly correlated; average standard errors as an upper bound.
      const double se = 0.5 * (std::sqrt(variance(a, b)) + std::sqrt(variance(b, a)));
      variance(a, b) = variance(b, a) = se * se;
    }
}

void Jpd::zero_same_pixel() {
  for (std::size_t a = 0; a < pixels(); ++a) at(a, a) = 0.0, variance(a, a) = 0.0;
}

Jpd accumulate_jpd(const spadsim::FrameStack& stack, std::optional<std::size_t> frame_limit, int workers) {
  const std::size_t frames = std::min(frame_limit.value_or(stack.frame_count()), stack.frame_count());
  if (frames < 2) throw std::invalid_argument("JPD estimation needs at least two frames");
  const std::size_t terms = frames - 1;
  const std::size_t n = stack.pixels();

  std::vector<std::int64_t> genuine(n * n, 0), accidental(n * n, 0);
  std::mutex merge;
  const std::size_t pieces = std::min<std::size_t>(terms, static_cast<std::size_t>(std::max(1, workers)) * 4);
  const std::size_t per_piece = (terms + pieces - 1) / pieces;

  parallel_chunks(pieces, workers, [&](std::size_t piece) {
    const std::size_t begin = piece * per_piece;
    const std::size_t end = std::min(terms, begin + per_piece);
    if (begin >= end) return;
    std::vector<std::int64_t> g(n * n, 0), acc(n * n, 0);
    std::vector<std::uint32_t> cur, nxt;
    stack.lit_pixels(begin, cur);
    for (std::size_t l = begin; l < end; ++l) {
      nxt.clear();
      stack.lit_pixels(l + 1, nxt);
      for (auto a : cur) {
        const std::size_t row = static_cast<std::size_t>(a) * n;
        for (auto b : cur) ++g[row + b];
        for (auto b : nxt) ++acc[row + b];
      }
      std::swap(cur, nxt);
    }
    // Integer reduction: order-independent, so the result does not depend on scheduling.
    std::lock_guard lock(merge);
    for (std::size_t i = 0; i < n * n; ++i) genuine[i] += g[i], accidental[i] += acc[i];
  });

  Jpd out(stack.width(), stack.height(), terms);
  const double m = static_cast<double>(terms);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t i = a * n + b;
      const std::size_t j = b * n + a;
      const double gamma = (static_cast<double>(genuine[i]) - 0.5 * static_cast<double>(accidental[i] + accidental[j])) / m;
      const double second_moment =
          (static_cast<double>(genuine[i]) + 0.25 * static_cast<double>(accidental[i] + accidental[j])) / m;
      out.at(a, b) = gamma;
      out.variance(a, b) = std::max(0.0, second_moment - gamma * gamma) / m;
    }
  }
  out.zero_same_pixel();
  return out;
}

Jpd jpd_from_law(const RMatrix& law, std::size_t width, std::size_t height, bool keep_same_pixel) {
  const std::size_t n = width * height;
  if (law.rows() != static_cast<Eigen::Index>(n) || law.cols() != static_cast<Eigen::Index>(n)) {
    throw std::invalid_argument("law does not match sensor geometry");
  }
  Jpd out(width, height, 0);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) out.at(a, b) = law(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
  if (!keep_same_pixel) out.zero_same_pixel();
  return out;
}

void apply_pixel_mask(Jpd& jpd, std::span<const std::uint8_t> masked) {
  if (masked.size() != jpd.pixels()) throw std::invalid_argument("mask does not match JPD geometry");
  const std::size_t n = jpd.pixels();
  for (std::size_t p = 0; p < n; ++p) {
    if (!masked[p]) continue;
    for (std::size_t q = 0; q < n; ++q) {
      jpd.at(p, q) = jpd.at(q, p) = 0.0;
      jpd.variance(p, q) = jpd.variance(q, p) = 0.0;
    }
  }
}

double Projection::at_offset(long dx, long dy) const {
  const long cx = origin_x + dx, cy = origin_y + dy;
  if (cx < 0 || cy < 0 || cx >= static_cast<long>(width) || cy >= static_cast<long>(height)) return 0.0;
  return at(static_cast<std::size_t>(cx), static_cast<std::size_t>(cy));
}

double Projection::total() const { return std::accumulate(values.begin(), values.end(), 0.0); }

namespace {

template <class CellOf>
Projection project(const Jpd& jpd, ProjectionKind kind, long ox, long oy, CellOf cell_of) {
  Projection p;
  p.kind = kind;
  p.width = 2 * jpd.width() - 1;
  p.height = 2 * jpd.height() - 1;
  p.origin_x = ox;
  p.origin_y = oy;
  p.values.assign(p.width * p.height, 0.0);
  p.variances.assign(p.width * p.height, 0.0);
  const std::size_t n = jpd.pixels();
  for (std::size_t a = 0; a < n; ++a) {
    const long xa = static_cast<long>(a % jpd.width()), ya = static_cast<long>(a / jpd.width());
    for (std::size_t b = 0; b < n; ++b) {
      const long xb = static_cast<long>(b % jpd.width()), yb = static_cast<long>(b / jpd.width());
      const auto [cx, cy] = cell_of(xa, ya, xb, yb);
      const std::size_t c = static_cast<std::size_t>(cy) * p.width + static_cast<std::size_t>(cx);
      p.values[c] += jpd.at(a, b);
      p.variances[c] += jpd.variance(a, b);
    }
  }
  return p;
}

}  // namespace

Projection project_sum(const Jpd& jpd) {
  const long ox = 2 * static_cast<long>(jpd.width() / 2);
  const long oy = 2 * static_cast<long>(jpd.height() / 2);
  return project(jpd, ProjectionKind::sum, ox, oy,
                 [](long xa, long ya, long xb, long yb) { return std::pair{xa + xb, ya + yb}; });
}

Projection project_minus(const Jpd& jpd) {
  const long w = static_cast<long>(jpd.width()), h = static_cast<long>(jpd.height());
  return project(jpd, ProjectionKind::minus, w - 1, h - 1,
                 [w, h](long xa, long ya, long xb, long yb) { return std::pair{xa - xb + w - 1, ya - yb + h - 1}; });
}

std::vector<double> Projection::overlap_counts(std::size_t sw, std::size_t sh, bool same_pixel_included) const {
  std::vector<double> counts(width * height, 0.0);
  const long w = static_cast<long>(sw), h = static_cast<long>(sh);
  for (long cy = 0; cy < static_cast<long>(height); ++cy)
    for (long cx = 0; cx < static_cast<long>(width); ++cx) {
      // Pairs per axis: minus offset d has (n - |d|) pairs; sum s has min(s, 2n-2-s)+1.
      auto per_axis = [&](long c, long n) -> long {
        if (kind == ProjectionKind::minus) return n - std::abs(c - (n - 1));
        return std::min(c, 2 * n - 2 - c) + 1;
      };
      double count = static_cast<double>(per_axis(cx, w) * per_axis(cy, h));
      if (!same_pixel_included) {
        if (kind == ProjectionKind::minus && cx == origin_x && cy == origin_y) count = 0.0;
        if (kind == ProjectionKind::sum && cx % 2 == 0 && cy % 2 == 0) count -= 1.0;  // one same-pixel pair
      }
      counts[static_cast<std::size_t>(cy) * width + static_cast<std::size_t>(cx)] = count;
    }
  return counts;
}

double peak_to_background(const Projection& proj, std::size_t sw, std::size_t sh, bool same_pixel_included) {
  const auto counts = proj.overlap_counts(sw, sh, same_pixel_included);
  long px = proj.origin_x, py = proj.origin_y;
  double peak = 0, background = 0;
  std::size_t cells = 0;
  for (std::size_t cy = 0; cy < proj.height; ++cy)
    for (std::size_t cx = 0; cx < proj.width; ++cx) {
      const std::size_t c = cy * proj.width + cx;
      if (counts[c] <= 0) continue;
      const double v = proj.values[c] / counts[c];
      if (static_cast<long>(cx) == px && static_cast<long>(cy) == py) {
        peak = v;
      } else {
        background += v;
        ++cells;
      }
    }
  if (cells == 0 || background <= 0) return 0.0;
  return peak / (background / static_cast<double>(cells));
}

std::vector<double> conditional_image(const Jpd& jpd, std::size_t ref_pixel, std::span<const std::uint8_t> masked) {
  if (ref_pixel >= jpd.pixels()) throw std::invalid_argument("reference pixel outside sensor");
  if (!masked.empty() && masked[ref_pixel]) throw std::invalid_argument("reference pixel is masked");
  std::vector<double> image(jpd.pixels());
  for (std::size_t a = 0; a < jpd.pixels(); ++a) image[a] = jpd.at(a, ref_pixel);
  return image;
}

void write_jpd(std::ostream& os, const Jpd& jpd) {
  le::put_magic(os, "EJPD0001");
  le::put<std::uint32_t>(os, static_cast<std::uint32_t>(jpd.width()));
  le::put<std::uint32_t>(os, static_cast<std::uint32_t>(jpd.height()));
  le::put<std::uint64_t>(os, jpd.frames_used());
  for (double v : jpd.values()) le::put<double>(os, v);
  for (double v : jpd.variances()) le::put<double>(os, v);
}

Jpd read_jpd(std::istream& is) {
  le::expect_magic(is, "EJPD0001");
  const auto w = le::get<std::uint32_t>(is);
  const auto h = le::get<std::uint32_t>(is);
  const auto m = le::get<std::uint64_t>(is);
  Jpd out(w, h, m);
  const std::size_t n = out.pixels();
  for (std::size_t i = 0; i < n * n; ++i) out.at(i / n, i % n) = le::get<double>(is);
  for (std::size_t i = 0; i < n * n; ++i) out.variance(i / n, i % n) = le::get<double>(is);
  return out;
}

void save(const std::filesystem::path& path, const Jpd& jpd) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string());
  write_jpd(os, jpd);
}

Jpd load_jpd(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_jpd(is);
}

void write_projection(std::ostream& os, const Projection& p) {
  le::put_magic(os, "EPRJ0001");
  le::put<std::uint32_t>(os, static_cast<std::uint32_t>(p.kind));
  le::put<std::uint32_t>(os, static_cast<std::uint32_t>(p.width));
  le::put<std::uint32_t>(os, static_cast<std::uint32_t>(p.height));
  le::put<std::int32_t>(os, static_cast<std::int32_t>(p.origin_x));
  le::put<std::int32_t>(os, static_cast<std::int32_t>(p.origin_y));
  for (double v : p.values) le::put<double>(os, v);
}

Projection read_projection(std::istream& is) {
  le::expect_magic(is, "EPRJ0001");
  Projection p;
  const auto kind = le::get<std::uint32_t>(is);
  if (kind > 1) throw FormatError("unknown projection kind");
  p.kind = static_cast<ProjectionKind>(kind);
  p.width = le::get<std::uint32_t>(is);
  p.height = le::get<std::uint32_t>(is);
  p.origin_x = le::get<std::int32_t>(is);
  p.origin_y = le::get<std::int32_t>(is);
  p.values.resize(p.width * p.height);
  for (auto& v : p.values) v = le::get<double>(is);
  p.variances.assign(p.values.size(), 0.0);
  return p;
}

void write_projection_csv(std::ostream& os, const Projection& p) {
  os << std::setprecision(17);
  for (std::size_t cy = 0; cy < p.height; ++cy) {
    for (std::size_t cx = 0; cx < p.width; ++cx) {
      if (cx) os << ',';
      os << p.at(cx, cy);
    }
    os << '\n';
  }
}

}  // namespace scatent::jpd
