#include "scatent/shaping.hpp"

#include "scatent/jpd.hpp"

#include <cmath>

namespace scatent::shaping {

namespace {

struct Operators {
  std::size_t n = 0, m = 0;
  CMatrix T, FT, P;
  std::vector<std::size_t> parity;
  double scale = 1.0;  // 1/sqrt(N) from the identity input state
};

Operators operators(const ShapingProblem& problem) {
  Operators op;
  op.T = problem.medium.entries;
  op.n = static_cast<std::size_t>(op.T.cols());
  op.m = static_cast<std::size_t>(op.T.rows());
  op.FT = optics::dft_matrix(problem.medium.out_grid).entries * op.T;
  op.P = problem.second ? optics::free_space_kernel(problem.slm_grid(), problem.second->distance,
                                                    problem.second->wavelength)
                              .entries
                        : CMatrix::Identity(static_cast<Eigen::Index>(op.n), static_cast<Eigen::Index>(op.n));
  op.parity.resize(op.m);
  for (std::size_t a = 0; a < op.m; ++a) op.parity[a] = problem.medium.out_grid.parity_partner(a);
  op.scale = 1.0 / std::sqrt(static_cast<double>(op.n));
  return op;
}

CVector phases(const std::vector<double>& thetas) {
  CVector e(static_cast<Eigen::Index>(thetas.size()));
  for (std::size_t k = 0; k < thetas.size(); ++k) e[static_cast<Eigen::Index>(k)] = std::polar(1.0, thetas[k]);
  return e;
}

// Diagonal coincidence amplitudes that enter the objective.
struct Tracked {
  CVector mom;  // psi_mom(a, parity(a))
  CVector pos;  // psi_pos(a, a)
};

double score(const Tracked& t, double wp, double wm) { return wp * t.pos.squaredNorm() + wm * t.mom.squaredNorm(); }

Tracked track(const Operators& op, const CVector& e1, const CVector& e2) {
  // psi_mom = G D1^2 G^t * scale with G = T D2 P, and psi_pos = F psi_mom F^t.
  const CMatrix G = op.T * e2.asDiagonal() * op.P;
  const CMatrix H = op.FT * e2.asDiagonal() * op.P;
  Tracked t{CVector::Zero(static_cast<Eigen::Index>(op.m)), CVector::Zero(static_cast<Eigen::Index>(op.m))};
  for (std::size_t k = 0; k < op.n; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const Complex c = e1[kk] * e1[kk] * op.scale;
    for (std::size_t a = 0; a < op.m; ++a) {
      const auto aa = static_cast<Eigen::Index>(a);
      t.mom[aa] += c * G(aa, kk) * G(static_cast<Eigen::Index>(op.parity[a]), kk);
      t.pos[aa] += c * H(aa, kk) * H(aa, kk);
    }
  }
  return t;
}

}  // namespace

void ShapingProblem::validate() const {
  medium.validate();
  const std::size_t n = medium.in_modes();
  if (d1.thetas.size() != n) throw std::invalid_argument("first mask does not match the SLM grid");
  if (second && d2.thetas.size() != n) throw std::invalid_argument("second mask does not match the SLM grid");
  if (!(weight_position >= 0 && weight_momentum >= 0)) throw std::invalid_argument("objective weights must be >= 0");
  if (second && !(second->distance > 0 && second->wavelength > 0)) {
    throw std::invalid_argument("second plane needs positive distance and wavelength");
  }
}

ShapingProblem make_problem(optics::TransferMatrix medium, std::optional<SecondPlane> second) {
  ShapingProblem p;
  p.d1 = twophoton::flat_mask(medium.in_grid);
  p.d2 = twophoton::flat_mask(medium.in_grid);
  p.medium = std::move(medium);
  p.second = second;
  p.validate();
  return p;
}

ShapedStates shaped_states(const ShapingProblem& problem) {
  problem.validate();
  const Operators op = operators(problem);
  const CVector e1 = phases(problem.d1.thetas);
  const CVector e2 = problem.second ? phases(problem.d2.thetas) : CVector::Ones(static_cast<Eigen::Index>(op.n));
  const CMatrix S = op.T * e2.asDiagonal() * op.P * e1.asDiagonal();
  const CMatrix F = optics::dft_matrix(problem.medium.out_grid).entries;
  ShapedStates s;
  s.momentum = S * S.transpose() * op.scale;
  s.position = F * s.momentum * F.transpose();
  return s;
}

double objective(const ShapingProblem& problem) {
  const ShapedStates s = shaped_states(problem);
  const auto& grid = problem.medium.out_grid;
  double pos = 0, mom = 0;
  for (std::size_t a = 0; a < grid.modes(); ++a) {
    const auto aa = static_cast<Eigen::Index>(a);
    pos += std::norm(s.position(aa, aa));
    mom += std::norm(s.momentum(aa, static_cast<Eigen::Index>(grid.parity_partner(a))));
  }
  return problem.weight_position * pos + problem.weight_momentum * mom;
}

ShapingResult optimize_masks(const ShapingProblem& problem, std::size_t budget, const ShapingOptions& options) {
  problem.validate();
  const Operators op = operators(problem);
  if (budget < op.n) throw std::invalid_argument("budget must cover at least one evaluation per macro-pixel");
  if (options.phase_steps < 2) throw std::invalid_argument("need at least two candidate phases");
  const double wp = problem.weight_position, wm = problem.weight_momentum;
  const bool two_planes = problem.second.has_value();

  std::vector<double> th1 = problem.d1.thetas;
  std::vector<double> th2 = two_planes ? problem.d2.thetas : std::vector<double>(op.n, 0.0);
  CVector e1 = phases(th1), e2 = phases(th2);

  ShapingResult res;
  std::vector<Complex> grid_phase(options.phase_steps);
  for (std::size_t q = 0; q < options.phase_steps; ++q) {
    grid_phase[q] = std::polar(1.0, kTwoPi * static_cast<double>(q) / static_cast<double>(options.phase_steps));
  }

  Tracked cur = track(op, e1, e2);
  double current = score(cur, wp, wm);
  res.trace.push_back(current);
  CVector xm(static_cast<Eigen::Index>(op.m)), xp(static_cast<Eigen::Index>(op.m));
  CVector ym(static_cast<Eigen::Index>(op.m)), yp(static_cast<Eigen::Index>(op.m));
  std::size_t quiet_passes = 0;

  for (std::size_t pass = 0; pass < options.max_passes && !res.budget_exhausted; ++pass) {
    const bool second_pass = two_planes && pass % 2 == 1;
    const double pass_start = res.trace.back();
    cur = track(op, e1, e2);
    current = score(cur, wp, wm);

    CMatrix G, H, B, T2, FT2;
    if (!second_pass) {
      G = op.T * e2.asDiagonal() * op.P;
      H = op.FT * e2.asDiagonal() * op.P;
    } else {
      B = op.P * (e1.array() * e1.array()).matrix().asDiagonal() * op.P.transpose();
    }

    for (std::size_t k = 0; k < op.n && !res.budget_exhausted; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      // Candidate value e' changes the tracked amplitudes by c1(e') * x + c2(e') * y.
      Complex e_old;
      if (!second_pass) {
        e_old = e1[kk];
        for (std::size_t a = 0; a < op.m; ++a) {
          const auto aa = static_cast<Eigen::Index>(a);
          xm[aa] = G(aa, kk) * G(static_cast<Eigen::Index>(op.parity[a]), kk) * op.scale;
          xp[aa] = H(aa, kk) * H(aa, kk) * op.scale;
        }
      } else {
        e_old = e2[kk];
        CVector v = (e2.array() * B.row(kk).transpose().array()).matrix();
        v[kk] = 0;
        const CVector r = op.T * v;
        const CVector s = op.FT * v;
        for (std::size_t a = 0; a < op.m; ++a) {
          const auto aa = static_cast<Eigen::Index>(a);
          const auto pa = static_cast<Eigen::Index>(op.parity[a]);
          xm[aa] = (op.T(aa, kk) * r[pa] + r[aa] * op.T(pa, kk)) * op.scale;
          xp[aa] = 2.0 * op.FT(aa, kk) * s[aa] * op.scale;
          ym[aa] = B(kk, kk) * op.T(aa, kk) * op.T(pa, kk) * op.scale;
          yp[aa] = B(kk, kk) * op.FT(aa, kk) * op.FT(aa, kk) * op.scale;
        }
      }
      auto value_of = [&](Complex e) {
        if (!second_pass) {
          const Complex c = e * e - e_old * e_old;
          return wm * (cur.mom + c * xm).squaredNorm() + wp * (cur.pos + c * xp).squaredNorm();
        }
        const Complex c1 = e - e_old, c2 = e * e - e_old * e_old;
        return wm * (cur.mom + c1 * xm + c2 * ym).squaredNorm() + wp * (cur.pos + c1 * xp + c2 * yp).squaredNorm();
      };

      double best = current;
      std::optional<std::size_t> best_q;
      for (std::size_t q = 0; q < options.phase_steps; ++q) {
        if (res.evaluations >= budget) {
          res.budget_exhausted = true;
          break;
        }
        ++res.evaluations;
        const double v = value_of(grid_phase[q]);
        if (v > best) best = v, best_q = q;
      }
      if (best_q) {
        const Complex e = grid_phase[*best_q];
        const double theta = kTwoPi * static_cast<double>(*best_q) / static_cast<double>(options.phase_steps);
        if (!second_pass) {
          const Complex c = e * e - e_old * e_old;
          cur.mom += c * xm;
          cur.pos += c * xp;
          e1[kk] = e;
          th1[k] = theta;
        } else {
          const Complex c1 = e - e_old, c2 = e * e - e_old * e_old;
          cur.mom += c1 * xm + c2 * ym;
          cur.pos += c1 * xp + c2 * yp;
          e2[kk] = e;
          th2[k] = theta;
        }
        current = best;
        res.trace.push_back(best);
      } else {
        res.trace.push_back(res.trace.back());
      }
    }
    const double gain = res.trace.back() - pass_start;
    quiet_passes = gain <= options.tolerance * std::abs(res.trace.back()) ? quiet_passes + 1 : 0;
    if (quiet_passes >= (two_planes ? 2u : 1u)) break;
  }

  res.d1 = twophoton::make_mask(problem.slm_grid(), th1);
  res.d2 = two_planes ? twophoton::make_mask(problem.slm_grid(), th2) : twophoton::flat_mask(problem.slm_grid());
  return res;
}

PeakToBackground peak_to_background(const ShapingProblem& problem) {
  const ShapedStates s = shaped_states(problem);
  const auto& grid = problem.medium.out_grid;
  const RMatrix pos = s.position.cwiseAbs2();
  const RMatrix mom = s.momentum.cwiseAbs2();
  const auto jp = jpd::jpd_from_law(pos / pos.sum(), grid.width, grid.height, true);
  const auto jm = jpd::jpd_from_law(mom / mom.sum(), grid.width, grid.height, true);
  PeakToBackground out;
  out.position = jpd::peak_to_background(jpd::project_minus(jp), grid.width, grid.height, true);
  out.momentum = jpd::peak_to_background(jpd::project_sum(jm), grid.width, grid.height, true);
  return out;
}

}  // namespace scatent::shaping
