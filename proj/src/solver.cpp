#include "dispatch/solver.hpp"

#include <Eigen/OrderingMethods>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

#include "dispatch/error.hpp"

namespace dispatch::conic {

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "Optimal";
    case SolveStatus::Infeasible: return "Infeasible";
    case SolveStatus::Unbounded: return "Unbounded";
    case SolveStatus::MaxIter: return "MaxIter";
    case SolveStatus::NumericalFailure: return "NumericalFailure";
  }
  return "?";
}

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kInf = std::numeric_limits<double>::infinity();

// Nesterov-Todd scaling W (symmetric, W z = W^{-1} s = lambda) for every cone.
class ConeScaling {
 public:
  explicit ConeScaling(const ConeSpec& cones) : cones_(cones) {
    int row = cones.num_nonneg;
    for (int d : cones.soc_dims) {
      offsets_.push_back(row);
      row += d;
    }
    lp_w_ = VectorXd::Ones(cones.num_nonneg);
    for (int d : cones.soc_dims) {
      soc_w_.push_back(MatrixXd::Identity(d, d));
      soc_winv_.push_back(MatrixXd::Identity(d, d));
    }
    lambda_ = VectorXd::Zero(cones.rows());
  }

  const ConeSpec& cones() const { return cones_; }
  std::size_t num_soc() const { return offsets_.size(); }
  int offset(std::size_t k) const { return offsets_[k]; }
  int dim(std::size_t k) const { return cones_.soc_dims[k]; }
  const VectorXd& lp_w() const { return lp_w_; }
  const MatrixXd& soc_w(std::size_t k) const { return soc_w_[k]; }
  const VectorXd& lambda() const { return lambda_; }

  void set_identity() {
    lp_w_.setOnes();
    for (std::size_t k = 0; k < num_soc(); ++k) {
      soc_w_[k].setIdentity();
      soc_winv_[k].setIdentity();
    }
  }

  // Returns false if s or z left the interior.
  bool update(const VectorXd& s, const VectorXd& z) {
    const int l = cones_.num_nonneg;
    for (int i = 0; i < l; ++i) {
      if (!(s[i] > 0.0 && z[i] > 0.0)) return false;
      lp_w_[i] = std::sqrt(s[i] / z[i]);
      lambda_[i] = std::sqrt(s[i] * z[i]);
    }
    for (std::size_t k = 0; k < num_soc(); ++k) {
      const int o = offsets_[k], d = dim(k);
      const auto sk = s.segment(o, d);
      const auto zk = z.segment(o, d);
      const double s_det = det(sk), z_det = det(zk);
      if (!(s_det > 0.0 && z_det > 0.0 && sk[0] > 0.0 && zk[0] > 0.0)) return false;
      const VectorXd sbar = sk / std::sqrt(s_det);
      const VectorXd zbar = zk / std::sqrt(z_det);
      const double gamma = std::sqrt((1.0 + sbar.dot(zbar)) / 2.0);
      VectorXd wbar(d);
      wbar[0] = (sbar[0] + zbar[0]) / (2.0 * gamma);
      if (d > 1) wbar.tail(d - 1) = (sbar.tail(d - 1) - zbar.tail(d - 1)) / (2.0 * gamma);
      const double eta = std::pow(s_det / z_det, 0.25);
      MatrixXd& W = soc_w_[k];
      MatrixXd& Wi = soc_winv_[k];
      W(0, 0) = wbar[0];
      Wi(0, 0) = wbar[0];
      if (d > 1) {
        const auto w1 = wbar.tail(d - 1);
        W.block(0, 1, 1, d - 1) = w1.transpose();
        W.block(1, 0, d - 1, 1) = w1;
        W.block(1, 1, d - 1, d - 1) = MatrixXd::Identity(d - 1, d - 1) + w1 * w1.transpose() / (1.0 + wbar[0]);
        Wi.block(0, 1, 1, d - 1) = -w1.transpose();
        Wi.block(1, 0, d - 1, 1) = -w1;
        Wi.block(1, 1, d - 1, d - 1) = W.block(1, 1, d - 1, d - 1);
      }
      W *= eta;
      Wi /= eta;
      lambda_.segment(o, d) = W * zk;
    }
    return true;
  }

  VectorXd apply_w(const VectorXd& v) const {
    VectorXd out(v.size());
    const int l = cones_.num_nonneg;
    out.head(l) = lp_w_.cwiseProduct(v.head(l));
    for (std::size_t k = 0; k < num_soc(); ++k) out.segment(offsets_[k], dim(k)) = soc_w_[k] * v.segment(offsets_[k], dim(k));
    return out;
  }

  VectorXd apply_winv(const VectorXd& v) const {
    VectorXd out(v.size());
    const int l = cones_.num_nonneg;
    out.head(l) = v.head(l).cwiseQuotient(lp_w_);
    for (std::size_t k = 0; k < num_soc(); ++k)
      out.segment(offsets_[k], dim(k)) = soc_winv_[k] * v.segment(offsets_[k], dim(k));
    return out;
  }

  VectorXd apply_w2(const VectorXd& v) const { return apply_w(apply_w(v)); }

  // Jordan product u o v.
  VectorXd circ(const VectorXd& u, const VectorXd& v) const {
    VectorXd out(u.size());
    const int l = cones_.num_nonneg;
    out.head(l) = u.head(l).cwiseProduct(v.head(l));
    for (std::size_t k = 0; k < num_soc(); ++k) {
      const int o = offsets_[k], d = dim(k);
      out[o] = u.segment(o, d).dot(v.segment(o, d));
      if (d > 1) out.segment(o + 1, d - 1) = u[o] * v.segment(o + 1, d - 1) + v[o] * u.segment(o + 1, d - 1);
    }
    return out;
  }

  // Solves lambda o w = v for w.
  VectorXd inv_circ(const VectorXd& lam, const VectorXd& v) const {
    VectorXd out(v.size());
    const int l = cones_.num_nonneg;
    out.head(l) = v.head(l).cwiseQuotient(lam.head(l));
    for (std::size_t k = 0; k < num_soc(); ++k) {
      const int o = offsets_[k], d = dim(k);
      const double rho = det(lam.segment(o, d));
      const double w0 = (lam[o] * v[o] - (d > 1 ? lam.segment(o + 1, d - 1).dot(v.segment(o + 1, d - 1)) : 0.0)) / rho;
      out[o] = w0;
      if (d > 1) out.segment(o + 1, d - 1) = (v.segment(o + 1, d - 1) - w0 * lam.segment(o + 1, d - 1)) / lam[o];
    }
    return out;
  }

  VectorXd identity_element() const {
    VectorXd e = VectorXd::Zero(cones_.rows());
    e.head(cones_.num_nonneg).setOnes();
    for (std::size_t k = 0; k < num_soc(); ++k) e[offsets_[k]] = 1.0;
    return e;
  }

  double max_step(const VectorXd& x, const VectorXd& d) const {
    double a = kInf;
    for (int i = 0; i < cones_.num_nonneg; ++i)
      if (d[i] < 0.0) a = std::min(a, -x[i] / d[i]);
    for (std::size_t k = 0; k < num_soc(); ++k)
      a = std::min(a, max_step_soc(x.segment(offsets_[k], dim(k)), d.segment(offsets_[k], dim(k))));
    return a;
  }

  // Pushes v into the interior along the identity element.
  void shift_into_cone(VectorXd& v) const {
    double alpha = -kInf;
    for (int i = 0; i < cones_.num_nonneg; ++i) alpha = std::max(alpha, -v[i]);
    for (std::size_t k = 0; k < num_soc(); ++k) {
      const int o = offsets_[k], d = dim(k);
      const double tail = d > 1 ? v.segment(o + 1, d - 1).norm() : 0.0;
      alpha = std::max(alpha, tail - v[o]);
    }
    if (alpha < 0.0) return;
    const VectorXd e = identity_element();
    v += (1.0 + alpha) * e;
  }

  static double det(const Eigen::Ref<const VectorXd>& v) {
    if (v.size() == 1) return v[0] * v[0];
    const double t = v.tail(v.size() - 1).norm();
    return (v[0] - t) * (v[0] + t);
  }

 private:
  const ConeSpec& cones_;
  std::vector<int> offsets_;
  VectorXd lp_w_;
  std::vector<MatrixXd> soc_w_;
  std::vector<MatrixXd> soc_winv_;
  VectorXd lambda_;
};

// Regularised quasi-definite KKT system
//   [ reg*I   A'      G'         ]
//   [ A       -reg*I  0          ]
//   [ G       0       -W^2-reg*I ]
// factored by sparse LDL' with AMD ordering; solves use iterative refinement
// against the unregularised matrix.
class KktSystem {
 public:
  KktSystem(const SpMat& A, const SpMat& G, const ConeScaling& scaling, double reg)
      : A_(A), G_(G), scaling_(scaling), reg_(reg), n_(static_cast<int>(A.cols())), p_(static_cast<int>(A.rows())),
        m_(static_cast<int>(G.rows())) {
    std::vector<Triplet> trip;
    trip.reserve(static_cast<std::size_t>(n_ + p_ + A.nonZeros() + G.nonZeros() + 16 * m_));
    for (int j = 0; j < n_; ++j) trip.emplace_back(j, j, reg_);
    for (int j = 0; j < A.outerSize(); ++j)
      for (SpMat::InnerIterator it(A, j); it; ++it) trip.emplace_back(n_ + it.row(), j, it.value());
    for (int j = 0; j < G.outerSize(); ++j)
      for (SpMat::InnerIterator it(G, j); it; ++it) trip.emplace_back(n_ + p_ + it.row(), j, it.value());
    for (int i = 0; i < p_; ++i) trip.emplace_back(n_ + i, n_ + i, -reg_);
    const int z0 = n_ + p_;
    const ConeSpec& K = scaling_.cones();
    for (int i = 0; i < K.num_nonneg; ++i) trip.emplace_back(z0 + i, z0 + i, -1.0);
    for (std::size_t k = 0; k < scaling_.num_soc(); ++k) {
      const int o = scaling_.offset(k), d = scaling_.dim(k);
      for (int c = 0; c < d; ++c)
        for (int r = c; r < d; ++r) trip.emplace_back(z0 + o + r, z0 + o + c, r == c ? -1.0 : 0.0);
    }
    const int N = n_ + p_ + m_;
    K_.resize(N, N);
    K_.setFromTriplets(trip.begin(), trip.end());
    K_.makeCompressed();

    // Locate the value slots of the cone block so refactorisations only rewrite them.
    for (int i = 0; i < K.num_nonneg; ++i) lp_slots_.push_back(slot(z0 + i, z0 + i));
    for (std::size_t k = 0; k < scaling_.num_soc(); ++k) {
      const int o = scaling_.offset(k), d = scaling_.dim(k);
      std::vector<int> s;
      for (int c = 0; c < d; ++c)
        for (int r = c; r < d; ++r) s.push_back(slot(z0 + o + r, z0 + o + c));
      soc_slots_.push_back(std::move(s));
    }
    ldlt_.analyzePattern(K_);
  }

  bool factor() {
    double* val = K_.valuePtr();
    const VectorXd& w = scaling_.lp_w();
    for (std::size_t i = 0; i < lp_slots_.size(); ++i) val[lp_slots_[i]] = -w[static_cast<Eigen::Index>(i)] * w[static_cast<Eigen::Index>(i)] - reg_;
    w2_.resize(scaling_.num_soc());
    for (std::size_t k = 0; k < scaling_.num_soc(); ++k) {
      const int d = scaling_.dim(k);
      w2_[k] = scaling_.soc_w(k) * scaling_.soc_w(k);
      std::size_t idx = 0;
      for (int c = 0; c < d; ++c)
        for (int r = c; r < d; ++r, ++idx) val[soc_slots_[k][idx]] = -w2_[k](r, c) - (r == c ? reg_ : 0.0);
    }
    ldlt_.factorize(K_);
    if (ldlt_.info() != Eigen::Success) return false;
    const VectorXd D = ldlt_.vectorD();
    return D.allFinite() && (D.array() != 0.0).all();
  }

  // Unregularised K * v.
  VectorXd multiply(const VectorXd& v) const {
    VectorXd out(v.size());
    const auto vx = v.head(n_);
    const auto vy = v.segment(n_, p_);
    const VectorXd vz = v.tail(m_);
    out.head(n_) = A_.transpose() * vy + G_.transpose() * vz;
    out.segment(n_, p_) = A_ * vx;
    VectorXd w2z(m_);
    const int l = scaling_.cones().num_nonneg;
    w2z.head(l) = scaling_.lp_w().array().square().matrix().cwiseProduct(vz.head(l));
    for (std::size_t k = 0; k < scaling_.num_soc(); ++k)
      w2z.segment(scaling_.offset(k), scaling_.dim(k)) = w2_[k] * vz.segment(scaling_.offset(k), scaling_.dim(k));
    out.tail(m_) = G_ * vx - w2z;
    return out;
  }

  VectorXd solve(const VectorXd& rhs, int refine_steps) const {
    VectorXd sol = ldlt_.solve(rhs);
    const double scale = 1.0 + rhs.lpNorm<Eigen::Infinity>();
    double prev = kInf;
    for (int k = 0; k < refine_steps; ++k) {
      const VectorXd r = rhs - multiply(sol);
      const double err = r.lpNorm<Eigen::Infinity>();
      if (err <= 1e-15 * scale || err >= prev) break;
      prev = err;
      sol += ldlt_.solve(r);
    }
    return sol;
  }

  int n() const { return n_; }
  int p() const { return p_; }
  int m() const { return m_; }

 private:
  int slot(int r, int c) const {
    const int* inner = K_.innerIndexPtr();
    const int begin = K_.outerIndexPtr()[c], end = K_.outerIndexPtr()[c + 1];
    const int* it = std::lower_bound(inner + begin, inner + end, r);
    if (it == inner + end || *it != r) throw Error(Errc::SolveFailed, "KKT pattern slot missing");
    return static_cast<int>(it - inner);
  }

  const SpMat& A_;
  const SpMat& G_;
  const ConeScaling& scaling_;
  double reg_;
  int n_, p_, m_;
  SpMat K_;
  std::vector<int> lp_slots_;
  std::vector<std::vector<int>> soc_slots_;
  std::vector<MatrixXd> w2_;
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
};

struct Equilibration {
  VectorXd D, E, F;  // columns, equality rows, cone rows
  double cost = 1.0;  // objective multiplier; duals come back divided by it
};

// Ruiz equilibration; cone rows of one second-order cone share a factor.
Equilibration equilibrate(SpMat& A, SpMat& G, const ConeSpec& cones, int passes) {
  const int n = static_cast<int>(A.cols()), p = static_cast<int>(A.rows()), m = static_cast<int>(G.rows());
  Equilibration eq{VectorXd::Ones(n), VectorXd::Ones(p), VectorXd::Ones(m)};
  auto factor = [](double norm) { return norm > 1e-12 ? std::clamp(1.0 / std::sqrt(norm), 1e-4, 1e4) : 1.0; };
  for (int pass = 0; pass < passes; ++pass) {
    VectorXd col = VectorXd::Zero(n), rowA = VectorXd::Zero(p), rowG = VectorXd::Zero(m);
    for (int j = 0; j < n; ++j) {
      for (SpMat::InnerIterator it(A, j); it; ++it) {
        col[j] = std::max(col[j], std::abs(it.value()));
        rowA[it.row()] = std::max(rowA[it.row()], std::abs(it.value()));
      }
      for (SpMat::InnerIterator it(G, j); it; ++it) {
        col[j] = std::max(col[j], std::abs(it.value()));
        rowG[it.row()] = std::max(rowG[it.row()], std::abs(it.value()));
      }
    }
    VectorXd d(n), e(p), f(m);
    for (int j = 0; j < n; ++j) d[j] = factor(col[j]);
    for (int i = 0; i < p; ++i) e[i] = factor(rowA[i]);
    int row = 0;
    for (; row < cones.num_nonneg; ++row) f[row] = factor(rowG[row]);
    for (int dim : cones.soc_dims) {
      const double fk = factor(rowG.segment(row, dim).maxCoeff());
      f.segment(row, dim).setConstant(fk);
      row += dim;
    }
    A = e.asDiagonal() * A * d.asDiagonal();
    G = f.asDiagonal() * G * d.asDiagonal();
    eq.D.array() *= d.array();
    eq.E.array() *= e.array();
    eq.F.array() *= f.array();
  }
  return eq;
}

struct Metrics {
  double pres, dres, pcost, dcost, gap, rel_gap;
};

Metrics metrics(const ConeProgram& prog, const VectorXd& x, const VectorXd& s, const VectorXd& y, const VectorXd& z) {
  Metrics mt{};
  const double eq = prog.num_eq() > 0 ? (prog.A * x - prog.b).norm() / (1.0 + prog.b.norm()) : 0.0;
  const double cone = prog.num_cone_rows() > 0 ? (prog.G * x + s - prog.h).norm() / (1.0 + prog.h.norm()) : 0.0;
  mt.pres = std::max(eq, cone);
  mt.dres = (prog.A.transpose() * y + prog.G.transpose() * z + prog.c).norm() / (1.0 + prog.c.norm());
  mt.pcost = prog.c.dot(x);
  mt.dcost = -prog.b.dot(y) - prog.h.dot(z);
  mt.gap = s.dot(z);
  mt.rel_gap = mt.gap / std::max(1.0, std::abs(mt.pcost));
  return mt;
}

}  // namespace

SolveResult solve(const ConeProgram& prog, const SolverConfig& cfg) {
  prog.validate();
  if (!(cfg.gap_tol > 0.0 && cfg.feas_tol > 0.0)) throw Error(Errc::InvalidArgument, "solver tolerances must be positive");
  const auto t_start = std::chrono::steady_clock::now();
  const int n = prog.num_vars(), p = prog.num_eq(), m = prog.num_cone_rows();

  SpMat A = prog.A, G = prog.G;
  Equilibration eq = equilibrate(A, G, prog.cones, cfg.equilibration_passes);
  VectorXd c = eq.D.cwiseProduct(prog.c);
  if (const double cn = c.lpNorm<Eigen::Infinity>(); cn > 0.0) {
    eq.cost = std::clamp(1.0 / cn, 1e-4, 1e4);
    c *= eq.cost;
  }
  const VectorXd b = eq.E.cwiseProduct(prog.b);
  const VectorXd h = eq.F.cwiseProduct(prog.h);

  ConeScaling scaling(prog.cones);
  KktSystem kkt(A, G, scaling, cfg.static_reg);

  SolveResult res;
  auto finish = [&](SolveStatus st, const VectorXd& x, const VectorXd& s, const VectorXd& y, const VectorXd& z,
                    double tau) {
    res.status = st;
    res.x = eq.D.cwiseProduct(x) / tau;
    res.y = eq.E.cwiseProduct(y) / (tau * eq.cost);
    res.z = eq.F.cwiseProduct(z) / (tau * eq.cost);
    res.s = s.cwiseQuotient(eq.F) / tau;
    const Metrics mt = metrics(prog, res.x, res.s, res.y, res.z);
    res.objective = mt.pcost;
    res.dual_objective = mt.dcost;
    res.gap = mt.gap;
    res.rel_gap = mt.rel_gap;
    res.primal_residual = mt.pres;
    res.dual_residual = mt.dres;
    res.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return res;
  };

  // Initial point: least-squares primal and minimum-norm dual, shifted into the cone.
  scaling.set_identity();
  if (!kkt.factor()) {
    return finish(SolveStatus::NumericalFailure, VectorXd::Zero(n), VectorXd::Ones(m), VectorXd::Zero(p),
                  VectorXd::Ones(m), 1.0);
  }
  VectorXd rhs(n + p + m);
  rhs << VectorXd::Zero(n), b, h;
  VectorXd sol = kkt.solve(rhs, cfg.refine_steps);
  VectorXd x = sol.head(n);
  VectorXd s = -sol.tail(m);
  scaling.shift_into_cone(s);
  rhs << -c, VectorXd::Zero(p), VectorXd::Zero(m);
  sol = kkt.solve(rhs, cfg.refine_steps);
  VectorXd y = sol.segment(n, p);
  VectorXd z = sol.tail(m);
  scaling.shift_into_cone(z);
  double tau = 1.0, kappa = 1.0;

  const double degree = prog.cones.degree();
  const VectorXd e = scaling.identity_element();
  int stalls = 0;

  struct Iterate {
    VectorXd x, s, y, z;
    double tau = 0.0, score = kInf;
    int found_at = -1;
  } best;
  auto fallback = [&](SolveStatus st) {
    if (best.found_at >= 0) return finish(SolveStatus::Optimal, best.x, best.s, best.y, best.z, best.tau);
    return finish(st, x, s, y, z, std::max(tau, 1e-300));
  };

  for (int iter = 0;; ++iter) {
    res.iterations = iter;
    // Convergence and infeasibility checks on unscaled quantities.
    {
      const VectorXd xu = eq.D.cwiseProduct(x) / tau;
      const VectorXd yu = eq.E.cwiseProduct(y) / (tau * eq.cost);
      const VectorXd zu = eq.F.cwiseProduct(z) / (tau * eq.cost);
      const VectorXd su = s.cwiseQuotient(eq.F) / tau;
      const Metrics mt = metrics(prog, xu, su, yu, zu);
      if (cfg.verbose)
        std::fprintf(stderr, "%3d  pcost %+.9e  dcost %+.9e  gap %.2e  pres %.2e  dres %.2e  tau %.2e  kap %.2e\n", iter,
                     mt.pcost, mt.dcost, mt.gap, mt.pres, mt.dres, tau, kappa);
      if (mt.pres <= cfg.feas_tol && mt.dres <= cfg.feas_tol && mt.rel_gap <= cfg.gap_tol && mt.gap >= -cfg.gap_tol) {
        const double score = std::max({mt.pres, mt.dres, mt.rel_gap});
        if (score < best.score) {
          if (best.found_at < 0) best.found_at = iter;
          best = Iterate{x, s, y, z, tau, score, best.found_at};
        }
        if (score <= cfg.polish_tol || iter - best.found_at >= cfg.polish_iters || score > 10.0 * best.score)
          return fallback(SolveStatus::Optimal);
      }

      const VectorXd yr = eq.E.cwiseProduct(y), zr = eq.F.cwiseProduct(z);
      const double dual_ray = prog.b.dot(yr) + prog.h.dot(zr);
      if (dual_ray < 0.0 && kappa > tau) {
        const double ratio = (prog.A.transpose() * yr + prog.G.transpose() * zr).norm() / -dual_ray;
        if (ratio <= cfg.feas_tol) {
          res.status = SolveStatus::Infeasible;
          res.x = VectorXd::Zero(n);
          res.s = VectorXd::Zero(m);
          res.y = yr / -dual_ray;
          res.z = zr / -dual_ray;
          res.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
          return res;
        }
      }
      const VectorXd xr = eq.D.cwiseProduct(x), sr = s.cwiseQuotient(eq.F);
      const double primal_ray = prog.c.dot(xr);
      if (primal_ray < 0.0 && kappa > tau) {
        const double ratio =
            std::max(p > 0 ? (prog.A * xr).norm() : 0.0, m > 0 ? (prog.G * xr + sr).norm() : 0.0) / -primal_ray;
        if (ratio <= cfg.feas_tol) {
          res.status = SolveStatus::Unbounded;
          res.x = xr / -primal_ray;
          res.s = sr / -primal_ray;
          res.y = VectorXd::Zero(p);
          res.z = VectorXd::Zero(m);
          res.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
          return res;
        }
      }
      if (iter >= cfg.max_iter) return fallback(SolveStatus::MaxIter);
    }

    if (!scaling.update(s, z) || !kkt.factor() || stalls > 5) return fallback(SolveStatus::NumericalFailure);
    const VectorXd& lambda = scaling.lambda();

    const VectorXd rx = A.transpose() * y + G.transpose() * z + c * tau;
    const VectorXd ry = A * x - b * tau;
    const VectorXd rz = G * x + s - h * tau;
    const double rt = kappa + c.dot(x) + b.dot(y) + h.dot(z);
    const double mu = (s.dot(z) + tau * kappa) / (degree + 1.0);

    rhs << -c, b, h;
    const VectorXd sol1 = kkt.solve(rhs, cfg.refine_steps);
    const double denom = c.dot(sol1.head(n)) + b.dot(sol1.segment(n, p)) + h.dot(sol1.tail(m)) - kappa / tau;

    struct Direction {
      VectorXd dx, dy, dz, ds;
      double dtau, dkappa;
    };
    // Solves the linearised system for residual weight `keep` (1 - sigma) and
    // complementarity targets ds_target (cone) and dk_target (tau-kappa).
    auto direction = [&](double keep, const VectorXd& ds_target, double dk_target) {
      const VectorXd w_inv_ds = scaling.apply_w(scaling.inv_circ(lambda, ds_target));
      rhs << -keep * rx, -keep * ry, -keep * rz - w_inv_ds;
      const VectorXd sol2 = kkt.solve(rhs, cfg.refine_steps);
      const double num = -keep * rt - dk_target / tau - c.dot(sol2.head(n)) - b.dot(sol2.segment(n, p)) -
                         h.dot(sol2.tail(m));
      Direction d;
      d.dtau = num / denom;
      const VectorXd full = sol2 + d.dtau * sol1;
      d.dx = full.head(n);
      d.dy = full.segment(n, p);
      d.dz = full.tail(m);
      d.ds = w_inv_ds - scaling.apply_w2(d.dz);
      d.dkappa = (dk_target - kappa * d.dtau) / tau;
      return d;
    };
    auto step_to_boundary = [&](const Direction& d) {
      double a = std::min(scaling.max_step(lambda, scaling.apply_winv(d.ds)), scaling.max_step(lambda, scaling.apply_w(d.dz)));
      if (d.dtau < 0.0) a = std::min(a, -tau / d.dtau);
      if (d.dkappa < 0.0) a = std::min(a, -kappa / d.dkappa);
      return a;
    };

    // Predictor.
    const VectorXd lam_sq = scaling.circ(lambda, lambda);
    const Direction aff = direction(1.0, -lam_sq, -tau * kappa);
    const double alpha_aff = std::min(1.0, step_to_boundary(aff));
    const double sigma = std::clamp(std::pow(1.0 - alpha_aff, 3), 1e-8, 1.0);

    // Corrector.
    const VectorXd corr = scaling.circ(scaling.apply_winv(aff.ds), scaling.apply_w(aff.dz));
    const VectorXd ds_target = -lam_sq - corr + sigma * mu * e;
    const double dk_target = -tau * kappa - aff.dtau * aff.dkappa + sigma * mu;
    const Direction dir = direction(1.0 - sigma, ds_target, dk_target);
    const double alpha = std::min(0.999, 0.99 * step_to_boundary(dir));
    if (!(alpha > 1e-12) || !std::isfinite(alpha)) {
      ++stalls;
      continue;
    }

    x += alpha * dir.dx;
    y += alpha * dir.dy;
    z += alpha * dir.dz;
    s += alpha * dir.ds;
    tau += alpha * dir.dtau;
    kappa += alpha * dir.dkappa;
    if (!x.allFinite() || !z.allFinite() || !s.allFinite() || !(tau > 0.0)) return fallback(SolveStatus::NumericalFailure);
  }
}

ResidualReport certify(const ConeProgram& prog, const SolveResult& r, const SolverConfig& cfg) {
  prog.validate();
  const int n = prog.num_vars();
  if (r.x.size() != n || r.y.size() != prog.num_eq() || r.z.size() != prog.num_cone_rows() ||
      r.s.size() != prog.num_cone_rows())
    throw Error(Errc::SizeMismatch, "result vectors do not match program");
  ResidualReport rep;
  rep.primal_eq_abs = prog.num_eq() > 0 ? (prog.A * r.x - prog.b).norm() : 0.0;
  rep.primal_cone_abs = prog.num_cone_rows() > 0 ? (prog.G * r.x + r.s - prog.h).norm() : 0.0;
  rep.primal_eq = rep.primal_eq_abs / (1.0 + prog.b.norm());
  rep.primal_cone = rep.primal_cone_abs / (1.0 + prog.h.norm());
  rep.dual = (prog.A.transpose() * r.y + prog.G.transpose() * r.z + prog.c).norm() / (1.0 + prog.c.norm());
  const double pcost = prog.c.dot(r.x);
  const double dcost = -prog.b.dot(r.y) - prog.h.dot(r.z);
  rep.gap = r.s.dot(r.z);
  rep.rel_gap = rep.gap / std::max(1.0, std::abs(pcost));
  rep.objective_gap = std::abs(pcost - dcost) / std::max(1.0, std::abs(pcost));
  rep.s_margin = prog.num_cone_rows() > 0 ? cone_margin(prog.cones, r.s) : 0.0;
  rep.z_margin = prog.num_cone_rows() > 0 ? cone_margin(prog.cones, r.z) : 0.0;
  int row = 0;
  for (; row < prog.cones.num_nonneg; ++row)
    rep.max_complementarity = std::max(rep.max_complementarity, std::abs(r.s[row] * r.z[row]));
  for (int d : prog.cones.soc_dims) {
    rep.max_complementarity = std::max(rep.max_complementarity, std::abs(r.s.segment(row, d).dot(r.z.segment(row, d))));
    row += d;
  }
  const double tol = cfg.feas_tol;
  rep.pass = rep.primal_eq <= tol && rep.primal_cone <= tol && rep.dual <= tol && rep.rel_gap <= cfg.gap_tol &&
             rep.objective_gap <= cfg.gap_tol + tol && rep.s_margin >= -tol && rep.z_margin >= -tol;
  return rep;
}

}  // namespace dispatch::conic
