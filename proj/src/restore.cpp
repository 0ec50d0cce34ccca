#include "dispatch/restore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

namespace dispatch {

void RestoreConfig::validate() const {
  if (!(fd_step > 0.0) || !(penalty > 0.0) || continuation < 0 || !(ineq_tol > 0.0) || max_iter < 1)
    throw Error(Errc::InvalidArgument, "restore settings out of range");
}

namespace {

// Decision vector: q_bat per battery slot, then (P, Q) per solar slot.
class Period {
 public:
  Period(const Feeder& f, const ForecastSeries& fc, const DispatchSchedule& s, int t, const RestoreConfig& cfg)
      : f_(f), fc_(fc), s_(s), t_(t), cfg_(cfg) {
    const int nb = static_cast<int>(s.batteries.size()), ns = static_cast<int>(s.solars.size());
    p_bat_.resize(nb);
    q_radius_.resize(nb);
    for (int k = 0; k < nb; ++k) {
      const double h = f.node(s.batteries[k].node).battery->h_max;
      p_bat_[k] = s.p_dis(k, t) - s.p_ch(k, t);
      q_radius_[k] = std::sqrt(std::max(h * h - p_bat_[k] * p_bat_[k], 0.0));
    }
    sol_cap_.resize(ns);
    for (int k = 0; k < ns; ++k) {
      const Slot& sl = s.solars[k];
      sol_cap_[k] = std::max(0.0, std::min(f.node(sl.node).solar->g_max, fc.solar_at(sl.node, sl.phase, t)));
    }
    base_ = InjectionSet::zeros(f);
    for (int n = 0; n < f.num_nodes(); ++n)
      for (int p : f.node(n).phases.phases()) base_.s(p, n) = -fc.load_at(n, p, t);
    for (int k = 0; k < nb; ++k) base_.s(s.batteries[k].phase, s.batteries[k].node) += p_bat_[k];
  }

  int nb() const { return static_cast<int>(p_bat_.size()); }
  int ns() const { return static_cast<int>(sol_cap_.size()); }
  int dim() const { return nb() + 2 * ns(); }

  Eigen::VectorXd start() const {
    Eigen::VectorXd x(dim());
    for (int k = 0; k < nb(); ++k) x[k] = s_.q_bat(k, t_);
    for (int k = 0; k < ns(); ++k) {
      x[nb() + 2 * k] = s_.p_sol(k, t_);
      x[nb() + 2 * k + 1] = s_.q_sol(k, t_);
    }
    return project(x);
  }

  Eigen::VectorXd project(Eigen::VectorXd x) const {
    for (int k = 0; k < nb(); ++k) x[k] = std::clamp(x[k], -q_radius_[k], q_radius_[k]);
    for (int k = 0; k < ns(); ++k) {
      double& p = x[nb() + 2 * k];
      double& q = x[nb() + 2 * k + 1];
      const double r = sol_cap_[k];
      if (!cfg_.solar_active) p = std::clamp(s_.p_sol(k, t_), 0.0, r);
      p = std::max(p, 0.0);
      if (!cfg_.solar_active) {
        const double qr = std::sqrt(std::max(r * r - p * p, 0.0));
        q = std::clamp(q, -qr, qr);
        continue;
      }
      const double norm = std::hypot(p, q);
      if (norm > r) {
        const double scale = norm > 0.0 ? r / norm : 0.0;
        p *= scale;
        q *= scale;
      }
    }
    return x;
  }

  InjectionSet injections(const Eigen::VectorXd& x) const {
    InjectionSet inj = base_;
    for (int k = 0; k < nb(); ++k) inj.s(s_.batteries[k].phase, s_.batteries[k].node) += cplx(0.0, x[k]);
    for (int k = 0; k < ns(); ++k)
      inj.s(s_.solars[k].phase, s_.solars[k].node) += cplx(x[nb() + 2 * k], x[nb() + 2 * k + 1]);
    return inj;
  }

  struct Eval {
    PowerFlowResult flow;
    double loss = 0.0;
    double v_viol = 0.0;  // sum of squared violations
    double l_viol = 0.0;
    bool ok = false;
  };

  Eval evaluate(const Eigen::VectorXd& x, const Eigen::MatrixXcd* warm) {
    Eval e;
    ++sweeps_;
    try {
      e.flow = sweep(f_, injections(x), cfg_.pf, warm);
    } catch (const Error&) {
      return e;
    }
    e.ok = true;
    e.loss = e.flow.diag_loss;
    for (int n = 0; n < f_.num_nodes(); ++n) {
      if (n == f_.slack()) continue;
      const Node& nd = f_.node(n);
      for (int p : nd.phases.phases()) {
        const double v = std::abs(e.flow.voltage(p, n));
        const double d = std::max({0.0, nd.v_min[p] - v, v - nd.v_max[p]});
        e.v_viol += d * d;
      }
    }
    for (int l = 0; l < f_.num_branches(); ++l) {
      const Branch& br = f_.branch(l);
      for (int p : br.phases.phases()) {
        const double d = std::max(0.0, std::abs(e.flow.flow(p, l)) - br.s_max[p]);
        e.l_viol += d * d;
      }
    }
    return e;
  }

  double phi(const Eval& e, double mu) const {
    return e.ok ? e.loss + mu * (e.v_viol + e.l_viol) : std::numeric_limits<double>::infinity();
  }

  // Largest absolute violations at an evaluated point.
  void violations(const Eval& e, const Eigen::VectorXd& x, PeriodResult& r) const {
    r.voltage_violation = 0.0;
    for (int n = 0; n < f_.num_nodes(); ++n) {
      if (n == f_.slack()) continue;
      const Node& nd = f_.node(n);
      for (int p : nd.phases.phases()) {
        const double v = std::abs(e.flow.voltage(p, n));
        r.voltage_violation = std::max({r.voltage_violation, nd.v_min[p] - v, v - nd.v_max[p]});
      }
    }
    r.line_violation = 0.0;
    for (int l = 0; l < f_.num_branches(); ++l) {
      const Branch& br = f_.branch(l);
      for (int p : br.phases.phases())
        r.line_violation = std::max(r.line_violation, std::abs(e.flow.flow(p, l)) - br.s_max[p]);
    }
    r.inverter_violation = 0.0;
    for (int k = 0; k < nb(); ++k) {
      const double h = f_.node(s_.batteries[k].node).battery->h_max;
      r.inverter_violation = std::max(r.inverter_violation, std::hypot(p_bat_[k], x[k]) - h);
    }
    for (int k = 0; k < ns(); ++k) {
      const double p = x[nb() + 2 * k], q = x[nb() + 2 * k + 1];
      r.inverter_violation = std::max({r.inverter_violation, std::hypot(p, q) - sol_cap_[k], -p});
    }
    r.voltage_violation = std::max(r.voltage_violation, 0.0);
    r.line_violation = std::max(r.line_violation, 0.0);
    r.inverter_violation = std::max(r.inverter_violation, 0.0);
  }

  PeriodResult run() {
    PeriodResult r;
    r.t = t_;
    r.p_bat = p_bat_;
    Eigen::VectorXd x = start();
    Eval cur = evaluate(x, nullptr);
    if (!cur.ok) throw Error(Errc::PowerFlowDiverged, "no power-flow solution at the relaxed set-points, step " + std::to_string(t_));
    r.init_loss = cur.loss;
    double mu = cfg_.penalty;
    r.init_objective = phi(cur, mu);

    const int n = dim();
    double step = 1.0;
    for (int pass = 0; pass <= cfg_.continuation && n > 0; ++pass) {
      if (pass > 0) mu *= 2.0;
      double value = phi(cur, mu);
      for (int it = 0; it < cfg_.max_iter; ++it) {
        ++r.iterations;
        const Eigen::VectorXd g = gradient(x, cur, mu);
        // Projected-gradient step with Armijo backtracking along the projection arc.
        bool moved = false;
        for (int ls = 0; ls < 60; ++ls) {
          const Eigen::VectorXd cand = project(x - step * g);
          const Eigen::VectorXd d = cand - x;
          if (d.norm() == 0.0) break;
          Eval e = evaluate(cand, &cur.flow.voltage);
          const double v = phi(e, mu);
          if (v <= value - 1e-4 / step * d.squaredNorm()) {
            const double gain = value - v;
            x = cand;
            cur = std::move(e);
            value = v;
            moved = true;
            step = std::min(step * 2.0, 1e6);
            if (gain < cfg_.improve_tol) moved = false;
            break;
          }
          step *= 0.5;
          if (step < 1e-14) break;
        }
        if (!moved) break;
      }
    }

    r.q_bat = x.head(nb());
    r.p_sol.resize(ns());
    r.q_sol.resize(ns());
    for (int k = 0; k < ns(); ++k) {
      r.p_sol[k] = x[nb() + 2 * k];
      r.q_sol[k] = x[nb() + 2 * k + 1];
    }
    r.loss = cur.loss;
    r.objective = phi(cur, mu);
    violations(cur, x, r);
    r.flow = std::move(cur.flow);
    r.feasible = r.voltage_violation <= cfg_.ineq_tol && r.line_violation <= cfg_.ineq_tol &&
                 r.inverter_violation <= cfg_.ineq_tol;
    if (!r.feasible)
      r.error = std::string(to_string(Errc::InfeasibleAtFixedP)) + ": voltage " + std::to_string(r.voltage_violation) +
                ", line " + std::to_string(r.line_violation) + ", inverter " + std::to_string(r.inverter_violation);
    r.sweeps = sweeps_;
    return r;
  }

 private:
  Eigen::VectorXd gradient(const Eigen::VectorXd& x, const Eval& at, double mu) {
    const double h = cfg_.fd_step;
    Eigen::VectorXd g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      Eigen::VectorXd xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      const double fp = phi(evaluate(xp, &at.flow.voltage), mu);
      const double fm = phi(evaluate(xm, &at.flow.voltage), mu);
      g[i] = std::isfinite(fp) && std::isfinite(fm) ? (fp - fm) / (2.0 * h) : 0.0;
    }
    return g;
  }

  const Feeder& f_;
  const ForecastSeries& fc_;
  const DispatchSchedule& s_;
  int t_;
  RestoreConfig cfg_;
  Eigen::VectorXd p_bat_, q_radius_, sol_cap_;
  InjectionSet base_;
  int sweeps_ = 0;
};

}  // namespace

PeriodResult restore_timestep(const Feeder& feeder, const ForecastSeries& forecast, const DispatchSchedule& schedule,
                              int t, const RestoreConfig& cfg) {
  cfg.validate();
  if (t < 0 || t >= schedule.horizon() || t >= forecast.horizon())
    throw Error(Errc::HorizonMismatch, "step " + std::to_string(t) + " outside schedule");
  if (schedule.batteries != battery_slots(feeder) || schedule.solars != solar_slots(feeder))
    throw Error(Errc::SizeMismatch, "schedule devices do not match feeder");
  return Period(feeder, forecast, schedule, t, cfg).run();
}

RestoreResult restore_horizon(const Feeder& feeder, const ForecastSeries& forecast, const DispatchSchedule& schedule,
                              const RestoreConfig& cfg, int threads) {
  const int T = schedule.horizon();
  if (forecast.horizon() < T) throw Error(Errc::HorizonMismatch, "forecast shorter than schedule");
  RestoreResult out;
  out.periods.resize(static_cast<std::size_t>(T));
  auto one = [&](int t) {
    PeriodResult& slot = out.periods[static_cast<std::size_t>(t)];
    try {
      slot = restore_timestep(feeder, forecast, schedule, t, cfg);
    } catch (const Error& e) {
      slot = PeriodResult{};
      slot.t = t;
      slot.error = e.what();
    }
  };
  const int workers = std::clamp(threads, 1, std::max(T, 1));
  if (workers == 1) {
    for (int t = 0; t < T; ++t) one(t);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (int t = w; t < T; t += workers) one(t);
      });
    for (auto& th : pool) th.join();
  }
  for (const PeriodResult& p : out.periods) {
    out.dnlp_opt += p.loss;
    if (!p.feasible) out.all_feasible = false;
    if (!p.error.empty() && p.flow.voltage.size() == 0) ++out.failed;
  }
  return out;
}

DispatchSchedule restored_schedule(const DispatchSchedule& relaxed, const RestoreResult& restored) {
  DispatchSchedule s = relaxed;
  const int T = relaxed.horizon();
  if (static_cast<int>(restored.periods.size()) != T) throw Error(Errc::HorizonMismatch, "restoration covers a different horizon");
  for (int t = 0; t < T; ++t) {
    const PeriodResult& p = restored.periods[static_cast<std::size_t>(t)];
    if (p.flow.voltage.size() == 0) continue;
    s.q_bat.col(t) = p.q_bat;
    s.p_sol.col(t) = p.p_sol;
    s.q_sol.col(t) = p.q_sol;
    for (Eigen::Index n = 0; n < p.flow.voltage.cols(); ++n)
      for (int ph = 0; ph < kPhases; ++ph) s.voltage_mag(kPhases * n + ph, t) = std::abs(p.flow.voltage(ph, n));
    s.loss[t] = p.loss;
    s.head_power[t] = p.flow.head_power();
  }
  return s;
}

GapReport gap(double socp_opt, double dnlp_opt, double gap_tol) {
  if (!std::isfinite(socp_opt) || !std::isfinite(dnlp_opt)) throw Error(Errc::InvalidArgument, "non-finite objective");
  if (!(dnlp_opt > 0.0)) throw Error(Errc::InvalidArgument, "DNLP objective must be positive");
  if (dnlp_opt < socp_opt - gap_tol)
    throw Error(Errc::OrderingViolated, "restored objective " + std::to_string(dnlp_opt) + " below relaxed bound " +
                                            std::to_string(socp_opt));
  return {socp_opt, dnlp_opt, (dnlp_opt - socp_opt) / dnlp_opt * 100.0};
}

}  // namespace dispatch
