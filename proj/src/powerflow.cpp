#include "dispatch/powerflow.hpp"

#include <cmath>
#include <string>

namespace dispatch {

InjectionSet InjectionSet::zeros(const Feeder& feeder) {
  return {Eigen::MatrixXcd::Zero(kPhases, feeder.num_nodes())};
}

namespace {

// Branch currents from nodal injection currents, leaf to root.
void backward(const Feeder& f, const Eigen::MatrixXcd& i_inj, Eigen::MatrixXcd& current) {
  const auto& order = f.order();
  current.setZero();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int l = *it;
    const Branch& br = f.branch(l);
    for (int p : br.phases.phases()) {
      cplx sum = -i_inj(p, br.to);
      for (int c : f.child_branches(br.to)) sum += current(p, c);
      current(p, l) = sum;
    }
  }
}

void forward(const Feeder& f, const Eigen::MatrixXcd& current, Eigen::MatrixXcd& v) {
  for (int l : f.order()) {
    const Branch& br = f.branch(l);
    const Eigen::Vector3cd drop = br.z * current.col(l);
    for (int p : br.phases.phases()) v(p, br.to) = v(p, br.from) - drop[p];
  }
}

double total_mismatch(const Feeder& f, const InjectionSet& inj, const PowerFlowResult& r) {
  double sum = 0.0;
  for (int n = 0; n < f.num_nodes(); ++n) {
    if (n == f.slack()) continue;
    const int lp = f.parent_branch(n);
    for (int p : f.node(n).phases.phases()) {
      cplx net_in = r.current(p, lp);
      for (int c : f.child_branches(n))
        if (f.branch(c).phases.has(p)) net_in -= r.current(p, c);
      sum += std::abs(r.voltage(p, n) * std::conj(net_in) + inj.s(p, n));
    }
  }
  return sum;
}

void injection_currents(const Feeder& f, const InjectionSet& inj, const Eigen::MatrixXcd& v, Eigen::MatrixXcd& i_inj) {
  i_inj.setZero();
  for (int n = 0; n < f.num_nodes(); ++n) {
    if (n == f.slack()) continue;
    for (int p : f.node(n).phases.phases()) i_inj(p, n) = std::conj(inj.s(p, n) / v(p, n));
  }
}

}  // namespace

PowerFlowResult sweep(const Feeder& f, const InjectionSet& inj, const PowerFlowConfig& cfg, const Eigen::MatrixXcd* init) {
  const int N = f.num_nodes(), B = f.num_branches();
  if (inj.s.rows() != kPhases || inj.s.cols() != N) throw Error(Errc::SizeMismatch, "injection set does not match feeder");
  if (!inj.s.allFinite()) throw Error(Errc::InvalidArgument, "non-finite injection");
  PowerFlowResult r;
  r.voltage = Eigen::MatrixXcd::Zero(kPhases, N);
  const Eigen::Vector3cd v0 = f.slack_voltage();
  if (init) {
    if (init->rows() != kPhases || init->cols() != N) throw Error(Errc::SizeMismatch, "initial voltage shape");
    r.voltage = *init;
  } else {
    for (int n = 0; n < N; ++n)
      for (int p : f.node(n).phases.phases()) r.voltage(p, n) = v0[p];
  }
  for (int p = 0; p < kPhases; ++p) r.voltage(p, f.slack()) = v0[p];
  r.current = Eigen::MatrixXcd::Zero(kPhases, B);
  Eigen::MatrixXcd i_inj = Eigen::MatrixXcd::Zero(kPhases, N);

  for (int it = 1; it <= cfg.max_iter; ++it) {
    injection_currents(f, inj, r.voltage, i_inj);
    backward(f, i_inj, r.current);
    forward(f, r.current, r.voltage);
    r.iterations = it;
    r.max_mismatch = nodal_mismatch(f, inj, r);
    if (!std::isfinite(r.max_mismatch)) break;
    // The summed mismatch bounds the power-balance error of the whole feeder.
    if (r.max_mismatch <= cfg.tol && total_mismatch(f, inj, r) <= cfg.tol) {
      r.converged = true;
      break;
    }
  }
  if (!r.converged)
    throw Error(Errc::NotConverged, "sweep stopped after " + std::to_string(r.iterations) + " iterations, mismatch " +
                                        std::to_string(r.max_mismatch));

  r.flow = Eigen::MatrixXcd::Zero(kPhases, B);
  for (int l = 0; l < B; ++l) {
    const Branch& br = f.branch(l);
    for (int p : br.phases.phases()) r.flow(p, l) = r.voltage(p, br.from) * std::conj(r.current(p, l));
  }
  for (int l : f.child_branches(f.slack())) r.head += r.flow.col(l);
  r.loss = losses(f, r);
  r.diag_loss = diag_losses(f, r);
  return r;
}

double losses(const Feeder& f, const PowerFlowResult& r) {
  double loss = 0.0;
  for (int l = 0; l < f.num_branches(); ++l) {
    const Branch& br = f.branch(l);
    for (int p : br.phases.phases())
      loss += std::real((r.voltage(p, br.from) - r.voltage(p, br.to)) * std::conj(r.current(p, l)));
  }
  return loss;
}

double diag_losses(const Feeder& f, const PowerFlowResult& r) {
  double loss = 0.0;
  for (int l = 0; l < f.num_branches(); ++l) {
    const Branch& br = f.branch(l);
    for (int p : br.phases.phases()) loss += br.z(p, p).real() * std::norm(r.current(p, l));
  }
  return loss;
}

double nodal_mismatch(const Feeder& f, const InjectionSet& inj, const PowerFlowResult& r) {
  double worst = 0.0;
  for (int n = 0; n < f.num_nodes(); ++n) {
    if (n == f.slack()) continue;
    const int lp = f.parent_branch(n);
    for (int p : f.node(n).phases.phases()) {
      cplx net_in = r.current(p, lp);
      for (int c : f.child_branches(n))
        if (f.branch(c).phases.has(p)) net_in -= r.current(p, c);
      worst = std::max(worst, std::abs(r.voltage(p, n) * std::conj(net_in) + inj.s(p, n)));
    }
  }
  return worst;
}

InjectionSet schedule_injections(const Feeder& f, const ForecastSeries& fc, const DispatchSchedule& s, int t) {
  if (t < 0 || t >= fc.horizon() || t >= s.horizon()) throw Error(Errc::HorizonMismatch, "step outside schedule");
  InjectionSet inj = InjectionSet::zeros(f);
  for (int n = 0; n < f.num_nodes(); ++n)
    for (int p : f.node(n).phases.phases()) inj.s(p, n) = -fc.load_at(n, p, t);
  for (std::size_t k = 0; k < s.batteries.size(); ++k) {
    const Slot& sl = s.batteries[k];
    const int r = static_cast<int>(k);
    inj.s(sl.phase, sl.node) += cplx(s.p_dis(r, t) - s.p_ch(r, t), s.q_bat(r, t));
  }
  for (std::size_t k = 0; k < s.solars.size(); ++k) {
    const Slot& sl = s.solars[k];
    const int r = static_cast<int>(k);
    inj.s(sl.phase, sl.node) += cplx(s.p_sol(r, t), s.q_sol(r, t));
  }
  return inj;
}

VoltageErrorReport compare_voltages(const Feeder& f, const InjectionSet& inj, const Eigen::MatrixXd& vmag,
                                    const PowerFlowConfig& cfg) {
  if (vmag.rows() != kPhases || vmag.cols() != f.num_nodes()) throw Error(Errc::SizeMismatch, "voltage field shape");
  VoltageErrorReport rep;
  rep.flow = sweep(f, inj, cfg);
  rep.error = Eigen::MatrixXd::Zero(kPhases, f.num_nodes());
  for (int n = 0; n < f.num_nodes(); ++n)
    for (int p : f.node(n).phases.phases()) {
      const double e = std::abs(vmag(p, n) - std::abs(rep.flow.voltage(p, n)));
      rep.error(p, n) = e;
      if (e > rep.worst || rep.worst_node < 0) {
        rep.worst = std::max(rep.worst, e);
        rep.worst_node = n;
        rep.worst_phase = p;
      }
    }
  return rep;
}

VoltageErrorReport validate_schedule(const Feeder& f, const ForecastSeries& fc, const DispatchSchedule& s, int t,
                                     const PowerFlowConfig& cfg) {
  const InjectionSet inj = schedule_injections(f, fc, s, t);
  Eigen::MatrixXd vmag(kPhases, f.num_nodes());
  for (int n = 0; n < f.num_nodes(); ++n)
    for (int p = 0; p < kPhases; ++p) vmag(p, n) = s.voltage_mag(kPhases * n + p, t);
  return compare_voltages(f, inj, vmag, cfg);
}

}  // namespace dispatch
