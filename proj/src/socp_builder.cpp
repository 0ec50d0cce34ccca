#include "dispatch/socp_builder.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

namespace dispatch {

const char* to_string(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::LossMin: return "lossmin";
    case ObjectiveKind::VoltDev: return "voltdev";
    case ObjectiveKind::HeadTrack: return "headtrack";
    case ObjectiveKind::Degradation: return "degradation";
    case ObjectiveKind::VBTrack: return "vbtrack";
    case ObjectiveKind::SoCTrack: return "soctrack";
  }
  return "?";
}

ObjectiveKind parse_objective(std::string_view name) {
  for (auto k : {ObjectiveKind::LossMin, ObjectiveKind::VoltDev, ObjectiveKind::HeadTrack, ObjectiveKind::Degradation,
                 ObjectiveKind::VBTrack, ObjectiveKind::SoCTrack})
    if (name == to_string(k)) return k;
  throw Error(Errc::UnknownObjective, "objective '" + std::string(name) + "'");
}

const char* to_string(BatteryModel m) { return m == BatteryModel::Exact ? "exact" : "simplified"; }

BatteryModel parse_battery_model(std::string_view name) {
  if (name == "exact") return BatteryModel::Exact;
  if (name == "simplified") return BatteryModel::Simplified;
  throw Error(Errc::InvalidArgument, "battery model '" + std::string(name) + "'");
}

void BuilderConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw Error(Errc::InvalidArgument, "alpha must be finite and >= 0");
}

std::vector<Slot> battery_slots(const Feeder& feeder) {
  std::vector<Slot> out;
  for (int n = 0; n < feeder.num_nodes(); ++n)
    if (const auto& b = feeder.node(n).battery)
      for (int p : b->phases.phases()) out.push_back({n, p});
  return out;
}

std::vector<Slot> solar_slots(const Feeder& feeder) {
  std::vector<Slot> out;
  for (int n = 0; n < feeder.num_nodes(); ++n)
    if (const auto& s = feeder.node(n).solar)
      for (int p : s->phases.phases()) out.push_back({n, p});
  return out;
}

namespace {

using Eigen::MatrixXi;
using Eigen::VectorXd;

// Affine expression sum coef*x + k.
struct Lin {
  std::vector<std::pair<int, double>> terms;
  double k = 0.0;

  Lin() = default;
  explicit Lin(double constant) : k(constant) {}
  static Lin var(int v, double c = 1.0) {
    Lin l;
    l.add(v, c);
    return l;
  }
  Lin& add(int v, double c) {
    if (v >= 0 && c != 0.0) terms.emplace_back(v, c);
    return *this;
  }
  Lin& axpy(double a, const Lin& o) {
    if (a == 0.0) return *this;
    for (const auto& [v, c] : o.terms) terms.emplace_back(v, a * c);
    k += a * o.k;
    return *this;
  }
  double eval(const VectorXd& x) const {
    double s = k;
    for (const auto& [v, c] : terms) s += c * x[v];
    return s;
  }
};

// Complex affine expression.
struct CLin {
  Lin re, im;

  static CLin constant(cplx c) {
    CLin e;
    e.re.k = c.real();
    e.im.k = c.imag();
    return e;
  }
  CLin& axpy(cplx a, const CLin& o) {
    re.axpy(a.real(), o.re).axpy(-a.imag(), o.im);
    im.axpy(a.real(), o.im).axpy(a.imag(), o.re);
    return *this;
  }
  CLin conj() const {
    CLin e = *this;
    e.im = Lin().axpy(-1.0, im);
    return e;
  }
};

class Assembler {
 public:
  int new_var() { return n_++; }
  int num_vars() const { return n_; }

  int eq(const Lin& e) {
    const int row = static_cast<int>(b_.size());
    for (const auto& [v, c] : e.terms) a_.emplace_back(row, v, c);
    b_.push_back(-e.k);
    return row;
  }

  // e >= 0
  int nonneg(const Lin& e) {
    const int row = static_cast<int>(hl_.size());
    for (const auto& [v, c] : e.terms) gl_.emplace_back(row, v, -c);
    hl_.push_back(e.k);
    return row;
  }

  // rows[0] >= ||rows[1:]||; returns the first row counted among cone rows only.
  int soc(const std::vector<Lin>& rows) {
    const int start = static_cast<int>(hq_.size());
    for (const Lin& e : rows) {
      const int row = static_cast<int>(hq_.size());
      for (const auto& [v, c] : e.terms) gq_.emplace_back(row, v, -c);
      hq_.push_back(e.k);
    }
    dims_.push_back(static_cast<int>(rows.size()));
    return start;
  }

  void cost(const Lin& e) {
    for (const auto& [v, c] : e.terms) cost_.emplace_back(v, c);
  }
  void penalty(int v, double c) {
    cost_.emplace_back(v, c);
    penalty_.emplace_back(v, c);
  }

  int num_nonneg() const { return static_cast<int>(hl_.size()); }

  conic::ConeProgram finish(VectorXd& penalty) const {
    conic::ConeProgram p;
    p.c = VectorXd::Zero(n_);
    for (const auto& [v, c] : cost_) p.c[v] += c;
    penalty = VectorXd::Zero(n_);
    for (const auto& [v, c] : penalty_) penalty[v] += c;
    p.A.resize(static_cast<int>(b_.size()), n_);
    p.A.setFromTriplets(a_.begin(), a_.end());
    p.b = Eigen::Map<const VectorXd>(b_.data(), static_cast<Eigen::Index>(b_.size()));
    const int l = num_nonneg();
    std::vector<conic::Triplet> g = gl_;
    for (const auto& t : gq_) g.emplace_back(t.row() + l, t.col(), t.value());
    p.G.resize(l + static_cast<int>(hq_.size()), n_);
    p.G.setFromTriplets(g.begin(), g.end());
    p.h.resize(p.G.rows());
    for (int i = 0; i < l; ++i) p.h[i] = hl_[i];
    for (std::size_t i = 0; i < hq_.size(); ++i) p.h[l + static_cast<Eigen::Index>(i)] = hq_[i];
    p.cones.num_nonneg = l;
    p.cones.soc_dims = dims_;
    return p;
  }

 private:
  int n_ = 0;
  std::vector<conic::Triplet> a_, gl_, gq_;
  std::vector<double> b_, hl_, hq_;
  std::vector<int> dims_;
  std::vector<std::pair<int, double>> cost_, penalty_;
};

int idx9(int elem, int i, int j) { return 9 * elem + 3 * i + j; }

// Hermitian entry (i, j) from upper-triangular real/imag storage.
CLin hermitian(const MatrixXi& re, const MatrixXi& im, int elem, int i, int j, int t) {
  CLin e;
  if (i == j) {
    e.re.add(re(idx9(elem, i, i), t), 1.0);
  } else if (i < j) {
    e.re.add(re(idx9(elem, i, j), t), 1.0);
    e.im.add(im(idx9(elem, i, j), t), 1.0);
  } else {
    e.re.add(re(idx9(elem, j, i), t), 1.0);
    e.im.add(im(idx9(elem, j, i), t), -1.0);
  }
  return e;
}

class Builder {
 public:
  Builder(const Feeder& f, const ForecastSeries& fc, const BuilderConfig& cfg) : f_(f), fc_(fc), cfg_(cfg) {}

  ConicProblem run() {
    cfg_.validate();
    T_ = fc_.horizon();
    if (T_ < 1) throw Error(Errc::HorizonMismatch, "empty forecast horizon");
    if (fc_.rows() != kPhases * f_.num_nodes() || fc_.solar_avail.rows() != fc_.rows() ||
        fc_.solar_avail.cols() != T_)
      throw Error(Errc::HorizonMismatch, "forecast does not match feeder");
    if (!(fc_.dt_hours > 0.0)) throw Error(Errc::HorizonMismatch, "forecast step must be positive");
    check_objective();

    L_.horizon = T_;
    L_.slack = f_.slack();
    L_.slack_mag = f_.slack_voltage().cwiseAbs();
    L_.batteries = battery_slots(f_);
    L_.solars = solar_slots(f_);
    const int nb = static_cast<int>(L_.batteries.size());
    if (!cfg_.modes.empty() && static_cast<int>(cfg_.modes.size()) != nb * T_)
      throw Error(Errc::SizeMismatch, "mode pattern needs one entry per battery phase and step");
    if (cfg_.b_init.size() != 0 && cfg_.b_init.size() != nb)
      throw Error(Errc::SizeMismatch, "initial SoC override needs one entry per battery phase");
    if (cfg_.battery_model == BatteryModel::Simplified)
      for (const Slot& s : L_.batteries)
        if (!f_.node(s.node).battery->eta_eq)
          throw Error(Errc::InvalidArgument, "simplified battery model needs eta_eq at '" + f_.node(s.node).id + "'");

    allocate();
    for (int t = 0; t < T_; ++t) {
      Lin loss, head;
      for (int l = 0; l < f_.num_branches(); ++l) {
        const Branch& br = f_.branch(l);
        for (int i : br.phases.phases()) {
          loss.axpy(br.z(i, i).real(), I(l, i, i, t).re);
          if (br.from == f_.slack()) head.add(L_.s_re(idx9(l, i, i), t), 1.0);
        }
      }
      L_.loss_terms.push_back(loss.terms);
      L_.head_terms.push_back(head.terms);
    }
    for (int t = 0; t < T_; ++t) network_rows(t);
    for (int t = 0; t < T_; ++t) device_rows(t);
    objective();

    ConicProblem prob;
    prob.program = asm_.finish(prob.penalty);
    const int l = asm_.num_nonneg();
    for (Eigen::Index i = 0; i < L_.cone_bat.size(); ++i)
      if (L_.cone_bat.data()[i] >= 0) L_.cone_bat.data()[i] += l;
    prob.layout = std::move(L_);
    prob.config = cfg_;
    prob.forecast = fc_;
    return prob;
  }

 private:
  void check_objective() const {
    const Objective& o = cfg_.objective;
    switch (o.kind) {
      case ObjectiveKind::HeadTrack:
      case ObjectiveKind::VBTrack:
        if (!o.p_ref || o.p_ref->size() != T_)
          throw Error(Errc::UnsupportedObjective, std::string(to_string(o.kind)) + " needs one reference per step");
        break;
      case ObjectiveKind::SoCTrack:
        if (!o.b_target) throw Error(Errc::UnsupportedObjective, "soctrack needs a target SoC");
        break;
      default: break;
    }
  }

  bool has_net(int n, int p) const {
    const Node& nd = f_.node(n);
    return (nd.battery && nd.battery->phases.has(p)) || (nd.solar && nd.solar->phases.has(p));
  }

  void allocate() {
    const int N = f_.num_nodes(), B = f_.num_branches(), nb = static_cast<int>(L_.batteries.size()),
              ns = static_cast<int>(L_.solars.size());
    auto fill = [&](MatrixXi& m, int rows) { m = MatrixXi::Constant(rows, T_, -1); };
    fill(L_.w_re, 9 * N);
    fill(L_.w_im, 9 * N);
    fill(L_.i_re, 9 * B);
    fill(L_.i_im, 9 * B);
    fill(L_.s_re, 9 * B);
    fill(L_.s_im, 9 * B);
    for (MatrixXi* m : {&L_.p_dis, &L_.p_ch, &L_.q_bat, &L_.soc, &L_.row_real_balance, &L_.row_soc_dyn, &L_.row_soc_up,
                        &L_.row_soc_low, &L_.row_dis_up, &L_.row_dis_low, &L_.row_ch_up, &L_.row_ch_low, &L_.cone_bat})
      fill(*m, nb);
    fill(L_.p_sol, ns);
    fill(L_.q_sol, ns);
    fill(L_.p_net, kPhases * N);
    fill(L_.q_net, kPhases * N);

    for (int t = 0; t < T_; ++t) {
      const int first = asm_.num_vars();
      for (int n = 0; n < N; ++n) {
        if (n == f_.slack()) continue;
        const auto ph = f_.node(n).phases.phases();
        for (std::size_t a = 0; a < ph.size(); ++a)
          for (std::size_t b = a; b < ph.size(); ++b) {
            L_.w_re(idx9(n, ph[a], ph[b]), t) = asm_.new_var();
            if (a != b) L_.w_im(idx9(n, ph[a], ph[b]), t) = asm_.new_var();
          }
      }
      for (int l = 0; l < B; ++l) {
        const auto ph = f_.branch(l).phases.phases();
        for (int i : ph)
          for (int j : ph) {
            L_.s_re(idx9(l, i, j), t) = asm_.new_var();
            L_.s_im(idx9(l, i, j), t) = asm_.new_var();
          }
        for (std::size_t a = 0; a < ph.size(); ++a)
          for (std::size_t b = a; b < ph.size(); ++b) {
            L_.i_re(idx9(l, ph[a], ph[b]), t) = asm_.new_var();
            if (a != b) L_.i_im(idx9(l, ph[a], ph[b]), t) = asm_.new_var();
          }
      }
      for (int n = 0; n < N; ++n)
        for (int p : f_.node(n).phases.phases())
          if (has_net(n, p)) {
            L_.p_net(kPhases * n + p, t) = asm_.new_var();
            L_.q_net(kPhases * n + p, t) = asm_.new_var();
          }
      for (int k = 0; k < nb; ++k) {
        L_.p_dis(k, t) = asm_.new_var();
        L_.p_ch(k, t) = asm_.new_var();
        L_.q_bat(k, t) = asm_.new_var();
        L_.soc(k, t) = asm_.new_var();
      }
      for (int k = 0; k < ns; ++k) {
        L_.p_sol(k, t) = asm_.new_var();
        L_.q_sol(k, t) = asm_.new_var();
      }
      L_.vars_per_step = asm_.num_vars() - first;
    }
  }

  CLin W(int n, int i, int j, int t) const {
    if (n == f_.slack()) {
      const Eigen::Vector3cd v = f_.slack_voltage();
      return CLin::constant(v[i] * std::conj(v[j]));
    }
    return hermitian(L_.w_re, L_.w_im, n, i, j, t);
  }
  CLin I(int l, int i, int j, int t) const { return hermitian(L_.i_re, L_.i_im, l, i, j, t); }
  CLin S(int l, int i, int j, int t) const {
    CLin e;
    e.re.add(L_.s_re(idx9(l, i, j), t), 1.0);
    e.im.add(L_.s_im(idx9(l, i, j), t), 1.0);
    return e;
  }

  void network_rows(int t) {
    for (int l = 0; l < f_.num_branches(); ++l) {
      const Branch& br = f_.branch(l);
      const auto ph = br.phases.phases();
      const Eigen::Matrix3cd& Z = br.z;
      // W_from - W_to - (S Z^H + Z S^H) + Z I Z^H = 0 on the branch phases.
      for (std::size_t a = 0; a < ph.size(); ++a)
        for (std::size_t b = a; b < ph.size(); ++b) {
          const int i = ph[a], j = ph[b];
          CLin e = W(br.from, i, j, t);
          e.axpy(-1.0, W(br.to, i, j, t));
          for (int k : ph) {
            e.axpy(-std::conj(Z(j, k)), S(l, i, k, t));
            e.axpy(-Z(i, k), S(l, j, k, t).conj());
            for (int m : ph) e.axpy(Z(i, k) * std::conj(Z(j, m)), I(l, k, m, t));
          }
          asm_.eq(e.re);
          if (i != j) asm_.eq(e.im);
        }
    }

    // Nodal balance at every non-slack node.
    for (int n = 0; n < f_.num_nodes(); ++n) {
      if (n == f_.slack()) continue;
      const int lp = f_.parent_branch(n);
      const Branch& br = f_.branch(lp);
      for (int i : f_.node(n).phases.phases()) {
        CLin e = S(lp, i, i, t);
        for (int k : br.phases.phases()) e.axpy(-br.z(i, k), I(lp, k, i, t));
        for (int c : f_.child_branches(n))
          if (f_.branch(c).phases.has(i)) e.axpy(-1.0, S(c, i, i, t));
        if (has_net(n, i)) {
          e.re.add(L_.p_net(kPhases * n + i, t), 1.0);
          e.im.add(L_.q_net(kPhases * n + i, t), 1.0);
        } else {
          const cplx load = fc_.load_at(n, i, t);
          e.re.k -= load.real();
          e.im.k -= load.imag();
        }
        asm_.eq(e.re);
        asm_.eq(e.im);
      }
    }

    // Voltage box on the diagonal of W.
    for (int n = 0; n < f_.num_nodes(); ++n) {
      if (n == f_.slack()) continue;
      const Node& nd = f_.node(n);
      for (int i : nd.phases.phases()) {
        const int v = L_.w_re(idx9(n, i, i), t);
        asm_.nonneg(Lin::var(v).axpy(1.0, Lin(-nd.v_min[i] * nd.v_min[i])));
        asm_.nonneg(Lin(nd.v_max[i] * nd.v_max[i]).add(v, -1.0));
      }
    }

    // Line limits.
    for (int l = 0; l < f_.num_branches(); ++l) {
      const Branch& br = f_.branch(l);
      for (int i : br.phases.phases()) {
        const CLin s = S(l, i, i, t);
        asm_.soc({Lin(br.s_max[i]), s.re, s.im});
      }
    }

    // 2x2 principal minors of W and I.
    auto minors = [&](auto&& elem, PhaseMask mask) {
      const auto ph = mask.phases();
      for (std::size_t a = 0; a < ph.size(); ++a)
        for (std::size_t b = a + 1; b < ph.size(); ++b) {
          const int i = ph[a], j = ph[b];
          const CLin xii = elem(i, i), xjj = elem(j, j), xij = elem(i, j);
          Lin top = xii.re;
          top.axpy(1.0, xjj.re);
          Lin diff = xii.re;
          diff.axpy(-1.0, xjj.re);
          asm_.soc({top, Lin().axpy(2.0, xij.re), Lin().axpy(2.0, xij.im), diff});
        }
    };
    for (int n = 0; n < f_.num_nodes(); ++n)
      if (n != f_.slack()) minors([&](int i, int j) { return W(n, i, j, t); }, f_.node(n).phases);
    for (int l = 0; l < f_.num_branches(); ++l) minors([&](int i, int j) { return I(l, i, j, t); }, f_.branch(l).phases);

    // |S_ij|^2 <= W_from,ii * I_jj.
    for (int l = 0; l < f_.num_branches(); ++l) {
      const Branch& br = f_.branch(l);
      for (int i : br.phases.phases())
        for (int j : br.phases.phases()) {
          const Lin w = W(br.from, i, i, t).re;
          const Lin c = I(l, j, j, t).re;
          const CLin s = S(l, i, j, t);
          Lin top = w;
          top.axpy(1.0, c);
          Lin diff = w;
          diff.axpy(-1.0, c);
          asm_.soc({top, Lin().axpy(2.0, s.re), Lin().axpy(2.0, s.im), diff});
        }
    }
  }

  int solar_slot(int n, int p) const {
    for (std::size_t k = 0; k < L_.solars.size(); ++k)
      if (L_.solars[k].node == n && L_.solars[k].phase == p) return static_cast<int>(k);
    return -1;
  }
  int battery_slot(int n, int p) const {
    for (std::size_t k = 0; k < L_.batteries.size(); ++k)
      if (L_.batteries[k].node == n && L_.batteries[k].phase == p) return static_cast<int>(k);
    return -1;
  }

  Mode mode(int k, int t) const { return cfg_.modes.empty() ? Mode::Free : cfg_.modes[static_cast<std::size_t>(k * T_ + t)]; }

  void device_rows(int t) {
    const double dt = fc_.dt_hours;
    // Device balances at every (node, phase) carrying a device.
    for (int n = 0; n < f_.num_nodes(); ++n)
      for (int p : f_.node(n).phases.phases()) {
        if (!has_net(n, p)) continue;
        const cplx load = fc_.load_at(n, p, t);
        Lin pe = Lin::var(L_.p_net(kPhases * n + p, t));
        Lin qe = Lin::var(L_.q_net(kPhases * n + p, t));
        pe.k += load.real();
        qe.k += load.imag();
        const int ks = solar_slot(n, p), kb = battery_slot(n, p);
        if (ks >= 0) {
          pe.add(L_.p_sol(ks, t), -1.0);
          qe.add(L_.q_sol(ks, t), -1.0);
        }
        if (kb >= 0) {
          pe.add(L_.p_dis(kb, t), -1.0).add(L_.p_ch(kb, t), 1.0);
          qe.add(L_.q_bat(kb, t), -1.0);
        }
        const int row = asm_.eq(pe);
        asm_.eq(qe);
        if (kb >= 0) L_.row_real_balance(kb, t) = row;
      }

    for (std::size_t s = 0; s < L_.solars.size(); ++s) {
      const Slot& sl = L_.solars[s];
      const int k = static_cast<int>(s);
      const double cap = std::min(f_.node(sl.node).solar->g_max, fc_.solar_at(sl.node, sl.phase, t));
      if (cap <= 1e-12) {
        asm_.eq(Lin::var(L_.p_sol(k, t)));
        asm_.eq(Lin::var(L_.q_sol(k, t)));
        continue;
      }
      asm_.nonneg(Lin::var(L_.p_sol(k, t)));
      asm_.soc({Lin(cap), Lin::var(L_.p_sol(k, t)), Lin::var(L_.q_sol(k, t))});
    }

    for (std::size_t s = 0; s < L_.batteries.size(); ++s) {
      const Slot& sl = L_.batteries[s];
      const int k = static_cast<int>(s);
      const BatterySpec& bat = *f_.node(sl.node).battery;
      const int pd = L_.p_dis(k, t), pc = L_.p_ch(k, t), qb = L_.q_bat(k, t), B = L_.soc(k, t);
      const Mode m = mode(k, t);

      if (m == Mode::Charge) {
        asm_.eq(Lin::var(pd));
      } else {
        L_.row_dis_low(k, t) = asm_.nonneg(Lin::var(pd));
        L_.row_dis_up(k, t) = asm_.nonneg(Lin(bat.p_max).add(pd, -1.0));
      }
      if (m == Mode::Discharge) {
        asm_.eq(Lin::var(pc));
      } else {
        L_.row_ch_low(k, t) = asm_.nonneg(Lin::var(pc));
        L_.row_ch_up(k, t) = asm_.nonneg(Lin(bat.p_max).add(pc, -1.0));
      }
      L_.row_soc_low(k, t) = asm_.nonneg(Lin::var(B).axpy(1.0, Lin(-bat.b_min)));
      L_.row_soc_up(k, t) = asm_.nonneg(Lin(bat.b_max).add(B, -1.0));
      L_.cone_bat(k, t) = asm_.soc({Lin(bat.h_max), Lin::var(pd).add(pc, -1.0), Lin::var(qb)});

      const double b0 = cfg_.b_init.size() ? cfg_.b_init[k] : bat.b_init;
      Lin dyn = Lin::var(B);
      if (cfg_.battery_model == BatteryModel::Exact) {
        if (t == 0) dyn.k -= b0; else dyn.add(L_.soc(k, t - 1), -1.0);
        dyn.add(pc, -bat.eta_c * dt).add(pd, dt / bat.eta_d);
      } else {
        const double eq = *bat.eta_eq;
        if (t == 0) dyn.k -= eq * b0; else dyn.add(L_.soc(k, t - 1), -eq);
        dyn.add(pd, dt).add(pc, -dt);
      }
      L_.row_soc_dyn(k, t) = asm_.eq(dyn);

      asm_.penalty(pd, cfg_.alpha * (1.0 / bat.eta_d - bat.eta_c));
    }
  }

  void square(const Lin& u, double weight) {
    const int tau = asm_.new_var();
    asm_.cost(Lin::var(tau, weight));
    asm_.soc({Lin::var(tau).axpy(1.0, Lin(1.0)), Lin().axpy(2.0, u), Lin::var(tau).axpy(1.0, Lin(-1.0))});
    L_.epigraphs.push_back({tau, u.terms, u.k});
  }

  void objective() {
    const Objective& o = cfg_.objective;
    const int nb = static_cast<int>(L_.batteries.size());
    switch (o.kind) {
      case ObjectiveKind::LossMin:
        for (const auto& terms : L_.loss_terms) {
          Lin e;
          e.terms = terms;
          asm_.cost(e);
        }
        break;
      case ObjectiveKind::VoltDev:
        for (int t = 0; t < T_; ++t)
          for (int n = 0; n < f_.num_nodes(); ++n) {
            if (n == f_.slack()) continue;
            for (int i : f_.node(n).phases.phases())
              square(Lin::var(L_.w_re(idx9(n, i, i), t)).axpy(1.0, Lin(-o.w_nom)), 1.0);
          }
        break;
      case ObjectiveKind::HeadTrack:
        for (int t = 0; t < T_; ++t) {
          Lin p0(-(*o.p_ref)[t]);
          p0.terms = L_.head_terms[static_cast<std::size_t>(t)];
          square(p0, 1.0);
        }
        break;
      case ObjectiveKind::Degradation:
        for (int t = 0; t < T_; ++t)
          for (int k = 0; k < nb; ++k) asm_.cost(Lin::var(L_.p_dis(k, t)).add(L_.p_ch(k, t), 1.0));
        break;
      case ObjectiveKind::VBTrack:
        for (int t = 0; t < T_; ++t)
          for (int k = 0; k < nb; ++k)
            square(Lin::var(L_.p_dis(k, t)).add(L_.p_ch(k, t), -1.0).axpy(1.0, Lin(-(*o.p_ref)[t])), 1.0);
        break;
      case ObjectiveKind::SoCTrack:
        for (int k = 0; k < nb; ++k) square(Lin::var(L_.soc(k, T_ - 1)).axpy(1.0, Lin(-*o.b_target)), 1.0);
        break;
    }
  }

  const Feeder& f_;
  const ForecastSeries& fc_;
  BuilderConfig cfg_;
  int T_ = 0;
  ProblemLayout L_;
  Assembler asm_;
};

double at(const VectorXd& x, int idx) { return idx >= 0 ? x[idx] : 0.0; }

}  // namespace

ConicProblem build(const Feeder& feeder, const ForecastSeries& forecast, const BuilderConfig& cfg) {
  return Builder(feeder, forecast, cfg).run();
}

DispatchSchedule extract_schedule(const ConicProblem& prob, const VectorXd& x) {
  if (x.size() != prob.num_vars()) throw Error(Errc::SizeMismatch, "primal vector does not match problem");
  const ProblemLayout& L = prob.layout;
  const int T = L.horizon, nb = static_cast<int>(L.batteries.size()), ns = static_cast<int>(L.solars.size());
  DispatchSchedule s;
  s.dt_hours = prob.forecast.dt_hours;
  s.batteries = L.batteries;
  s.solars = L.solars;
  auto read = [&](const MatrixXi& idx, Eigen::MatrixXd& out, int rows) {
    out.resize(rows, T);
    for (int r = 0; r < rows; ++r)
      for (int t = 0; t < T; ++t) out(r, t) = at(x, idx(r, t));
  };
  read(L.p_dis, s.p_dis, nb);
  read(L.p_ch, s.p_ch, nb);
  read(L.q_bat, s.q_bat, nb);
  read(L.soc, s.soc, nb);
  read(L.p_sol, s.p_sol, ns);
  read(L.q_sol, s.q_sol, ns);
  if (prob.config.battery_model == BatteryModel::Simplified) {
    const Eigen::MatrixXd net = s.p_dis - s.p_ch;
    s.p_dis = net.cwiseMax(0.0);
    s.p_ch = (-net).cwiseMax(0.0);
  }

  const int N = static_cast<int>(L.w_re.rows()) / 9;
  s.voltage_mag = Eigen::MatrixXd::Zero(kPhases * N, T);
  for (int n = 0; n < N; ++n)
    for (int i = 0; i < kPhases; ++i)
      for (int t = 0; t < T; ++t) {
        const int v = L.w_re(idx9(n, i, i), t);
        if (v >= 0) s.voltage_mag(kPhases * n + i, t) = std::sqrt(std::max(x[v], 0.0));
        if (n == L.slack) s.voltage_mag(kPhases * n + i, t) = L.slack_mag[i];
      }
  s.loss = VectorXd::Zero(T);
  s.head_power = VectorXd::Zero(T);
  for (int t = 0; t < T; ++t) {
    for (const auto& [v, c] : L.loss_terms[static_cast<std::size_t>(t)]) s.loss[t] += c * x[v];
    for (const auto& [v, c] : L.head_terms[static_cast<std::size_t>(t)]) s.head_power[t] += c * x[v];
  }
  return s;
}

DualBundle extract_duals(const ConicProblem& prob, const VectorXd& y, const VectorXd& z) {
  if (y.size() != prob.program.num_eq() || z.size() != prob.program.num_cone_rows())
    throw Error(Errc::SizeMismatch, "dual vectors do not match problem");
  const ProblemLayout& L = prob.layout;
  const int T = L.horizon, nb = static_cast<int>(L.batteries.size());
  DualBundle d;
  auto read = [&](const MatrixXi& rows, const VectorXd& v, Eigen::MatrixXd& out) {
    out = Eigen::MatrixXd::Zero(nb, T);
    for (int k = 0; k < nb; ++k)
      for (int t = 0; t < T; ++t)
        if (rows(k, t) >= 0) out(k, t) = v[rows(k, t)];
  };
  read(L.row_real_balance, y, d.lambda_p);
  read(L.row_soc_dyn, y, d.nu);
  read(L.row_dis_low, z, d.lambda_d_low);
  read(L.row_dis_up, z, d.lambda_d_up);
  read(L.row_ch_low, z, d.lambda_c_low);
  read(L.row_ch_up, z, d.lambda_c_up);
  read(L.row_soc_up, z, d.beta_up);
  read(L.row_soc_low, z, d.beta_low);
  read(L.cone_bat, z, d.lambda_s);
  // A cone multiplier z0 on ||(P, q)|| <= H corresponds to lambda_s = z0 / (2H)
  // on the quadratic form P^2 + q^2 <= H^2.
  for (int k = 0; k < nb; ++k) {
    const double h = prob.program.h[L.cone_bat(k, 0)];
    d.lambda_s.row(k) /= 2.0 * h;
  }
  return d;
}

double objective_value(const ConicProblem& prob, const VectorXd& x) {
  if (x.size() != prob.num_vars()) throw Error(Errc::SizeMismatch, "primal vector does not match problem");
  return prob.program.c.dot(x);
}

double base_objective_value(const ConicProblem& prob, const VectorXd& x) {
  if (x.size() != prob.num_vars()) throw Error(Errc::SizeMismatch, "primal vector does not match problem");
  return (prob.program.c - prob.penalty).dot(x);
}

VectorXd lift(const ConicProblem& prob, const Feeder& feeder, const DispatchSchedule& sched,
              const std::vector<AcState>& states) {
  const ProblemLayout& L = prob.layout;
  const int T = L.horizon;
  if (static_cast<int>(states.size()) != T || sched.horizon() != T)
    throw Error(Errc::SizeMismatch, "lift needs one AC state and schedule column per step");
  VectorXd x = VectorXd::Zero(prob.num_vars());
  auto set = [&](int idx, double v) {
    if (idx >= 0) x[idx] = v;
  };
  for (int t = 0; t < T; ++t) {
    const AcState& st = states[static_cast<std::size_t>(t)];
    for (int n = 0; n < feeder.num_nodes(); ++n)
      for (int i = 0; i < kPhases; ++i)
        for (int j = i; j < kPhases; ++j) {
          const cplx w = st.voltage(i, n) * std::conj(st.voltage(j, n));
          set(L.w_re(idx9(n, i, j), t), w.real());
          set(L.w_im(idx9(n, i, j), t), w.imag());
        }
    for (int l = 0; l < feeder.num_branches(); ++l) {
      const int from = feeder.branch(l).from;
      for (int i = 0; i < kPhases; ++i)
        for (int j = 0; j < kPhases; ++j) {
          const cplx s = st.voltage(i, from) * std::conj(st.current(j, l));
          set(L.s_re(idx9(l, i, j), t), s.real());
          set(L.s_im(idx9(l, i, j), t), s.imag());
          if (j >= i) {
            const cplx c = st.current(i, l) * std::conj(st.current(j, l));
            set(L.i_re(idx9(l, i, j), t), c.real());
            set(L.i_im(idx9(l, i, j), t), c.imag());
          }
        }
    }
    for (std::size_t k = 0; k < L.batteries.size(); ++k) {
      const int r = static_cast<int>(k);
      set(L.p_dis(r, t), sched.p_dis(r, t));
      set(L.p_ch(r, t), sched.p_ch(r, t));
      set(L.q_bat(r, t), sched.q_bat(r, t));
      set(L.soc(r, t), sched.soc(r, t));
    }
    for (std::size_t k = 0; k < L.solars.size(); ++k) {
      const int r = static_cast<int>(k);
      set(L.p_sol(r, t), sched.p_sol(r, t));
      set(L.q_sol(r, t), sched.q_sol(r, t));
    }
    for (int n = 0; n < feeder.num_nodes(); ++n)
      for (int p = 0; p < kPhases; ++p) {
        const int ip = L.p_net(kPhases * n + p, t);
        if (ip < 0) continue;
        cplx net = -prob.forecast.load_at(n, p, t);
        for (std::size_t k = 0; k < L.solars.size(); ++k)
          if (L.solars[k].node == n && L.solars[k].phase == p)
            net += cplx(sched.p_sol(static_cast<int>(k), t), sched.q_sol(static_cast<int>(k), t));
        for (std::size_t k = 0; k < L.batteries.size(); ++k)
          if (L.batteries[k].node == n && L.batteries[k].phase == p) {
            const int r = static_cast<int>(k);
            net += cplx(sched.p_dis(r, t) - sched.p_ch(r, t), sched.q_bat(r, t));
          }
        x[ip] = net.real();
        x[L.q_net(kPhases * n + p, t)] = net.imag();
      }
  }
  for (const auto& e : L.epigraphs) {
    double u = e.constant;
    for (const auto& [v, c] : e.terms) u += c * x[v];
    x[e.tau] = u * u;
  }
  return x;
}

void dump(const ConicProblem& problem, std::ostream& os) { conic::dump(problem.program, os); }

}  // namespace dispatch
