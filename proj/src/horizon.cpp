#include "dispatch/horizon.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace dispatch {

const char* to_string(Fallback f) {
  switch (f) {
    case Fallback::None: return "none";
    case Fallback::RaiseAlpha: return "raise_alpha";
    case Fallback::TwoStep: return "two_step";
  }
  return "?";
}

void RunConfig::validate() const {
  if (horizon < 1) throw Error(Errc::InvalidArgument, "horizon must be >= 1");
  if (steps < 1) throw Error(Errc::InvalidArgument, "simulation length must be >= 1");
  if (!(dt_hours > 0.0)) throw Error(Errc::InvalidArgument, "dt must be positive");
  if (threads < 1) throw Error(Errc::InvalidArgument, "threads must be >= 1");
  builder.validate();
  restore.validate();
}

PlantState initial_state(const Feeder& feeder) {
  const auto slots = battery_slots(feeder);
  PlantState s;
  s.soc.resize(static_cast<Eigen::Index>(slots.size()));
  for (std::size_t k = 0; k < slots.size(); ++k)
    s.soc[static_cast<Eigen::Index>(k)] = feeder.node(slots[k].node).battery->b_init;
  return s;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

}  // namespace

StepRecord step(const Feeder& feeder, const ForecastSeries& forecast, PlantState& state, const RunConfig& cfg) {
  const auto t_step = Clock::now();
  StepRecord rec;
  rec.step = state.step;
  rec.soc_before = state.soc;
  rec.soc_after = state.soc;
  try {
    cfg.validate();
    if (forecast.horizon() < state.step + cfg.horizon)
      throw Error(Errc::HorizonMismatch, "forecast ends before step " + std::to_string(state.step + cfg.horizon - 1));
    ForecastSeries window = forecast.window(state.step, cfg.horizon);
    window.dt_hours = cfg.dt_hours;

    BuilderConfig bc = cfg.builder;
    bc.b_init = state.soc;
    rec.alpha_used = bc.alpha;

    auto t0 = Clock::now();
    RelaxedSolve sol = solve_relaxation(feeder, window, bc, cfg.solver);
    rec.solver_iterations = sol.result.iterations;
    rec.residuals = conic::certify(sol.problem.program, sol.result, cfg.solver);
    rec.certificate = check_certificates(bc, extract_duals(sol.problem, sol.result.y, sol.result.z), window.dt_hours);
    rec.scd = detect_scd(sol.schedule, cfg.scd_tol);
    if (!rec.scd.clean) {
      BuilderConfig raised = bc;
      raised.alpha = bc.alpha > 0.0 ? bc.alpha * 10.0 : 0.01;
      RelaxedSolve second = solve_relaxation(feeder, window, raised, cfg.solver);
      rec.solver_iterations += second.result.iterations;
      if (detect_scd(second.schedule, cfg.scd_tol).clean) {
        rec.fallback = Fallback::RaiseAlpha;
        rec.alpha_used = raised.alpha;
        sol = std::move(second);
      } else {
        sol = two_step_enforce(feeder, window, bc, sol.schedule, cfg.solver);
        rec.solver_iterations += sol.result.iterations;
        rec.fallback = Fallback::TwoStep;
      }
    }
    rec.socp_seconds = seconds_since(t0);
    rec.socp_opt = sol.base_objective;
    rec.relaxed = sol.schedule;

    t0 = Clock::now();
    rec.restored = restore_horizon(feeder, window, sol.schedule, cfg.restore, cfg.threads);
    rec.restore_seconds = seconds_since(t0);
    rec.restore_feasible = rec.restored.all_feasible;
    rec.dnlp_opt = rec.restored.dnlp_opt;
    const PeriodResult& first = rec.restored.periods.front();
    if (first.flow.voltage.size() == 0) throw Error(Errc::PowerFlowDiverged, "first step not restored: " + first.error);
    if (!first.error.empty()) rec.warnings.push_back("step 0: " + first.error);
    for (const PeriodResult& p : rec.restored.periods)
      if (!p.error.empty() && p.t > 0) rec.warnings.push_back("period " + std::to_string(p.t) + ": " + p.error);

    // Apply the first step to the plant and compare with the restoration's own state.
    const DispatchSchedule applied = restored_schedule(sol.schedule, rec.restored);
    rec.p_dis = applied.p_dis.col(0);
    rec.p_ch = applied.p_ch.col(0);
    rec.q_bat = applied.q_bat.col(0);
    rec.p_sol = applied.p_sol.col(0);
    rec.q_sol = applied.q_sol.col(0);
    const VoltageErrorReport ver = validate_schedule(feeder, window, applied, 0, cfg.restore.pf);
    rec.plant = ver.flow;
    rec.voltage_error = ver.worst;

    if (bc.objective.kind == ObjectiveKind::LossMin) {
      rec.gap_pct = gap(rec.socp_opt, rec.dnlp_opt, cfg.gap_tol).gap_pct;
    } else {
      // Relaxed loss is not a bound here: compare losses of the same schedule, sign kept.
      rec.socp_opt = sol.schedule.loss.sum();
      rec.gap_pct = rec.dnlp_opt > 0.0 ? 100.0 * (rec.dnlp_opt - rec.socp_opt) / rec.dnlp_opt : 0.0;
    }

    Eigen::VectorXd next = state.soc;
    const double dt = window.dt_hours;
    for (Eigen::Index k = 0; k < next.size(); ++k) {
      const BatterySpec& b = *feeder.node(applied.batteries[static_cast<std::size_t>(k)].node).battery;
      next[k] += b.eta_c * rec.p_ch[k] * dt - rec.p_dis[k] * dt / b.eta_d;
      if (next[k] < b.b_min - 1e-9 || next[k] > b.b_max + 1e-9)
        rec.warnings.push_back("battery " + std::to_string(k) + " SoC leaves its limits");
    }
    rec.soc_after = next;
    state.soc = next;
    rec.ok = true;
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.error = e.what();
    rec.soc_after = state.soc;
  }
  ++state.step;
  rec.step_seconds = seconds_since(t_step);
  if (rec.socp_seconds + rec.restore_seconds > cfg.budget_seconds)
    rec.warnings.push_back("solve plus restore exceeded " + std::to_string(cfg.budget_seconds) + " s");
  return rec;
}

namespace {

void mean_std(const std::vector<double>& v, double& mean, double& sd) {
  mean = sd = 0.0;
  if (v.empty()) return;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  for (double x : v) sd += (x - mean) * (x - mean);
  sd = std::sqrt(sd / static_cast<double>(v.size()));
}

}  // namespace

RunSummary summarize(const std::vector<StepRecord>& records) {
  RunSummary s;
  s.steps = static_cast<int>(records.size());
  std::vector<double> solve, restore, total;
  double sq = 0.0;
  int n = 0;
  for (const StepRecord& r : records) {
    if (!r.ok) {
      ++s.failed;
      continue;
    }
    solve.push_back(r.socp_seconds);
    restore.push_back(r.restore_seconds);
    total.push_back(r.socp_seconds + r.restore_seconds);
    sq += r.gap_pct * r.gap_pct;
    s.gap_worst = std::max(s.gap_worst, r.gap_pct);
    ++n;
  }
  mean_std(solve, s.solve_mean, s.solve_std);
  mean_std(restore, s.restore_mean, s.restore_std);
  mean_std(total, s.total_mean, s.total_std);
  s.gap_rmse = n > 0 ? std::sqrt(sq / n) : 0.0;
  return s;
}

RunLog run(const Feeder& feeder, const ForecastSeries& forecast, const RunConfig& cfg) {
  cfg.validate();
  if (forecast.horizon() < cfg.steps + cfg.horizon - 1)
    throw Error(Errc::HorizonMismatch, "forecast needs " + std::to_string(cfg.steps + cfg.horizon - 1) + " steps");
  RunLog log;
  log.config = cfg;
  const ForecastSeries scaled = scale_case(forecast, cfg.load_case);
  PlantState state = initial_state(feeder);
  for (int k = 0; k < cfg.steps; ++k) log.records.push_back(step(feeder, scaled, state, cfg));
  log.summary = summarize(log.records);
  return log;
}

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p);
  if (!os) throw Error(Errc::IoError, "cannot write " + p.string());
  os << std::setprecision(12);
  return os;
}

std::string slot_name(const Slot& s) { return std::to_string(s.node) + phase_name(s.phase); }

}  // namespace

std::vector<std::string> report(const RunLog& log, const std::string& dir) {
  if (log.records.empty()) throw Error(Errc::InvalidArgument, "empty run log");
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(Errc::IoError, "cannot create " + dir + ": " + ec.message());
  const fs::path root(dir);
  std::vector<std::string> written;

  {
    auto os = open_out(root / "run.log");
    const RunConfig& c = log.config;
    os << "config horizon=" << c.horizon << " dt_hours=" << c.dt_hours << " steps=" << c.steps
       << " case=" << to_string(c.load_case) << " alpha=" << c.builder.alpha
       << " objective=" << to_string(c.builder.objective.kind)
       << " battery_model=" << to_string(c.builder.battery_model) << " seed=" << c.seed
       << " solar_active=" << c.restore.solar_active << '\n';
    for (const StepRecord& r : log.records) {
      os << "step " << r.step << " ok=" << r.ok << " socp_opt=" << r.socp_opt << " socp_s=" << r.socp_seconds
         << " iterations=" << r.solver_iterations << " dnlp_opt=" << r.dnlp_opt << " gap_pct=" << r.gap_pct
         << " restore_s=" << r.restore_seconds << " fallback=" << to_string(r.fallback) << " alpha=" << r.alpha_used
         << " scd_clean=" << r.scd.clean << " scd_total=" << r.scd.total << " theorem=" << r.certificate.theorem()
         << " c3_literal=" << r.certificate.c3_literal_all << " corollary=" << r.certificate.corollary()
         << " kkt_pass=" << r.residuals.pass << " rel_gap=" << r.residuals.rel_gap
         << " restore_feasible=" << r.restore_feasible << " voltage_error=" << r.voltage_error
         << " plant_loss=" << r.plant.loss << " plant_mismatch=" << r.plant.max_mismatch << '\n';
      if (!r.error.empty()) os << "error " << r.step << ' ' << r.error << '\n';
      for (const std::string& w : r.warnings) os << "warning " << r.step << ' ' << w << '\n';
    }
    const RunSummary& s = log.summary;
    os << "summary steps=" << s.steps << " failed=" << s.failed << " solve_mean=" << s.solve_mean
       << " solve_std=" << s.solve_std << " restore_mean=" << s.restore_mean << " restore_std=" << s.restore_std
       << " total_mean=" << s.total_mean << " total_std=" << s.total_std << " gap_rmse=" << s.gap_rmse
       << " gap_worst=" << s.gap_worst << '\n';
    written.push_back((root / "run.log").string());
  }

  const StepRecord* any = nullptr;
  for (const StepRecord& r : log.records)
    if (r.ok) {
      any = &r;
      break;
    }
  const std::vector<Slot> batteries = any ? any->relaxed.batteries : std::vector<Slot>{};
  const std::vector<Slot> solars = any ? any->relaxed.solars : std::vector<Slot>{};

  {
    auto os = open_out(root / "soc.tsv");
    os << "step";
    for (const Slot& s : batteries) os << '\t' << slot_name(s);
    os << '\n';
    for (const StepRecord& r : log.records) {
      os << r.step;
      for (Eigen::Index k = 0; k < r.soc_after.size(); ++k) os << '\t' << r.soc_after[k];
      os << '\n';
    }
    written.push_back((root / "soc.tsv").string());
  }
  {
    auto os = open_out(root / "battery_power.tsv");
    os << "step\tbattery\tp_dis\tp_ch\tq_bat\n";
    for (const StepRecord& r : log.records)
      for (Eigen::Index k = 0; k < r.p_dis.size(); ++k)
        os << r.step << '\t' << slot_name(batteries[static_cast<std::size_t>(k)]) << '\t' << r.p_dis[k] << '\t'
           << r.p_ch[k] << '\t' << r.q_bat[k] << '\n';
    written.push_back((root / "battery_power.tsv").string());
  }
  {
    auto os = open_out(root / "gap.tsv");
    os << "step\tsocp_opt\tdnlp_opt\tgap_pct\n";
    for (const StepRecord& r : log.records)
      if (r.ok) os << r.step << '\t' << r.socp_opt << '\t' << r.dnlp_opt << '\t' << r.gap_pct << '\n';
    written.push_back((root / "gap.tsv").string());
  }
  {
    auto os = open_out(root / "reactive.tsv");
    os << "step\tdevice\tworst_abs_diff\n";
    for (const StepRecord& r : log.records) {
      if (!r.ok) continue;
      const int T = r.relaxed.horizon();
      auto worst = [&](const Eigen::MatrixXd& socp, auto&& restored_col) {
        double w = 0.0;
        for (int t = 0; t < T; ++t) {
          const PeriodResult& p = r.restored.periods[static_cast<std::size_t>(t)];
          if (p.flow.voltage.size() == 0) continue;
          w = std::max(w, (socp.col(t) - restored_col(p)).cwiseAbs().maxCoeff());
        }
        return w;
      };
      for (std::size_t k = 0; k < batteries.size(); ++k) {
        const auto idx = static_cast<Eigen::Index>(k);
        os << r.step << "\tbattery:" << slot_name(batteries[k]) << '\t'
           << worst(r.relaxed.q_bat.row(idx), [&](const PeriodResult& p) { return Eigen::VectorXd::Constant(1, p.q_bat[idx]); })
           << '\n';
      }
      for (std::size_t k = 0; k < solars.size(); ++k) {
        const auto idx = static_cast<Eigen::Index>(k);
        os << r.step << "\tsolar:" << slot_name(solars[k]) << '\t'
           << worst(r.relaxed.q_sol.row(idx), [&](const PeriodResult& p) { return Eigen::VectorXd::Constant(1, p.q_sol[idx]); })
           << '\n';
      }
    }
    written.push_back((root / "reactive.tsv").string());
  }
  {
    auto os = open_out(root / "voltage_error.tsv");
    os << "step\tworst_pu\tplant_mismatch\n";
    for (const StepRecord& r : log.records)
      if (r.ok) os << r.step << '\t' << r.voltage_error << '\t' << r.plant.max_mismatch << '\n';
    written.push_back((root / "voltage_error.tsv").string());
  }
  return written;
}

}  // namespace dispatch
