#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "dispatch/horizon.hpp"

using namespace dispatch;

namespace {

struct Options {
  std::string feeder;
  std::string forecast;
  std::string load_case = "HH";
  int horizon = 30;
  int steps = 10;
  double alpha = 0.01;
  std::string objective = "lossmin";
  std::string battery_model = "exact";
  std::uint64_t seed = 1;
  std::string out;
  int threads = 1;
  std::optional<double> b_target;
  std::optional<double> p_ref;
  double w_nom = 1.0;
  int budget = 16;
  bool fixed_solar_p = false;
};

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--feeder", o.feeder, "feeder file")->required()->check(CLI::ExistingFile);
  sub->add_option("--forecast", o.forecast, "forecast file (default: seeded synthetic profile)")->check(CLI::ExistingFile);
  sub->add_option("--case", o.load_case, "load/solar case")->check(CLI::IsMember({"LL", "HL", "LH", "HH"}));
  sub->add_option("--horizon", o.horizon, "steps per prediction horizon")->check(CLI::PositiveNumber);
  sub->add_option("--alpha", o.alpha, "battery power weight")->check(CLI::NonNegativeNumber);
  sub->add_option("--objective", o.objective, "lossmin|voltdev|headtrack|degradation|vbtrack|soctrack");
  sub->add_option("--battery-model", o.battery_model, "exact|simplified");
  sub->add_option("--seed", o.seed, "synthetic forecast seed");
  sub->add_option("--out", o.out, "output directory");
  sub->add_option("--threads", o.threads, "restoration workers")->check(CLI::PositiveNumber);
  sub->add_option("--b-target", o.b_target, "soctrack terminal SoC, pu*h");
  sub->add_option("--p-ref", o.p_ref, "headtrack/vbtrack reference, pu, constant over the horizon");
  sub->add_option("--w-nom", o.w_nom, "voltdev target squared magnitude");
  sub->add_flag("--fixed-solar-p", o.fixed_solar_p, "restoration keeps solar active power at the relaxed value");
}

BuilderConfig builder_config(const Options& o, int horizon) {
  BuilderConfig c;
  c.alpha = o.alpha;
  c.battery_model = parse_battery_model(o.battery_model);
  c.objective.kind = parse_objective(o.objective);
  c.objective.w_nom = o.w_nom;
  if (o.b_target) c.objective.b_target = *o.b_target;
  if (o.p_ref) c.objective.p_ref = Eigen::VectorXd::Constant(horizon, *o.p_ref);
  return c;
}

ForecastSeries base_forecast(const Options& o, const Feeder& f, int length) {
  if (!o.forecast.empty()) return load_forecast(o.forecast, f);
  SyntheticProfile p;
  p.steps = length;
  p.seed = o.seed;
  return synthetic_forecast(f, p);
}

ForecastSeries case_window(const Options& o, const Feeder& f) {
  const ForecastSeries fc = base_forecast(o, f, o.horizon);
  return scale_case(fc, parse_load_case(o.load_case)).window(0, o.horizon);
}

RestoreConfig restore_config(const Options& o) {
  RestoreConfig r;
  r.solar_active = !o.fixed_solar_p;
  return r;
}

std::ofstream out_file(const Options& o, const std::string& name) {
  std::filesystem::create_directories(o.out);
  std::ofstream os(std::filesystem::path(o.out) / name);
  if (!os) throw Error(Errc::IoError, "cannot write " + name);
  os.precision(12);
  return os;
}

void write_schedule(std::ostream& os, const Feeder& f, const DispatchSchedule& s) {
  os << "t\tkind\tnode\tphase\tp\tq\tsoc\n";
  for (int t = 0; t < s.horizon(); ++t) {
    for (std::size_t k = 0; k < s.batteries.size(); ++k) {
      const auto r = static_cast<Eigen::Index>(k);
      os << t << "\tbattery\t" << f.node(s.batteries[k].node).id << '\t' << phase_name(s.batteries[k].phase) << '\t'
         << s.p_dis(r, t) - s.p_ch(r, t) << '\t' << s.q_bat(r, t) << '\t' << s.soc(r, t) << '\n';
    }
    for (std::size_t k = 0; k < s.solars.size(); ++k) {
      const auto r = static_cast<Eigen::Index>(k);
      os << t << "\tsolar\t" << f.node(s.solars[k].node).id << '\t' << phase_name(s.solars[k].phase) << '\t'
         << s.p_sol(r, t) << '\t' << s.q_sol(r, t) << "\t-\n";
    }
  }
}

int cmd_solve(const Options& o) {
  const Feeder f = load_feeder(o.feeder);
  const ForecastSeries fc = case_window(o, f);
  const BuilderConfig bc = builder_config(o, o.horizon);
  if (!o.out.empty()) {
    // written before solving so a failed instance can still be cross-checked
    auto dump_os = out_file(o, "program.dump");
    dump(build(f, fc, bc), dump_os);
  }
  const RelaxedSolve r = solve_relaxation(f, fc, bc);
  const auto rep = conic::certify(r.problem.program, r.result);
  std::printf("status %s\nobjective %.12g\nbase_objective %.12g\niterations %d\nsolve_seconds %.3f\nkkt_pass %d\n",
              conic::to_string(r.result.status), r.result.objective, r.base_objective, r.result.iterations,
              r.result.wall_time, rep.pass);
  if (!o.out.empty()) {
    auto os = out_file(o, "schedule.tsv");
    write_schedule(os, f, r.schedule);
  }
  return rep.pass ? 0 : 1;
}

int cmd_simulate(const Options& o) {
  const Feeder f = load_feeder(o.feeder);
  RunConfig cfg;
  cfg.horizon = o.horizon;
  cfg.steps = o.steps;
  cfg.load_case = parse_load_case(o.load_case);
  cfg.builder = builder_config(o, o.horizon);
  cfg.restore = restore_config(o);
  cfg.threads = o.threads;
  cfg.seed = o.seed;
  const ForecastSeries fc = base_forecast(o, f, o.steps + o.horizon - 1);
  const RunLog log = run(f, fc, cfg);
  for (const StepRecord& r : log.records) {
    std::printf("step %d ok %d socp %.9g dnlp %.9g gap_pct %.4f fallback %s seconds %.2f\n", r.step, r.ok, r.socp_opt,
                r.dnlp_opt, r.gap_pct, to_string(r.fallback), r.step_seconds);
    if (!r.ok) std::printf("  error: %s\n", r.error.c_str());
    for (const auto& w : r.warnings) std::printf("  warning: %s\n", w.c_str());
  }
  std::printf("gap_rmse %.4f gap_worst %.4f total_mean %.2f s\n", log.summary.gap_rmse, log.summary.gap_worst,
              log.summary.total_mean);
  if (!o.out.empty())
    for (const std::string& p : report(log, o.out)) std::printf("wrote %s\n", p.c_str());
  return log.summary.failed == 0 ? 0 : 1;
}

int cmd_validate(const Options& o) {
  const Feeder f = load_feeder(o.feeder);
  const ForecastSeries fc = case_window(o, f);
  const RelaxedSolve r = solve_relaxation(f, fc, builder_config(o, o.horizon));
  const RestoreResult rr = restore_horizon(f, fc, r.schedule, restore_config(o), o.threads);
  const DispatchSchedule s = restored_schedule(r.schedule, rr);
  double worst = 0.0, mismatch = 0.0;
  bool ok = true;
  for (int t = 0; t < s.horizon(); ++t) {
    const auto& p = rr.periods[static_cast<std::size_t>(t)];
    if (p.flow.voltage.size() == 0) {
      std::printf("t %d not restored: %s\n", t, p.error.c_str());
      ok = false;
      continue;
    }
    const VoltageErrorReport v = validate_schedule(f, fc, s, t);
    std::printf("t %d worst_voltage_error %.3e node %s phase %c mismatch %.3e feasible %d\n", t, v.worst,
                f.node(v.worst_node).id.c_str(), phase_name(v.worst_phase), v.flow.max_mismatch, p.feasible);
    worst = std::max(worst, v.worst);
    mismatch = std::max(mismatch, v.flow.max_mismatch);
    ok = ok && p.feasible;
  }
  std::printf("worst %.3e max_mismatch %.3e\n", worst, mismatch);
  return ok && worst <= 1e-6 ? 0 : 1;
}

int cmd_scd_check(const Options& o) {
  const Feeder f = load_feeder(o.feeder);
  const ForecastSeries fc = case_window(o, f);
  const BuilderConfig bc = builder_config(o, o.horizon);
  const RelaxedSolve r = solve_relaxation(f, fc, bc);
  const SCDReport scd = detect_scd(r.schedule);
  const CertificateReport cert =
      check_certificates(bc, extract_duals(r.problem, r.result.y, r.result.z), fc.dt_hours);
  std::printf("scd clean=%d flagged=%d total=%.6e\n", scd.clean, scd.num_flagged(), scd.total);
  std::printf("certificate c1=%d c2=%d c3=%d c3_literal=%d a1=%d a2=%d theorem=%d corollary=%d\n", cert.c1, cert.c2,
              cert.c3_all, cert.c3_literal_all, cert.a1, cert.a2, cert.theorem(), cert.corollary());
  for (std::size_t k = 0; k < scd.batteries.size(); ++k)
    for (int t = 0; t < r.schedule.horizon(); ++t) {
      const auto i = static_cast<Eigen::Index>(k);
      std::printf("entry node=%s phase=%c t=%d product=%.6e flagged=%d gamma=%.6e c3_margin=%.6e lambda_p=%.6e\n",
                  f.node(scd.batteries[k].node).id.c_str(), phase_name(scd.batteries[k].phase), t, scd.product(i, t),
                  static_cast<int>(scd.flagged(i, t)), cert.gamma(i, t), cert.c3_margin(i, t), cert.lambda_p(i, t));
    }
  if (!scd.clean) {
    const RelaxedSolve two = two_step_enforce(f, fc, bc, r.schedule);
    const SCDReport after = detect_scd(two.schedule);
    std::printf("two_step clean=%d base_objective=%.12g first_stage=%.12g\n", after.clean, two.base_objective,
                r.base_objective);
    return after.clean ? 0 : 1;
  }
  return 0;
}

int cmd_gap_report(const Options& o) {
  const Feeder f = load_feeder(o.feeder);
  const ForecastSeries fc = case_window(o, f);
  const RelaxedSolve r = solve_relaxation(f, fc, builder_config(o, o.horizon));
  const RestoreResult rr = restore_horizon(f, fc, r.schedule, restore_config(o), o.threads);
  const GapReport g = gap(r.base_objective, rr.dnlp_opt);
  std::printf("socp_opt %.12g\ndnlp_opt %.12g\ngap_pct %.6f\nall_feasible %d\n", g.socp_opt, g.dnlp_opt, g.gap_pct,
              rr.all_feasible);
  if (!o.out.empty()) {
    auto os = out_file(o, "periods.tsv");
    os << "t\tsocp_loss\trestored_loss\tfeasible\titerations\n";
    for (const auto& p : rr.periods)
      os << p.t << '\t' << r.schedule.loss[p.t] << '\t' << p.loss << '\t' << p.feasible << '\t' << p.iterations << '\n';
  }
  return rr.all_feasible ? 0 : 1;
}

int cmd_mi_oracle(const Options& o) {
  const Feeder f = load_feeder(o.feeder);
  const ForecastSeries fc = case_window(o, f);
  const BuilderConfig bc = builder_config(o, o.horizon);
  const MiOracleResult mi = mi_oracle(f, fc, bc, o.budget);
  const RelaxedSolve r = solve_relaxation(f, fc, bc);
  const double rel = std::abs(r.base_objective - mi.objective) / std::max(std::abs(mi.objective), 1e-300);
  std::printf("patterns %d feasible %d\nmi_objective %.12g\nconvex_base_objective %.12g\nrelative_difference %.3e\n",
              mi.patterns, mi.feasible, mi.objective, r.base_objective, rel);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-period battery and inverter dispatch on radial three-phase feeders"};
  app.require_subcommand(1);
  Options o;
  auto* solve = app.add_subcommand("solve", "one-shot multi-period relaxation");
  auto* simulate = app.add_subcommand("simulate", "receding-horizon run");
  auto* validate = app.add_subcommand("validate", "restored schedule vs. independent sweep");
  auto* scd = app.add_subcommand("scd-check", "simultaneous charge/discharge and certificates");
  auto* gapc = app.add_subcommand("gap-report", "relaxed vs. restored objective");
  auto* mi = app.add_subcommand("mi-oracle", "enumerate charge/discharge patterns");
  for (auto* s : {solve, simulate, validate, scd, gapc, mi}) add_common(s, o);
  simulate->add_option("--steps", o.steps, "receding steps")->check(CLI::PositiveNumber);
  mi->add_option("--budget", o.budget, "maximum battery-phase x step slots")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  try {
    if (*solve) return cmd_solve(o);
    if (*simulate) return cmd_simulate(o);
    if (*validate) return cmd_validate(o);
    if (*scd) return cmd_scd_check(o);
    if (*gapc) return cmd_gap_report(o);
    if (*mi) return cmd_mi_oracle(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
