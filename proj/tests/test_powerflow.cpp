#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "dispatch/powerflow.hpp"

using namespace dispatch;

namespace {

const std::string kData = DISPATCH_DATA_DIR;

InjectionSet base_injections(const Feeder& f, double k = 1.0) {
  InjectionSet inj = InjectionSet::zeros(f);
  for (int n = 0; n < f.num_nodes(); ++n)
    for (int p : f.node(n).phases.phases()) inj.s(p, n) = -k * f.node(n).base_load[p];
  return inj;
}

// Conservation: slack output = consumption - generation + losses.
double conservation_error(const Feeder& f, const InjectionSet& inj, const PowerFlowResult& r) {
  double net = 0.0;
  for (int n = 0; n < f.num_nodes(); ++n)
    if (n != f.slack())
      for (int p : f.node(n).phases.phases()) net += inj.s(p, n).real();
  return std::abs(r.head_power() + net - r.loss);
}

}  // namespace

TEST_CASE("two-bus fixture matches the closed fixed point") {
  const Feeder f = load_feeder(kData + "/two_node.feeder");
  const PowerFlowResult r = sweep(f, base_injections(f));
  // 40-digit fixed-point iteration of V = 1 - z conj(s / V), z = 0.01+0.02j, s = 0.1+0.05j.
  CHECK(std::abs(r.voltage(0, 1).real() - 0.99799372486006287) < 1e-9);
  CHECK(std::abs(r.voltage(0, 1).imag() + 0.0015) < 1e-9);
  CHECK(std::abs(r.loss - 1.2550279874259501e-4) < 1e-9);
  CHECK(std::abs(r.diag_loss - 1.2550279874259501e-4) < 1e-9);
  CHECK(r.converged);
  CHECK(r.max_mismatch <= 1e-9);
}

TEST_CASE("zero injections give nominal voltages and no losses") {
  const Feeder f = load_feeder(kData + "/ieee13.feeder");
  const PowerFlowResult r = sweep(f, InjectionSet::zeros(f));
  const Eigen::Vector3cd v0 = f.slack_voltage();
  for (int n = 0; n < f.num_nodes(); ++n)
    for (int p : f.node(n).phases.phases()) CHECK(r.voltage(p, n) == v0[p]);
  CHECK(r.loss == 0.0);
  CHECK(r.iterations == 1);
}

TEST_CASE("IEEE-13 base case agrees with the independent Newton solution") {
  const Feeder f = load_feeder(kData + "/ieee13.feeder");
  const PowerFlowResult r = sweep(f, base_injections(f));
  std::ifstream in(kData + "/ieee13_pf_golden.tsv");
  REQUIRE(in);
  std::string line;
  int rows = 0;
  double worst = 0.0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string node, phase;
    double mag = 0.0, ang = 0.0;
    ss >> node >> phase >> mag >> ang;
    const int n = f.index_of(node);
    REQUIRE(n >= 0);
    const int p = phase[0] - 'a';
    const cplx ref = std::polar(mag, ang * std::numbers::pi / 180.0);
    worst = std::max(worst, std::abs(r.voltage(p, n) - ref));
    ++rows;
  }
  CHECK(rows == 32);
  CHECK(worst <= 1e-6);
  CHECK(r.iterations < 20);
}

TEST_CASE("conservation on randomized injections") {
  const Feeder f = load_feeder(kData + "/ieee13_der.feeder");
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    InjectionSet inj = InjectionSet::zeros(f);
    for (int n = 0; n < f.num_nodes(); ++n)
      if (n != f.slack())
        for (int p : f.node(n).phases.phases()) inj.s(p, n) = cplx(0.15 * u(rng) - 0.05, 0.1 * u(rng));
    const PowerFlowResult r = sweep(f, inj);
    CHECK(r.loss >= 0.0);
    CHECK(conservation_error(f, inj, r) <= 1e-9);
    CHECK(nodal_mismatch(f, inj, r) <= 1e-9);
  }
}

TEST_CASE("restart from a converged state takes one sweep") {
  const Feeder f = load_feeder(kData + "/ieee13.feeder");
  const InjectionSet inj = base_injections(f);
  const PowerFlowResult r = sweep(f, inj);
  const PowerFlowResult again = sweep(f, inj, {}, &r.voltage);
  CHECK(again.iterations == 1);
}

TEST_CASE("losses do not grow when loads shrink") {
  const Feeder f = load_feeder(kData + "/ieee13.feeder");
  double prev = 1e9;
  for (double k : {1.0, 0.8, 0.5, 0.25, 0.1}) {
    const double loss = sweep(f, base_injections(f, k)).loss;
    CHECK(loss <= prev);
    prev = loss;
  }
}

TEST_CASE("divergent load is reported") {
  const Feeder f = load_feeder(kData + "/two_node.feeder");
  InjectionSet inj = InjectionSet::zeros(f);
  inj.s(0, 1) = cplx(-30.0, -30.0);
  CHECK_THROWS_AS(sweep(f, inj), Error);
}

TEST_CASE("voltage comparison reports the perturbation") {
  const Feeder f = load_feeder(kData + "/ieee13.feeder");
  const InjectionSet inj = base_injections(f);
  const PowerFlowResult r = sweep(f, inj);
  Eigen::MatrixXd vmag = r.voltage.cwiseAbs();
  CHECK(compare_voltages(f, inj, vmag).worst <= 1e-12);
  vmag(2, f.index_of("675")) += 0.01;
  const VoltageErrorReport rep = compare_voltages(f, inj, vmag);
  CHECK(rep.worst == doctest::Approx(0.01).epsilon(1e-9));
  CHECK(rep.worst_node == f.index_of("675"));
  CHECK(rep.worst_phase == 2);
}

TEST_CASE("empty schedule on an unloaded feeder validates exactly") {
  const Feeder f = parse_feeder(R"(
[nodes]
s abc 0.9 1.1 slack
m abc 0.9 1.1
[branches]
s m abc 1 1 pu | 0.01+0.02j 0 0 ; 0 0.01+0.02j 0 ; 0 0 0.01+0.02j
)");
  ForecastSeries fc;
  fc.load = Eigen::MatrixXcd::Zero(6, 1);
  fc.solar_avail = Eigen::MatrixXd::Zero(6, 1);
  DispatchSchedule s;
  s.p_dis = s.p_ch = s.q_bat = s.soc = s.p_sol = s.q_sol = Eigen::MatrixXd::Zero(0, 1);
  s.voltage_mag = Eigen::MatrixXd::Ones(6, 1);
  const VoltageErrorReport rep = validate_schedule(f, fc, s, 0);
  CHECK(rep.worst <= 1e-15);
}
