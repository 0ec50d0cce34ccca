#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "dispatch/network.hpp"

using namespace dispatch;

namespace {

const char* kTwoBus = R"(
[nodes]
s a 0.9 1.1 slack
m a 0.9 1.1
[branches]
s m a 1.0 1 pu | 0.01+0.02j 0 0 ; 0 0 0 ; 0 0 0
)";

const char* kStar = R"(
[nodes]
r abc 0.9 1.1 slack
x abc 0.9 1.1
y ab 0.9 1.1
z c 0.9 1.1
[branches]
r x abc 1 1 pu | 0.01 0 0 ; 0 0.01 0 ; 0 0 0.01
y r ab 1 1 pu | 0.01 0 0 ; 0 0.01 0 ; 0 0 0
r z c 1 1 pu | 0 0 0 ; 0 0 0 ; 0 0 0.01
[loads]
x a 10 5 kw
z c 0.02 0.01 pu
)";

Errc code_of(const std::string& text) {
  try {
    parse_feeder(text);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return Errc::Parse;
}

}  // namespace

TEST_CASE("minimal two-bus feeder") {
  const Feeder f = parse_feeder(kTwoBus);
  CHECK(f.num_nodes() == 2);
  CHECK(f.num_branches() == 1);
  CHECK(f.slack() == 0);
  CHECK(f.branch(0).z(0, 0) == cplx(0.01, 0.02));
  CHECK(f.parent_branch(1) == 0);
}

TEST_CASE("star feeder orders all depth-one branches and orients them") {
  const Feeder f = parse_feeder(kStar);
  const auto order = topo_order(f);
  CHECK(order.size() == 3);
  CHECK(std::set<int>(order.begin(), order.end()) == std::set<int>{0, 1, 2});
  for (int l = 0; l < f.num_branches(); ++l) CHECK(f.branch(l).from == f.slack());
  const int y = f.index_of("y");
  CHECK(f.branch(f.parent_branch(y)).to == y);
  // kW converted with the 1 MVA base.
  CHECK(f.node(f.index_of("x")).base_load[0] == cplx(0.01, 0.005));
  CHECK(f.node(f.index_of("z")).base_load[2] == cplx(0.02, 0.01));
}

TEST_CASE("ohm impedances are divided by the impedance base") {
  const Feeder f = parse_feeder(R"(
[bases]
v_base = 2400
s_base = 1e6
[nodes]
s a 0.9 1.1 slack
m a 0.9 1.1
[branches]
s m a 1.0 2 ohm | 0.576+1.152j 0 0 ; 0 0 0 ; 0 0 0
)");
  CHECK(std::abs(f.branch(0).z(0, 0) - cplx(0.2, 0.4)) < 1e-15);
}

TEST_CASE("structural errors") {
  CHECK(code_of("[nodes]\na a 0.9 1.1\nb a 0.9 1.1\n[branches]\na b a 1 1 pu | 0.1 0 0 ; 0 0 0 ; 0 0 0\n") ==
        Errc::MissingSlack);
  CHECK(code_of("[nodes]\na a 0.9 1.1 slack\nb a 0.9 1.1\nc a 0.9 1.1\n[branches]\na b a 1 1 pu | 0.1 0 0 ; 0 0 0 ; 0 0 0\n") ==
        Errc::NonRadial);
  CHECK(code_of("[nodes]\na a 0.9 1.1 slack\nb ab 0.9 1.1\n[branches]\na b a 1 1 pu | 0.1 0 0 ; 0 0 0 ; 0 0 0\n") ==
        Errc::PhaseMismatch);
  CHECK(code_of("[nodes]\na a 0.9 1.1 slack\na a 0.9 1.1\n") == Errc::DuplicateId);
  CHECK(code_of("[nodes]\na a 0.9 1.1 slack\nb a 0.9 1.1\n[branches]\na q a 1 1 pu | 0.1 0 0 ; 0 0 0 ; 0 0 0\n") ==
        Errc::UnknownNode);
  CHECK(code_of("[bases]\nv_base = 0\n") == Errc::NonPositiveBase);
  CHECK(code_of("[nodes]\na x 0.9 1.1 slack\n") == Errc::Parse);
}

TEST_CASE("bundled feeders are radial and phase consistent") {
  for (const char* name : {"ieee13.feeder", "ieee13_der.feeder", "two_node.feeder"}) {
    const Feeder f = load_feeder(std::string(DISPATCH_DATA_DIR) + "/" + name);
    CHECK(f.num_branches() == f.num_nodes() - 1);
    const auto order = topo_order(f);
    CHECK(std::set<int>(order.begin(), order.end()).size() == static_cast<std::size_t>(f.num_branches()));
    // parents before children
    std::vector<int> pos(static_cast<std::size_t>(f.num_branches()));
    for (std::size_t i = 0; i < order.size(); ++i) pos[static_cast<std::size_t>(order[i])] = static_cast<int>(i);
    for (int l = 0; l < f.num_branches(); ++l) {
      const int up = f.parent_branch(f.branch(l).from);
      if (up >= 0) CHECK(pos[static_cast<std::size_t>(up)] < pos[static_cast<std::size_t>(l)]);
    }
  }
}

TEST_CASE("case scaling") {
  const Feeder f = load_feeder(std::string(DISPATCH_DATA_DIR) + "/ieee13_der.feeder");
  SyntheticProfile p;
  p.steps = 4;
  const ForecastSeries fc = synthetic_forecast(f, p);
  const ForecastSeries hh = scale_case(fc, LoadCase::HH);
  CHECK(hh.load == fc.load);
  CHECK(hh.solar_avail == fc.solar_avail);
  const ForecastSeries ll = scale_case(fc, LoadCase::LL);
  CHECK((ll.load - 0.5 * fc.load).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ll.solar_avail - 0.5 * fc.solar_avail).cwiseAbs().maxCoeff() == 0.0);
  const ForecastSeries lh = scale_case(fc, 0.5, 1.0);
  CHECK(lh.solar_avail == fc.solar_avail);
  CHECK_THROWS_AS(scale_case(fc, 0.0, 1.0), Error);
  CHECK_THROWS_AS(scale_case(fc, 1.5, 1.0), Error);
}

TEST_CASE("forecast text round trip and window") {
  const Feeder f = load_feeder(std::string(DISPATCH_DATA_DIR) + "/ieee13_der.feeder");
  SyntheticProfile p;
  p.steps = 5;
  p.seed = 7;
  const ForecastSeries fc = synthetic_forecast(f, p);
  const ForecastSeries back = parse_forecast(format_forecast(fc, f), f);
  CHECK(back.horizon() == 5);
  CHECK(back.dt_hours == doctest::Approx(fc.dt_hours));
  CHECK((back.load - fc.load).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((back.solar_avail - fc.solar_avail).cwiseAbs().maxCoeff() < 1e-15);
  const ForecastSeries w = fc.window(2, 3);
  CHECK(w.load.col(0) == fc.load.col(2));
  CHECK_THROWS_AS(fc.window(3, 3), Error);
  // same seed, same series
  CHECK(synthetic_forecast(f, p).load == fc.load);
}

TEST_CASE("forecast errors") {
  const Feeder f = parse_feeder(kTwoBus);
  auto code = [&](const std::string& text) {
    try {
      parse_forecast(text, f);
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::InvalidArgument;
  };
  CHECK(code("t,node,phase,p_load,q_load,solar_cap\n0,m,a,0.1,0,-1\n") == Errc::NegativeSolar);
  CHECK(code("t,node,phase,p_load,q_load,solar_cap\n0,q,a,0.1,0,0\n") == Errc::UnknownNode);
  CHECK(code("t,node,phase,p_load,q_load,solar_cap\n0,m,a,0.1,0,0\n2,m,a,0.1,0,0\n") == Errc::RaggedSeries);
}
