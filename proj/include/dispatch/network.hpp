#pragma once

#include <Eigen/Dense>

#include <array>
#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dispatch/error.hpp"

namespace dispatch {

using cplx = std::complex<double>;

inline constexpr int kPhases = 3;

/// Subset of {a, b, c}, one bit per phase.
class PhaseMask {
 public:
  constexpr PhaseMask() = default;
  constexpr explicit PhaseMask(std::uint8_t bits) : bits_(bits & 0x7u) {}

  static PhaseMask parse(std::string_view text);
  static constexpr PhaseMask all() { return PhaseMask(0x7u); }

  constexpr bool has(int phase) const { return (bits_ >> phase) & 1u; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::uint8_t bits() const { return bits_; }
  int count() const;
  constexpr bool subset_of(PhaseMask other) const { return (bits_ & ~other.bits_) == 0; }
  /// Active phase indices in a-b-c order.
  std::vector<int> phases() const;
  std::string str() const;

  friend constexpr bool operator==(PhaseMask, PhaseMask) = default;

 private:
  std::uint8_t bits_ = 0;
};

char phase_name(int phase);

struct Bases {
  double v_base = 2400.0;   // volts, line-to-neutral
  double s_base = 1.0e6;    // VA per phase
  double z_base() const { return v_base * v_base / s_base; }
};

double to_per_unit(double value, double base);
double from_per_unit(double value, double base);

struct BatterySpec {
  PhaseMask phases;
  double b_min = 0.0;   // pu*h
  double b_max = 0.0;   // pu*h
  double p_max = 0.0;   // pu
  double h_max = 0.0;   // pu
  double eta_c = 1.0;
  double eta_d = 1.0;
  double b_init = 0.0;  // pu*h
  std::optional<double> eta_eq;

  void validate() const;
};

struct SolarSpec {
  PhaseMask phases;
  double g_max = 0.0;  // pu

  void validate() const;
};

struct Node {
  std::string id;
  PhaseMask phases;
  Eigen::Vector3d v_min = Eigen::Vector3d::Constant(0.95);
  Eigen::Vector3d v_max = Eigen::Vector3d::Constant(1.05);
  bool slack = false;
  Eigen::Vector3cd base_load = Eigen::Vector3cd::Zero();  // pu, consumption positive
  std::optional<BatterySpec> battery;
  std::optional<SolarSpec> solar;

  bool has_der() const { return battery.has_value() || solar.has_value(); }
};

struct Branch {
  int from = -1;  // parent (closer to the slack)
  int to = -1;
  PhaseMask phases;
  Eigen::Matrix3cd z = Eigen::Matrix3cd::Zero();  // pu, rows/cols outside `phases` are zero
  Eigen::Vector3d s_max = Eigen::Vector3d::Constant(1.0e3);  // pu per phase
};

/// Radial three-phase feeder. Construction validates every structural invariant
/// and orients branches away from the slack node.
class Feeder {
 public:
  Feeder(std::vector<Node> nodes, std::vector<Branch> branches, Bases bases = {});

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Branch>& branches() const { return branches_; }
  const Node& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
  const Branch& branch(int l) const { return branches_[static_cast<std::size_t>(l)]; }
  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  int num_branches() const { return static_cast<int>(branches_.size()); }
  const Bases& bases() const { return bases_; }
  int slack() const { return slack_; }

  int index_of(std::string_view id) const;
  /// Branch feeding node `n`, or -1 for the slack.
  int parent_branch(int n) const { return parent_branch_[static_cast<std::size_t>(n)]; }
  const std::vector<int>& child_branches(int n) const { return children_[static_cast<std::size_t>(n)]; }
  /// Branch indices ordered root to leaf.
  const std::vector<int>& order() const { return order_; }

  /// Balanced nominal slack voltage (1 pu, 120 degree offsets) on the slack phases.
  Eigen::Vector3cd slack_voltage() const;

 private:
  std::vector<Node> nodes_;
  std::vector<Branch> branches_;
  Bases bases_;
  int slack_ = -1;
  std::vector<int> parent_branch_;
  std::vector<std::vector<int>> children_;
  std::vector<int> order_;
};

Feeder parse_feeder(std::string_view text);
Feeder load_feeder(const std::string& path);

/// Root-to-leaf branch order (breadth first from the slack).
std::vector<int> topo_order(const Feeder& feeder);

/// Per-(node, phase, t) load and solar availability. Row index is 3*node + phase.
struct ForecastSeries {
  double dt_hours = 1.0 / 60.0;
  Eigen::MatrixXcd load;        // pu, consumption positive
  Eigen::MatrixXd solar_avail;  // pu, >= 0

  int horizon() const { return static_cast<int>(load.cols()); }
  int rows() const { return static_cast<int>(load.rows()); }
  cplx load_at(int node, int phase, int t) const { return load(kPhases * node + phase, t); }
  double solar_at(int node, int phase, int t) const { return solar_avail(kPhases * node + phase, t); }

  ForecastSeries window(int start, int length) const;
};

ForecastSeries parse_forecast(std::string_view text, const Feeder& feeder);
ForecastSeries load_forecast(const std::string& path, const Feeder& feeder);
std::string format_forecast(const ForecastSeries& forecast, const Feeder& feeder);

enum class LoadCase { LL, HL, LH, HH };

LoadCase parse_load_case(std::string_view name);
const char* to_string(LoadCase c);
/// (load fraction, solar fraction) for a load/solar case.
std::pair<double, double> case_fractions(LoadCase c);

ForecastSeries scale_case(const ForecastSeries& forecast, double load_pct, double solar_pct);
ForecastSeries scale_case(const ForecastSeries& forecast, LoadCase c);

struct SyntheticProfile {
  int steps = 90;
  double dt_hours = 1.0 / 60.0;
  double start_hour = 11.5;        // local clock time of step 0
  double load_ripple = 0.05;       // relative amplitude of the slow load sinusoid
  double load_noise = 0.01;        // relative per-step noise
  double solar_peak_fraction = 1.0; // availability at solar noon, fraction of g_max
  double cloud_noise = 0.05;       // relative per-step noise on solar
  std::uint64_t seed = 1;
};

/// Seeded load/solar profile with a midday solar peak, built from the feeder's
/// base loads and solar ratings.
ForecastSeries synthetic_forecast(const Feeder& feeder, const SyntheticProfile& profile);

}  // namespace dispatch
