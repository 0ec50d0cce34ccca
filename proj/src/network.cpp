#include "dispatch/network.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <queue>
#include <random>
#include <set>
#include <sstream>

namespace dispatch {

const char* to_string(Errc code) {
  switch (code) {
    case Errc::Parse: return "Parse";
    case Errc::NonRadial: return "NonRadial";
    case Errc::PhaseMismatch: return "PhaseMismatch";
    case Errc::DuplicateId: return "DuplicateId";
    case Errc::MissingSlack: return "MissingSlack";
    case Errc::NonPositiveBase: return "NonPositiveBase";
    case Errc::RaggedSeries: return "RaggedSeries";
    case Errc::NegativeSolar: return "NegativeSolar";
    case Errc::UnknownNode: return "UnknownNode";
    case Errc::OutOfRangeFraction: return "OutOfRangeFraction";
    case Errc::HorizonMismatch: return "HorizonMismatch";
    case Errc::UnsupportedObjective: return "UnsupportedObjective";
    case Errc::UnknownObjective: return "UnknownObjective";
    case Errc::SizeMismatch: return "SizeMismatch";
    case Errc::NotConverged: return "NotConverged";
    case Errc::PowerFlowDiverged: return "PowerFlowDiverged";
    case Errc::InfeasibleAtFixedP: return "InfeasibleAtFixedP";
    case Errc::SecondStageInfeasible: return "SecondStageInfeasible";
    case Errc::BudgetExceeded: return "BudgetExceeded";
    case Errc::OrderingViolated: return "OrderingViolated";
    case Errc::SolveFailed: return "SolveFailed";
    case Errc::IoError: return "IoError";
    case Errc::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

// ---------------------------------------------------------------------------
// Phases and per-unit

PhaseMask PhaseMask::parse(std::string_view text) {
  std::uint8_t bits = 0;
  for (char ch : text) {
    switch (ch) {
      case 'a': case 'A': bits |= 1u; break;
      case 'b': case 'B': bits |= 2u; break;
      case 'c': case 'C': bits |= 4u; break;
      default: throw Error(Errc::Parse, "bad phase spec '" + std::string(text) + "'");
    }
  }
  if (bits == 0) throw Error(Errc::Parse, "empty phase spec");
  return PhaseMask(bits);
}

int PhaseMask::count() const { return std::popcount(static_cast<unsigned>(bits_)); }

std::vector<int> PhaseMask::phases() const {
  std::vector<int> out;
  for (int p = 0; p < kPhases; ++p)
    if (has(p)) out.push_back(p);
  return out;
}

std::string PhaseMask::str() const {
  std::string s;
  for (int p : phases()) s.push_back(phase_name(p));
  return s;
}

char phase_name(int phase) { return static_cast<char>('a' + phase); }

double to_per_unit(double value, double base) {
  if (!(base > 0.0)) throw Error(Errc::NonPositiveBase, "base must be positive");
  return value / base;
}

double from_per_unit(double value, double base) {
  if (!(base > 0.0)) throw Error(Errc::NonPositiveBase, "base must be positive");
  return value * base;
}

void BatterySpec::validate() const {
  if (phases.empty()) throw Error(Errc::InvalidArgument, "battery without phases");
  if (!(0.0 <= b_min && b_min < b_max)) throw Error(Errc::InvalidArgument, "battery needs 0 <= b_min < b_max");
  if (!(b_min <= b_init && b_init <= b_max)) throw Error(Errc::InvalidArgument, "battery b_init outside [b_min, b_max]");
  if (!(eta_c > 0.0 && eta_c <= 1.0 && eta_d > 0.0 && eta_d <= 1.0))
    throw Error(Errc::InvalidArgument, "battery efficiencies must lie in (0, 1]");
  if (eta_eq && !(*eta_eq > 0.0 && *eta_eq <= 1.0)) throw Error(Errc::InvalidArgument, "eta_eq must lie in (0, 1]");
  if (!(p_max >= 0.0 && h_max > 0.0)) throw Error(Errc::InvalidArgument, "battery power ratings must be positive");
}

void SolarSpec::validate() const {
  if (phases.empty()) throw Error(Errc::InvalidArgument, "solar without phases");
  if (!(g_max > 0.0)) throw Error(Errc::InvalidArgument, "solar g_max must be positive");
}

// ---------------------------------------------------------------------------
// Feeder

Feeder::Feeder(std::vector<Node> nodes, std::vector<Branch> branches, Bases bases)
    : nodes_(std::move(nodes)), branches_(std::move(branches)), bases_(bases) {
  if (!(bases_.v_base > 0.0) || !(bases_.s_base > 0.0)) throw Error(Errc::NonPositiveBase, "feeder bases");
  const int n = num_nodes();

  std::set<std::string> ids;
  for (int i = 0; i < n; ++i) {
    const Node& nd = nodes_[i];
    if (!ids.insert(nd.id).second) throw Error(Errc::DuplicateId, "node '" + nd.id + "'");
    if (nd.phases.empty()) throw Error(Errc::PhaseMismatch, "node '" + nd.id + "' has no phases");
    for (int p : nd.phases.phases())
      if (!(0.0 < nd.v_min[p] && nd.v_min[p] < nd.v_max[p]))
        throw Error(Errc::InvalidArgument, "node '" + nd.id + "' needs 0 < v_min < v_max");
    if (nd.slack) {
      if (slack_ >= 0) throw Error(Errc::MissingSlack, "more than one slack node");
      slack_ = i;
    }
    if (nd.battery) {
      nd.battery->validate();
      if (!nd.battery->phases.subset_of(nd.phases)) throw Error(Errc::PhaseMismatch, "battery phases at '" + nd.id + "'");
    }
    if (nd.solar) {
      nd.solar->validate();
      if (!nd.solar->phases.subset_of(nd.phases)) throw Error(Errc::PhaseMismatch, "solar phases at '" + nd.id + "'");
    }
  }
  if (slack_ < 0) throw Error(Errc::MissingSlack, "no slack node");
  if (static_cast<int>(branches_.size()) != n - 1)
    throw Error(Errc::NonRadial, "expected " + std::to_string(n - 1) + " branches, found " + std::to_string(branches_.size()));

  std::vector<std::vector<int>> incident(static_cast<std::size_t>(n));
  for (int l = 0; l < num_branches(); ++l) {
    const Branch& br = branches_[l];
    if (br.from < 0 || br.from >= n || br.to < 0 || br.to >= n || br.from == br.to)
      throw Error(Errc::NonRadial, "branch endpoints");
    if (br.phases.empty()) throw Error(Errc::PhaseMismatch, "branch without phases");
    if (!br.phases.subset_of(nodes_[br.from].phases) || !br.phases.subset_of(nodes_[br.to].phases))
      throw Error(Errc::PhaseMismatch, "branch " + nodes_[br.from].id + "-" + nodes_[br.to].id);
    for (int p : br.phases.phases())
      if (!(br.s_max[p] > 0.0)) throw Error(Errc::InvalidArgument, "branch s_max must be positive");
    incident[br.from].push_back(l);
    incident[br.to].push_back(l);
  }

  // Breadth-first orientation from the slack; a visited node reached twice is a cycle.
  parent_branch_.assign(static_cast<std::size_t>(n), -1);
  children_.assign(static_cast<std::size_t>(n), {});
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  std::vector<bool> used(branches_.size(), false);
  std::queue<int> frontier;
  frontier.push(slack_);
  seen[slack_] = true;
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop();
    for (int l : incident[u]) {
      if (used[l]) continue;
      used[l] = true;
      Branch& br = branches_[l];
      const int v = br.from == u ? br.to : br.from;
      if (seen[v]) throw Error(Errc::NonRadial, "cycle through node '" + nodes_[v].id + "'");
      seen[v] = true;
      br.from = u;
      br.to = v;
      parent_branch_[v] = l;
      children_[u].push_back(l);
      order_.push_back(l);
      frontier.push(v);
    }
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) throw Error(Errc::NonRadial, "feeder is disconnected");

  for (int i = 0; i < n; ++i) {
    if (i == slack_) continue;
    if (branches_[parent_branch_[i]].phases != nodes_[i].phases)
      throw Error(Errc::PhaseMismatch, "node '" + nodes_[i].id + "' has phases its feeding branch does not carry");
  }
  for (Branch& br : branches_) {
    for (int i = 0; i < kPhases; ++i)
      for (int j = 0; j < kPhases; ++j)
        if (!br.phases.has(i) || !br.phases.has(j)) br.z(i, j) = 0.0;
  }
}

int Feeder::index_of(std::string_view id) const {
  for (int i = 0; i < num_nodes(); ++i)
    if (nodes_[i].id == id) return i;
  return -1;
}

Eigen::Vector3cd Feeder::slack_voltage() const {
  Eigen::Vector3cd v = Eigen::Vector3cd::Zero();
  const PhaseMask mask = nodes_[slack_].phases;
  for (int p = 0; p < kPhases; ++p)
    if (mask.has(p)) v[p] = std::polar(1.0, -2.0 * std::numbers::pi * p / 3.0);
  return v;
}

std::vector<int> topo_order(const Feeder& feeder) { return feeder.order(); }

// ---------------------------------------------------------------------------
// Feeder file parsing

namespace {

std::string strip_comment(const std::string& line) {
  const auto pos = line.find('#');
  std::string s = pos == std::string::npos ? line : line.substr(0, pos);
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

double parse_double(const std::string& tok, int line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw Error(Errc::Parse, "line " + std::to_string(line_no) + ": bad number '" + tok + "'");
  }
}

// Accepts "re", "re+imj", "re-imj", "imj".
cplx parse_complex(const std::string& tok, int line_no) {
  if (tok.empty()) throw Error(Errc::Parse, "line " + std::to_string(line_no) + ": empty complex");
  if (tok.back() != 'j') return {parse_double(tok, line_no), 0.0};
  const std::string body = tok.substr(0, tok.size() - 1);
  // split at the last sign that is not part of an exponent and not the leading char
  std::size_t split = std::string::npos;
  for (std::size_t i = body.size(); i-- > 1;) {
    if ((body[i] == '+' || body[i] == '-') && body[i - 1] != 'e' && body[i - 1] != 'E') {
      split = i;
      break;
    }
  }
  if (split == std::string::npos) return {0.0, parse_double(body.empty() ? "1" : body, line_no)};
  std::string im = body.substr(split);
  if (im == "+" || im == "-") im += "1";
  return {parse_double(body.substr(0, split), line_no), parse_double(im, line_no)};
}

}  // namespace

Feeder parse_feeder(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string raw;
  std::string section;
  int line_no = 0;

  Bases bases;
  std::vector<Node> nodes;
  std::map<std::string, int> ids;
  struct RawBranch {
    std::string from, to;
    Branch br;
    int line;
  };
  std::vector<RawBranch> raw_branches;
  struct RawLoad {
    std::string node;
    int phase;
    cplx s;  // VA when !per_unit
    bool per_unit;
    int line;
  };
  std::vector<RawLoad> raw_loads;
  struct RawDevice {
    std::string node;
    std::optional<BatterySpec> battery;
    std::optional<SolarSpec> solar;
    int line;
  };
  std::vector<RawDevice> raw_devices;

  auto fail = [&](const std::string& msg) -> Error {
    return Error(Errc::Parse, "line " + std::to_string(line_no) + ": " + msg);
  };

  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = strip_comment(raw);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw fail("unterminated section header");
      section = line.substr(1, line.size() - 2);
      continue;
    }
    if (section == "bases") {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw fail("expected key = value");
      const std::string key = strip_comment(line.substr(0, eq));
      const double value = parse_double(strip_comment(line.substr(eq + 1)), line_no);
      if (key == "v_base") bases.v_base = value;
      else if (key == "s_base") bases.s_base = value;
      else throw fail("unknown base '" + key + "'");
    } else if (section == "nodes") {
      const auto tok = split_ws(line);
      if (tok.size() < 4 || tok.size() > 5) throw fail("node: id phases v_min v_max [slack]");
      Node nd;
      nd.id = tok[0];
      nd.phases = PhaseMask::parse(tok[1]);
      nd.v_min.setConstant(parse_double(tok[2], line_no));
      nd.v_max.setConstant(parse_double(tok[3], line_no));
      if (tok.size() == 5) {
        if (tok[4] != "slack") throw fail("unexpected token '" + tok[4] + "'");
        nd.slack = true;
      }
      if (ids.count(nd.id)) throw Error(Errc::DuplicateId, "node '" + nd.id + "'");
      ids[nd.id] = static_cast<int>(nodes.size());
      nodes.push_back(std::move(nd));
    } else if (section == "branches") {
      const auto bar = line.find('|');
      if (bar == std::string::npos) throw fail("branch: from to phases s_max length unit | z rows");
      const auto head = split_ws(line.substr(0, bar));
      if (head.size() != 6) throw fail("branch: from to phases s_max length unit | z rows");
      RawBranch rb;
      rb.from = head[0];
      rb.to = head[1];
      rb.line = line_no;
      rb.br.phases = PhaseMask::parse(head[2]);
      rb.br.s_max.setConstant(parse_double(head[3], line_no));
      const double length = parse_double(head[4], line_no);
      const std::string& unit = head[5];
      double scale = 0.0;
      if (unit == "pu") scale = length;
      else if (unit == "ohm") scale = length / bases.z_base();
      else throw fail("unknown impedance unit '" + unit + "'");
      std::string body = line.substr(bar + 1);
      std::vector<std::string> rows;
      std::size_t start = 0;
      for (;;) {
        const auto semi = body.find(';', start);
        rows.push_back(body.substr(start, semi == std::string::npos ? std::string::npos : semi - start));
        if (semi == std::string::npos) break;
        start = semi + 1;
      }
      if (rows.size() != 3) throw fail("impedance needs 3 semicolon-separated rows");
      for (int i = 0; i < 3; ++i) {
        const auto entries = split_ws(rows[i]);
        if (entries.size() != 3) throw fail("impedance row needs 3 complex entries");
        for (int j = 0; j < 3; ++j) rb.br.z(i, j) = parse_complex(entries[j], line_no) * scale;
      }
      raw_branches.push_back(std::move(rb));
    } else if (section == "loads") {
      const auto tok = split_ws(line);
      if (tok.size() != 5) throw fail("load: node phase p q unit");
      const PhaseMask ph = PhaseMask::parse(tok[1]);
      if (ph.count() != 1) throw fail("load phase must be a single phase");
      cplx s{parse_double(tok[2], line_no), parse_double(tok[3], line_no)};
      if (tok[4] == "kw") s *= 1.0e3;
      else if (tok[4] != "pu") throw fail("load unit must be kw or pu");
      raw_loads.push_back({tok[0], ph.phases().front(), s, tok[4] == "pu", line_no});
    } else if (section == "batteries") {
      const auto tok = split_ws(line);
      if (tok.size() != 9 && tok.size() != 10) throw fail("battery: node phases b_min b_max p_max h_max eta_c eta_d b_init [eta_eq]");
      BatterySpec b;
      b.phases = PhaseMask::parse(tok[1]);
      b.b_min = parse_double(tok[2], line_no);
      b.b_max = parse_double(tok[3], line_no);
      b.p_max = parse_double(tok[4], line_no);
      b.h_max = parse_double(tok[5], line_no);
      b.eta_c = parse_double(tok[6], line_no);
      b.eta_d = parse_double(tok[7], line_no);
      b.b_init = parse_double(tok[8], line_no);
      if (tok.size() == 10) b.eta_eq = parse_double(tok[9], line_no);
      raw_devices.push_back({tok[0], b, std::nullopt, line_no});
    } else if (section == "solar") {
      const auto tok = split_ws(line);
      if (tok.size() != 3) throw fail("solar: node phases g_max");
      SolarSpec s;
      s.phases = PhaseMask::parse(tok[1]);
      s.g_max = parse_double(tok[2], line_no);
      raw_devices.push_back({tok[0], std::nullopt, s, line_no});
    } else {
      throw fail(section.empty() ? "data outside of a section" : "unknown section '" + section + "'");
    }
  }

  auto lookup = [&](const std::string& id, int line) {
    const auto it = ids.find(id);
    if (it == ids.end()) throw Error(Errc::UnknownNode, "line " + std::to_string(line) + ": node '" + id + "'");
    return it->second;
  };

  std::vector<Branch> branches;
  std::set<std::pair<int, int>> pairs;
  for (auto& rb : raw_branches) {
    rb.br.from = lookup(rb.from, rb.line);
    rb.br.to = lookup(rb.to, rb.line);
    const auto key = std::minmax(rb.br.from, rb.br.to);
    if (!pairs.insert(key).second) throw Error(Errc::NonRadial, "parallel branch " + rb.from + "-" + rb.to);
    branches.push_back(rb.br);
  }
  for (const auto& ld : raw_loads) {
    const int n = lookup(ld.node, ld.line);
    if (!nodes[n].phases.has(ld.phase)) throw Error(Errc::PhaseMismatch, "load phase at '" + ld.node + "'");
    nodes[n].base_load[ld.phase] += ld.per_unit ? ld.s : ld.s / bases.s_base;
  }
  for (const auto& dv : raw_devices) {
    const int n = lookup(dv.node, dv.line);
    if (dv.battery) {
      if (nodes[n].battery) throw Error(Errc::DuplicateId, "second battery at '" + dv.node + "'");
      nodes[n].battery = dv.battery;
    }
    if (dv.solar) {
      if (nodes[n].solar) throw Error(Errc::DuplicateId, "second solar unit at '" + dv.node + "'");
      nodes[n].solar = dv.solar;
    }
  }
  return Feeder(std::move(nodes), std::move(branches), bases);
}

Feeder load_feeder(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_feeder(ss.str());
}

// ---------------------------------------------------------------------------
// Forecasts

ForecastSeries ForecastSeries::window(int start, int length) const {
  if (start < 0 || length < 1 || start + length > horizon())
    throw Error(Errc::HorizonMismatch, "forecast window [" + std::to_string(start) + ", " +
                                           std::to_string(start + length) + ") outside series of length " +
                                           std::to_string(horizon()));
  ForecastSeries w;
  w.dt_hours = dt_hours;
  w.load = load.middleCols(start, length);
  w.solar_avail = solar_avail.middleCols(start, length);
  return w;
}

ForecastSeries parse_forecast(std::string_view text, const Feeder& feeder) {
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  double dt = 1.0 / 60.0;
  bool header_seen = false;

  struct Entry {
    cplx load;
    double solar;
  };
  std::map<std::pair<int, int>, std::map<int, Entry>> series;  // (node, phase) -> t -> entry
  int max_t = -1;

  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) {
      const std::string comment = raw.substr(hash + 1);
      const auto key = comment.find("dt_h");
      if (key != std::string::npos) {
        const auto eq = comment.find('=', key);
        if (eq == std::string::npos) throw Error(Errc::Parse, "line " + std::to_string(line_no) + ": dt_h needs '='");
        dt = parse_double(strip_comment(comment.substr(eq + 1)), line_no);
      }
    }
    const std::string line = strip_comment(raw);
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(strip_comment(cell));
    if (!header_seen && !cols.empty() && cols[0] == "t") {
      header_seen = true;
      continue;
    }
    if (cols.size() != 6) throw Error(Errc::Parse, "line " + std::to_string(line_no) + ": expected t,node,phase,p_load,q_load,solar_cap");
    const int t = static_cast<int>(parse_double(cols[0], line_no));
    if (t < 0) throw Error(Errc::Parse, "line " + std::to_string(line_no) + ": negative t");
    const int n = feeder.index_of(cols[1]);
    if (n < 0) throw Error(Errc::UnknownNode, "line " + std::to_string(line_no) + ": node '" + cols[1] + "'");
    const PhaseMask ph = PhaseMask::parse(cols[2]);
    if (ph.count() != 1) throw Error(Errc::Parse, "line " + std::to_string(line_no) + ": single phase expected");
    const int p = ph.phases().front();
    if (!feeder.node(n).phases.has(p)) throw Error(Errc::PhaseMismatch, "line " + std::to_string(line_no));
    const double solar = parse_double(cols[5], line_no);
    if (solar < 0.0) throw Error(Errc::NegativeSolar, "line " + std::to_string(line_no));
    auto& row = series[{n, p}];
    if (row.count(t)) throw Error(Errc::Parse, "line " + std::to_string(line_no) + ": duplicate entry");
    row[t] = {cplx(parse_double(cols[3], line_no), parse_double(cols[4], line_no)), solar};
    max_t = std::max(max_t, t);
  }
  if (!(dt > 0.0)) throw Error(Errc::InvalidArgument, "dt_h must be positive");
  if (max_t < 0) throw Error(Errc::RaggedSeries, "forecast has no rows");

  const int T = max_t + 1;
  ForecastSeries fc;
  fc.dt_hours = dt;
  fc.load = Eigen::MatrixXcd::Zero(kPhases * feeder.num_nodes(), T);
  fc.solar_avail = Eigen::MatrixXd::Zero(kPhases * feeder.num_nodes(), T);
  for (const auto& [key, row] : series) {
    if (static_cast<int>(row.size()) != T)
      throw Error(Errc::RaggedSeries, "node '" + feeder.node(key.first).id + "' phase " + phase_name(key.second) +
                                          " has " + std::to_string(row.size()) + " of " + std::to_string(T) + " steps");
    for (const auto& [t, e] : row) {
      fc.load(kPhases * key.first + key.second, t) = e.load;
      fc.solar_avail(kPhases * key.first + key.second, t) = e.solar;
    }
  }
  return fc;
}

ForecastSeries load_forecast(const std::string& path, const Feeder& feeder) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_forecast(ss.str(), feeder);
}

std::string format_forecast(const ForecastSeries& fc, const Feeder& feeder) {
  std::ostringstream os;
  os.precision(17);
  os << "# dt_h = " << fc.dt_hours << "\n";
  os << "t,node,phase,p_load,q_load,solar_cap\n";
  for (int t = 0; t < fc.horizon(); ++t)
    for (int n = 0; n < feeder.num_nodes(); ++n)
      for (int p : feeder.node(n).phases.phases()) {
        const cplx s = fc.load_at(n, p, t);
        const double sol = fc.solar_at(n, p, t);
        if (s == cplx{} && sol == 0.0 && !feeder.node(n).has_der()) continue;
        os << t << ',' << feeder.node(n).id << ',' << phase_name(p) << ',' << s.real() << ',' << s.imag() << ','
           << sol << '\n';
      }
  return os.str();
}

LoadCase parse_load_case(std::string_view name) {
  if (name == "LL") return LoadCase::LL;
  if (name == "HL") return LoadCase::HL;
  if (name == "LH") return LoadCase::LH;
  if (name == "HH") return LoadCase::HH;
  throw Error(Errc::InvalidArgument, "unknown case '" + std::string(name) + "'");
}

const char* to_string(LoadCase c) {
  switch (c) {
    case LoadCase::LL: return "LL";
    case LoadCase::HL: return "HL";
    case LoadCase::LH: return "LH";
    case LoadCase::HH: return "HH";
  }
  return "?";
}

// First letter is the load level, second the solar level.
std::pair<double, double> case_fractions(LoadCase c) {
  switch (c) {
    case LoadCase::LL: return {0.5, 0.5};
    case LoadCase::HL: return {1.0, 0.5};
    case LoadCase::LH: return {0.5, 1.0};
    case LoadCase::HH: return {1.0, 1.0};
  }
  return {1.0, 1.0};
}

ForecastSeries scale_case(const ForecastSeries& forecast, double load_pct, double solar_pct) {
  if (!(load_pct > 0.0 && load_pct <= 1.0) || !(solar_pct > 0.0 && solar_pct <= 1.0))
    throw Error(Errc::OutOfRangeFraction, "case fractions must lie in (0, 1]");
  ForecastSeries out = forecast;
  out.load *= load_pct;
  out.solar_avail *= solar_pct;
  return out;
}

ForecastSeries scale_case(const ForecastSeries& forecast, LoadCase c) {
  const auto [l, s] = case_fractions(c);
  return scale_case(forecast, l, s);
}

ForecastSeries synthetic_forecast(const Feeder& feeder, const SyntheticProfile& prof) {
  if (prof.steps < 1 || !(prof.dt_hours > 0.0)) throw Error(Errc::InvalidArgument, "synthetic profile length");
  std::mt19937_64 rng(prof.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  ForecastSeries fc;
  fc.dt_hours = prof.dt_hours;
  fc.load = Eigen::MatrixXcd::Zero(kPhases * feeder.num_nodes(), prof.steps);
  fc.solar_avail = Eigen::MatrixXd::Zero(kPhases * feeder.num_nodes(), prof.steps);

  // Slowly varying cloud factor shared across the feeder, AR(1) around zero.
  Eigen::VectorXd cloud(prof.steps);
  double c = 0.0;
  for (int t = 0; t < prof.steps; ++t) {
    c = 0.9 * c + prof.cloud_noise * gauss(rng);
    cloud[t] = c;
  }

  for (int t = 0; t < prof.steps; ++t) {
    const double hour = prof.start_hour + t * prof.dt_hours;
    const double ripple = 1.0 + prof.load_ripple * std::sin(2.0 * std::numbers::pi * (hour - 6.0) / 24.0);
    // half-sine daylight window 6h..18h peaking at noon
    const double sun = hour > 6.0 && hour < 18.0 ? std::sin(std::numbers::pi * (hour - 6.0) / 12.0) : 0.0;
    for (int n = 0; n < feeder.num_nodes(); ++n) {
      const Node& nd = feeder.node(n);
      for (int p : nd.phases.phases()) {
        const double noise = 1.0 + prof.load_noise * gauss(rng);
        fc.load(kPhases * n + p, t) = nd.base_load[p] * ripple * noise;
        if (nd.solar && nd.solar->phases.has(p)) {
          const double avail = nd.solar->g_max * prof.solar_peak_fraction * sun * (1.0 + cloud[t]);
          fc.solar_avail(kPhases * n + p, t) = std::clamp(avail, 0.0, nd.solar->g_max);
        }
      }
    }
  }
  return fc;
}

}  // namespace dispatch
