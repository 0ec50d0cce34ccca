#include "dispatch/conic.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "dispatch/error.hpp"

namespace dispatch::conic {

int ConeSpec::rows() const { return num_nonneg + std::accumulate(soc_dims.begin(), soc_dims.end(), 0); }

void ConeProgram::validate() const {
  const int n = num_vars();
  if (A.cols() != n || G.cols() != n) throw Error(Errc::SizeMismatch, "constraint matrices have wrong column count");
  if (A.rows() != b.size()) throw Error(Errc::SizeMismatch, "A rows != b size");
  if (G.rows() != h.size()) throw Error(Errc::SizeMismatch, "G rows != h size");
  if (cones.rows() != h.size()) throw Error(Errc::SizeMismatch, "cone rows do not cover h");
  for (int d : cones.soc_dims)
    if (d < 1) throw Error(Errc::SizeMismatch, "second-order cone of dimension < 1");
}

namespace {

void write_row(std::ostream& os, const SpMat& rowmajor_t, int row, double scale) {
  // rowmajor_t holds the transpose, so column `row` lists the row's entries.
  for (SpMat::InnerIterator it(rowmajor_t, row); it; ++it) os << ' ' << it.index() << ' ' << scale * it.value();
}

}  // namespace

void dump(const ConeProgram& prog, std::ostream& os) {
  prog.validate();
  const auto old_prec = os.precision(17);
  os << "dims " << prog.num_vars() << ' ' << prog.num_eq() << ' ' << prog.num_cone_rows() << '\n';
  os << "obj";
  for (int j = 0; j < prog.num_vars(); ++j)
    if (prog.c[j] != 0.0) os << ' ' << j << ' ' << prog.c[j];
  os << '\n';
  const SpMat At = prog.A.transpose();
  for (int i = 0; i < prog.num_eq(); ++i) {
    os << "eq " << prog.b[i] << " |";
    write_row(os, At, i, 1.0);
    os << '\n';
  }
  const SpMat Gt = prog.G.transpose();
  int row = 0;
  for (; row < prog.cones.num_nonneg; ++row) {
    os << "nonneg " << prog.h[row] << " |";
    write_row(os, Gt, row, -1.0);
    os << '\n';
  }
  for (int d : prog.cones.soc_dims) {
    os << "soc " << d << '\n';
    for (int k = 0; k < d; ++k, ++row) {
      os << "socrow " << prog.h[row] << " |";
      write_row(os, Gt, row, -1.0);
      os << '\n';
    }
  }
  os.precision(old_prec);
}

ConeProgram read_dump(std::istream& is) {
  ConeProgram prog;
  std::string line;
  int n = -1, p = 0, m = 0;
  std::vector<Triplet> a_trip, g_trip;
  std::vector<double> b, h;
  int pending_soc = 0;
  auto parse_row = [](std::istringstream& ls, double& rhs, std::vector<Triplet>& trip, int row, double scale) {
    std::string bar;
    ls >> rhs >> bar;
    if (bar != "|") throw Error(Errc::Parse, "dump row missing '|'");
    int j;
    double v;
    while (ls >> j >> v) trip.emplace_back(row, j, scale * v);
  };
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string kind;
    if (!(ls >> kind)) continue;
    if (kind == "dims") {
      ls >> n >> p >> m;
      prog.c = Eigen::VectorXd::Zero(n);
    } else if (kind == "obj") {
      int j;
      double v;
      while (ls >> j >> v) prog.c[j] = v;
    } else if (kind == "eq") {
      double rhs;
      parse_row(ls, rhs, a_trip, static_cast<int>(b.size()), 1.0);
      b.push_back(rhs);
    } else if (kind == "nonneg") {
      if (!prog.cones.soc_dims.empty()) throw Error(Errc::Parse, "nonneg rows must precede cones");
      double rhs;
      parse_row(ls, rhs, g_trip, static_cast<int>(h.size()), -1.0);
      h.push_back(rhs);
      ++prog.cones.num_nonneg;
    } else if (kind == "soc") {
      if (pending_soc != 0) throw Error(Errc::Parse, "incomplete cone in dump");
      ls >> pending_soc;
      prog.cones.soc_dims.push_back(pending_soc);
    } else if (kind == "socrow") {
      if (pending_soc == 0) throw Error(Errc::Parse, "socrow outside cone");
      double rhs;
      parse_row(ls, rhs, g_trip, static_cast<int>(h.size()), -1.0);
      h.push_back(rhs);
      --pending_soc;
    } else {
      throw Error(Errc::Parse, "unknown dump record '" + kind + "'");
    }
  }
  if (n < 0) throw Error(Errc::Parse, "dump missing dims");
  if (static_cast<int>(b.size()) != p || static_cast<int>(h.size()) != m) throw Error(Errc::SizeMismatch, "dump row count");
  prog.A.resize(p, n);
  prog.A.setFromTriplets(a_trip.begin(), a_trip.end());
  prog.G.resize(m, n);
  prog.G.setFromTriplets(g_trip.begin(), g_trip.end());
  prog.b = Eigen::Map<Eigen::VectorXd>(b.data(), p);
  prog.h = Eigen::Map<Eigen::VectorXd>(h.data(), m);
  prog.validate();
  return prog;
}

double max_step_soc(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& d) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const Eigen::Index k = x.size();
  if (k == 1) return d[0] >= 0.0 ? inf : -x[0] / d[0];
  const double x1 = x.tail(k - 1).norm();
  const double d1 = d.tail(k - 1).norm();
  const double a = (d[0] - d1) * (d[0] + d1);
  const double b = x[0] * d[0] - x.tail(k - 1).dot(d.tail(k - 1));
  const double c = std::max((x[0] - x1) * (x[0] + x1), 0.0);
  if (a >= 0.0 && d[0] >= 0.0) return inf;  // d in the cone
  const double denom = -b + std::sqrt(std::max(b * b - a * c, 0.0));
  if (denom <= 0.0) return inf;
  return c / denom;
}

double cone_margin(const ConeSpec& cones, const Eigen::VectorXd& v) {
  double margin = std::numeric_limits<double>::infinity();
  int row = 0;
  for (; row < cones.num_nonneg; ++row) margin = std::min(margin, v[row]);
  for (int d : cones.soc_dims) {
    const double tail = d > 1 ? v.segment(row + 1, d - 1).norm() : 0.0;
    margin = std::min(margin, v[row] - tail);
    row += d;
  }
  return margin;
}

}  // namespace dispatch::conic
