#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <iosfwd>
#include <vector>

namespace dispatch::conic {

using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Triplet = Eigen::Triplet<double, int>;

/// Cone layout of the inequality rows: `num_nonneg` orthant rows first, then one
/// second-order cone per entry of `soc_dims` (first coordinate is the bound).
struct ConeSpec {
  int num_nonneg = 0;
  std::vector<int> soc_dims;

  int rows() const;
  int degree() const { return num_nonneg + static_cast<int>(soc_dims.size()); }
};

/// Standard-form cone program
///
///   minimize    c'x
///   subject to  A x = b
///               h - G x  in  K
///
/// Lagrangian is c'x + y'(Ax - b) + z'(Gx - h) with z in K.
struct ConeProgram {
  Eigen::VectorXd c;
  SpMat A;
  Eigen::VectorXd b;
  SpMat G;
  Eigen::VectorXd h;
  ConeSpec cones;

  int num_vars() const { return static_cast<int>(c.size()); }
  int num_eq() const { return static_cast<int>(b.size()); }
  int num_cone_rows() const { return static_cast<int>(h.size()); }

  /// Throws SizeMismatch when dimensions disagree.
  void validate() const;
};

/// Sparse text dump, one record per line:
///
///   dims <n> <p> <m>
///   obj <index> <coef> ...
///   eq <rhs> | <index> <coef> ...
///   nonneg <rhs> | <index> <coef> ...            (row of h - Gx >= 0)
///   soc <dim>                                      (next <dim> rows form one cone)
///   socrow <rhs> | <index> <coef> ...
///
/// Coefficients of `socrow`/`nonneg` are the entries of -G, so each row reads
/// rhs + sum coef*x.
void dump(const ConeProgram& program, std::ostream& os);
ConeProgram read_dump(std::istream& is);

/// Largest step a in [0, inf) with x + a*d in the cone (x assumed interior).
double max_step_soc(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& d);

/// Signed distance-like margin: min over orthant entries, x0 - ||x1|| for cones.
double cone_margin(const ConeSpec& cones, const Eigen::VectorXd& v);

}  // namespace dispatch::conic
