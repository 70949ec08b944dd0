#pragma once

#include <span>
#include <string_view>
#include <vector>

namespace cmtrf {

enum class DivergenceKind { kSquaredLoss, kKL, kGID };

std::string_view to_string(DivergenceKind kind);
DivergenceKind divergence_kind_from_string(std::string_view name);

/// Weighted, identically separable Bregman divergence generated by a scalar
/// Legendre function phi. The weighted form is sum_i w_i * D(x_i || y_i).
///
///   kind  phi(x)          grad_phi(y)   psi(s)      grad_psi(s)
///   SL    x^2 / 2         y             s^2 / 2     s
///   KL    x log x         log y + 1     e^(s-1)     e^(s-1)
///   GID   x log x - x     log y         e^s         e^s
///
/// KL is evaluated per coordinate as x log(x / y), without the -x + y terms;
/// it is a divergence only for inputs on the simplex, which callers enforce.
/// The Fenchel-Young gap is always psi(s) + phi(x) - x s and is nonnegative
/// for all three kinds.
class Divergence {
 public:
  static constexpr double kBoundaryTol = 1e-12;

  explicit Divergence(DivergenceKind kind = DivergenceKind::kSquaredLoss)
      : kind_(kind) {}

  DivergenceKind kind() const { return kind_; }
  bool is_squared_loss() const { return kind_ == DivergenceKind::kSquaredLoss; }

  // x may sit on the boundary (0 for KL/GID); y must be interior.
  bool in_domain(double x) const;
  bool in_interior(double y) const;

  double phi(double x) const;
  double psi(double s) const;
  double grad_phi(double y) const;
  double grad_psi(double s) const;
  // d^2 psi / ds^2, used by the non-quadratic factor solver.
  double hess_psi(double s) const;

  double scalar(double x, double y) const;
  double fenchel_young_gap(double x, double s) const;

  double divergence(std::span<const double> x, std::span<const double> y,
                    std::span<const double> w) const;
  std::vector<double> grad_phi(std::span<const double> y) const;
  std::vector<double> grad_psi(std::span<const double> s) const;

 private:
  void require_domain(double x) const;
  void require_interior(double y) const;

  DivergenceKind kind_;
};

}  // namespace cmtrf
