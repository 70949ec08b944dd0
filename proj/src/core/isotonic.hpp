#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "core/divergence.hpp"

namespace cmtrf {

/// Latent value assigned to each discrete rating level. Values are stored
/// top level first (position 0 is the highest rating), descending, with
/// values[k] >= values[k + 1] + epsilon.
class RatingScaleTransform {
 public:
  static constexpr double kFeasibilityTol = 1e-9;

  RatingScaleTransform() = default;
  // Throws kInvalidArgument when the margin constraints are violated.
  RatingScaleTransform(std::vector<double> values, double epsilon);

  // The untransformed scale: raw level values (ascending vocabulary),
  // reversed, projected onto the margin set if adjacent values are closer
  // than epsilon.
  static RatingScaleTransform base(std::span<const double> level_vocab,
                                   double epsilon);

  std::size_t size() const { return values_.size(); }
  double epsilon() const { return epsilon_; }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t position) const { return values_[position]; }

  // Level indices count upward from the lowest rating (0-based).
  double at_level(std::size_t level) const {
    return values_[values_.size() - 1 - level];
  }

  bool feasible(double tol = kFeasibilityTol) const;

 private:
  std::vector<double> values_;
  double epsilon_ = 0.0;
};

/// Chain-ordered weighted problem min_r sum_k w_k D(r_k || t_k) over
/// r_0 >= r_1 + eps >= ... (top level first, like RatingScaleTransform).
struct IsotonicProblem {
  std::vector<double> targets;
  std::vector<double> weights;
  double epsilon = 0.0;
};

RatingScaleTransform fit_margin_isotonic(const IsotonicProblem& problem,
                                         const Divergence& div);

// sum_k w_k D(r_k || t_k), skipping zero-weight positions.
double isotonic_objective(const IsotonicProblem& problem,
                          std::span<const double> values,
                          const Divergence& div);

}  // namespace cmtrf
