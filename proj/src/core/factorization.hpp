#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "core/divergence.hpp"

namespace cmtrf {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// User factors U (N x d) and item factors V (M x d); score(i, j) = <u_i, v_j>.
struct FactorModel {
  RowMatrix user;
  RowMatrix item;

  FactorModel() = default;
  FactorModel(RowMatrix u, RowMatrix v);

  std::size_t num_users() const { return static_cast<std::size_t>(user.rows()); }
  std::size_t num_items() const { return static_cast<std::size_t>(item.rows()); }
  std::size_t rank() const { return static_cast<std::size_t>(user.cols()); }

  double score(std::size_t u, std::size_t i) const {
    return user.row(static_cast<Eigen::Index>(u))
        .dot(item.row(static_cast<Eigen::Index>(i)));
  }
};

struct RegularizationConfig {
  double lambda_u = 0.1;
  double lambda_v = 0.1;

  void validate() const;
};

// Entries i.i.d. N(0, 0.1^2). Requires 1 <= d <= min(N, M).
FactorModel random_factor_model(std::size_t num_users, std::size_t num_items,
                                std::size_t rank, std::uint64_t seed);

using UserItem = std::pair<std::size_t, std::size_t>;

std::vector<double> predict_scores(const FactorModel& model,
                                   std::span<const UserItem> pairs);

/// Observed (user, item) positions stored both ways: CSR by user for the
/// user half-step and a CSC view (indices back into the CSR order) for the
/// item half-step. Target vectors passed alongside are in CSR order.
class ObservationPattern {
 public:
  ObservationPattern() = default;
  ObservationPattern(std::size_t num_users, std::size_t num_items,
                     std::span<const UserItem> entries);

  std::size_t num_users() const { return user_ptr_.size() - 1; }
  std::size_t num_items() const { return item_ptr_.size() - 1; }
  std::size_t size() const { return items_.size(); }

  // CSR order position range for user u.
  std::size_t user_begin(std::size_t u) const { return user_ptr_[u]; }
  std::size_t user_end(std::size_t u) const { return user_ptr_[u + 1]; }
  std::size_t item_at(std::size_t pos) const { return items_[pos]; }
  std::size_t user_at(std::size_t pos) const { return users_[pos]; }

  // For item i, CSR positions of its observations.
  std::span<const std::size_t> item_positions(std::size_t i) const {
    return {item_pos_.data() + item_ptr_[i], item_ptr_[i + 1] - item_ptr_[i]};
  }

  // Position in CSR order of the k-th entry passed to the constructor.
  std::size_t position_of_entry(std::size_t k) const { return entry_pos_[k]; }

 private:
  std::vector<std::size_t> user_ptr_{0};
  std::vector<std::size_t> items_;
  std::vector<std::size_t> users_;
  std::vector<std::size_t> item_ptr_{0};
  std::vector<std::size_t> item_pos_;
  std::vector<std::size_t> entry_pos_;
};

// Scores at every observed position, CSR order.
std::vector<double> observed_scores(const FactorModel& model,
                                    const ObservationPattern& pattern);

/// sum over observed entries of the Fenchel-Young gap between target and
/// score, plus (lambda_u / 2) sum ||u_i||^2 + (lambda_v / 2) sum ||v_j||^2.
/// Rows without observations are excluded from the regularizer.
double factor_objective(const ObservationPattern& pattern,
                        std::span<const double> targets,
                        const FactorModel& model,
                        const RegularizationConfig& reg,
                        const Divergence& div);

// The regularizer part alone.
double regularization_penalty(const ObservationPattern& pattern,
                              const FactorModel& model,
                              const RegularizationConfig& reg);

enum class FactorSide { kUsers, kItems };

// One half-step: every row of one side updated with the other side fixed.
void update_factor_side(const ObservationPattern& pattern,
                        std::span<const double> targets, FactorModel& model,
                        const RegularizationConfig& reg, const Divergence& div,
                        FactorSide side);

/// Alternating minimization, `sweeps` rounds of (all users, then all items).
/// Squared loss uses exact per-row ridge solves; KL and GID take damped
/// gradient steps per row, accepting only steps that do not increase the
/// row objective.
FactorModel solve_factors(const ObservationPattern& pattern,
                          std::span<const double> targets, FactorModel init,
                          const RegularizationConfig& reg,
                          const Divergence& div, int sweeps);

}  // namespace cmtrf
