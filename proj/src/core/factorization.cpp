#include "core/factorization.hpp"

#include <cmath>
#include <random>
#include <string>

#include "core/error.hpp"

namespace cmtrf {
namespace {

constexpr double kInitStddev = 0.1;
constexpr double kRidgeFloor = 1e-10;
constexpr int kGradientStepsPerRow = 3;
constexpr int kMaxBacktracks = 40;

// Context for one row: the fixed factors on the other side and the targets.
struct RowView {
  const RowMatrix& other;
  std::span<const std::size_t> others;  // row index into `other`
  std::span<const double> targets;
};

double row_loss(const RowView& row, const Eigen::VectorXd& x, double lambda,
                const Divergence& div) {
  double total = 0.5 * lambda * x.squaredNorm();
  for (std::size_t k = 0; k < row.others.size(); ++k) {
    const double s =
        row.other.row(static_cast<Eigen::Index>(row.others[k])).dot(x);
    total += div.fenchel_young_gap(row.targets[k], s);
  }
  return total;
}

void ridge_update(const RowView& row, double lambda, Eigen::Ref<Eigen::RowVectorXd> out) {
  const Eigen::Index d = row.other.cols();
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
  for (std::size_t k = 0; k < row.others.size(); ++k) {
    const auto v = row.other.row(static_cast<Eigen::Index>(row.others[k]));
    gram.selfadjointView<Eigen::Lower>().rankUpdate(v.transpose());
    rhs.noalias() += row.targets[k] * v.transpose();
  }
  gram.diagonal().array() += lambda > 0.0 ? lambda : kRidgeFloor;
  Eigen::LDLT<Eigen::MatrixXd, Eigen::Lower> ldlt(gram);
  if (ldlt.info() != Eigen::Success) {
    fail(ErrorCode::kNumerical, "ridge normal equations are singular");
  }
  out = ldlt.solve(rhs).transpose();
}

void gradient_update(const RowView& row, double lambda, const Divergence& div,
                     Eigen::Ref<Eigen::RowVectorXd> out) {
  Eigen::VectorXd x = out.transpose();
  double fx = row_loss(row, x, lambda, div);
  for (int step = 0; step < kGradientStepsPerRow; ++step) {
    Eigen::VectorXd grad = lambda * x;
    double curvature = lambda;
    for (std::size_t k = 0; k < row.others.size(); ++k) {
      const auto v = row.other.row(static_cast<Eigen::Index>(row.others[k]));
      const double s = v.dot(x);
      grad.noalias() += (div.grad_psi(s) - row.targets[k]) * v.transpose();
      curvature += div.hess_psi(s) * v.squaredNorm();
    }
    if (grad.squaredNorm() == 0.0) break;
    double eta = curvature > 0.0 ? 1.0 / curvature : 1.0;
    bool accepted = false;
    for (int bt = 0; bt < kMaxBacktracks; ++bt) {
      Eigen::VectorXd trial = x - eta * grad;
      const double ft = row_loss(row, trial, lambda, div);
      if (std::isfinite(ft) && ft <= fx) {
        x = std::move(trial);
        fx = ft;
        accepted = true;
        break;
      }
      eta *= 0.5;
    }
    if (!accepted) break;
  }
  out = x.transpose();
}

}  // namespace

FactorModel::FactorModel(RowMatrix u, RowMatrix v)
    : user(std::move(u)), item(std::move(v)) {
  if (user.cols() != item.cols()) {
    fail(ErrorCode::kInvalidArgument, "factor ranks differ");
  }
}

void RegularizationConfig::validate() const {
  if (!(lambda_u >= 0.0) || !(lambda_v >= 0.0) || !std::isfinite(lambda_u) ||
      !std::isfinite(lambda_v)) {
    fail(ErrorCode::kInvalidArgument,
         "regularization weights must be finite and >= 0");
  }
}

FactorModel random_factor_model(std::size_t num_users, std::size_t num_items,
                                std::size_t rank, std::uint64_t seed) {
  if (rank < 1 || rank > std::min(num_users, num_items)) {
    fail(ErrorCode::kInvalidArgument,
         "rank must satisfy 1 <= d <= min(users, items), got d=" +
             std::to_string(rank));
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, kInitStddev);
  const auto d = static_cast<Eigen::Index>(rank);
  RowMatrix u(static_cast<Eigen::Index>(num_users), d);
  RowMatrix v(static_cast<Eigen::Index>(num_items), d);
  for (Eigen::Index r = 0; r < u.rows(); ++r)
    for (Eigen::Index c = 0; c < d; ++c) u(r, c) = normal(rng);
  for (Eigen::Index r = 0; r < v.rows(); ++r)
    for (Eigen::Index c = 0; c < d; ++c) v(r, c) = normal(rng);
  return FactorModel(std::move(u), std::move(v));
}

std::vector<double> predict_scores(const FactorModel& model,
                                   std::span<const UserItem> pairs) {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& [u, i] : pairs) {
    if (u >= model.num_users() || i >= model.num_items()) {
      fail(ErrorCode::kIndex, "score index (" + std::to_string(u) + ", " +
                                  std::to_string(i) + ") out of range");
    }
    out.push_back(model.score(u, i));
  }
  return out;
}

ObservationPattern::ObservationPattern(std::size_t num_users,
                                       std::size_t num_items,
                                       std::span<const UserItem> entries) {
  user_ptr_.assign(num_users + 1, 0);
  item_ptr_.assign(num_items + 1, 0);
  for (const auto& [u, i] : entries) {
    if (u >= num_users || i >= num_items) {
      fail(ErrorCode::kIndex, "observation index out of range");
    }
    ++user_ptr_[u + 1];
    ++item_ptr_[i + 1];
  }
  for (std::size_t u = 0; u < num_users; ++u) user_ptr_[u + 1] += user_ptr_[u];
  for (std::size_t i = 0; i < num_items; ++i) item_ptr_[i + 1] += item_ptr_[i];

  items_.resize(entries.size());
  users_.resize(entries.size());
  entry_pos_.resize(entries.size());
  std::vector<std::size_t> fill(user_ptr_.begin(), user_ptr_.end() - 1);
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const auto [u, i] = entries[k];
    const std::size_t pos = fill[u]++;
    items_[pos] = i;
    users_[pos] = u;
    entry_pos_[k] = pos;
  }
  item_pos_.resize(entries.size());
  std::vector<std::size_t> ifill(item_ptr_.begin(), item_ptr_.end() - 1);
  for (std::size_t pos = 0; pos < items_.size(); ++pos) {
    item_pos_[ifill[items_[pos]]++] = pos;
  }
}

std::vector<double> observed_scores(const FactorModel& model,
                                    const ObservationPattern& pattern) {
  std::vector<double> out(pattern.size());
  for (std::size_t pos = 0; pos < pattern.size(); ++pos) {
    out[pos] = model.score(pattern.user_at(pos), pattern.item_at(pos));
  }
  return out;
}

double regularization_penalty(const ObservationPattern& pattern,
                              const FactorModel& model,
                              const RegularizationConfig& reg) {
  double su = 0.0;
  for (std::size_t u = 0; u < pattern.num_users(); ++u) {
    if (pattern.user_begin(u) == pattern.user_end(u)) continue;
    su += model.user.row(static_cast<Eigen::Index>(u)).squaredNorm();
  }
  double sv = 0.0;
  for (std::size_t i = 0; i < pattern.num_items(); ++i) {
    if (pattern.item_positions(i).empty()) continue;
    sv += model.item.row(static_cast<Eigen::Index>(i)).squaredNorm();
  }
  return 0.5 * reg.lambda_u * su + 0.5 * reg.lambda_v * sv;
}

double factor_objective(const ObservationPattern& pattern,
                        std::span<const double> targets,
                        const FactorModel& model,
                        const RegularizationConfig& reg,
                        const Divergence& div) {
  double loss = 0.0;
  for (std::size_t pos = 0; pos < pattern.size(); ++pos) {
    loss += div.fenchel_young_gap(
        targets[pos], model.score(pattern.user_at(pos), pattern.item_at(pos)));
  }
  return loss + regularization_penalty(pattern, model, reg);
}

void update_factor_side(const ObservationPattern& pattern,
                        std::span<const double> targets, FactorModel& model,
                        const RegularizationConfig& reg, const Divergence& div,
                        FactorSide side) {
  std::vector<std::size_t> others;
  std::vector<double> row_targets;
  const bool users = side == FactorSide::kUsers;
  const std::size_t rows = users ? pattern.num_users() : pattern.num_items();
  RowMatrix& self = users ? model.user : model.item;
  const RowMatrix& other = users ? model.item : model.user;
  const double lambda = users ? reg.lambda_u : reg.lambda_v;

  for (std::size_t r = 0; r < rows; ++r) {
    others.clear();
    row_targets.clear();
    if (users) {
      for (std::size_t pos = pattern.user_begin(r); pos < pattern.user_end(r);
           ++pos) {
        others.push_back(pattern.item_at(pos));
        row_targets.push_back(targets[pos]);
      }
    } else {
      for (std::size_t pos : pattern.item_positions(r)) {
        others.push_back(pattern.user_at(pos));
        row_targets.push_back(targets[pos]);
      }
    }
    if (others.empty()) continue;  // degenerate row keeps its initialization
    const RowView view{other, others, row_targets};
    auto dest = self.row(static_cast<Eigen::Index>(r));
    if (div.is_squared_loss()) {
      ridge_update(view, lambda, dest);
    } else {
      gradient_update(view, lambda, div, dest);
    }
  }
}

FactorModel solve_factors(const ObservationPattern& pattern,
                          std::span<const double> targets, FactorModel init,
                          const RegularizationConfig& reg,
                          const Divergence& div, int sweeps) {
  reg.validate();
  if (init.num_users() != pattern.num_users() ||
      init.num_items() != pattern.num_items()) {
    fail(ErrorCode::kInvalidArgument,
         "initial factor shape does not match the observation pattern");
  }
  if (targets.size() != pattern.size()) {
    fail(ErrorCode::kInvalidArgument, "one target per observation required");
  }
  for (double t : targets) {
    if (!div.in_domain(t)) {
      fail(ErrorCode::kDomain, "factorization target outside the divergence domain");
    }
  }
  for (int s = 0; s < sweeps; ++s) {
    update_factor_side(pattern, targets, init, reg, div, FactorSide::kUsers);
    update_factor_side(pattern, targets, init, reg, div, FactorSide::kItems);
  }
  if (!init.user.allFinite() || !init.item.allFinite()) {
    fail(ErrorCode::kNumerical, "factor solve produced non-finite values");
  }
  return init;
}

}  // namespace cmtrf
