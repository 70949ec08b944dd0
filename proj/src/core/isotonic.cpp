#include "core/isotonic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "core/error.hpp"

namespace cmtrf {

RatingScaleTransform::RatingScaleTransform(std::vector<double> values,
                                           double epsilon)
    : values_(std::move(values)), epsilon_(epsilon) {
  if (!(epsilon_ >= 0.0) || !std::isfinite(epsilon_)) {
    fail(ErrorCode::kInvalidArgument, "transform epsilon must be >= 0");
  }
  for (double v : values_) {
    if (!std::isfinite(v)) {
      fail(ErrorCode::kNumerical, "transform value is not finite");
    }
  }
  if (!feasible()) {
    fail(ErrorCode::kInvalidArgument,
         "transform violates the descending margin constraints");
  }
}

RatingScaleTransform RatingScaleTransform::base(
    std::span<const double> level_vocab, double epsilon) {
  IsotonicProblem problem;
  problem.targets.assign(level_vocab.rbegin(), level_vocab.rend());
  problem.weights.assign(level_vocab.size(), 1.0);
  problem.epsilon = epsilon;
  return fit_margin_isotonic(problem, Divergence{});
}

bool RatingScaleTransform::feasible(double tol) const {
  for (std::size_t k = 0; k + 1 < values_.size(); ++k) {
    if (values_[k] - values_[k + 1] < epsilon_ - tol) return false;
  }
  return true;
}

namespace {

struct Block {
  double value;
  std::size_t first;  // index into the compacted arrays
  std::size_t last;   // inclusive
};

// Minimizer over q of sum_{k in block} w_k D(q - shift_k || t_k).
// Stationarity: sum w_k grad_phi(q - shift_k) = sum w_k grad_phi(t_k).
double block_minimizer(const Divergence& div, std::span<const double> targets,
                       std::span<const double> weights,
                       std::span<const double> shifts, std::size_t first,
                       std::size_t last) {
  if (div.is_squared_loss()) {
    double sw = 0.0;
    double swt = 0.0;
    for (std::size_t k = first; k <= last; ++k) {
      sw += weights[k];
      swt += weights[k] * (targets[k] + shifts[k]);
    }
    return swt / sw;
  }

  double rhs = 0.0;
  double lo = -std::numeric_limits<double>::infinity();
  for (std::size_t k = first; k <= last; ++k) {
    rhs += weights[k] * div.grad_phi(targets[k]);
    lo = std::max(lo, shifts[k]);
  }
  auto excess = [&](double q) {
    double total = 0.0;
    for (std::size_t k = first; k <= last; ++k) {
      total += weights[k] * div.grad_phi(q - shifts[k]);
    }
    return total - rhs;
  };
  // grad_phi is increasing and tends to -inf at the domain boundary, so the
  // root lies in (lo, hi] for hi large enough.
  double hi = lo + 1.0;
  while (excess(hi) < 0.0) hi = lo + 2.0 * (hi - lo);
  double left = lo + Divergence::kBoundaryTol * 2.0;
  if (excess(left) >= 0.0) return left;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (left + hi);
    if (mid <= left || mid >= hi) break;
    if (excess(mid) < 0.0) {
      left = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (left + hi);
}

}  // namespace

RatingScaleTransform fit_margin_isotonic(const IsotonicProblem& problem,
                                         const Divergence& div) {
  const std::size_t L = problem.targets.size();
  if (L == 0 || problem.weights.size() != L) {
    fail(ErrorCode::kInvalidArgument,
         "isotonic problem needs matching nonempty targets and weights");
  }
  if (!(problem.epsilon >= 0.0) || !std::isfinite(problem.epsilon)) {
    fail(ErrorCode::kInvalidArgument, "isotonic epsilon must be >= 0");
  }
  const double eps = problem.epsilon;

  // Positions with positive weight, with their margin shifts k * eps.
  std::vector<std::size_t> active;
  std::vector<double> targets, weights, shifts;
  for (std::size_t k = 0; k < L; ++k) {
    const double w = problem.weights[k];
    if (!(w >= 0.0) || !std::isfinite(w)) {
      fail(ErrorCode::kInvalidArgument, "isotonic weights must be >= 0");
    }
    if (w == 0.0) continue;
    const double t = problem.targets[k];
    if (!div.in_interior(t)) {
      fail(ErrorCode::kDomain, "isotonic target outside divergence domain");
    }
    active.push_back(k);
    targets.push_back(t);
    weights.push_back(w);
    shifts.push_back(static_cast<double>(k) * eps);
  }
  if (active.empty()) {
    fail(ErrorCode::kInvalidArgument, "isotonic problem has all-zero weights");
  }

  // Descending PAVA on q_k = r_k + k * eps.
  std::vector<Block> blocks;
  blocks.reserve(active.size());
  for (std::size_t a = 0; a < active.size(); ++a) {
    blocks.push_back(
        {block_minimizer(div, targets, weights, shifts, a, a), a, a});
    while (blocks.size() > 1 &&
           blocks[blocks.size() - 2].value < blocks.back().value) {
      const Block tail = blocks.back();
      blocks.pop_back();
      Block& head = blocks.back();
      head.last = tail.last;
      head.value = block_minimizer(div, targets, weights, shifts, head.first,
                                   head.last);
    }
  }

  std::vector<double> r(L, std::numeric_limits<double>::quiet_NaN());
  for (const Block& b : blocks) {
    for (std::size_t a = b.first; a <= b.last; ++a) {
      r[active[a]] = b.value - shifts[a];
    }
  }

  // Zero-weight positions: linear interpolation between active neighbours,
  // then margins pushed outward past the first/last active position.
  for (std::size_t a = 0; a + 1 < active.size(); ++a) {
    const std::size_t lo = active[a];
    const std::size_t hi = active[a + 1];
    for (std::size_t k = lo + 1; k < hi; ++k) {
      const double frac = static_cast<double>(k - lo) / static_cast<double>(hi - lo);
      r[k] = r[lo] + (r[hi] - r[lo]) * frac;
    }
  }
  for (std::size_t k = active.front(); k-- > 0;) r[k] = r[k + 1] + eps;
  for (std::size_t k = active.back() + 1; k < L; ++k) r[k] = r[k - 1] - eps;

  // Round-off from the shift-back can leave a margin short by an ulp.
  for (std::size_t k = 0; k + 1 < L; ++k) {
    r[k + 1] = std::min(r[k + 1], r[k] - eps);
  }
  if (!div.is_squared_loss()) {
    for (std::size_t k = 0; k < L; ++k) {
      if (!div.in_domain(r[k])) {
        fail(ErrorCode::kDomain,
             "margin constraints push the transform outside the divergence "
             "domain; lower epsilon");
      }
    }
  }
  return RatingScaleTransform(std::move(r), eps);
}

double isotonic_objective(const IsotonicProblem& problem,
                          std::span<const double> values,
                          const Divergence& div) {
  double total = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (problem.weights[k] == 0.0) continue;
    total += problem.weights[k] * div.scalar(values[k], problem.targets[k]);
  }
  return total;
}

}  // namespace cmtrf
