#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "core/divergence.hpp"
#include "core/factorization.hpp"
#include "core/isotonic.hpp"
#include "core/ratings_data.hpp"

namespace cmtrf {

// kPlainMF keeps the base scale fixed: ordinary regularized MF on raw
// ratings, used as the ablation baseline.
enum class Mode { kOne, kPerUser, kClustered, kPlainMF };

std::string_view to_string(Mode mode);
Mode mode_from_string(std::string_view name);

struct TrainConfig {
  Mode mode = Mode::kClustered;
  std::size_t clusters = 2;
  double epsilon = 0.5;
  RegularizationConfig reg;
  std::size_t rank = 10;
  int outer_max_iters = 500;
  int inner_sweeps = 2;      // ALS sweeps per factorization step
  double tolerance = 1e-4;   // on relative objective decrease
  // Squared loss only: after each outer iteration try a step further along
  // the last change and keep it if the objective drops.
  bool extrapolate = true;
  std::uint64_t seed = 0;
  Divergence divergence;

  void validate() const;
};

/// A dataset in solver form: the observation pattern plus the level of every
/// observed entry, both in the pattern's CSR order.
struct TrainingData {
  ObservationPattern pattern;
  std::vector<std::size_t> levels;
  std::vector<double> level_vocab;

  static TrainingData from_dataset(const SparseRatingDataset& data);

  std::size_t num_users() const { return pattern.num_users(); }
  std::size_t num_items() const { return pattern.num_items(); }
  std::size_t num_levels() const { return level_vocab.size(); }
  bool user_has_ratings(std::size_t u) const {
    return pattern.user_begin(u) != pattern.user_end(u);
  }
};

/// Per-level counts and score sums for one user or a pool of users. Indexed
/// by level (ascending vocabulary order).
class LevelAggregate {
 public:
  explicit LevelAggregate(std::size_t levels = 0)
      : count_(levels, 0.0), sum_(levels, 0.0) {}

  void add(std::size_t level, double score) {
    count_[level] += 1.0;
    sum_[level] += score;
  }
  void merge(const LevelAggregate& other);

  std::size_t levels() const { return count_.size(); }
  double count(std::size_t level) const { return count_[level]; }
  double sum(std::size_t level) const { return sum_[level]; }
  double mean(std::size_t level) const { return sum_[level] / count_[level]; }
  bool missing(std::size_t level) const { return count_[level] == 0.0; }
  bool empty() const;

 private:
  std::vector<double> count_;
  std::vector<double> sum_;
};

LevelAggregate aggregate_levels(std::span<const std::size_t> levels,
                                std::span<const double> scores,
                                std::size_t num_levels);

// One aggregate per user from scores in CSR order.
std::vector<LevelAggregate> user_aggregates(const TrainingData& data,
                                            std::span<const double> scores);

// Isotonic subproblem for an aggregate: weights are counts, targets are the
// mean-parameter image grad_psi(mean score), top level first.
IsotonicProblem to_isotonic_problem(const LevelAggregate& agg,
                                    const Divergence& div, double epsilon);

// sum_l count_l * FY(x_l, mean_l): the per-user part of the objective that
// depends on the transform.
double transform_cost(const LevelAggregate& agg,
                      const RatingScaleTransform& transform,
                      const Divergence& div);

/// Transforms plus the user -> transform routing. One transform routed to
/// everyone for 1-CMTRF, one per user for N-CMTRF, K with cluster
/// assignments for K-CMTRF.
struct TransformSet {
  std::vector<RatingScaleTransform> transforms;
  std::vector<std::size_t> route;

  const RatingScaleTransform& for_user(std::size_t u) const {
    return transforms[route[u]];
  }
};

using ClusterState = TransformSet;

// Lowest-cost transform per user; ties go to the lowest index.
std::vector<std::size_t> assign_clusters(
    std::span<const LevelAggregate> aggregates,
    std::span<const RatingScaleTransform> transforms, const Divergence& div);

// Full regularized objective with targets read through the transforms.
double cmtrf_objective(const TrainingData& data, const TransformSet& transforms,
                       const FactorModel& model, const RegularizationConfig& reg,
                       const Divergence& div);

std::vector<double> transform_targets(const TrainingData& data,
                                      const TransformSet& transforms);

struct IterationRecord {
  int iteration = 0;
  double after_assignment = 0.0;  // equals the previous objective unless K-CMTRF
  double after_transform = 0.0;
  double objective = 0.0;         // after the factorization step
  std::size_t reassigned = 0;
  std::size_t empty_repairs = 0;
  double extrapolation = 0.0;     // accepted step length, 0 when none
  double transform_seconds = 0.0;
  double factor_seconds = 0.0;
};

struct FitResult {
  Mode mode = Mode::kOne;
  TransformSet transforms;
  FactorModel model;
  std::vector<double> trace;  // trace[0] is the starting objective
  std::vector<IterationRecord> iterations;
  bool converged = false;
  double seconds = 0.0;
  std::vector<std::string> warnings;

  double objective() const { return trace.back(); }
};

// Seeded Gaussian factors followed by one factorization step against the
// base scale.
FactorModel bootstrap_model(const TrainingData& data, const TrainConfig& config);

// Each fit starts from `warm` when given, otherwise from bootstrap_model.
FitResult fit_1cmtrf(const TrainingData& data, const TrainConfig& config,
                     const FactorModel* warm = nullptr);
FitResult fit_ncmtrf(const TrainingData& data, const TrainConfig& config,
                     const FactorModel* warm = nullptr);
FitResult fit_plain_mf(const TrainingData& data, const TrainConfig& config,
                       const FactorModel* warm = nullptr);

struct ClusterInit {
  ClusterState clusters;
  FactorModel model;
  std::vector<std::string> warnings;
};

// k-means over the per-user transforms of an N-CMTRF fit (computed here
// when `per_user` is null) with K = config.clusters. The factors start from
// the seeded bootstrap, or from the N-CMTRF factors with warm_factors.
ClusterInit init_clusters(const TrainingData& data, const TrainConfig& config,
                          const FitResult* per_user = nullptr,
                          bool warm_factors = false);

struct ClusterFitOptions {
  bool freeze_assignments = false;
};

FitResult fit_kcmtrf(const TrainingData& data, const TrainConfig& config,
                     const ClusterInit* init = nullptr,
                     ClusterFitOptions options = {});

// Dispatch on config.mode with default initialization.
FitResult fit(const TrainingData& data, const TrainConfig& config);

}  // namespace cmtrf
