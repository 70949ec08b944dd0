#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <tuple>
#include <vector>

#include "core/cmtrf.hpp"
#include "core/model_io.hpp"

namespace cmtrf {

struct GridCell {
  std::size_t clusters = 1;  // 1 for modes without clusters
  double lambda_u = 0.1;
  double lambda_v = 0.1;
  std::size_t rank = 10;
};

std::vector<double> default_lambda_grid();        // 10^-2, 10^-1.5, ..., 10^2
std::vector<std::size_t> default_cluster_grid();  // 2, 3, 5, ..., 100

struct GridSpec {
  TrainConfig base;  // mode, epsilon, seed, iteration limits
  std::vector<double> lambdas = default_lambda_grid();
  std::vector<std::size_t> clusters = default_cluster_grid();
  std::vector<std::size_t> ranks{10};
  bool cross_lambdas = false;  // otherwise lambda_v = lambda_u

  // Ordered by rank, then K, then lambda_u, then lambda_v. Throws
  // kInvalidArgument when empty.
  std::vector<GridCell> cells() const;
  TrainConfig config_for(const GridCell& cell) const;
};

struct CellResult {
  GridCell cell;
  Metrics validation;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  double seconds = 0.0;
};

// Lowest validation MSE; exact ties go to smaller K, then smaller lambda_u,
// then earlier position.
std::size_t select_best(std::span<const CellResult> results);

/// Trains grid cells on one training set and scores them on a validation
/// set by raw id (rows with users or items unseen in training are skipped).
/// Every cell starts from the same seeded initialization; K-CMTRF cells
/// share one N-CMTRF fit per (lambda_u, lambda_v, d), computed once.
class GridEvaluator {
 public:
  GridEvaluator(const SparseRatingDataset& train,
                const SparseRatingDataset& validation, GridSpec spec);

  const GridSpec& spec() const { return spec_; }
  CellResult evaluate(const GridCell& cell);

  /// Evaluates `cells` on up to `threads` workers; results come back in
  /// input order. `on_done` is called once per finished cell, serialized.
  std::vector<CellResult> evaluate_all(
      std::span<const GridCell> cells, unsigned threads,
      const std::function<void(std::size_t, const CellResult&)>& on_done = {});

 private:
  using InitKey = std::tuple<double, double, std::size_t>;
  const FitResult& per_user_fit(const GridCell& cell);

  SparseRatingDataset train_;
  const SparseRatingDataset& validation_;
  TrainingData data_;
  GridSpec spec_;
  std::mutex init_mutex_;
  std::map<InitKey, std::shared_ptr<FitResult>> init_cache_;
};

struct FinalReport {
  TrainedModel model;
  Metrics test;
};

// Retrains `cell` on train followed by validation and scores the test set.
FinalReport retrain_and_test(const SparseRatingDataset& train,
                             const SparseRatingDataset& validation,
                             const SparseRatingDataset& test,
                             const GridSpec& spec, const GridCell& cell);

}  // namespace cmtrf
