#include "core/tuning.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <thread>

#include "core/error.hpp"

namespace cmtrf {
namespace {

FitResult fit_cell(const TrainingData& data, const TrainConfig& config,
                   const FitResult* per_user) {
  if (config.mode != Mode::kClustered) return fit(data, config);
  const ClusterInit init = init_clusters(data, config, per_user);
  return fit_kcmtrf(data, config, &init);
}

TrainedModel wrap(const SparseRatingDataset& train, const TrainConfig& config,
                  FitResult result) {
  TrainedModel model;
  model.config = config;
  model.level_vocab.assign(train.level_vocab().begin(), train.level_vocab().end());
  model.user_ids.assign(train.user_ids().begin(), train.user_ids().end());
  model.item_ids.assign(train.item_ids().begin(), train.item_ids().end());
  model.fit = std::move(result);
  return model;
}

}  // namespace

std::vector<double> default_lambda_grid() {
  std::vector<double> out;
  for (int k = -4; k <= 4; ++k) out.push_back(std::pow(10.0, 0.5 * k));
  return out;
}

std::vector<std::size_t> default_cluster_grid() {
  return {2, 3, 5, 10, 20, 30, 50, 75, 100};
}

std::vector<GridCell> GridSpec::cells() const {
  const bool clustered = base.mode == Mode::kClustered;
  if (lambdas.empty() || ranks.empty() || (clustered && clusters.empty())) {
    fail(ErrorCode::kInvalidArgument, "empty hyperparameter grid");
  }
  const std::vector<std::size_t> ks =
      clustered ? clusters : std::vector<std::size_t>{1};
  std::vector<GridCell> out;
  for (std::size_t d : ranks) {
    for (std::size_t k : ks) {
      for (double lu : lambdas) {
        if (cross_lambdas) {
          for (double lv : lambdas) out.push_back({k, lu, lv, d});
        } else {
          out.push_back({k, lu, lu, d});
        }
      }
    }
  }
  return out;
}

TrainConfig GridSpec::config_for(const GridCell& cell) const {
  TrainConfig c = base;
  c.clusters = cell.clusters;
  c.reg.lambda_u = cell.lambda_u;
  c.reg.lambda_v = cell.lambda_v;
  c.rank = cell.rank;
  c.validate();
  return c;
}

std::size_t select_best(std::span<const CellResult> results) {
  if (results.empty()) fail(ErrorCode::kInvalidArgument, "no grid results");
  std::size_t best = 0;
  for (std::size_t k = 1; k < results.size(); ++k) {
    const CellResult& a = results[k];
    const CellResult& b = results[best];
    if (std::tie(a.validation.mse, a.cell.clusters, a.cell.lambda_u) <
        std::tie(b.validation.mse, b.cell.clusters, b.cell.lambda_u)) {
      best = k;
    }
  }
  return best;
}

GridEvaluator::GridEvaluator(const SparseRatingDataset& train,
                             const SparseRatingDataset& validation, GridSpec spec)
    : train_(compact(train)),
      validation_(validation),
      data_(TrainingData::from_dataset(train_)),
      spec_(std::move(spec)) {
  spec_.base.validate();
}

const FitResult& GridEvaluator::per_user_fit(const GridCell& cell) {
  const InitKey key{cell.lambda_u, cell.lambda_v, cell.rank};
  std::shared_ptr<FitResult> slot;
  {
    std::lock_guard lock(init_mutex_);
    auto& entry = init_cache_[key];
    if (!entry) {
      TrainConfig c = spec_.config_for(cell);
      c.mode = Mode::kPerUser;
      entry = std::make_shared<FitResult>(fit_ncmtrf(data_, c));
    }
    slot = entry;
  }
  return *slot;
}

CellResult GridEvaluator::evaluate(const GridCell& cell) {
  const auto start = std::chrono::steady_clock::now();
  const TrainConfig config = spec_.config_for(cell);
  const FitResult* per_user =
      config.mode == Mode::kClustered ? &per_user_fit(cell) : nullptr;
  FitResult result = fit_cell(data_, config, per_user);

  CellResult out;
  out.cell = cell;
  out.objective = result.objective();
  out.iterations = static_cast<int>(result.iterations.size());
  out.converged = result.converged;
  const TrainedModel model = wrap(train_, config, std::move(result));
  out.validation = evaluate_model(model, validation_, /*skip_unknown=*/true);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                              start)
                    .count();
  return out;
}

std::vector<CellResult> GridEvaluator::evaluate_all(
    std::span<const GridCell> cells, unsigned threads,
    const std::function<void(std::size_t, const CellResult&)>& on_done) {
  std::vector<CellResult> results(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex done_mutex;
  std::exception_ptr failure;

  auto worker = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= cells.size()) return;
      try {
        results[k] = evaluate(cells[k]);
        std::lock_guard lock(done_mutex);
        if (on_done && !failure) on_done(k, results[k]);
      } catch (...) {
        std::lock_guard lock(done_mutex);
        if (!failure) failure = std::current_exception();
        next.store(cells.size());
        return;
      }
    }
  };
  threads = std::max(1u, threads);
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return results;
}

FinalReport retrain_and_test(const SparseRatingDataset& train,
                             const SparseRatingDataset& validation,
                             const SparseRatingDataset& test,
                             const GridSpec& spec, const GridCell& cell) {
  const SparseRatingDataset full = compact(concatenate(train, validation));
  const TrainingData data = TrainingData::from_dataset(full);
  const TrainConfig config = spec.config_for(cell);
  FitResult per_user;
  if (config.mode == Mode::kClustered) {
    TrainConfig c = config;
    c.mode = Mode::kPerUser;
    per_user = fit_ncmtrf(data, c);
  }
  FinalReport out;
  out.model = wrap(full, config,
                   fit_cell(data, config,
                            config.mode == Mode::kClustered ? &per_user : nullptr));
  out.test = evaluate_model(out.model, test, /*skip_unknown=*/true);
  return out;
}

}  // namespace cmtrf
