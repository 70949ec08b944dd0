#include "core/cmtrf.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "core/error.hpp"
#include "core/kmeans.hpp"

namespace cmtrf {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

enum class Grouping { kGlobal, kPerUser, kClusters, kFixed };

constexpr double kMaxExtrapolation = 64.0;

RatingScaleTransform fit_aggregate(const LevelAggregate& agg,
                                   const TrainConfig& config) {
  return fit_margin_isotonic(
      to_isotonic_problem(agg, config.divergence, config.epsilon),
      config.divergence);
}

TransformSet single_transform(const TrainingData& data,
                              RatingScaleTransform transform) {
  TransformSet set;
  set.transforms.push_back(std::move(transform));
  set.route.assign(data.num_users(), 0);
  return set;
}

// Moves the worst-fit user of a multi-member cluster into each empty
// cluster, seeding it with that user's own optimal transform.
std::size_t repair_empty_clusters(const TrainingData& data,
                                  std::span<const LevelAggregate> aggs,
                                  TransformSet& state,
                                  const TrainConfig& config,
                                  std::vector<std::string>& warnings) {
  const std::size_t k = state.transforms.size();
  std::vector<std::size_t> sizes(k, 0);
  for (std::size_t u = 0; u < data.num_users(); ++u) {
    if (data.user_has_ratings(u)) ++sizes[state.route[u]];
  }
  std::size_t repairs = 0;
  for (std::size_t c = 0; c < k; ++c) {
    if (sizes[c] != 0) continue;
    std::size_t worst = data.num_users();
    double worst_cost = -1.0;
    for (std::size_t u = 0; u < data.num_users(); ++u) {
      if (!data.user_has_ratings(u) || sizes[state.route[u]] < 2) continue;
      const double cost =
          transform_cost(aggs[u], state.for_user(u), config.divergence);
      if (cost > worst_cost) {
        worst_cost = cost;
        worst = u;
      }
    }
    if (worst == data.num_users()) {
      warnings.push_back("cluster " + std::to_string(c) +
                         " is empty and no user can be moved into it");
      continue;
    }
    state.transforms[c] = fit_aggregate(aggs[worst], config);
    --sizes[state.route[worst]];
    state.route[worst] = c;
    sizes[c] = 1;
    ++repairs;
  }
  return repairs;
}

void transform_step(const TrainingData& data,
                    std::span<const LevelAggregate> aggs, Grouping grouping,
                    TransformSet& state, const TrainConfig& config) {
  const std::size_t L = data.num_levels();
  switch (grouping) {
    case Grouping::kFixed:
      return;
    case Grouping::kPerUser:
      for (std::size_t u = 0; u < data.num_users(); ++u) {
        if (!aggs[u].empty()) state.transforms[u] = fit_aggregate(aggs[u], config);
      }
      return;
    case Grouping::kGlobal:
    case Grouping::kClusters: {
      std::vector<LevelAggregate> pooled(state.transforms.size(),
                                         LevelAggregate(L));
      for (std::size_t u = 0; u < data.num_users(); ++u) {
        pooled[state.route[u]].merge(aggs[u]);
      }
      for (std::size_t c = 0; c < pooled.size(); ++c) {
        if (!pooled[c].empty()) state.transforms[c] = fit_aggregate(pooled[c], config);
      }
      return;
    }
  }
}

// x + beta * (x - prev) for every transform and both factor matrices;
// false when an extrapolated transform leaves the margin set.
bool extrapolate(const TransformSet& prev_state, const FactorModel& prev_model,
                 const TransformSet& state, const FactorModel& model, double beta,
                 double epsilon, TransformSet& out_state, FactorModel& out_model) {
  out_state = state;
  for (std::size_t c = 0; c < state.transforms.size(); ++c) {
    const auto now = state.transforms[c].values();
    const auto before = prev_state.transforms[c].values();
    std::vector<double> v(now.size());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = now[k] + beta * (now[k] - before[k]);
    for (std::size_t k = 1; k < v.size(); ++k) {
      if (!(v[k - 1] - v[k] >= epsilon)) return false;
    }
    out_state.transforms[c] = RatingScaleTransform(std::move(v), epsilon);
  }
  out_model.user = model.user + beta * (model.user - prev_model.user);
  out_model.item = model.item + beta * (model.item - prev_model.item);
  return true;
}

FitResult alternate(const TrainingData& data, const TrainConfig& config,
                    Mode mode, Grouping grouping, bool freeze_assignments,
                    TransformSet state, FactorModel model) {
  const auto start = Clock::now();
  const Divergence& div = config.divergence;
  FitResult res;
  res.mode = mode;

  double prev = cmtrf_objective(data, state, model, config.reg, div);
  res.trace.push_back(prev);
  const bool accelerate = config.extrapolate && div.is_squared_loss();
  TransformSet last_state;
  FactorModel last_model;
  double beta = 1.0;
  for (int it = 1; it <= config.outer_max_iters; ++it) {
    IterationRecord rec;
    rec.iteration = it;
    rec.after_assignment = prev;
    rec.after_transform = prev;

    const auto t_transform = Clock::now();
    if (grouping != Grouping::kFixed) {
      const std::vector<double> scores = observed_scores(model, data.pattern);
      const std::vector<LevelAggregate> aggs = user_aggregates(data, scores);
      if (grouping == Grouping::kClusters && !freeze_assignments) {
        std::vector<std::size_t> next =
            assign_clusters(aggs, state.transforms, div);
        for (std::size_t u = 0; u < next.size(); ++u) {
          if (data.user_has_ratings(u) && next[u] != state.route[u]) ++rec.reassigned;
        }
        state.route = std::move(next);
        rec.empty_repairs =
            repair_empty_clusters(data, aggs, state, config, res.warnings);
        rec.reassigned += rec.empty_repairs;
        rec.after_assignment = cmtrf_objective(data, state, model, config.reg, div);
      }
      transform_step(data, aggs, grouping, state, config);
      rec.after_transform = cmtrf_objective(data, state, model, config.reg, div);
    }
    rec.transform_seconds = seconds_since(t_transform);

    const auto t_factor = Clock::now();
    model = solve_factors(data.pattern, transform_targets(data, state),
                          std::move(model), config.reg, div,
                          config.inner_sweeps);
    rec.factor_seconds = seconds_since(t_factor);
    rec.objective = cmtrf_objective(data, state, model, config.reg, div);
    if (!std::isfinite(rec.objective)) {
      fail(ErrorCode::kNumerical, "objective became non-finite");
    }

    // Safeguarded extrapolation along the last outer step: kept only when
    // it lowers the objective, so the trace stays non-increasing.
    if (accelerate && it > 1 && rec.reassigned == 0) {
      TransformSet try_state;
      FactorModel try_model;
      bool kept = false;
      if (extrapolate(last_state, last_model, state, model, beta, config.epsilon,
                      try_state, try_model)) {
        const double obj = cmtrf_objective(data, try_state, try_model, config.reg, div);
        if (obj < rec.objective) {
          rec.objective = obj;
          rec.extrapolation = beta;
          state = std::move(try_state);
          model = std::move(try_model);
          kept = true;
        }
      }
      beta = kept ? std::min(2.0 * beta, kMaxExtrapolation) : 1.0;
    }
    if (accelerate) {
      last_state = state;
      last_model = model;
    }

    res.trace.push_back(rec.objective);
    res.iterations.push_back(rec);
    const double rel =
        (prev - rec.objective) / std::max(std::abs(prev), 1e-300);
    prev = rec.objective;
    if (rel < config.tolerance && rec.reassigned == 0) {
      res.converged = true;
      break;
    }
  }
  res.transforms = std::move(state);
  res.model = std::move(model);
  res.seconds = seconds_since(start);
  return res;
}

FactorModel starting_model(const TrainingData& data, const TrainConfig& config,
                           const FactorModel* warm) {
  if (warm == nullptr) return bootstrap_model(data, config);
  if (warm->num_users() != data.num_users() ||
      warm->num_items() != data.num_items() || warm->rank() != config.rank) {
    fail(ErrorCode::kInvalidArgument, "warm-start model shape mismatch");
  }
  return *warm;
}

}  // namespace

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::kOne: return "1cmtrf";
    case Mode::kPerUser: return "ncmtrf";
    case Mode::kClustered: return "kcmtrf";
    case Mode::kPlainMF: return "mf";
  }
  return "unknown";
}

Mode mode_from_string(std::string_view name) {
  if (name == "1cmtrf") return Mode::kOne;
  if (name == "ncmtrf") return Mode::kPerUser;
  if (name == "kcmtrf") return Mode::kClustered;
  if (name == "mf") return Mode::kPlainMF;
  fail(ErrorCode::kInvalidArgument, "unknown mode '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    fail(ErrorCode::kInvalidArgument, "epsilon must be finite and >= 0");
  }
  if (!(tolerance > 0.0)) fail(ErrorCode::kInvalidArgument, "tolerance must be > 0");
  if (rank < 1) fail(ErrorCode::kInvalidArgument, "rank must be >= 1");
  if (outer_max_iters < 1 || inner_sweeps < 1) {
    fail(ErrorCode::kInvalidArgument, "iteration counts must be >= 1");
  }
  if (mode == Mode::kClustered && clusters < 1) {
    fail(ErrorCode::kInvalidArgument, "K must be >= 1");
  }
  reg.validate();
}

TrainingData TrainingData::from_dataset(const SparseRatingDataset& data) {
  if (data.empty()) fail(ErrorCode::kEmptyData, "training set is empty");
  std::vector<UserItem> entries;
  entries.reserve(data.size());
  for (const Rating& r : data.ratings()) entries.emplace_back(r.user, r.item);
  TrainingData out;
  out.pattern = ObservationPattern(data.num_users(), data.num_items(), entries);
  out.levels.resize(data.size());
  const auto ratings = data.ratings();
  for (std::size_t k = 0; k < ratings.size(); ++k) {
    out.levels[out.pattern.position_of_entry(k)] = ratings[k].level;
  }
  out.level_vocab.assign(data.level_vocab().begin(), data.level_vocab().end());
  return out;
}

void LevelAggregate::merge(const LevelAggregate& other) {
  for (std::size_t l = 0; l < count_.size(); ++l) {
    count_[l] += other.count_[l];
    sum_[l] += other.sum_[l];
  }
}

bool LevelAggregate::empty() const {
  for (double c : count_) {
    if (c != 0.0) return false;
  }
  return true;
}

LevelAggregate aggregate_levels(std::span<const std::size_t> levels,
                                std::span<const double> scores,
                                std::size_t num_levels) {
  if (levels.size() != scores.size()) {
    fail(ErrorCode::kInvalidArgument, "one score per rating required");
  }
  LevelAggregate agg(num_levels);
  for (std::size_t k = 0; k < levels.size(); ++k) {
    if (levels[k] >= num_levels) fail(ErrorCode::kIndex, "level out of range");
    agg.add(levels[k], scores[k]);
  }
  return agg;
}

std::vector<LevelAggregate> user_aggregates(const TrainingData& data,
                                            std::span<const double> scores) {
  std::vector<LevelAggregate> out(data.num_users(),
                                  LevelAggregate(data.num_levels()));
  for (std::size_t u = 0; u < data.num_users(); ++u) {
    for (std::size_t pos = data.pattern.user_begin(u);
         pos < data.pattern.user_end(u); ++pos) {
      out[u].add(data.levels[pos], scores[pos]);
    }
  }
  return out;
}

IsotonicProblem to_isotonic_problem(const LevelAggregate& agg,
                                    const Divergence& div, double epsilon) {
  const std::size_t L = agg.levels();
  IsotonicProblem p;
  p.epsilon = epsilon;
  p.targets.resize(L, 0.0);
  p.weights.resize(L, 0.0);
  for (std::size_t level = 0; level < L; ++level) {
    const std::size_t pos = L - 1 - level;
    if (agg.missing(level)) continue;
    p.weights[pos] = agg.count(level);
    p.targets[pos] = div.grad_psi(agg.mean(level));
  }
  return p;
}

double transform_cost(const LevelAggregate& agg,
                      const RatingScaleTransform& transform,
                      const Divergence& div) {
  double cost = 0.0;
  for (std::size_t level = 0; level < agg.levels(); ++level) {
    if (agg.missing(level)) continue;
    cost += agg.count(level) *
            div.fenchel_young_gap(transform.at_level(level), agg.mean(level));
  }
  return cost;
}

std::vector<std::size_t> assign_clusters(
    std::span<const LevelAggregate> aggregates,
    std::span<const RatingScaleTransform> transforms, const Divergence& div) {
  if (transforms.empty()) fail(ErrorCode::kInvalidArgument, "K must be >= 1");
  std::vector<std::size_t> out(aggregates.size(), 0);
  for (std::size_t u = 0; u < aggregates.size(); ++u) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < transforms.size(); ++c) {
      const double cost = transform_cost(aggregates[u], transforms[c], div);
      if (cost < best) {
        best = cost;
        out[u] = c;
      }
    }
  }
  return out;
}

std::vector<double> transform_targets(const TrainingData& data,
                                      const TransformSet& transforms) {
  std::vector<double> targets(data.pattern.size());
  for (std::size_t u = 0; u < data.num_users(); ++u) {
    const RatingScaleTransform& t = transforms.for_user(u);
    for (std::size_t pos = data.pattern.user_begin(u);
         pos < data.pattern.user_end(u); ++pos) {
      targets[pos] = t.at_level(data.levels[pos]);
    }
  }
  return targets;
}

double cmtrf_objective(const TrainingData& data, const TransformSet& transforms,
                       const FactorModel& model, const RegularizationConfig& reg,
                       const Divergence& div) {
  return factor_objective(data.pattern, transform_targets(data, transforms),
                          model, reg, div);
}

FactorModel bootstrap_model(const TrainingData& data, const TrainConfig& config) {
  config.validate();
  FactorModel init = random_factor_model(data.num_users(), data.num_items(),
                                         config.rank, config.seed);
  const TransformSet base = single_transform(
      data, RatingScaleTransform::base(data.level_vocab, config.epsilon));
  return solve_factors(data.pattern, transform_targets(data, base),
                       std::move(init), config.reg, config.divergence,
                       config.inner_sweeps);
}

FitResult fit_1cmtrf(const TrainingData& data, const TrainConfig& config,
                     const FactorModel* warm) {
  config.validate();
  FactorModel model = starting_model(data, config, warm);
  return alternate(data, config, Mode::kOne, Grouping::kGlobal, false,
                   single_transform(data, RatingScaleTransform::base(
                                              data.level_vocab, config.epsilon)),
                   std::move(model));
}

FitResult fit_plain_mf(const TrainingData& data, const TrainConfig& config,
                       const FactorModel* warm) {
  config.validate();
  FactorModel model = starting_model(data, config, warm);
  return alternate(data, config, Mode::kPlainMF, Grouping::kFixed, false,
                   single_transform(data, RatingScaleTransform::base(
                                              data.level_vocab, config.epsilon)),
                   std::move(model));
}

FitResult fit_ncmtrf(const TrainingData& data, const TrainConfig& config,
                     const FactorModel* warm) {
  config.validate();
  FactorModel model = starting_model(data, config, warm);
  TransformSet state;
  state.transforms.assign(
      data.num_users(),
      RatingScaleTransform::base(data.level_vocab, config.epsilon));
  state.route.resize(data.num_users());
  for (std::size_t u = 0; u < data.num_users(); ++u) state.route[u] = u;
  return alternate(data, config, Mode::kPerUser, Grouping::kPerUser, false,
                   std::move(state), std::move(model));
}

ClusterInit init_clusters(const TrainingData& data, const TrainConfig& config,
                          const FitResult* per_user, bool warm_factors) {
  config.validate();
  const std::size_t k = config.clusters;
  if (k < 1 || k > data.num_users()) {
    fail(ErrorCode::kInvalidArgument,
         "K must satisfy 1 <= K <= number of users, got " + std::to_string(k));
  }
  FitResult computed;
  if (per_user == nullptr) {
    computed = fit_ncmtrf(data, config);
    per_user = &computed;
  }
  if (per_user->transforms.route.size() != data.num_users()) {
    fail(ErrorCode::kInvalidArgument, "per-user fit does not match the data");
  }

  std::vector<std::vector<double>> points;
  points.reserve(data.num_users());
  for (std::size_t u = 0; u < data.num_users(); ++u) {
    const auto v = per_user->transforms.for_user(u).values();
    points.emplace_back(v.begin(), v.end());
  }
  const KMeansResult km = lloyd_kmeans(points, k, config.seed);

  ClusterInit out;
  out.model = warm_factors ? per_user->model : bootstrap_model(data, config);
  if (km.distinct_points < k) {
    out.warnings.push_back("K=" + std::to_string(k) + " exceeds the " +
                           std::to_string(km.distinct_points) +
                           " distinct transform vectors; duplicate centers");
  }
  if (km.empty_repairs > 0) {
    out.warnings.push_back("k-means repaired " +
                           std::to_string(km.empty_repairs) + " empty clusters");
  }
  for (const auto& center : km.centers) {
    // Averages of margin-feasible vectors stay feasible; project anyway so
    // round-off cannot trip the invariant check.
    IsotonicProblem p{center, std::vector<double>(center.size(), 1.0),
                      config.epsilon};
    out.clusters.transforms.push_back(fit_margin_isotonic(p, Divergence{}));
  }
  out.clusters.route = km.labels;
  return out;
}

FitResult fit_kcmtrf(const TrainingData& data, const TrainConfig& config,
                     const ClusterInit* init, ClusterFitOptions options) {
  config.validate();
  ClusterInit computed;
  if (init == nullptr) {
    computed = init_clusters(data, config);
    init = &computed;
  }
  if (init->clusters.route.size() != data.num_users()) {
    fail(ErrorCode::kInvalidArgument, "cluster state does not match the data");
  }
  FitResult res = alternate(data, config, Mode::kClustered, Grouping::kClusters,
                            options.freeze_assignments, init->clusters,
                            starting_model(data, config, &init->model));
  res.warnings.insert(res.warnings.begin(), init->warnings.begin(),
                      init->warnings.end());
  return res;
}

FitResult fit(const TrainingData& data, const TrainConfig& config) {
  switch (config.mode) {
    case Mode::kOne: return fit_1cmtrf(data, config);
    case Mode::kPerUser: return fit_ncmtrf(data, config);
    case Mode::kClustered: return fit_kcmtrf(data, config);
    case Mode::kPlainMF: return fit_plain_mf(data, config);
  }
  fail(ErrorCode::kInvalidArgument, "unknown mode");
}

}  // namespace cmtrf
