#include "cmtrf/cmtrf.h"

#include <cmath>
#include <fstream>
#include <new>
#include <string>

#include "core/error.hpp"
#include "core/model_io.hpp"
#include "core/synthgen.hpp"
#include "core/tuning.hpp"

struct cmtrf_dataset {
  cmtrf::SparseRatingDataset data;
};

struct cmtrf_split {
  cmtrf::PreparedSplit split;
};

struct cmtrf_model {
  cmtrf::TrainedModel model;
};

struct cmtrf_grid {
  cmtrf::GridEvaluator evaluator;
};

namespace {

thread_local std::string g_last_error;

cmtrf_status set_error(cmtrf_status status, const char* what) {
  g_last_error = what;
  return status;
}

template <typename F>
cmtrf_status guarded(F&& body) {
  try {
    body();
    return CMTRF_OK;
  } catch (const cmtrf::Error& e) {
    return set_error(static_cast<cmtrf_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(CMTRF_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(CMTRF_ERR_INTERNAL, e.what());
  } catch (...) {
    return set_error(CMTRF_ERR_INTERNAL, "unknown failure");
  }
}

void require(bool ok, const char* what) {
  if (!ok) cmtrf::fail(cmtrf::ErrorCode::kInvalidArgument, what);
}

template <typename T>
void require_enum(int value, int limit, const char* what) {
  require(value >= 0 && value < limit, what);
}

cmtrf::TrainConfig to_config(const cmtrf_train_options& o) {
  require_enum<cmtrf_mode>(o.mode, 4, "unknown mode");
  require_enum<cmtrf_divergence>(o.divergence, 3, "unknown divergence");
  cmtrf::TrainConfig c;
  c.mode = static_cast<cmtrf::Mode>(o.mode);
  c.clusters = o.clusters;
  c.epsilon = o.epsilon;
  c.reg.lambda_u = o.lambda_u;
  c.reg.lambda_v = o.lambda_v;
  c.rank = o.rank;
  c.outer_max_iters = o.outer_max_iters;
  c.inner_sweeps = o.inner_sweeps;
  c.tolerance = o.tolerance;
  c.seed = o.seed;
  c.divergence = cmtrf::Divergence(static_cast<cmtrf::DivergenceKind>(o.divergence));
  c.validate();
  return c;
}

cmtrf_train_options from_config(const cmtrf::TrainConfig& c) {
  cmtrf_train_options o;
  o.mode = static_cast<int>(c.mode);
  o.clusters = c.clusters;
  o.epsilon = c.epsilon;
  o.lambda_u = c.reg.lambda_u;
  o.lambda_v = c.reg.lambda_v;
  o.rank = c.rank;
  o.outer_max_iters = c.outer_max_iters;
  o.inner_sweeps = c.inner_sweeps;
  o.tolerance = c.tolerance;
  o.seed = c.seed;
  o.divergence = static_cast<int>(c.divergence.kind());
  return o;
}

cmtrf_metrics to_c(const cmtrf::Metrics& m) {
  return {m.mse, m.mae, m.count, m.skipped};
}

cmtrf::GridCell to_cell(const cmtrf_grid_cell& c) {
  return {c.clusters, c.lambda_u, c.lambda_v, c.rank};
}

cmtrf_cell_result to_c(const cmtrf::CellResult& r) {
  cmtrf_cell_result out;
  out.cell = {r.cell.clusters, r.cell.lambda_u, r.cell.lambda_v, r.cell.rank};
  out.validation = to_c(r.validation);
  out.objective = r.objective;
  out.iterations = r.iterations;
  out.converged = r.converged ? 1 : 0;
  out.seconds = r.seconds;
  return out;
}

cmtrf::CellResult from_c(const cmtrf_cell_result& r) {
  cmtrf::CellResult out;
  out.cell = to_cell(r.cell);
  out.validation = {r.validation.mse, r.validation.mae, r.validation.count,
                    r.validation.skipped};
  out.objective = r.objective;
  out.iterations = r.iterations;
  out.converged = r.converged != 0;
  out.seconds = r.seconds;
  return out;
}

template <typename Src, typename Dst>
void copy_out(const Src& src, Dst* out, std::size_t capacity) {
  require(out != nullptr || capacity == 0, "null output buffer");
  const std::size_t n = std::min(capacity, static_cast<std::size_t>(src.size()));
  for (std::size_t k = 0; k < n; ++k) out[k] = src[k];
}

}  // namespace

extern "C" {

const char* cmtrf_last_error(void) { return g_last_error.c_str(); }

const char* cmtrf_status_name(cmtrf_status status) {
  switch (status) {
    case CMTRF_OK: return "ok";
    case CMTRF_ERR_INVALID_ARGUMENT: return "invalid argument";
    case CMTRF_ERR_IO: return "i/o error";
    case CMTRF_ERR_PARSE: return "parse error";
    case CMTRF_ERR_DOMAIN: return "domain error";
    case CMTRF_ERR_INDEX: return "index error";
    case CMTRF_ERR_EMPTY_DATA: return "empty data";
    case CMTRF_ERR_VOCABULARY_MISMATCH: return "vocabulary mismatch";
    case CMTRF_ERR_NUMERICAL: return "numerical failure";
    case CMTRF_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* cmtrf_version(void) { return "0.1.0"; }

void cmtrf_load_options_init(cmtrf_load_options* opts) {
  if (!opts) return;
  const cmtrf::ColumnSpec spec;
  opts->format = CMTRF_FORMAT_TSV;
  opts->user_col = spec.user;
  opts->item_col = spec.item;
  opts->rating_col = spec.rating;
  opts->timestamp_col = spec.timestamp;
  opts->header_row = spec.header_row ? 1 : 0;
}

cmtrf_status cmtrf_dataset_load(const char* path, const cmtrf_load_options* opts,
                                cmtrf_dataset** out) {
  return guarded([&] {
    require(path && out, "null argument");
    cmtrf_load_options o;
    cmtrf_load_options_init(&o);
    if (opts) o = *opts;
    require_enum<cmtrf_text_format>(o.format, 2, "unknown text format");
    cmtrf::ColumnSpec spec{o.user_col, o.item_col, o.rating_col, o.timestamp_col,
                           o.header_row != 0};
    *out = new cmtrf_dataset{cmtrf::load_triplets_file(
        path, static_cast<cmtrf::TextFormat>(o.format), spec)};
  });
}

cmtrf_status cmtrf_dataset_save(const cmtrf_dataset* data, const char* path) {
  return guarded([&] {
    require(data && path, "null argument");
    cmtrf::write_triplets_file(data->data, path);
  });
}

cmtrf_status cmtrf_dataset_concatenate(const cmtrf_dataset* a,
                                       const cmtrf_dataset* b,
                                       cmtrf_dataset** out) {
  return guarded([&] {
    require(a && b && out, "null argument");
    *out = new cmtrf_dataset{cmtrf::concatenate(a->data, b->data)};
  });
}

void cmtrf_dataset_free(cmtrf_dataset* data) { delete data; }

cmtrf_status cmtrf_dataset_info_get(const cmtrf_dataset* data,
                                    cmtrf_dataset_info* info) {
  return guarded([&] {
    require(data && info, "null argument");
    const auto& d = data->data;
    *info = {d.num_users(), d.num_items(),       d.num_levels(),
             d.size(),      d.warnings.size(), d.has_timestamps() ? 1 : 0};
  });
}

cmtrf_status cmtrf_dataset_levels(const cmtrf_dataset* data, double* out,
                                  size_t capacity) {
  return guarded([&] {
    require(data != nullptr, "null dataset");
    copy_out(data->data.level_vocab(), out, capacity);
  });
}

const char* cmtrf_dataset_warning(const cmtrf_dataset* data, size_t k) {
  if (!data || k >= data->data.warnings.size()) return nullptr;
  return data->data.warnings[k].c_str();
}

void cmtrf_split_options_init(cmtrf_split_options* opts) {
  if (!opts) return;
  const cmtrf::SplitSpec spec;
  opts->strategy = CMTRF_SPLIT_CHRONOLOGICAL;
  opts->seed = spec.seed;
  opts->train_fraction = spec.train_fraction;
  opts->validation_fraction = spec.validation_fraction;
}

cmtrf_status cmtrf_split_prepare(const cmtrf_dataset* data,
                                 const cmtrf_split_options* opts,
                                 cmtrf_split** out) {
  return guarded([&] {
    require(data && out, "null argument");
    cmtrf_split_options o;
    cmtrf_split_options_init(&o);
    if (opts) o = *opts;
    require_enum<cmtrf_split_strategy>(o.strategy, 2, "unknown split strategy");
    cmtrf::SplitSpec spec;
    spec.strategy = o.strategy == CMTRF_SPLIT_UNIFORM
                        ? cmtrf::SplitStrategy::kUniform
                        : cmtrf::SplitStrategy::kChronological;
    spec.seed = o.seed;
    spec.train_fraction = o.train_fraction;
    spec.validation_fraction = o.validation_fraction;
    *out = new cmtrf_split{cmtrf::preprocess(data->data, spec)};
  });
}

cmtrf_status cmtrf_split_part(const cmtrf_split* split, int part,
                              cmtrf_dataset** out) {
  return guarded([&] {
    require(split && out, "null argument");
    require_enum<cmtrf_part>(part, 3, "unknown split part");
    const auto& s = split->split;
    const cmtrf::SparseRatingDataset& d =
        part == CMTRF_PART_TRAIN ? s.train
        : part == CMTRF_PART_VALIDATION ? s.validation
                                        : s.test;
    *out = new cmtrf_dataset{d};
  });
}

cmtrf_status cmtrf_split_counts_get(const cmtrf_split* split,
                                    cmtrf_split_counts* counts) {
  return guarded([&] {
    require(split && counts, "null argument");
    const auto& c = split->split.counts;
    *counts = {c.input, c.constant_users_removed, c.after_constant_filter, c.train,
               c.validation, c.test, c.cold_test_dropped};
  });
}

void cmtrf_split_free(cmtrf_split* split) { delete split; }

void cmtrf_synth_options_init(cmtrf_synth_options* opts) {
  if (!opts) return;
  const cmtrf::SynthConfig c;
  *opts = {static_cast<int>(c.kind), c.num_users, c.num_items, c.rank, c.levels,
           c.epsilon, c.factor_mean, c.factor_std, c.density, c.seed};
}

cmtrf_status cmtrf_synth_generate(const cmtrf_synth_options* opts,
                                  const char* truth_json_path,
                                  cmtrf_dataset** out) {
  return guarded([&] {
    require(opts && out, "null argument");
    require_enum<cmtrf_synth_kind>(opts->kind, 2, "unknown synthetic kind");
    cmtrf::SynthConfig c;
    c.kind = static_cast<cmtrf::SynthKind>(opts->kind);
    c.num_users = opts->num_users;
    c.num_items = opts->num_items;
    c.rank = opts->rank;
    c.levels = opts->levels;
    c.epsilon = opts->epsilon;
    c.factor_mean = opts->factor_mean;
    c.factor_std = opts->factor_std;
    c.density = opts->density;
    c.seed = opts->seed;
    cmtrf::SynthResult res = cmtrf::generate(c);
    if (truth_json_path) cmtrf::write_truth_json(res, c, truth_json_path);
    *out = new cmtrf_dataset{std::move(res.dataset)};
  });
}

void cmtrf_train_options_init(cmtrf_train_options* opts) {
  const cmtrf::TrainConfig defaults;
  if (opts) *opts = from_config(defaults);
}

cmtrf_status cmtrf_mode_from_name(const char* name, int* mode) {
  return guarded([&] {
    require(name && mode, "null argument");
    *mode = static_cast<int>(cmtrf::mode_from_string(name));
  });
}

const char* cmtrf_mode_name(int mode) {
  if (mode < 0 || mode > 3) return nullptr;
  return cmtrf::to_string(static_cast<cmtrf::Mode>(mode)).data();
}

cmtrf_status cmtrf_model_train(const cmtrf_dataset* train,
                               const cmtrf_train_options* opts,
                               cmtrf_model** out) {
  return guarded([&] {
    require(train && opts && out, "null argument");
    *out = new cmtrf_model{cmtrf::train_model(train->data, to_config(*opts))};
  });
}

cmtrf_status cmtrf_model_save(const cmtrf_model* model, const char* prefix) {
  return guarded([&] {
    require(model && prefix, "null argument");
    cmtrf::save_model(model->model, prefix);
  });
}

cmtrf_status cmtrf_model_load(const char* prefix, cmtrf_model** out) {
  return guarded([&] {
    require(prefix && out, "null argument");
    *out = new cmtrf_model{cmtrf::load_model(prefix)};
  });
}

cmtrf_status cmtrf_model_write_trace(const cmtrf_model* model, const char* path) {
  return guarded([&] {
    require(model && path, "null argument");
    std::ofstream f(path);
    if (!f) {
      cmtrf::fail(cmtrf::ErrorCode::kIo, std::string("cannot write '") + path + "'");
    }
    cmtrf::write_trace_jsonl(model->model, f);
  });
}

void cmtrf_model_free(cmtrf_model* model) { delete model; }

cmtrf_status cmtrf_model_info_get(const cmtrf_model* model,
                                  cmtrf_model_info* info) {
  return guarded([&] {
    require(model && info, "null argument");
    const auto& m = model->model;
    info->mode = static_cast<int>(m.config.mode);
    info->num_users = m.fit.model.num_users();
    info->num_items = m.fit.model.num_items();
    info->rank = m.fit.model.rank();
    info->num_levels = m.level_vocab.size();
    info->num_transforms = m.fit.transforms.transforms.size();
    info->trace_length = m.fit.trace.size();
    info->num_warnings = m.fit.warnings.size();
    info->converged = m.fit.converged ? 1 : 0;
    info->objective = m.fit.trace.empty() ? NAN : m.fit.objective();
    info->seconds = m.fit.seconds;
  });
}

cmtrf_status cmtrf_model_options(const cmtrf_model* model,
                                 cmtrf_train_options* opts) {
  return guarded([&] {
    require(model && opts, "null argument");
    *opts = from_config(model->model.config);
  });
}

cmtrf_status cmtrf_model_trace(const cmtrf_model* model, double* out,
                               size_t capacity) {
  return guarded([&] {
    require(model != nullptr, "null model");
    copy_out(model->model.fit.trace, out, capacity);
  });
}

cmtrf_status cmtrf_model_transform(const cmtrf_model* model, size_t k,
                                   double* out, size_t capacity) {
  return guarded([&] {
    require(model != nullptr, "null model");
    const auto& ts = model->model.fit.transforms.transforms;
    if (k >= ts.size()) cmtrf::fail(cmtrf::ErrorCode::kIndex, "transform index out of range");
    copy_out(ts[k].values(), out, capacity);
  });
}

cmtrf_status cmtrf_model_route(const cmtrf_model* model, size_t* out,
                               size_t capacity) {
  return guarded([&] {
    require(model != nullptr, "null model");
    copy_out(model->model.fit.transforms.route, out, capacity);
  });
}

const char* cmtrf_model_warning(const cmtrf_model* model, size_t k) {
  if (!model || k >= model->model.fit.warnings.size()) return nullptr;
  return model->model.fit.warnings[k].c_str();
}

cmtrf_status cmtrf_model_predict(const cmtrf_model* model, const char* user,
                                 const char* item, double* out) {
  return guarded([&] {
    require(model && user && item && out, "null argument");
    const auto& m = model->model;
    const cmtrf::RatingPredictor predictor(m.fit.model, m.fit.transforms,
                                           m.level_vocab, m.config.divergence);
    *out = predictor.predict(m.user_index(user), m.item_index(item));
  });
}

cmtrf_status cmtrf_model_evaluate(const cmtrf_model* model,
                                  const cmtrf_dataset* data, int skip_unknown,
                                  cmtrf_metrics* out) {
  return guarded([&] {
    require(model && data && out, "null argument");
    *out = to_c(cmtrf::evaluate_model(model->model, data->data, skip_unknown != 0));
  });
}

size_t cmtrf_default_lambda_grid(double* out, size_t capacity) {
  const auto grid = cmtrf::default_lambda_grid();
  if (out) {
    for (std::size_t k = 0; k < std::min(capacity, grid.size()); ++k) out[k] = grid[k];
  }
  return grid.size();
}

size_t cmtrf_default_cluster_grid(size_t* out, size_t capacity) {
  const auto grid = cmtrf::default_cluster_grid();
  if (out) {
    for (std::size_t k = 0; k < std::min(capacity, grid.size()); ++k) out[k] = grid[k];
  }
  return grid.size();
}

cmtrf_status cmtrf_grid_create(const cmtrf_dataset* train,
                               const cmtrf_dataset* validation,
                               const cmtrf_train_options* base,
                               cmtrf_grid** out) {
  return guarded([&] {
    require(train && validation && base && out, "null argument");
    cmtrf::GridSpec spec;
    spec.base = to_config(*base);
    *out = new cmtrf_grid{
        cmtrf::GridEvaluator(train->data, validation->data, std::move(spec))};
  });
}

cmtrf_status cmtrf_grid_evaluate(cmtrf_grid* grid, const cmtrf_grid_cell* cells,
                                 size_t n, unsigned threads,
                                 cmtrf_cell_callback callback, void* user_data,
                                 cmtrf_cell_result* results) {
  return guarded([&] {
    require(grid && results && (cells || n == 0), "null argument");
    std::vector<cmtrf::GridCell> list;
    for (std::size_t k = 0; k < n; ++k) list.push_back(to_cell(cells[k]));
    std::function<void(std::size_t, const cmtrf::CellResult&)> hook;
    if (callback) {
      hook = [&](std::size_t k, const cmtrf::CellResult& r) {
        const cmtrf_cell_result c = to_c(r);
        callback(k, &c, user_data);
      };
    }
    const auto out = grid->evaluator.evaluate_all(list, threads, hook);
    for (std::size_t k = 0; k < n; ++k) results[k] = to_c(out[k]);
  });
}

void cmtrf_grid_free(cmtrf_grid* grid) { delete grid; }

cmtrf_status cmtrf_select_best(const cmtrf_cell_result* results, size_t n,
                               size_t* best) {
  return guarded([&] {
    require(best && (results || n == 0), "null argument");
    std::vector<cmtrf::CellResult> list;
    for (std::size_t k = 0; k < n; ++k) list.push_back(from_c(results[k]));
    *best = cmtrf::select_best(list);
  });
}

cmtrf_status cmtrf_retrain_and_test(const cmtrf_dataset* train,
                                    const cmtrf_dataset* validation,
                                    const cmtrf_dataset* test,
                                    const cmtrf_train_options* base,
                                    const cmtrf_grid_cell* cell,
                                    cmtrf_model** model,
                                    cmtrf_metrics* test_metrics) {
  return guarded([&] {
    require(train && validation && test && base && cell && model && test_metrics,
            "null argument");
    cmtrf::GridSpec spec;
    spec.base = to_config(*base);
    cmtrf::FinalReport report = cmtrf::retrain_and_test(
        train->data, validation->data, test->data, spec, to_cell(*cell));
    *test_metrics = to_c(report.test);
    *model = new cmtrf_model{std::move(report.model)};
  });
}

}  // extern "C"
