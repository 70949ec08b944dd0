#include "core/model_io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "core/error.hpp"

namespace cmtrf {
namespace {

using nlohmann::json;

void print_row(std::ostream& out, const RowMatrix& mat, Eigen::Index r) {
  char buf[40];
  for (Eigen::Index c = 0; c < mat.cols(); ++c) {
    std::snprintf(buf, sizeof(buf), "%.17g", mat(r, c));
    if (c) out << ' ';
    out << buf;
  }
  out << '\n';
}

using IdIndex = std::unordered_map<std::string, std::size_t>;

const IdIndex& indexed(IdIndex& cache, const std::vector<std::string>& ids) {
  if (cache.empty()) {
    for (std::size_t k = 0; k < ids.size(); ++k) cache.emplace(ids[k], k);
  }
  return cache;
}

std::size_t lookup(IdIndex& cache, const std::vector<std::string>& ids,
                   const std::string& raw, const char* what) {
  indexed(cache, ids);
  auto it = cache.find(raw);
  if (it == cache.end()) {
    fail(ErrorCode::kIndex, std::string(what) + " '" + raw + "' missing from model");
  }
  return it->second;
}

json config_to_json(const TrainConfig& c) {
  return json{{"mode", to_string(c.mode)},
              {"clusters", c.clusters},
              {"epsilon", c.epsilon},
              {"lambda_u", c.reg.lambda_u},
              {"lambda_v", c.reg.lambda_v},
              {"rank", c.rank},
              {"outer_max_iters", c.outer_max_iters},
              {"inner_sweeps", c.inner_sweeps},
              {"tolerance", c.tolerance},
              {"extrapolate", c.extrapolate},
              {"seed", c.seed},
              {"divergence", to_string(c.divergence.kind())}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.mode = mode_from_string(j.at("mode").get<std::string>());
  c.clusters = j.at("clusters").get<std::size_t>();
  c.epsilon = j.at("epsilon").get<double>();
  c.reg.lambda_u = j.at("lambda_u").get<double>();
  c.reg.lambda_v = j.at("lambda_v").get<double>();
  c.rank = j.at("rank").get<std::size_t>();
  c.outer_max_iters = j.at("outer_max_iters").get<int>();
  c.inner_sweeps = j.at("inner_sweeps").get<int>();
  c.tolerance = j.at("tolerance").get<double>();
  c.extrapolate = j.value("extrapolate", true);
  c.seed = j.at("seed").get<std::uint64_t>();
  c.divergence =
      Divergence(divergence_kind_from_string(j.at("divergence").get<std::string>()));
  return c;
}

json transforms_to_json(const TransformSet& set) {
  json list = json::array();
  for (const auto& t : set.transforms) {
    list.push_back(std::vector<double>(t.values().begin(), t.values().end()));
  }
  return list;
}

}  // namespace

std::size_t TrainedModel::user_index(const std::string& raw) const {
  return lookup(user_lookup_, user_ids, raw, "user");
}

std::size_t TrainedModel::item_index(const std::string& raw) const {
  return lookup(item_lookup_, item_ids, raw, "item");
}

bool TrainedModel::has_user(const std::string& raw) const {
  return indexed(user_lookup_, user_ids).count(raw) > 0;
}

bool TrainedModel::has_item(const std::string& raw) const {
  return indexed(item_lookup_, item_ids).count(raw) > 0;
}

TrainedModel train_model(const SparseRatingDataset& train,
                         const TrainConfig& config) {
  const SparseRatingDataset data = compact(train);
  TrainedModel out;
  out.config = config;
  out.level_vocab.assign(data.level_vocab().begin(), data.level_vocab().end());
  out.user_ids.assign(data.user_ids().begin(), data.user_ids().end());
  out.item_ids.assign(data.item_ids().begin(), data.item_ids().end());
  out.fit = fit(TrainingData::from_dataset(data), config);
  return out;
}

Metrics evaluate_model(const TrainedModel& model, const SparseRatingDataset& data,
                       bool skip_unknown) {
  for (double v : data.level_vocab()) {
    if (std::find(model.level_vocab.begin(), model.level_vocab.end(), v) ==
        model.level_vocab.end()) {
      fail(ErrorCode::kVocabularyMismatch,
           "rating value " + format_double(v) + " unknown to the model");
    }
  }
  const RatingPredictor predictor(model.fit.model, model.fit.transforms,
                                  model.level_vocab, model.config.divergence);
  std::vector<double> preds, truths;
  preds.reserve(data.size());
  truths.reserve(data.size());
  Metrics m;
  for (const Rating& r : data.ratings()) {
    if (skip_unknown && (!model.has_user(data.user_ids()[r.user]) ||
                         !model.has_item(data.item_ids()[r.item]))) {
      ++m.skipped;
      continue;
    }
    const std::size_t u = model.user_index(data.user_ids()[r.user]);
    const std::size_t i = model.item_index(data.item_ids()[r.item]);
    preds.push_back(predictor.predict(u, i));
    truths.push_back(data.raw_value(r.level));
  }
  m.count = preds.size();
  m.mse = mse(preds, truths);
  m.mae = mae(preds, truths);
  return m;
}

void write_factor_checkpoint(const FactorModel& model, std::ostream& out) {
  out << model.rank() << ' ' << model.num_users() << ' ' << model.num_items()
      << '\n';
  for (Eigen::Index r = 0; r < model.user.rows(); ++r) print_row(out, model.user, r);
  for (Eigen::Index r = 0; r < model.item.rows(); ++r) print_row(out, model.item, r);
}

FactorModel read_factor_checkpoint(std::istream& in) {
  long long d = 0, n = 0, m = 0;
  if (!(in >> d >> n >> m) || d < 1 || n < 1 || m < 1) {
    fail(ErrorCode::kParse, "bad factor checkpoint header");
  }
  RowMatrix u(n, d), v(m, d);
  auto read_matrix = [&](RowMatrix& mat) {
    for (Eigen::Index r = 0; r < mat.rows(); ++r) {
      for (Eigen::Index c = 0; c < mat.cols(); ++c) {
        std::string tok;
        if (!(in >> tok)) fail(ErrorCode::kParse, "truncated factor checkpoint");
        try {
          std::size_t used = 0;
          mat(r, c) = std::stod(tok, &used);
          if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
          fail(ErrorCode::kParse, "bad factor value '" + tok + "'");
        }
      }
    }
  };
  read_matrix(u);
  read_matrix(v);
  return FactorModel(std::move(u), std::move(v));
}

void save_model(const TrainedModel& model, const std::filesystem::path& prefix) {
  {
    const auto path = std::filesystem::path(prefix.string() + ".factors");
    std::ofstream out(path);
    if (!out) fail(ErrorCode::kIo, "cannot write '" + path.string() + "'");
    write_factor_checkpoint(model.fit.model, out);
  }
  json j;
  j["config"] = config_to_json(model.config);
  j["level_vocab"] = model.level_vocab;
  j["user_ids"] = model.user_ids;
  j["item_ids"] = model.item_ids;
  j["transforms"] = transforms_to_json(model.fit.transforms);
  j["route"] = model.fit.transforms.route;
  j["objective"] = model.fit.objective();
  j["trace"] = model.fit.trace;
  j["converged"] = model.fit.converged;
  j["seconds"] = model.fit.seconds;
  j["warnings"] = model.fit.warnings;
  const auto path = std::filesystem::path(prefix.string() + ".json");
  std::ofstream out(path);
  if (!out) fail(ErrorCode::kIo, "cannot write '" + path.string() + "'");
  out << j.dump(1) << '\n';
}

TrainedModel load_model(const std::filesystem::path& prefix) {
  TrainedModel model;
  const auto fpath = std::filesystem::path(prefix.string() + ".factors");
  const auto jpath = std::filesystem::path(prefix.string() + ".json");
  std::ifstream fin(fpath);
  if (!fin) fail(ErrorCode::kIo, "cannot open '" + fpath.string() + "'");
  model.fit.model = read_factor_checkpoint(fin);
  std::ifstream jin(jpath);
  if (!jin) fail(ErrorCode::kIo, "cannot open '" + jpath.string() + "'");
  json j;
  try {
    jin >> j;
    model.config = config_from_json(j.at("config"));
    model.level_vocab = j.at("level_vocab").get<std::vector<double>>();
    model.user_ids = j.at("user_ids").get<std::vector<std::string>>();
    model.item_ids = j.at("item_ids").get<std::vector<std::string>>();
    for (const auto& t : j.at("transforms")) {
      model.fit.transforms.transforms.emplace_back(t.get<std::vector<double>>(),
                                                   model.config.epsilon);
    }
    model.fit.transforms.route = j.at("route").get<std::vector<std::size_t>>();
    model.fit.trace = j.at("trace").get<std::vector<double>>();
    model.fit.converged = j.at("converged").get<bool>();
    model.fit.seconds = j.at("seconds").get<double>();
    model.fit.warnings = j.at("warnings").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, jpath.string() + ": " + e.what());
  }
  model.fit.mode = model.config.mode;
  if (model.user_ids.size() != model.fit.model.num_users() ||
      model.item_ids.size() != model.fit.model.num_items() ||
      model.fit.transforms.route.size() != model.user_ids.size()) {
    fail(ErrorCode::kParse, "model files disagree on user/item counts");
  }
  for (std::size_t r : model.fit.transforms.route) {
    if (r >= model.fit.transforms.transforms.size()) {
      fail(ErrorCode::kParse, "transform route out of range");
    }
  }
  return model;
}

void write_trace_jsonl(const TrainedModel& model, std::ostream& out) {
  const FitResult& fit = model.fit;
  out << json{{"iteration", 0}, {"objective", fit.trace.front()}}.dump() << '\n';
  for (const IterationRecord& r : fit.iterations) {
    out << json{{"iteration", r.iteration},
                {"after_assignment", r.after_assignment},
                {"after_transform", r.after_transform},
                {"objective", r.objective},
                {"reassigned", r.reassigned},
                {"empty_repairs", r.empty_repairs},
                {"extrapolation", r.extrapolation},
                {"transform_seconds", r.transform_seconds},
                {"factor_seconds", r.factor_seconds}}
               .dump()
        << '\n';
  }
  out << json{{"event", "final"},
              {"mode", to_string(fit.mode)},
              {"objective", fit.objective()},
              {"converged", fit.converged},
              {"iterations", fit.iterations.size()},
              {"seconds", fit.seconds},
              {"transforms", transforms_to_json(fit.transforms)}}
             .dump()
      << '\n';
}

}  // namespace cmtrf
