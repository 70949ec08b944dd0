// cmtrf command-line tool: prepare, generate, train, gridsearch, eval.
//
// Every command that writes a directory also writes <dir>/manifest.json with
// the command line, the resolved configuration, SHA-256 of inputs and
// outputs, and the metrics. Metric files never contain timings, so reruns
// are byte-identical; timings go to stdout and the manifest only.

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cmtrf/cmtrf.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kDataError = 2, kNumerical = 3 };

struct Failure {
  int exit_code;
  std::string message;
};

int exit_code_for(cmtrf_status s) {
  switch (s) {
    case CMTRF_OK: return kOk;
    case CMTRF_ERR_INVALID_ARGUMENT: return kUsage;
    case CMTRF_ERR_DOMAIN:
    case CMTRF_ERR_NUMERICAL:
    case CMTRF_ERR_INTERNAL: return kNumerical;
    default: return kDataError;
  }
}

void check(cmtrf_status s) {
  if (s != CMTRF_OK) {
    throw Failure{exit_code_for(s),
                  std::string(cmtrf_status_name(s)) + ": " + cmtrf_last_error()};
  }
}

struct DatasetFree { void operator()(cmtrf_dataset* p) const { cmtrf_dataset_free(p); } };
struct SplitFree { void operator()(cmtrf_split* p) const { cmtrf_split_free(p); } };
struct ModelFree { void operator()(cmtrf_model* p) const { cmtrf_model_free(p); } };
struct GridFree { void operator()(cmtrf_grid* p) const { cmtrf_grid_free(p); } };
using Dataset = std::unique_ptr<cmtrf_dataset, DatasetFree>;
using Split = std::unique_ptr<cmtrf_split, SplitFree>;
using Model = std::unique_ptr<cmtrf_model, ModelFree>;
using Grid = std::unique_ptr<cmtrf_grid, GridFree>;

// Relative inputs resolve against CMTRF_DATA_DIR, relative output
// directories against CMTRF_CACHE_DIR, when those are set.
fs::path resolve(const std::string& path, const char* env) {
  fs::path p(path);
  const char* base = std::getenv(env);
  if (p.is_relative() && base && *base) return fs::path(base) / p;
  return p;
}
fs::path input_path(const std::string& p) { return resolve(p, "CMTRF_DATA_DIR"); }
fs::path output_dir(const std::string& p) {
  fs::path dir = resolve(p, "CMTRF_CACHE_DIR");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Failure{kDataError, "cannot create '" + dir.string() + "': " + ec.message()};
  return dir;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{kDataError, "cannot read '" + path.string() + "'"};
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(),
                                                              EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::string hex;
  char tmp[3];
  for (unsigned int k = 0; k < len; ++k) {
    std::snprintf(tmp, sizeof(tmp), "%02x", md[k]);
    hex += tmp;
  }
  return hex;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw Failure{kDataError, "cannot write '" + path.string() + "'"};
}

class Manifest {
 public:
  Manifest(std::string command, int argc, char** argv) {
    doc_["command"] = std::move(command);
    doc_["version"] = cmtrf_version();
    doc_["argv"] = std::vector<std::string>(argv, argv + argc);
    doc_["inputs"] = json::array();
    doc_["outputs"] = json::array();
  }
  json& operator[](const char* key) { return doc_[key]; }
  void input(const fs::path& p) {
    doc_["inputs"].push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
  }
  void output(const fs::path& p) {
    doc_["outputs"].push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
  }
  void write(const fs::path& dir) const {
    write_text(dir / "manifest.json", doc_.dump(2) + "\n");
  }

 private:
  json doc_;
};

Dataset load_dataset(const fs::path& path, const cmtrf_load_options& opts) {
  cmtrf_dataset* raw = nullptr;
  check(cmtrf_dataset_load(path.string().c_str(), &opts, &raw));
  Dataset d(raw);
  cmtrf_dataset_info info;
  check(cmtrf_dataset_info_get(d.get(), &info));
  for (std::size_t k = 0; k < info.num_warnings; ++k) {
    std::cerr << "warning: " << path.string() << ": " << cmtrf_dataset_warning(d.get(), k)
              << '\n';
  }
  return d;
}

// Canonical triplet files written by this tool; timestamps are not needed
// for training or scoring.
Dataset load_canonical(const fs::path& path) {
  cmtrf_load_options opts;
  cmtrf_load_options_init(&opts);
  opts.timestamp_col = -1;
  return load_dataset(path, opts);
}

json dataset_json(const cmtrf_dataset* d) {
  cmtrf_dataset_info info;
  check(cmtrf_dataset_info_get(d, &info));
  return {{"users", info.num_users},
          {"items", info.num_items},
          {"levels", info.num_levels},
          {"ratings", info.num_ratings}};
}

// Writes train/validation/test from a split into dir.
json write_split(const cmtrf_split* split, const fs::path& dir, Manifest& manifest) {
  const char* names[] = {"train.tsv", "validation.tsv", "test.tsv"};
  json parts;
  for (int part = 0; part < 3; ++part) {
    cmtrf_dataset* raw = nullptr;
    check(cmtrf_split_part(split, part, &raw));
    Dataset d(raw);
    const fs::path path = dir / names[part];
    check(cmtrf_dataset_save(d.get(), path.string().c_str()));
    manifest.output(path);
    parts[names[part]] = dataset_json(d.get());
  }
  cmtrf_split_counts c;
  check(cmtrf_split_counts_get(split, &c));
  return {{"parts", parts},
          {"counts",
           {{"input", c.input},
            {"constant_users_removed", c.constant_users_removed},
            {"after_constant_filter", c.after_constant_filter},
            {"train", c.train},
            {"validation", c.validation},
            {"test", c.test},
            {"cold_test_dropped", c.cold_test_dropped}}}};
}

struct SplitFlags {
  std::string strategy = "chronological";
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  double validation_fraction = 0.1;

  void add(CLI::App* app, const std::string& default_strategy) {
    strategy = default_strategy;
    app->add_option("--split", strategy, "chronological or uniform")
        ->check(CLI::IsMember({"chronological", "uniform"}))
        ->capture_default_str();
    app->add_option("--split-seed", seed, "seed for the uniform split")
        ->capture_default_str();
    app->add_option("--train-frac", train_fraction, "share of ratings for training")
        ->capture_default_str();
    app->add_option("--val-frac", validation_fraction,
                    "share of the training portion held out for validation")
        ->capture_default_str();
  }
  cmtrf_split_options options() const {
    cmtrf_split_options o;
    cmtrf_split_options_init(&o);
    o.strategy = strategy == "uniform" ? CMTRF_SPLIT_UNIFORM : CMTRF_SPLIT_CHRONOLOGICAL;
    o.seed = seed;
    o.train_fraction = train_fraction;
    o.validation_fraction = validation_fraction;
    return o;
  }
  json to_json() const {
    return {{"strategy", strategy},
            {"seed", seed},
            {"train_fraction", train_fraction},
            {"validation_fraction", validation_fraction}};
  }
};

const std::map<std::string, int> kDivergences{
    {"squared", CMTRF_DIV_SQUARED}, {"kl", CMTRF_DIV_KL}, {"gid", CMTRF_DIV_GID}};

struct TrainFlags {
  cmtrf_train_options opts;
  std::string mode = "kcmtrf";
  std::string divergence = "squared";

  TrainFlags() { cmtrf_train_options_init(&opts); }

  void add(CLI::App* app, bool with_hyper) {
    app->add_option("--mode", mode, "1cmtrf, ncmtrf, kcmtrf or mf")
        ->check(CLI::IsMember({"1cmtrf", "ncmtrf", "kcmtrf", "mf"}))
        ->capture_default_str();
    app->add_option("--epsilon", opts.epsilon, "margin between adjacent levels")
        ->capture_default_str();
    app->add_option("--seed", opts.seed, "initialization seed")->capture_default_str();
    app->add_option("--max-iters", opts.outer_max_iters, "outer iteration cap")
        ->capture_default_str();
    app->add_option("--inner-sweeps", opts.inner_sweeps,
                    "factor sweeps per outer iteration")
        ->capture_default_str();
    app->add_option("--tolerance", opts.tolerance,
                    "relative objective decrease that counts as converged")
        ->capture_default_str();
    app->add_option("--divergence", divergence, "squared, kl or gid")
        ->check(CLI::IsMember({"squared", "kl", "gid"}))
        ->capture_default_str();
    if (with_hyper) {
      app->add_option("--k", opts.clusters, "number of clusters (kcmtrf)")
          ->capture_default_str();
      app->add_option("--lambda-u", opts.lambda_u, "user factor penalty")
          ->capture_default_str();
      app->add_option("--lambda-v", opts.lambda_v, "item factor penalty")
          ->capture_default_str();
    }
  }
  cmtrf_train_options resolved() const {
    cmtrf_train_options o = opts;
    check(cmtrf_mode_from_name(mode.c_str(), &o.mode));
    o.divergence = kDivergences.at(divergence);
    return o;
  }
};

json options_json(const cmtrf_train_options& o) {
  return {{"mode", cmtrf_mode_name(o.mode)},
          {"K", o.clusters},
          {"d", o.rank},
          {"lambda_u", o.lambda_u},
          {"lambda_v", o.lambda_v},
          {"epsilon", o.epsilon},
          {"seed", o.seed},
          {"max_iters", o.outer_max_iters},
          {"inner_sweeps", o.inner_sweeps},
          {"tolerance", o.tolerance},
          {"divergence", [&] {
             for (const auto& [name, v] : kDivergences)
               if (v == o.divergence) return name;
             return std::string("?");
           }()}};
}

json metrics_row(const std::string& dataset, const cmtrf_train_options& o,
                 const cmtrf_metrics& m) {
  return {{"dataset", dataset},
          {"mode", cmtrf_mode_name(o.mode)},
          {"K", o.clusters},
          {"d", o.rank},
          {"lambda_u", o.lambda_u},
          {"lambda_v", o.lambda_v},
          {"epsilon", o.epsilon},
          {"mse", m.mse},
          {"mae", m.mae},
          {"count", m.count},
          {"skipped", m.skipped}};
}

void print_row(json row, double seconds) {
  row["wall_seconds"] = seconds;
  std::cout << row.dump() << std::endl;
}

double elapsed(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

// ---- prepare ----

struct PrepareArgs {
  std::string input, out = "prepared", format = "tsv";
  int user_col = 0, item_col = 1, rating_col = 2, timestamp_col = 3;
  bool header = false;
  SplitFlags split;
};

int run_prepare(const PrepareArgs& a, Manifest& manifest) {
  const fs::path in = input_path(a.input);
  cmtrf_load_options lo;
  cmtrf_load_options_init(&lo);
  lo.format = a.format == "csv" ? CMTRF_FORMAT_CSV : CMTRF_FORMAT_TSV;
  lo.user_col = a.user_col;
  lo.item_col = a.item_col;
  lo.rating_col = a.rating_col;
  lo.timestamp_col = a.timestamp_col;
  lo.header_row = a.header ? 1 : 0;
  Dataset data = load_dataset(in, lo);
  manifest.input(in);

  const cmtrf_split_options so = a.split.options();
  cmtrf_split* raw = nullptr;
  check(cmtrf_split_prepare(data.get(), &so, &raw));
  Split split(raw);
  const fs::path dir = output_dir(a.out);
  const json summary = write_split(split.get(), dir, manifest);
  manifest["config"] = {{"format", a.format},
                        {"columns",
                         {{"user", a.user_col},
                          {"item", a.item_col},
                          {"rating", a.rating_col},
                          {"timestamp", a.timestamp_col}}},
                        {"header", a.header},
                        {"split", a.split.to_json()}};
  manifest["seed"] = a.split.seed;
  manifest["metrics"] = summary;
  manifest.write(dir);
  std::cout << summary["counts"].dump() << std::endl;
  return kOk;
}

// ---- generate ----

struct GenerateArgs {
  cmtrf_synth_options opts;
  std::string kind = "sd1", out = "synthetic";
  SplitFlags split;
  GenerateArgs() { cmtrf_synth_options_init(&opts); }
};

int run_generate(const GenerateArgs& a, Manifest& manifest) {
  cmtrf_synth_options o = a.opts;
  o.kind = a.kind == "sd2" ? CMTRF_SYNTH_SD2 : CMTRF_SYNTH_SD1;
  const fs::path dir = output_dir(a.out);
  const fs::path truth = dir / "truth.json";
  cmtrf_dataset* raw = nullptr;
  check(cmtrf_synth_generate(&o, truth.string().c_str(), &raw));
  Dataset data(raw);
  const fs::path full = dir / "ratings.tsv";
  check(cmtrf_dataset_save(data.get(), full.string().c_str()));
  manifest.output(full);
  manifest.output(truth);

  const cmtrf_split_options so = a.split.options();
  cmtrf_split* sraw = nullptr;
  check(cmtrf_split_prepare(data.get(), &so, &sraw));
  Split split(sraw);
  const json summary = write_split(split.get(), dir, manifest);
  auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
  manifest["config"] = {{"kind", a.kind},
                        {"users", o.num_users},
                        {"items", o.num_items},
                        {"rank", o.rank},
                        {"levels", o.levels},
                        {"epsilon", o.epsilon},
                        {"factor_mean", num(o.factor_mean)},
                        {"factor_std", num(o.factor_std)},
                        {"density", o.density},
                        {"split", a.split.to_json()}};
  manifest["seed"] = o.seed;
  manifest["metrics"] = summary;
  manifest.write(dir);
  std::cout << summary["counts"].dump() << std::endl;
  return kOk;
}

// ---- train ----

struct TrainArgs {
  TrainFlags flags;
  std::vector<std::size_t> ranks{10};
  std::string train, test, out = "model", dataset;
};

int run_train(const TrainArgs& a, Manifest& manifest) {
  const fs::path train_path = input_path(a.train);
  Dataset train = load_canonical(train_path);
  manifest.input(train_path);
  Dataset test;
  if (!a.test.empty()) {
    const fs::path p = input_path(a.test);
    test = load_canonical(p);
    manifest.input(p);
  }
  const std::string dataset_name =
      a.dataset.empty() ? train_path.parent_path().filename().string() : a.dataset;
  const fs::path dir = output_dir(a.out);
  const cmtrf_train_options base = a.flags.resolved();

  json runs = json::array();
  std::string metrics_lines;
  for (std::size_t d : a.ranks) {
    cmtrf_train_options o = base;
    o.rank = d;
    const auto start = std::chrono::steady_clock::now();
    cmtrf_model* raw = nullptr;
    check(cmtrf_model_train(train.get(), &o, &raw));
    Model model(raw);
    const double seconds = elapsed(start);

    const std::string stem = "model-d" + std::to_string(d);
    const fs::path prefix = dir / stem;
    check(cmtrf_model_save(model.get(), prefix.string().c_str()));
    const fs::path trace = dir / ("trace-d" + std::to_string(d) + ".jsonl");
    check(cmtrf_model_write_trace(model.get(), trace.string().c_str()));
    manifest.output(prefix.string() + ".factors");
    manifest.output(prefix.string() + ".json");
    manifest.output(trace);

    cmtrf_model_info info;
    check(cmtrf_model_info_get(model.get(), &info));
    for (std::size_t k = 0; k < info.num_warnings; ++k) {
      std::cerr << "warning: " << cmtrf_model_warning(model.get(), k) << '\n';
    }
    json run = {{"config", options_json(o)},
                {"objective", info.objective},
                {"iterations", info.trace_length - 1},
                {"converged", info.converged != 0},
                {"seconds", seconds}};
    if (test) {
      cmtrf_metrics m;
      check(cmtrf_model_evaluate(model.get(), test.get(), 1, &m));
      json row = metrics_row(dataset_name, o, m);
      metrics_lines += row.dump() + "\n";
      run["test"] = row;
      print_row(row, seconds);
    } else {
      json row = {{"dataset", dataset_name}, {"config", options_json(o)},
                  {"objective", info.objective}};
      print_row(row, seconds);
    }
    runs.push_back(run);
  }
  if (test) {
    write_text(dir / "metrics.jsonl", metrics_lines);
    manifest.output(dir / "metrics.jsonl");
  }
  manifest["config"] = options_json(base);
  manifest["config"]["ranks"] = a.ranks;
  manifest["seed"] = base.seed;
  manifest["metrics"] = runs;
  manifest.write(dir);
  return kOk;
}

// ---- gridsearch ----

struct GridArgs {
  TrainFlags flags;
  // Raw list tokens; an explicit empty list is an empty grid, not the default.
  std::vector<std::string> lambdas, ks, ranks{"10"};
  bool lambdas_given = false, ks_given = false;
  bool cross = false;
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  std::string train, validation, test, out = "grid", dataset;
};

std::string cell_key(const cmtrf_grid_cell& c) {
  return "K=" + std::to_string(c.clusters) + ",d=" + std::to_string(c.rank) +
         ",lu=" + fmt(c.lambda_u) + ",lv=" + fmt(c.lambda_v);
}

json result_json(const cmtrf_cell_result& r) {
  return {{"key", cell_key(r.cell)},
          {"K", r.cell.clusters},
          {"d", r.cell.rank},
          {"lambda_u", r.cell.lambda_u},
          {"lambda_v", r.cell.lambda_v},
          {"val_mse", r.validation.mse},
          {"val_mae", r.validation.mae},
          {"val_count", r.validation.count},
          {"val_skipped", r.validation.skipped},
          {"objective", r.objective},
          {"iterations", r.iterations},
          {"converged", r.converged != 0},
          {"seconds", r.seconds}};
}

cmtrf_cell_result result_from_json(const json& j) {
  cmtrf_cell_result r;
  r.cell = {j.at("K").get<std::size_t>(), j.at("lambda_u").get<double>(),
            j.at("lambda_v").get<double>(), j.at("d").get<std::size_t>()};
  r.validation = {j.at("val_mse").get<double>(), j.at("val_mae").get<double>(),
                  j.at("val_count").get<std::size_t>(),
                  j.at("val_skipped").get<std::size_t>()};
  r.objective = j.at("objective").get<double>();
  r.iterations = j.at("iterations").get<int>();
  r.converged = j.at("converged").get<bool>() ? 1 : 0;
  r.seconds = j.at("seconds").get<double>();
  return r;
}

struct CellLog {
  std::ofstream* out;
};

void on_cell_done(std::size_t, const cmtrf_cell_result* r, void* user) {
  auto* log = static_cast<CellLog*>(user);
  *log->out << result_json(*r).dump() << '\n';
  log->out->flush();
  std::cerr << "cell " << cell_key(r->cell) << " val_mse=" << fmt(r->validation.mse)
            << " (" << r->seconds << " s)\n";
}

template <class T>
std::vector<T> parse_list(const std::vector<std::string>& tokens, const std::string& flag) {
  std::vector<T> out;
  for (const std::string& t : tokens) {
    if (t.empty()) continue;
    T v{};
    if (!CLI::detail::lexical_cast(t, v)) {
      throw Failure{kUsage, flag + ": not a number: '" + t + "'"};
    }
    out.push_back(v);
  }
  return out;
}

int run_gridsearch(const GridArgs& a, Manifest& manifest) {
  const fs::path train_path = input_path(a.train);
  const fs::path val_path = input_path(a.validation);
  Dataset train = load_canonical(train_path);
  Dataset validation = load_canonical(val_path);
  manifest.input(train_path);
  manifest.input(val_path);
  const cmtrf_train_options base = a.flags.resolved();

  std::vector<double> lambdas = parse_list<double>(a.lambdas, "--lambdas");
  const std::vector<std::size_t> ranks = parse_list<std::size_t>(a.ranks, "--d");
  if (lambdas.empty() && !a.lambdas_given) {
    lambdas.resize(cmtrf_default_lambda_grid(nullptr, 0));
    cmtrf_default_lambda_grid(lambdas.data(), lambdas.size());
  }
  std::vector<std::size_t> ks = parse_list<std::size_t>(a.ks, "--ks");
  if (base.mode != CMTRF_MODE_CLUSTERED) {
    ks = {1};
  } else if (ks.empty() && !a.ks_given) {
    ks.resize(cmtrf_default_cluster_grid(nullptr, 0));
    cmtrf_default_cluster_grid(ks.data(), ks.size());
  }
  std::vector<cmtrf_grid_cell> cells;
  for (std::size_t d : ranks) {
    for (std::size_t k : ks) {
      for (double lu : lambdas) {
        if (a.cross) {
          for (double lv : lambdas) cells.push_back({k, lu, lv, d});
        } else {
          cells.push_back({k, lu, lu, d});
        }
      }
    }
  }
  if (cells.empty()) throw Failure{kUsage, "empty hyperparameter grid"};

  const fs::path dir = output_dir(a.out);
  json grid_config = {{"base", options_json(base)},
                      {"lambdas", lambdas},
                      {"K", ks},
                      {"d", ranks},
                      {"cross_lambdas", a.cross},
                      {"train_sha256", sha256_file(train_path)},
                      {"validation_sha256", sha256_file(val_path)}};
  const fs::path config_path = dir / "grid-config.json";
  const fs::path cells_path = dir / "cells.jsonl";

  // Resume: completed cells are read back from cells.jsonl when the grid
  // configuration is unchanged.
  std::map<std::string, cmtrf_cell_result> done;
  if (fs::exists(cells_path)) {
    std::ifstream cin(config_path);
    json previous;
    if (!cin || !(cin >> previous) || previous != grid_config) {
      throw Failure{kUsage, "'" + dir.string() +
                                "' holds a different grid search; pick another --out"};
    }
    std::ifstream lines(cells_path);
    std::string line;
    while (std::getline(lines, line)) {
      if (line.empty()) continue;
      try {
        const json j = json::parse(line);
        done[j.at("key").get<std::string>()] = result_from_json(j);
      } catch (const json::exception&) {
        std::cerr << "warning: ignoring unreadable line in " << cells_path.string()
                  << '\n';
      }
    }
  } else {
    write_text(config_path, grid_config.dump(2) + "\n");
  }

  std::vector<cmtrf_grid_cell> pending;
  for (const auto& c : cells) {
    if (!done.count(cell_key(c))) pending.push_back(c);
  }
  std::cerr << cells.size() << " cells, " << cells.size() - pending.size()
            << " already done\n";
  const auto start = std::chrono::steady_clock::now();
  if (!pending.empty()) {
    cmtrf_grid* graw = nullptr;
    check(cmtrf_grid_create(train.get(), validation.get(), &base, &graw));
    Grid grid(graw);
    std::ofstream log_out(cells_path, std::ios::app);
    CellLog log{&log_out};
    std::vector<cmtrf_cell_result> results(pending.size());
    check(cmtrf_grid_evaluate(grid.get(), pending.data(), pending.size(), a.threads,
                              on_cell_done, &log, results.data()));
    for (const auto& r : results) done[cell_key(r.cell)] = r;
  }

  std::vector<cmtrf_cell_result> table;
  std::ostringstream csv;
  csv << "K,d,lambda_u,lambda_v,val_mse,val_mae,val_count,val_skipped,objective,"
         "iterations,converged\n";
  for (const auto& c : cells) {
    const cmtrf_cell_result& r = done.at(cell_key(c));
    table.push_back(r);
    csv << r.cell.clusters << ',' << r.cell.rank << ',' << fmt(r.cell.lambda_u) << ','
        << fmt(r.cell.lambda_v) << ',' << fmt(r.validation.mse) << ','
        << fmt(r.validation.mae) << ',' << r.validation.count << ','
        << r.validation.skipped << ',' << fmt(r.objective) << ',' << r.iterations << ','
        << r.converged << '\n';
  }
  write_text(dir / "grid.csv", csv.str());
  std::size_t best = 0;
  check(cmtrf_select_best(table.data(), table.size(), &best));
  const cmtrf_cell_result& winner = table[best];
  cmtrf_train_options wopts = base;
  wopts.clusters = winner.cell.clusters;
  wopts.lambda_u = winner.cell.lambda_u;
  wopts.lambda_v = winner.cell.lambda_v;
  wopts.rank = winner.cell.rank;
  json best_json = {{"config", options_json(wopts)},
                    {"val_mse", winner.validation.mse},
                    {"val_mae", winner.validation.mae}};

  const std::string dataset_name =
      a.dataset.empty() ? train_path.parent_path().filename().string() : a.dataset;
  if (!a.test.empty()) {
    const fs::path test_path = input_path(a.test);
    Dataset test = load_canonical(test_path);
    manifest.input(test_path);
    cmtrf_model* mraw = nullptr;
    cmtrf_metrics m;
    const auto t0 = std::chrono::steady_clock::now();
    check(cmtrf_retrain_and_test(train.get(), validation.get(), test.get(), &base,
                                 &winner.cell, &mraw, &m));
    Model model(mraw);
    const fs::path prefix = dir / "best-model";
    check(cmtrf_model_save(model.get(), prefix.string().c_str()));
    manifest.output(prefix.string() + ".factors");
    manifest.output(prefix.string() + ".json");
    const json row = metrics_row(dataset_name, wopts, m);
    best_json["test"] = row;
    print_row(row, elapsed(t0));
  }
  write_text(dir / "best.json", best_json.dump(2) + "\n");
  manifest.output(dir / "grid.csv");
  manifest.output(dir / "best.json");
  manifest["config"] = grid_config;
  manifest["seed"] = base.seed;
  manifest["metrics"] = best_json;
  manifest["seconds"] = elapsed(start);
  manifest.write(dir);
  std::cout << json{{"best", best_json}}.dump() << std::endl;
  return kOk;
}

// ---- eval ----

struct EvalArgs {
  std::string model, test, out, dataset;
  bool skip_unknown = false;
};

int run_eval(const EvalArgs& a, Manifest& manifest) {
  const fs::path prefix = input_path(a.model);
  const fs::path test_path = input_path(a.test);
  cmtrf_model* raw = nullptr;
  check(cmtrf_model_load(prefix.string().c_str(), &raw));
  Model model(raw);
  Dataset test = load_canonical(test_path);
  const auto start = std::chrono::steady_clock::now();
  cmtrf_metrics m;
  check(cmtrf_model_evaluate(model.get(), test.get(), a.skip_unknown ? 1 : 0, &m));
  cmtrf_train_options o;
  check(cmtrf_model_options(model.get(), &o));
  const std::string dataset_name =
      a.dataset.empty() ? test_path.parent_path().filename().string() : a.dataset;
  const json row = metrics_row(dataset_name, o, m);
  print_row(row, elapsed(start));
  if (!a.out.empty()) {
    const fs::path dir = output_dir(a.out);
    manifest.input(prefix.string() + ".factors");
    manifest.input(prefix.string() + ".json");
    manifest.input(test_path);
    write_text(dir / "metrics.json", row.dump() + "\n");
    manifest.output(dir / "metrics.json");
    manifest["config"] = options_json(o);
    manifest["seed"] = o.seed;
    manifest["metrics"] = row;
    manifest.write(dir);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Clustered monotone transforms for rating matrix factorization"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(cmtrf_version()));

  PrepareArgs prep;
  auto* prepare = app.add_subcommand("prepare", "split a rating file into train/validation/test");
  prepare->add_option("--input", prep.input, "rating file")->required();
  prepare->add_option("--out", prep.out, "output directory")->capture_default_str();
  prepare->add_option("--format", prep.format, "tsv or csv")
      ->check(CLI::IsMember({"tsv", "csv"}))
      ->capture_default_str();
  prepare->add_option("--user-col", prep.user_col)->capture_default_str();
  prepare->add_option("--item-col", prep.item_col)->capture_default_str();
  prepare->add_option("--rating-col", prep.rating_col)->capture_default_str();
  prepare->add_option("--timestamp-col", prep.timestamp_col, "-1 when absent")
      ->capture_default_str();
  prepare->add_flag("--header", prep.header, "skip the first non-comment line");
  prep.split.add(prepare, "chronological");

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "synthetic rating data with ground truth");
  generate->add_option("--kind", gen.kind, "sd1 or sd2")
      ->check(CLI::IsMember({"sd1", "sd2"}))
      ->capture_default_str();
  generate->add_option("--users", gen.opts.num_users)->capture_default_str();
  generate->add_option("--items", gen.opts.num_items)->capture_default_str();
  generate->add_option("--rank", gen.opts.rank)->capture_default_str();
  generate->add_option("--levels", gen.opts.levels)->capture_default_str();
  generate->add_option("--epsilon", gen.opts.epsilon, "sd1 minimum level gap")
      ->capture_default_str();
  generate->add_option("--factor-mean", gen.opts.factor_mean, "default depends on kind");
  generate->add_option("--factor-std", gen.opts.factor_std, "default depends on kind");
  generate->add_option("--density", gen.opts.density, "share of entries observed")
      ->capture_default_str();
  generate->add_option("--seed", gen.opts.seed)->capture_default_str();
  generate->add_option("--out", gen.out, "output directory")->capture_default_str();
  gen.split.add(generate, "uniform");

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "fit one model per rank");
  tr.flags.add(train, true);
  train->add_option("--d", tr.ranks, "rank(s), comma separated")
      ->delimiter(',')
      ->capture_default_str();
  train->add_option("--train", tr.train, "canonical training file")->required();
  train->add_option("--test", tr.test, "optional file scored after training");
  train->add_option("--out", tr.out, "output directory")->capture_default_str();
  train->add_option("--dataset", tr.dataset, "name used in metric rows");

  GridArgs gr;
  auto* grid = app.add_subcommand("gridsearch", "tune lambda, K and d on validation MSE");
  gr.flags.add(grid, false);
  auto* lambdas_opt = grid->add_option("--lambdas", gr.lambdas, "lambda grid (default 10^-2 .. 10^2 by 10^0.5)")
      ->delimiter(',');
  auto* ks_opt = grid->add_option("--ks", gr.ks, "K grid (default 2,3,5,10,20,30,50,75,100)")
      ->delimiter(',');
  grid->add_option("--d", gr.ranks, "rank grid")->delimiter(',')->capture_default_str();
  grid->add_flag("--cross-lambdas", gr.cross, "tune lambda_v separately from lambda_u");
  grid->add_option("--threads", gr.threads, "parallel cells")->capture_default_str();
  grid->add_option("--train", gr.train)->required();
  grid->add_option("--validation", gr.validation)->required();
  grid->add_option("--test", gr.test, "retrain the winner on train+validation and score this");
  grid->add_option("--out", gr.out, "output directory")->capture_default_str();
  grid->add_option("--dataset", gr.dataset, "name used in metric rows");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "score a saved model");
  eval->add_option("--model", ev.model, "model prefix (without .factors/.json)")->required();
  eval->add_option("--test", ev.test, "canonical rating file")->required();
  eval->add_flag("--skip-unknown", ev.skip_unknown, "skip rows with unseen users/items");
  eval->add_option("--out", ev.out, "directory for metrics.json and manifest.json");
  eval->add_option("--dataset", ev.dataset, "name used in metric rows");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  gr.lambdas_given = lambdas_opt->count() > 0;
  gr.ks_given = ks_opt->count() > 0;

  try {
    if (*prepare) {
      Manifest m("prepare", argc, argv);
      return run_prepare(prep, m);
    }
    if (*generate) {
      Manifest m("generate", argc, argv);
      return run_generate(gen, m);
    }
    if (*train) {
      Manifest m("train", argc, argv);
      return run_train(tr, m);
    }
    if (*grid) {
      Manifest m("gridsearch", argc, argv);
      return run_gridsearch(gr, m);
    }
    Manifest m("eval", argc, argv);
    return run_eval(ev, m);
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << '\n';
    return f.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  }
}
