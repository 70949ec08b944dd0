#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "core/cmtrf.hpp"
#include "core/evaluate.hpp"

namespace cmtrf {

/// A fitted model together with what is needed to score raw (user, item)
/// ids read from another file: id lists, level vocabulary and the config.
struct TrainedModel {
  TrainConfig config;
  std::vector<double> level_vocab;
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;
  FitResult fit;

  std::size_t user_index(const std::string& raw) const;  // throws kIndex
  std::size_t item_index(const std::string& raw) const;
  bool has_user(const std::string& raw) const;
  bool has_item(const std::string& raw) const;

 private:
  mutable std::unordered_map<std::string, std::size_t> user_lookup_;
  mutable std::unordered_map<std::string, std::size_t> item_lookup_;
};

// Users and items without training ratings are dropped before fitting, so
// the model only knows ids it has seen.
TrainedModel train_model(const SparseRatingDataset& train,
                         const TrainConfig& config);

/// Scores every rating of `data` by raw id. Rating values outside the model
/// vocabulary raise kVocabularyMismatch. Unknown users or items raise kIndex
/// unless skip_unknown, in which case they count as Metrics::skipped.
Metrics evaluate_model(const TrainedModel& model, const SparseRatingDataset& data,
                       bool skip_unknown = false);

/// Factor checkpoint, plain text:
///   line 1        "d N M"
///   next N lines  rows of U, d values each
///   next M lines  rows of V
/// Values are written with 17 significant digits, so a write/read cycle is
/// bit-exact.
void write_factor_checkpoint(const FactorModel& model, std::ostream& out);
FactorModel read_factor_checkpoint(std::istream& in);

// <prefix>.factors (checkpoint above) and <prefix>.json (everything else).
void save_model(const TrainedModel& model, const std::filesystem::path& prefix);
TrainedModel load_model(const std::filesystem::path& prefix);

// One JSON object per line: the starting objective, one record per outer
// iteration, then a final summary carrying the transforms.
void write_trace_jsonl(const TrainedModel& model, std::ostream& out);

}  // namespace cmtrf
