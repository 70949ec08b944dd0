#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace cmtrf {

struct Rating {
  std::size_t user = 0;
  std::size_t item = 0;
  std::size_t level = 0;        // index into the ascending level vocabulary
  std::int64_t timestamp = 0;   // meaningful only when the dataset has them
};

/// Observed ratings with dense user/item ids. Raw ids are kept as strings so
/// any source id scheme round-trips; the level vocabulary is the sorted list
/// of distinct raw rating values (L >= 2).
class SparseRatingDataset {
 public:
  SparseRatingDataset() = default;
  SparseRatingDataset(std::vector<std::string> user_ids,
                      std::vector<std::string> item_ids,
                      std::vector<double> level_vocab,
                      std::vector<Rating> ratings, bool has_timestamps);

  std::size_t num_users() const { return user_ids_.size(); }
  std::size_t num_items() const { return item_ids_.size(); }
  std::size_t num_levels() const { return level_vocab_.size(); }
  std::size_t size() const { return ratings_.size(); }
  bool empty() const { return ratings_.empty(); }
  bool has_timestamps() const { return has_timestamps_; }

  std::span<const Rating> ratings() const { return ratings_; }
  std::span<const std::string> user_ids() const { return user_ids_; }
  std::span<const std::string> item_ids() const { return item_ids_; }
  std::span<const double> level_vocab() const { return level_vocab_; }

  // Throws kVocabularyMismatch if `raw` is not a level value.
  std::size_t level_of(double raw) const;
  double raw_value(std::size_t level) const { return level_vocab_[level]; }

  // Rows selected by index, same id maps and vocabulary.
  SparseRatingDataset subset(std::span<const std::size_t> rows) const;

  // Warnings recorded while loading (duplicate pairs and similar).
  std::vector<std::string> warnings;

 private:
  std::vector<std::string> user_ids_;
  std::vector<std::string> item_ids_;
  std::vector<double> level_vocab_;
  std::vector<Rating> ratings_;
  bool has_timestamps_ = false;
};

// Drops users and items without ratings and renumbers the rest in order of
// first appearance in the original id lists.
SparseRatingDataset compact(const SparseRatingDataset& data);

/// Rows of `a` followed by rows of `b`, ids matched by raw string. The
/// vocabularies must agree.
SparseRatingDataset concatenate(const SparseRatingDataset& a,
                                const SparseRatingDataset& b);

enum class TextFormat { kTabSeparated, kCommaSeparated };

// Zero-based column positions; timestamp < 0 means the column is absent.
struct ColumnSpec {
  int user = 0;
  int item = 1;
  int rating = 2;
  int timestamp = 3;
  bool header_row = false;
};

/// Parses delimiter-separated rows. Lines starting with '#' are comments,
/// except "# levels: v1 v2 ..." which pins the level vocabulary (written by
/// write_triplets so every split file shares one vocabulary). Duplicate
/// (user, item) pairs keep the last row and record a warning.
SparseRatingDataset load_triplets(std::istream& in, TextFormat format,
                                  const ColumnSpec& columns);
SparseRatingDataset load_triplets_file(const std::filesystem::path& path,
                                       TextFormat format,
                                       const ColumnSpec& columns);

/// Canonical text form: a "# levels:" header line, then
/// user<TAB>item<TAB>rating[<TAB>timestamp] per rating, input order.
/// Ratings use the shortest representation that round-trips.
void write_triplets(const SparseRatingDataset& data, std::ostream& out);
void write_triplets_file(const SparseRatingDataset& data,
                         const std::filesystem::path& path);

std::string format_double(double value);

enum class SplitStrategy { kChronological, kUniform };

struct SplitSpec {
  SplitStrategy strategy = SplitStrategy::kChronological;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  double validation_fraction = 0.1;  // share of the training portion

  void validate() const;
};

// Row indices of each part, each sorted ascending.
struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

/// Chronological: stable sort by timestamp, first train_fraction to the
/// training portion, whose chronologically last validation_fraction becomes
/// validation. Uniform: seeded shuffle, then the same proportions.
SplitIndices split(const SparseRatingDataset& data, const SplitSpec& spec);

SparseRatingDataset remove_constant_raters(const SparseRatingDataset& data,
                                           std::size_t* removed_users = nullptr);

struct SplitCounts {
  std::size_t input = 0;
  std::size_t constant_users_removed = 0;  // including users made constant later
  std::size_t after_constant_filter = 0;
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
  std::size_t cold_test_dropped = 0;
};

struct PreparedSplit {
  SparseRatingDataset train;
  SparseRatingDataset validation;
  SparseRatingDataset test;
  SplitCounts counts;
};

/// Removes constant raters from the full set, splits, then drops test rows
/// whose user or item never occurs in train or validation, repeating until
/// nothing changes. Throws kEmptyData if a part ends up empty.
PreparedSplit preprocess(const SparseRatingDataset& data, const SplitSpec& spec);

}  // namespace cmtrf
