#include "core/ratings_data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "core/error.hpp"

namespace cmtrf {
namespace {

std::string_view trim(std::string_view s) {
  const auto not_space = [](char c) {
    return c != ' ' && c != '\t' && c != '\r' && c != '\n';
  };
  while (!s.empty() && !not_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && !not_space(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = line.find(delim, start);
    out.push_back(trim(line.substr(start, end - start)));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

[[noreturn]] void parse_error(std::size_t line_no, const std::string& what) {
  fail(ErrorCode::kParse, "line " + std::to_string(line_no) + ": " + what);
}

std::size_t rounded_share(std::size_t n, double fraction) {
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

}  // namespace

std::string format_double(double value) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), ptr);
}

SparseRatingDataset::SparseRatingDataset(std::vector<std::string> user_ids,
                                         std::vector<std::string> item_ids,
                                         std::vector<double> level_vocab,
                                         std::vector<Rating> ratings,
                                         bool has_timestamps)
    : user_ids_(std::move(user_ids)),
      item_ids_(std::move(item_ids)),
      level_vocab_(std::move(level_vocab)),
      ratings_(std::move(ratings)),
      has_timestamps_(has_timestamps) {
  if (level_vocab_.size() < 2) {
    fail(ErrorCode::kEmptyData, "need at least two distinct rating levels");
  }
  if (!std::is_sorted(level_vocab_.begin(), level_vocab_.end()) ||
      std::adjacent_find(level_vocab_.begin(), level_vocab_.end()) !=
          level_vocab_.end()) {
    fail(ErrorCode::kInvalidArgument,
         "level vocabulary must be strictly ascending");
  }
  for (const Rating& r : ratings_) {
    if (r.user >= user_ids_.size() || r.item >= item_ids_.size() ||
        r.level >= level_vocab_.size()) {
      fail(ErrorCode::kIndex, "rating refers to an unknown user/item/level");
    }
  }
}

std::size_t SparseRatingDataset::level_of(double raw) const {
  auto it = std::lower_bound(level_vocab_.begin(), level_vocab_.end(), raw);
  if (it == level_vocab_.end() || *it != raw) {
    fail(ErrorCode::kVocabularyMismatch,
         "rating value " + format_double(raw) + " is not in the level vocabulary");
  }
  return static_cast<std::size_t>(it - level_vocab_.begin());
}

SparseRatingDataset SparseRatingDataset::subset(
    std::span<const std::size_t> rows) const {
  std::vector<Rating> picked;
  picked.reserve(rows.size());
  for (std::size_t r : rows) {
    if (r >= ratings_.size()) fail(ErrorCode::kIndex, "subset row out of range");
    picked.push_back(ratings_[r]);
  }
  return SparseRatingDataset(user_ids_, item_ids_, level_vocab_,
                             std::move(picked), has_timestamps_);
}

SparseRatingDataset load_triplets(std::istream& in, TextFormat format,
                                  const ColumnSpec& columns) {
  const char delim = format == TextFormat::kTabSeparated ? '\t' : ',';
  const int needed =
      std::max({columns.user, columns.item, columns.rating, columns.timestamp});
  if (columns.user < 0 || columns.item < 0 || columns.rating < 0) {
    fail(ErrorCode::kInvalidArgument, "user, item and rating columns required");
  }
  const bool with_ts = columns.timestamp >= 0;

  struct Row {
    std::size_t user, item;
    double raw;
    std::int64_t ts;
    bool live;
  };
  std::vector<Row> rows;
  std::vector<std::string> users, items, warnings;
  std::unordered_map<std::string, std::size_t> user_index, item_index;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> seen;
  std::vector<double> pinned_vocab;

  std::string line;
  std::size_t line_no = 0;
  bool header_pending = columns.header_row;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty()) continue;
    if (view.front() == '#') {
      constexpr std::string_view kLevels = "# levels:";
      if (view.substr(0, kLevels.size()) == kLevels) {
        std::istringstream ls(std::string(view.substr(kLevels.size())));
        std::string tok;
        while (ls >> tok) {
          double v = 0.0;
          if (!parse_number(std::string_view(tok), v)) {
            parse_error(line_no, "bad level value '" + tok + "'");
          }
          pinned_vocab.push_back(v);
        }
      }
      continue;
    }
    if (header_pending) {
      header_pending = false;
      continue;
    }
    const auto fields = split_fields(view, delim);
    if (static_cast<int>(fields.size()) <= needed) {
      parse_error(line_no, "expected at least " + std::to_string(needed + 1) +
                               " fields, found " + std::to_string(fields.size()));
    }
    const std::string user(fields[columns.user]);
    const std::string item(fields[columns.item]);
    if (user.empty() || item.empty()) parse_error(line_no, "empty user or item id");
    double raw = 0.0;
    if (!parse_number(fields[columns.rating], raw) || !std::isfinite(raw)) {
      parse_error(line_no, "bad rating '" + std::string(fields[columns.rating]) + "'");
    }
    std::int64_t ts = 0;
    if (with_ts && !parse_number(fields[columns.timestamp], ts)) {
      parse_error(line_no, "bad timestamp '" +
                               std::string(fields[columns.timestamp]) + "'");
    }
    auto [uit, unew] = user_index.try_emplace(user, users.size());
    if (unew) users.push_back(user);
    auto [iit, inew] = item_index.try_emplace(item, items.size());
    if (inew) items.push_back(item);

    const auto key = std::make_pair(uit->second, iit->second);
    if (auto dup = seen.find(key); dup != seen.end()) {
      rows[dup->second].live = false;
      warnings.push_back("line " + std::to_string(line_no) +
                         ": duplicate rating for user '" + user + "', item '" +
                         item + "'; keeping the last one");
      dup->second = rows.size();
    } else {
      seen.emplace(key, rows.size());
    }
    rows.push_back({uit->second, iit->second, raw, ts, true});
  }
  if (rows.empty()) fail(ErrorCode::kEmptyData, "no ratings in input");

  std::vector<double> vocab;
  if (!pinned_vocab.empty()) {
    vocab = pinned_vocab;
    std::sort(vocab.begin(), vocab.end());
  } else {
    for (const Row& r : rows) {
      if (r.live) vocab.push_back(r.raw);
    }
    std::sort(vocab.begin(), vocab.end());
    vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());
  }
  if (vocab.size() < 2) {
    fail(ErrorCode::kEmptyData, "need at least two distinct rating levels");
  }

  std::vector<Rating> ratings;
  ratings.reserve(rows.size());
  for (const Row& r : rows) {
    if (!r.live) continue;
    auto it = std::lower_bound(vocab.begin(), vocab.end(), r.raw);
    if (it == vocab.end() || *it != r.raw) {
      fail(ErrorCode::kVocabularyMismatch,
           "rating " + format_double(r.raw) + " missing from pinned levels");
    }
    ratings.push_back({r.user, r.item,
                       static_cast<std::size_t>(it - vocab.begin()), r.ts});
  }
  SparseRatingDataset out(std::move(users), std::move(items), std::move(vocab),
                          std::move(ratings), with_ts);
  out.warnings = std::move(warnings);
  return out;
}

SparseRatingDataset load_triplets_file(const std::filesystem::path& path,
                                       TextFormat format,
                                       const ColumnSpec& columns) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  try {
    return load_triplets(in, format, columns);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void write_triplets(const SparseRatingDataset& data, std::ostream& out) {
  out << "# levels:";
  for (double v : data.level_vocab()) out << ' ' << format_double(v);
  out << '\n';
  for (const Rating& r : data.ratings()) {
    out << data.user_ids()[r.user] << '\t' << data.item_ids()[r.item] << '\t'
        << format_double(data.raw_value(r.level));
    if (data.has_timestamps()) out << '\t' << r.timestamp;
    out << '\n';
  }
}

void write_triplets_file(const SparseRatingDataset& data,
                         const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::kIo, "cannot write '" + path.string() + "'");
  write_triplets(data, out);
  if (!out) fail(ErrorCode::kIo, "write failed for '" + path.string() + "'");
}

void SplitSpec::validate() const {
  const auto in_unit = [](double f) { return f > 0.0 && f < 1.0; };
  if (!in_unit(train_fraction) || !in_unit(validation_fraction)) {
    fail(ErrorCode::kInvalidArgument, "split fractions must lie in (0, 1)");
  }
}

SplitIndices split(const SparseRatingDataset& data, const SplitSpec& spec) {
  spec.validate();
  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (spec.strategy == SplitStrategy::kChronological) {
    if (!data.has_timestamps()) {
      fail(ErrorCode::kInvalidArgument,
           "chronological split requires timestamps");
    }
    const auto ratings = data.ratings();
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       return ratings[a].timestamp < ratings[b].timestamp;
                     });
  } else {
    std::mt19937_64 rng(spec.seed);
    std::shuffle(order.begin(), order.end(), rng);
  }

  const std::size_t n_train_total = rounded_share(n, spec.train_fraction);
  const std::size_t n_val = rounded_share(n_train_total, spec.validation_fraction);
  const std::size_t n_train = n_train_total - n_val;

  SplitIndices out;
  out.train.assign(order.begin(), order.begin() + n_train);
  out.validation.assign(order.begin() + n_train, order.begin() + n_train_total);
  out.test.assign(order.begin() + n_train_total, order.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.validation.begin(), out.validation.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

SparseRatingDataset remove_constant_raters(const SparseRatingDataset& data,
                                           std::size_t* removed_users) {
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  constexpr std::size_t kMixed = static_cast<std::size_t>(-2);
  std::vector<std::size_t> first_level(data.num_users(), kNone);
  for (const Rating& r : data.ratings()) {
    std::size_t& fl = first_level[r.user];
    if (fl == kNone) {
      fl = r.level;
    } else if (fl != kMixed && fl != r.level) {
      fl = kMixed;
    }
  }
  std::vector<std::size_t> keep;
  keep.reserve(data.size());
  const auto ratings = data.ratings();
  for (std::size_t k = 0; k < ratings.size(); ++k) {
    if (first_level[ratings[k].user] == kMixed) keep.push_back(k);
  }
  if (removed_users) {
    *removed_users = static_cast<std::size_t>(
        std::count_if(first_level.begin(), first_level.end(),
                      [&](std::size_t fl) { return fl != kNone && fl != kMixed; }));
  }
  return data.subset(keep);
}

PreparedSplit preprocess(const SparseRatingDataset& data, const SplitSpec& spec) {
  PreparedSplit out;
  out.counts.input = data.size();
  const SparseRatingDataset clean =
      remove_constant_raters(data, &out.counts.constant_users_removed);
  out.counts.after_constant_filter = clean.size();
  if (clean.empty()) {
    fail(ErrorCode::kEmptyData, "every user rated with a single level");
  }

  SplitIndices parts = split(clean, spec);
  const auto ratings = clean.ratings();
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  constexpr std::size_t kMixed = static_cast<std::size_t>(-2);
  while (true) {
    bool changed = false;

    // Dropping test rows can leave a user with a single level overall.
    std::vector<std::size_t> first_level(clean.num_users(), kNone);
    for (const auto* part : {&parts.train, &parts.validation, &parts.test}) {
      for (std::size_t k : *part) {
        std::size_t& fl = first_level[ratings[k].user];
        if (fl == kNone) {
          fl = ratings[k].level;
        } else if (fl != kMixed && fl != ratings[k].level) {
          fl = kMixed;
        }
      }
    }
    for (auto* part : {&parts.train, &parts.validation, &parts.test}) {
      const std::size_t before = part->size();
      std::erase_if(*part, [&](std::size_t k) {
        return first_level[ratings[k].user] != kMixed;
      });
      if (part->size() != before) changed = true;
    }
    for (std::size_t fl : first_level) {
      if (fl != kNone && fl != kMixed) ++out.counts.constant_users_removed;
    }

    std::vector<char> user_seen(clean.num_users(), 0);
    std::vector<char> item_seen(clean.num_items(), 0);
    for (const auto* part : {&parts.train, &parts.validation}) {
      for (std::size_t k : *part) {
        user_seen[ratings[k].user] = 1;
        item_seen[ratings[k].item] = 1;
      }
    }
    const std::size_t before = parts.test.size();
    std::erase_if(parts.test, [&](std::size_t k) {
      return !user_seen[ratings[k].user] || !item_seen[ratings[k].item];
    });
    if (parts.test.size() != before) {
      changed = true;
      out.counts.cold_test_dropped += before - parts.test.size();
    }
    if (!changed) break;
  }
  if (parts.train.empty() || parts.test.empty()) {
    fail(ErrorCode::kEmptyData, "preprocessing left an empty train or test set");
  }
  out.train = clean.subset(parts.train);
  out.validation = clean.subset(parts.validation);
  out.test = clean.subset(parts.test);
  out.counts.train = parts.train.size();
  out.counts.validation = parts.validation.size();
  out.counts.test = parts.test.size();
  return out;
}

}  // namespace cmtrf

namespace cmtrf {

SparseRatingDataset compact(const SparseRatingDataset& data) {
  constexpr std::size_t kUnused = static_cast<std::size_t>(-1);
  std::vector<std::size_t> user_map(data.num_users(), kUnused);
  std::vector<std::size_t> item_map(data.num_items(), kUnused);
  for (const Rating& r : data.ratings()) {
    user_map[r.user] = 0;
    item_map[r.item] = 0;
  }
  std::vector<std::string> users, items;
  for (std::size_t u = 0; u < user_map.size(); ++u) {
    if (user_map[u] != kUnused) {
      user_map[u] = users.size();
      users.push_back(data.user_ids()[u]);
    }
  }
  for (std::size_t i = 0; i < item_map.size(); ++i) {
    if (item_map[i] != kUnused) {
      item_map[i] = items.size();
      items.push_back(data.item_ids()[i]);
    }
  }
  std::vector<Rating> rows(data.ratings().begin(), data.ratings().end());
  for (Rating& r : rows) {
    r.user = user_map[r.user];
    r.item = item_map[r.item];
  }
  SparseRatingDataset out(std::move(users), std::move(items),
                          {data.level_vocab().begin(), data.level_vocab().end()},
                          std::move(rows), data.has_timestamps());
  out.warnings = data.warnings;
  return out;
}

SparseRatingDataset concatenate(const SparseRatingDataset& a,
                                const SparseRatingDataset& b) {
  if (!std::equal(a.level_vocab().begin(), a.level_vocab().end(),
                  b.level_vocab().begin(), b.level_vocab().end())) {
    fail(ErrorCode::kVocabularyMismatch, "cannot concatenate: level vocabularies differ");
  }
  std::vector<std::string> users(a.user_ids().begin(), a.user_ids().end());
  std::vector<std::string> items(a.item_ids().begin(), a.item_ids().end());
  std::unordered_map<std::string, std::size_t> user_index, item_index;
  for (std::size_t k = 0; k < users.size(); ++k) user_index.emplace(users[k], k);
  for (std::size_t k = 0; k < items.size(); ++k) item_index.emplace(items[k], k);
  auto intern = [](std::unordered_map<std::string, std::size_t>& index,
                   std::vector<std::string>& ids, const std::string& raw) {
    auto [it, fresh] = index.emplace(raw, ids.size());
    if (fresh) ids.push_back(raw);
    return it->second;
  };
  std::vector<Rating> rows(a.ratings().begin(), a.ratings().end());
  rows.reserve(a.size() + b.size());
  for (Rating r : b.ratings()) {
    r.user = intern(user_index, users, b.user_ids()[r.user]);
    r.item = intern(item_index, items, b.item_ids()[r.item]);
    rows.push_back(r);
  }
  return SparseRatingDataset(std::move(users), std::move(items),
                             {a.level_vocab().begin(), a.level_vocab().end()},
                             std::move(rows),
                             a.has_timestamps() && b.has_timestamps());
}

}  // namespace cmtrf
