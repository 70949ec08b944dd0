#include "core/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <string>

#include <json.hpp>

#include "core/error.hpp"

namespace cmtrf {
namespace {

std::uint64_t row_seed(std::uint64_t seed, std::uint64_t row) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(row),
                    static_cast<std::uint32_t>(row >> 32), 0x5d1u};
  std::uint64_t out = 0;
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  out = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
  return out;
}

// Linear interpolation through (xs[k], ys[k]) with linear extrapolation.
double piecewise_linear(std::span<const double> xs, std::span<const double> ys,
                        double x) {
  std::size_t hi = static_cast<std::size_t>(
      std::upper_bound(xs.begin(), xs.end(), x) - xs.begin());
  hi = std::clamp<std::size_t>(hi, 1, xs.size() - 1);
  const std::size_t lo = hi - 1;
  return ys[lo] + (x - xs[lo]) * (ys[hi] - ys[lo]) / (xs[hi] - xs[lo]);
}

}  // namespace

std::string_view to_string(SynthKind kind) {
  return kind == SynthKind::kSD1 ? "sd1" : "sd2";
}

SynthKind synth_kind_from_string(std::string_view name) {
  if (name == "sd1" || name == "SD1" || name == "SD-1") return SynthKind::kSD1;
  if (name == "sd2" || name == "SD2" || name == "SD-2") return SynthKind::kSD2;
  fail(ErrorCode::kInvalidArgument, "unknown synthetic kind '" + std::string(name) + "'");
}

void SynthConfig::validate() const {
  if (num_users < 1 || num_items < 1 || rank < 1) {
    fail(ErrorCode::kInvalidArgument, "users, items and rank must be >= 1");
  }
  if (levels < 2) fail(ErrorCode::kInvalidArgument, "need at least two levels");
  if (!(density > 0.0 && density <= 1.0)) {
    fail(ErrorCode::kInvalidArgument, "density must lie in (0, 1]");
  }
  if (kind == SynthKind::kSD1 && !(epsilon >= 0.0 && epsilon < 2.0)) {
    fail(ErrorCode::kInvalidArgument, "SD1 gap floor must lie in [0, 2)");
  }
  if (!std::isnan(factor_std) && !(factor_std > 0.0)) {
    fail(ErrorCode::kInvalidArgument, "factor std must be > 0");
  }
}

double SynthConfig::resolved_mean() const {
  if (!std::isnan(factor_mean)) return factor_mean;
  return kind == SynthKind::kSD1 ? std::sqrt(3.5 / static_cast<double>(rank)) : 0.0;
}

double SynthConfig::resolved_std() const {
  if (!std::isnan(factor_std)) return factor_std;
  return kind == SynthKind::kSD1 ? 0.5 : 1.0;
}

std::size_t quantize_nearest(std::span<const double> level_values, double z) {
  std::size_t best = 0;
  double best_d = std::abs(level_values[0] - z);
  for (std::size_t l = 1; l < level_values.size(); ++l) {
    const double d = std::abs(level_values[l] - z);
    if (d < best_d) {
      best_d = d;
      best = l;
    }
  }
  return best + 1;
}

double sd2_forward(double c, double x, std::size_t levels) {
  return -std::log(-1.0 + static_cast<double>(levels) / (x - 0.5)) / c;
}

double sd2_inverse(double c, double y, std::size_t levels) {
  return 0.5 + static_cast<double>(levels) / (1.0 + std::exp(-c * y));
}

double sd1_forward(std::span<const double> level_values, double x) {
  std::vector<double> xs(level_values.size());
  for (std::size_t l = 0; l < xs.size(); ++l) xs[l] = static_cast<double>(l + 1);
  return piecewise_linear(xs, level_values, x);
}

double sd1_inverse(std::span<const double> level_values, double z) {
  std::vector<double> xs(level_values.size());
  for (std::size_t l = 0; l < xs.size(); ++l) xs[l] = static_cast<double>(l + 1);
  return piecewise_linear(level_values, xs, z);
}

SynthResult generate(const SynthConfig& config) {
  config.validate();
  const std::size_t n = config.num_users;
  const std::size_t m = config.num_items;
  const std::size_t L = config.levels;
  const auto d = static_cast<Eigen::Index>(config.rank);

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> factor(config.resolved_mean(),
                                          config.resolved_std());
  RowMatrix u(static_cast<Eigen::Index>(n), d);
  RowMatrix v(static_cast<Eigen::Index>(m), d);
  for (Eigen::Index r = 0; r < u.rows(); ++r)
    for (Eigen::Index c = 0; c < d; ++c) u(r, c) = factor(rng);
  for (Eigen::Index r = 0; r < v.rows(); ++r)
    for (Eigen::Index c = 0; c < d; ++c) v(r, c) = factor(rng);

  SynthResult out;
  out.level_values.resize(n);
  if (config.kind == SynthKind::kSD2) out.steepness.resize(n);
  out.continuous.resize(n * m);

  std::vector<std::string> user_ids(n), item_ids(m);
  for (std::size_t i = 0; i < n; ++i) user_ids[i] = std::to_string(i + 1);
  for (std::size_t j = 0; j < m; ++j) item_ids[j] = std::to_string(j + 1);
  std::vector<double> vocab(L);
  for (std::size_t l = 0; l < L; ++l) vocab[l] = static_cast<double>(l + 1);

  std::vector<Rating> ratings;
  for (std::size_t i = 0; i < n; ++i) {
    std::mt19937_64 row_rng(row_seed(config.seed, i));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto& values = out.level_values[i];
    values.resize(L);
    if (config.kind == SynthKind::kSD1) {
      std::normal_distribution<double> first(1.0, 1.0);
      std::uniform_real_distribution<double> gap(config.epsilon, 2.0);
      values[0] = first(row_rng);
      for (std::size_t l = 1; l < L; ++l) values[l] = values[l - 1] + gap(row_rng);
    } else {
      std::normal_distribution<double> steep(1.0, 0.25);
      double c = steep(row_rng);
      while (c < 0.1) c = steep(row_rng);
      out.steepness[i] = c;
      for (std::size_t l = 0; l < L; ++l) {
        values[l] = sd2_forward(c, static_cast<double>(l + 1), L);
      }
    }
    for (std::size_t j = 0; j < m; ++j) {
      const double z = u.row(static_cast<Eigen::Index>(i))
                           .dot(v.row(static_cast<Eigen::Index>(j)));
      std::size_t level = 0;  // 1-based
      double x = 0.0;
      if (config.kind == SynthKind::kSD1) {
        x = sd1_inverse(values, z);
        level = quantize_nearest(values, z);
      } else {
        x = sd2_inverse(out.steepness[i], z, L);
        const double clamped = std::clamp(x, 0.5, static_cast<double>(L) + 0.5);
        level = static_cast<std::size_t>(
            std::clamp<long>(std::lround(clamped), 1, static_cast<long>(L)));
      }
      out.continuous[i * m + j] = x;
      const bool keep = config.density >= 1.0 || unit(row_rng) < config.density;
      if (keep) ratings.push_back({i, j, level - 1, 0});
    }
  }
  out.dataset = SparseRatingDataset(std::move(user_ids), std::move(item_ids),
                                    std::move(vocab), std::move(ratings), false);
  out.truth = FactorModel(std::move(u), std::move(v));
  return out;
}

void write_truth_json(const SynthResult& result, const SynthConfig& config,
                      const std::filesystem::path& path) {
  nlohmann::json j;
  j["kind"] = to_string(config.kind);
  j["num_users"] = config.num_users;
  j["num_items"] = config.num_items;
  j["rank"] = config.rank;
  j["levels"] = config.levels;
  j["seed"] = config.seed;
  j["density"] = config.density;
  j["factor_mean"] = config.resolved_mean();
  j["factor_std"] = config.resolved_std();
  j["level_values"] = result.level_values;
  if (!result.steepness.empty()) j["steepness"] = result.steepness;
  auto rows = [](const RowMatrix& mat) {
    std::vector<std::vector<double>> out(static_cast<std::size_t>(mat.rows()));
    for (Eigen::Index r = 0; r < mat.rows(); ++r) {
      out[static_cast<std::size_t>(r)].assign(mat.row(r).data(),
                                              mat.row(r).data() + mat.cols());
    }
    return out;
  };
  j["user_factors"] = rows(result.truth.user);
  j["item_factors"] = rows(result.truth.item);
  std::ofstream out(path);
  if (!out) fail(ErrorCode::kIo, "cannot write '" + path.string() + "'");
  out << j.dump() << '\n';
}

}  // namespace cmtrf
