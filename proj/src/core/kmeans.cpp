#include "core/kmeans.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <set>

#include "core/error.hpp"

namespace cmtrf {
namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return d;
}

std::size_t nearest(const std::vector<double>& p,
                    const std::vector<std::vector<double>>& centers) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centers.size(); ++c) {
    const double d = sq_dist(p, centers[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

}  // namespace

KMeansResult lloyd_kmeans(std::span<const std::vector<double>> points,
                          std::size_t k, std::uint64_t seed,
                          int max_iterations) {
  const std::size_t n = points.size();
  if (k == 0 || k > n) {
    fail(ErrorCode::kInvalidArgument, "k-means needs 1 <= k <= number of points");
  }
  const std::size_t dim = points.front().size();
  for (const auto& p : points) {
    if (p.size() != dim) fail(ErrorCode::kInvalidArgument, "ragged k-means input");
  }

  KMeansResult out;
  out.distinct_points =
      std::set<std::vector<double>>(points.begin(), points.end()).size();

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  out.centers.push_back(points[static_cast<std::size_t>(unit(rng) * n) % n]);
  std::vector<double> d2(n);
  while (out.centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = sq_dist(points[i], out.centers[nearest(points[i], out.centers)]);
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double target = unit(rng) * total;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        target -= d2[i];
        if (target <= 0.0) {
          pick = i;
          break;
        }
      }
      while (d2[pick] <= 0.0) --pick;  // guard against round-off at the tail
    } else {
      pick = static_cast<std::size_t>(unit(rng) * n) % n;
    }
    out.centers.push_back(points[pick]);
  }

  out.labels.assign(n, 0);
  for (int it = 0; it < max_iterations; ++it) {
    out.iterations = it + 1;
    bool changed = it == 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = nearest(points[i], out.centers);
      if (c != out.labels[i]) {
        out.labels[i] = c;
        changed = true;
      }
    }

    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t l : out.labels) ++sizes[l];
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] != 0) continue;
      std::size_t worst = n;
      double worst_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (sizes[out.labels[i]] < 2) continue;
        const double d = sq_dist(points[i], out.centers[out.labels[i]]);
        if (d > worst_d) {
          worst_d = d;
          worst = i;
        }
      }
      if (worst == n) continue;
      --sizes[out.labels[worst]];
      out.labels[worst] = c;
      sizes[c] = 1;
      ++out.empty_repairs;
      changed = true;
    }

    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] == 0) continue;
      std::vector<double> mean(dim, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        if (out.labels[i] != c) continue;
        for (std::size_t j = 0; j < dim; ++j) mean[j] += points[i][j];
      }
      for (double& m : mean) m /= static_cast<double>(sizes[c]);
      out.centers[c] = std::move(mean);
    }
    if (!changed) break;
  }
  return out;
}

}  // namespace cmtrf
