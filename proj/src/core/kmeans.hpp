#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace cmtrf {

struct KMeansResult {
  std::vector<std::vector<double>> centers;
  std::vector<std::size_t> labels;
  int iterations = 0;
  std::size_t empty_repairs = 0;
  std::size_t distinct_points = 0;
};

// Lloyd's algorithm with k-means++ seeding. Ties in assignment go to the
// lowest center index. An empty cluster is reseeded with the point farthest
// from its center among clusters holding at least two points.
KMeansResult lloyd_kmeans(std::span<const std::vector<double>> points,
                          std::size_t k, std::uint64_t seed,
                          int max_iterations = 100);

}  // namespace cmtrf
