#include <gtest/gtest.h>

#include <random>
#include <set>
#include <vector>

#include "core/error.hpp"
#include "core/kmeans.hpp"

namespace cmtrf {
namespace {

std::vector<std::vector<double>> two_blobs(std::size_t per_blob, std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, 0.05);
  std::vector<std::vector<double>> pts;
  for (std::size_t i = 0; i < 2 * per_blob; ++i) {
    const double base = i < per_blob ? 0.0 : 10.0;
    pts.push_back({base + noise(rng), base + noise(rng), base + noise(rng)});
  }
  return pts;
}

TEST(KMeans, SeparatesWellSeparatedBlobs) {
  std::mt19937_64 rng(1);
  const auto pts = two_blobs(40, rng);
  const auto res = lloyd_kmeans(pts, 2, 3);
  for (std::size_t i = 1; i < 40; ++i) EXPECT_EQ(res.labels[i], res.labels[0]);
  for (std::size_t i = 41; i < 80; ++i) EXPECT_EQ(res.labels[i], res.labels[40]);
  EXPECT_NE(res.labels[0], res.labels[40]);
}

TEST(KMeans, SameSeedSameResult) {
  std::mt19937_64 rng(2);
  const auto pts = two_blobs(30, rng);
  const auto a = lloyd_kmeans(pts, 4, 11);
  const auto b = lloyd_kmeans(pts, 4, 11);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.centers, b.centers);
}

TEST(KMeans, CentersAreMembersMeans) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<std::vector<double>> pts(50, std::vector<double>(2));
  for (auto& p : pts) p = {u(rng), u(rng)};
  const auto res = lloyd_kmeans(pts, 3, 0);
  for (std::size_t c = 0; c < 3; ++c) {
    double sx = 0, sy = 0, n = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (res.labels[i] != c) continue;
      sx += pts[i][0];
      sy += pts[i][1];
      ++n;
    }
    ASSERT_GT(n, 0);
    EXPECT_NEAR(res.centers[c][0], sx / n, 1e-12);
    EXPECT_NEAR(res.centers[c][1], sy / n, 1e-12);
  }
}

TEST(KMeans, KEqualsNGivesSingletons) {
  const std::vector<std::vector<double>> pts{{0.0}, {1.0}, {5.0}, {9.0}};
  const auto res = lloyd_kmeans(pts, 4, 0);
  EXPECT_EQ(std::set<std::size_t>(res.labels.begin(), res.labels.end()).size(), 4u);
}

TEST(KMeans, IdenticalPointsRepairEmptyCluster) {
  const std::vector<std::vector<double>> pts(6, std::vector<double>{1.0, 2.0});
  const auto res = lloyd_kmeans(pts, 2, 0);
  EXPECT_EQ(res.distinct_points, 1u);
  EXPECT_GE(res.empty_repairs, 1u);
  EXPECT_EQ(std::set<std::size_t>(res.labels.begin(), res.labels.end()).size(), 2u);
}

TEST(KMeans, InvalidKRejected) {
  const std::vector<std::vector<double>> pts{{0.0}, {1.0}};
  EXPECT_THROW(lloyd_kmeans(pts, 0, 0), Error);
  EXPECT_THROW(lloyd_kmeans(pts, 3, 0), Error);
  const std::vector<std::vector<double>> ragged{{0.0}, {1.0, 2.0}};
  EXPECT_THROW(lloyd_kmeans(ragged, 1, 0), Error);
}

}  // namespace
}  // namespace cmtrf
