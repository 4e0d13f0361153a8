#include "doctest.h"

#include <cmath>
#include <functional>
#include <limits>
#include <set>

#include "clinnote/kmedoids.hpp"
#include "support.hpp"

using namespace clinnote;
using namespace clinnote::cluster;

namespace {

using Matrix = std::vector<std::vector<double>>;

Matrix cosine_matrix(const Matrix& pts) {
  Matrix d(pts.size(), std::vector<double>(pts.size()));
  for (size_t i = 0; i < pts.size(); ++i)
    for (size_t j = 0; j < pts.size(); ++j) d[i][j] = cosine_distance(pts[i], pts[j]);
  return d;
}

// Exhaustive minimum over every k-subset.
double brute_force_cost(const Matrix& d, const std::vector<double>& w, int k, std::vector<size_t>* best = nullptr) {
  const size_t n = d.size();
  double best_cost = std::numeric_limits<double>::infinity();
  std::vector<size_t> idx(static_cast<size_t>(k));
  std::function<void(size_t, size_t)> rec = [&](size_t start, size_t depth) {
    if (depth == idx.size()) {
      const double c = clustering_cost(d, w, idx);
      if (c < best_cost - 1e-12) {
        best_cost = c;
        if (best) *best = idx;
      }
      return;
    }
    for (size_t i = start; i < n; ++i) {
      idx[depth] = i;
      rec(i + 1, depth + 1);
    }
  };
  rec(0, 0);
  return best_cost;
}

// Points scattered around two orthogonal directions.
Matrix orthogonal_clusters(testing::Gen& g, int per_cluster) {
  Matrix pts;
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < per_cluster; ++i) {
      std::vector<double> p(4, 0.0);
      p[static_cast<size_t>(c)] = 1.0;
      for (auto& x : p) x += g.normal(0, 0.08);
      pts.push_back(p);
    }
  return pts;
}

}  // namespace

TEST_SUITE("kmedoids") {
  TEST_CASE("cosine distance") {
    CHECK(cosine_distance({1, 0}, {0, 1}) == doctest::Approx(1.0));
    CHECK(cosine_distance({1, 0}, {2, 0}) == doctest::Approx(0.0));
    CHECK(cosine_distance({1, 0}, {-1, 0}) == doctest::Approx(2.0));
    CHECK(cosine_distance({0, 0}, {1, 0}) == 1.0);
  }

  TEST_CASE("two orthogonal clusters: PAM finds the brute-force optimum") {
    testing::for_all(20, 10, [](testing::Gen& g) {
      const auto pts = orthogonal_clusters(g, g.integer(3, 6));
      const auto d = cosine_matrix(pts);
      const std::vector<double> w(pts.size(), 1.0);
      std::vector<size_t> best;
      const double opt = brute_force_cost(d, w, 2, &best);
      const auto r = pam_cosine(pts, w, 2, {100, 7});
      CHECK(r.total_cost == doctest::Approx(opt).epsilon(1e-12));
      std::set<size_t> got(r.medoid_indices.begin(), r.medoid_indices.end());
      CHECK(got == std::set<size_t>(best.begin(), best.end()));
      // one medoid per direction
      const size_t half = pts.size() / 2;
      CHECK((r.medoid_indices[0] < half) != (r.medoid_indices[1] < half));
    });
  }

  TEST_CASE("cost trace never increases and ends at the reported cost") {
    testing::for_all(40, 11, [](testing::Gen& g) {
      Matrix pts;
      for (int i = 0, n = g.integer(5, 25); i < n; ++i) pts.push_back({g.normal(), g.normal(), g.normal()});
      std::vector<double> w;
      for (size_t i = 0; i < pts.size(); ++i) w.push_back(g.integer(1, 4));
      const int k = g.integer(1, 5);
      const auto r = pam_cosine(pts, w, k, {100, 3});
      REQUIRE_FALSE(r.cost_trace.empty());
      for (size_t i = 1; i < r.cost_trace.size(); ++i) CHECK(r.cost_trace[i] <= r.cost_trace[i - 1] + 1e-12);
      CHECK(r.cost_trace.back() == doctest::Approx(r.total_cost));
      CHECK(r.total_cost == doctest::Approx(clustering_cost(cosine_matrix(pts), w, r.medoid_indices)));
      CHECK(std::set<size_t>(r.medoid_indices.begin(), r.medoid_indices.end()).size() == r.medoid_indices.size());
      for (size_t i = 0; i < pts.size(); ++i) {
        // each point sits with its nearest medoid
        const auto d = cosine_matrix(pts);
        const size_t mine = r.medoid_indices[static_cast<size_t>(r.assignments[i])];
        for (size_t m : r.medoid_indices) CHECK(d[i][mine] <= d[i][m] + 1e-12);
      }
    });
  }

  TEST_CASE("PAM ends at a swap-local optimum and usually the global one") {
    int hits = 0;
    const int cases = 200;
    testing::for_all(cases, 12, [&](testing::Gen& g) {
      Matrix pts;
      const int n = g.integer(4, 9);
      for (int i = 0; i < n; ++i) pts.push_back({g.normal(), g.normal()});
      const auto d = cosine_matrix(pts);
      const std::vector<double> w(pts.size(), 1.0);
      const int k = g.integer(1, 3);
      const auto r = pam(d, w, k, {100, 1});
      const double opt = brute_force_cost(d, w, k);
      CHECK(r.total_cost >= opt - 1e-12);
      if (r.total_cost <= opt + 1e-9) ++hits;
      std::set<size_t> med(r.medoid_indices.begin(), r.medoid_indices.end());
      for (size_t m = 0; m < r.medoid_indices.size(); ++m)
        for (size_t c = 0; c < pts.size(); ++c) {
          if (med.count(c)) continue;
          auto swapped = r.medoid_indices;
          swapped[m] = c;
          CHECK(clustering_cost(d, w, swapped) >= r.total_cost - 1e-12);
        }
    });
    CHECK(hits >= cases * 9 / 10);
  }

  TEST_CASE("fixed seed gives identical results across runs") {
    testing::Gen g(99);
    Matrix pts;
    for (int i = 0; i < 30; ++i) pts.push_back({g.normal(), g.normal(), g.normal(), g.normal()});
    const std::vector<double> w(pts.size(), 1.0);
    const auto first = pam_cosine(pts, w, 4, {100, 5});
    for (int run = 0; run < 5; ++run) {
      const auto again = pam_cosine(pts, w, 4, {100, 5});
      CHECK(again.medoid_indices == first.medoid_indices);
      CHECK(again.assignments == first.assignments);
      CHECK(again.cost_trace == first.cost_trace);
    }
  }

  TEST_CASE("weights pull the medoid toward heavy points") {
    const Matrix d = {{0, 1, 2}, {1, 0, 1}, {2, 1, 0}};
    CHECK(pam(d, {1, 1, 1}, 1).medoid_indices == std::vector<size_t>{1});
    CHECK(pam(d, {10, 1, 1}, 1).medoid_indices == std::vector<size_t>{0});
  }

  TEST_CASE("k bounds") {
    const Matrix d = {{0, 1}, {1, 0}};
    CHECK(pam(d, {1, 1}, 5).k == 2);
    CHECK_THROWS_AS(pam(d, {1, 1}, 0), InvalidK);
    CHECK_THROWS(pam({}, {}, 1));
  }
}
