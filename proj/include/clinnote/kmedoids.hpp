#pragma once

#include <cstdint>
#include <vector>

#include "clinnote/common.hpp"

namespace clinnote::cluster {

class InvalidK : public Error {
 public:
  explicit InvalidK(const std::string& what) : Error("InvalidK", what) {}
};

// 1 - cos(a, b), clamped to [0, 2]. A zero vector is at distance 1 from
// everything.
double cosine_distance(const std::vector<double>& a, const std::vector<double>& b);

struct MedoidClustering {
  int k = 0;
  std::vector<int> assignments;       // point index -> position in medoid_indices
  std::vector<size_t> medoid_indices;
  double total_cost = 0.0;            // sum of weight * distance to assigned medoid
  std::vector<double> cost_trace;     // after BUILD, then after every accepted swap
  int swap_iterations = 0;
};

struct PamOptions {
  int max_swap_iterations = 100;
  std::uint64_t seed = 0;  // orders candidate scans, which settles exact ties
};

// Partitioning Around Medoids on a precomputed dissimilarity matrix.
// `k` larger than the number of points is lowered to it.
MedoidClustering pam(const std::vector<std::vector<double>>& distances, const std::vector<double>& weights, int k,
                     const PamOptions& options = {});

// Convenience wrapper: cosine distances between embeddings.
MedoidClustering pam_cosine(const std::vector<std::vector<double>>& embeddings, const std::vector<double>& weights,
                            int k, const PamOptions& options = {});

double clustering_cost(const std::vector<std::vector<double>>& distances, const std::vector<double>& weights,
                       const std::vector<size_t>& medoids);

}  // namespace clinnote::cluster
