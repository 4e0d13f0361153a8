#include "clinnote/kmedoids.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace clinnote::cluster {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<size_t> seeded_order(size_t n, std::uint64_t seed) {
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::mt19937_64 rng(seed);
  // Fisher-Yates with raw engine output so the order is identical across
  // standard library implementations.
  for (size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  return order;
}

struct Nearest {
  std::vector<int> near, second;  // positions in the medoid list
  std::vector<double> d_near, d_second;
};

Nearest nearest_medoids(const std::vector<std::vector<double>>& d, const std::vector<size_t>& medoids) {
  const size_t n = d.size();
  Nearest out{std::vector<int>(n, -1), std::vector<int>(n, -1), std::vector<double>(n, kInf),
              std::vector<double>(n, kInf)};
  for (size_t o = 0; o < n; ++o) {
    for (size_t m = 0; m < medoids.size(); ++m) {
      double dist = d[o][medoids[m]];
      if (o == medoids[m]) dist = -1.0;  // a medoid always belongs to itself
      if (dist < out.d_near[o]) {
        out.second[o] = out.near[o];
        out.d_second[o] = out.d_near[o];
        out.near[o] = static_cast<int>(m);
        out.d_near[o] = dist;
      } else if (dist < out.d_second[o]) {
        out.second[o] = static_cast<int>(m);
        out.d_second[o] = dist;
      }
    }
    if (out.d_near[o] < 0) out.d_near[o] = 0.0;
  }
  return out;
}

}  // namespace

double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw InvalidInput("cosine_distance: dimension mismatch");
  double dot = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 1.0;
  return std::clamp(1.0 - dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 2.0);
}

double clustering_cost(const std::vector<std::vector<double>>& d, const std::vector<double>& w,
                       const std::vector<size_t>& medoids) {
  double cost = 0;
  for (size_t o = 0; o < d.size(); ++o) {
    double best = kInf;
    for (size_t m : medoids) best = std::min(best, d[o][m]);
    cost += w[o] * best;
  }
  return cost;
}

MedoidClustering pam(const std::vector<std::vector<double>>& d, const std::vector<double>& w, int k,
                     const PamOptions& options) {
  const size_t n = d.size();
  if (k <= 0) throw InvalidK("k must be positive, got " + std::to_string(k));
  if (n == 0) throw InvalidInput("pam needs at least one point");
  if (w.size() != n) throw InvalidInput("pam: weight count differs from point count");
  for (const auto& row : d)
    if (row.size() != n) throw InvalidInput("pam: distance matrix is not square");
  const size_t k_eff = std::min(static_cast<size_t>(k), n);
  const auto order = seeded_order(n, options.seed);

  MedoidClustering res;
  res.k = static_cast<int>(k_eff);
  std::vector<char> is_medoid(n, 0);

  // BUILD: first medoid minimises total cost, then greedily add the point
  // with the largest cost reduction.
  std::vector<double> nearest(n, kInf);
  {
    size_t best = order[0];
    double best_cost = kInf;
    for (size_t c : order) {
      double cost = 0;
      for (size_t o = 0; o < n; ++o) cost += w[o] * d[o][c];
      if (cost < best_cost) {
        best_cost = cost;
        best = c;
      }
    }
    res.medoid_indices.push_back(best);
    is_medoid[best] = 1;
    for (size_t o = 0; o < n; ++o) nearest[o] = d[o][best];
  }
  while (res.medoid_indices.size() < k_eff) {
    size_t best = n;
    double best_gain = -1.0;
    for (size_t c : order) {
      if (is_medoid[c]) continue;
      double gain = 0;
      for (size_t o = 0; o < n; ++o) gain += w[o] * std::max(0.0, nearest[o] - d[o][c]);
      if (gain > best_gain) {
        best_gain = gain;
        best = c;
      }
    }
    res.medoid_indices.push_back(best);
    is_medoid[best] = 1;
    for (size_t o = 0; o < n; ++o) nearest[o] = std::min(nearest[o], d[o][best]);
  }
  res.total_cost = clustering_cost(d, w, res.medoid_indices);
  res.cost_trace.push_back(res.total_cost);

  // SWAP: evaluate every (medoid, non-medoid) exchange in one pass per
  // candidate and apply the best improving one.
  for (int iter = 0; iter < options.max_swap_iterations && k_eff < n; ++iter) {
    const Nearest nn = nearest_medoids(d, res.medoid_indices);
    double best_delta = 0.0;
    size_t best_c = n, best_m = 0;
    std::vector<double> delta(k_eff);
    for (size_t c : order) {
      if (is_medoid[c]) continue;
      std::fill(delta.begin(), delta.end(), 0.0);
      double shared = 0.0;
      for (size_t o = 0; o < n; ++o) {
        const double doc = d[o][c];
        const auto near = static_cast<size_t>(nn.near[o]);
        // medoid kept: o moves only if c is closer
        const double kept = std::min(0.0, doc - nn.d_near[o]);
        // own medoid removed: o goes to c or its second medoid
        const double removed = std::min(doc, nn.d_second[o]) - nn.d_near[o];
        shared += w[o] * kept;
        delta[near] += w[o] * (removed - kept);
      }
      for (size_t m = 0; m < k_eff; ++m) {
        const double total = delta[m] + shared;
        if (total < best_delta) {
          best_delta = total;
          best_c = c;
          best_m = m;
        }
      }
    }
    if (best_c == n || best_delta > -1e-12 * std::max(1.0, res.total_cost)) break;
    is_medoid[res.medoid_indices[best_m]] = 0;
    res.medoid_indices[best_m] = best_c;
    is_medoid[best_c] = 1;
    const double new_cost = clustering_cost(d, w, res.medoid_indices);
    if (new_cost > res.total_cost) break;  // numerical noise; keep the previous configuration
    res.total_cost = new_cost;
    res.cost_trace.push_back(new_cost);
    res.swap_iterations = iter + 1;
  }

  const Nearest final_nn = nearest_medoids(d, res.medoid_indices);
  res.assignments = final_nn.near;
  return res;
}

MedoidClustering pam_cosine(const std::vector<std::vector<double>>& embeddings, const std::vector<double>& weights,
                            int k, const PamOptions& options) {
  const size_t n = embeddings.size();
  std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j) d[i][j] = d[j][i] = cosine_distance(embeddings[i], embeddings[j]);
  return pam(d, weights, k, options);
}

}  // namespace clinnote::cluster
