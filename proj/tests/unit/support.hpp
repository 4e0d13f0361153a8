#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "clinnote/common.hpp"

namespace testing {

inline std::filesystem::path data_dir() { return CLINNOTE_TEST_DATA_DIR; }
inline std::filesystem::path oracle(const std::string& name) { return data_dir() / "oracle" / name; }
inline nlohmann::json oracle_json(const std::string& name) {
  return nlohmann::json::parse(clinnote::read_file(oracle(name)));
}

// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 rng{std::random_device{}()};
    path_ = std::filesystem::temp_directory_path() / ("clinnote-" + tag + "-" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Seeded value source for property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double normal(double mu = 0.0, double sd = 1.0) { return std::normal_distribution<double>(mu, sd)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin(double p = 0.5) { return uniform(0.0, 1.0) < p; }
  template <class T>
  const T& pick(const std::vector<T>& xs) { return xs[static_cast<size_t>(integer(0, static_cast<int>(xs.size()) - 1))]; }
  std::string word(int min_len = 2, int max_len = 8) {
    std::string s;
    const int n = integer(min_len, max_len);
    for (int i = 0; i < n; ++i) s.push_back(static_cast<char>('a' + integer(0, 25)));
    return s;
  }
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

// Runs `body` for `cases` independently seeded generators.
template <class F>
void for_all(int cases, std::uint64_t seed, F&& body) {
  for (int i = 0; i < cases; ++i) {
    Gen g(seed * 1000003ULL + static_cast<std::uint64_t>(i));
    body(g);
  }
}

}  // namespace testing
