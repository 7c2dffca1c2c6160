#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "matchlearn/matmodel.hpp"
#include "matchlearn/random.hpp"

namespace matchlearn {

/// Every row matched to exactly one column; uniform over all injections.
struct OneToOne {
  friend bool operator==(const OneToOne&, const OneToOne&) = default;
};

/// Row i receives Binomial(K, p0) distinct columns.
struct OneToMany {
  int K = 1;
  double p0 = 1.0;
  friend bool operator==(const OneToMany&, const OneToMany&) = default;
};

/// Random arrival on both sides; arrival counts follow a truncated
/// bivariate binomial and the arrived sets are matched one-to-one.
struct TwoSided {
  double p1 = 0.8;
  double p2 = 0.8;
  double c_r = 0.3;
  double c_s = 0.3;
  double gamma = 0.2;
  friend bool operator==(const TwoSided&, const TwoSided&) = default;
};

using MatchingScheme = std::variant<OneToOne, OneToMany, TwoSided>;

/// "oto", "otm" or "tside".
std::string scheme_name(const MatchingScheme& scheme);

/// Parameter ranges plus feasibility for the given dims. Throws ArgumentError.
void validate_scheme(const MatchingScheme& scheme, int d1, int d2);

struct Pair {
  int i;
  int j;
  friend auto operator<=>(const Pair&, const Pair&) = default;
};

/// Set of revealed (row, column) pairs, kept sorted.
class Matching {
 public:
  Matching() = default;
  Matching(int d1, int d2, std::vector<Pair> pairs);

  int d1() const noexcept { return d1_; }
  int d2() const noexcept { return d2_; }
  const std::vector<Pair>& pairs() const noexcept { return pairs_; }
  std::size_t size() const noexcept { return pairs_.size(); }
  bool empty() const noexcept { return pairs_.empty(); }

  friend bool operator==(const Matching&, const Matching&) = default;

 private:
  int d1_ = 0;
  int d2_ = 0;
  std::vector<Pair> pairs_;
};

/// Empty string when `m` satisfies the scheme's capacity constraints,
/// otherwise a description of the first violation.
std::string capacity_violation(const Matching& m, const MatchingScheme& scheme);

/// One time step: the matching and the rewards aligned with its pairs.
struct Observation {
  Matching matching;
  std::vector<double> rewards;
};

struct ObservationBatch {
  MatchingScheme scheme;
  int d1 = 0;
  int d2 = 0;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  std::vector<Observation> records;

  std::size_t size() const noexcept { return records.size(); }
};

using BatchSlice = std::span<const Observation>;

/// Validates the invariants tying records to the batch dims. Throws DataFormatError.
void check_batch(const ObservationBatch& batch);

Matching sample_matching(const MatchingScheme& scheme, int d1, int d2, Rng& rng);

/// Rejection sampler for the truncated bivariate binomial. Throws ArgumentError
/// ("infeasible_truncation") when the truncation region is empty or 1e6
/// consecutive draws are rejected.
std::pair<int, int> sample_truncated_binomial(int d1, double p1, int d2, double p2, double c_r,
                                              double c_s, double gamma, Rng& rng);

/// Smallest integer count k with k >= c * d.
int truncation_floor(double c, int d);

struct EntryProbability {
  double nu = 0.0;
  /// Monte Carlo standard error; zero for the closed-form schemes.
  double mc_se = 0.0;
};

EntryProbability entrywise_probability(const MatchingScheme& scheme, int d1, int d2,
                                       int mc_samples, Rng& rng);

/// T noisy matching observations of M with N(0, sigma^2) noise.
ObservationBatch observe(const Matrix& M, const MatchingScheme& scheme, int T, double sigma,
                         Rng& rng);
inline ObservationBatch observe(const RewardMatrix& M, const MatchingScheme& scheme, int T,
                                double sigma, Rng& rng) {
  return observe(M.values(), scheme, T, sigma, rng);
}

}  // namespace matchlearn
