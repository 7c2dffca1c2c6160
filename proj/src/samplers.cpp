#include "matchlearn/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "matchlearn/diagnostics.hpp"

namespace matchlearn {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// First k entries of `pool` become a uniform ordered sample without replacement.
void partial_shuffle(std::vector<int>& pool, int k, Rng& rng) {
  const int n = static_cast<int>(pool.size());
  for (int a = 0; a < k; ++a) {
    std::uniform_int_distribution<int> pick(a, n - 1);
    std::swap(pool[a], pool[pick(rng)]);
  }
}

std::vector<int> iota_vec(int n) {
  std::vector<int> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

bool in_truncation_region(int k1, int k2, int min1, int min2, double gamma) {
  if (k1 < min1 || k2 < min2) return false;
  return k1 >= (1.0 + gamma) * k2 || k2 >= (1.0 + gamma) * k1;
}

}  // namespace

std::string scheme_name(const MatchingScheme& scheme) {
  return std::visit(overloaded{[](const OneToOne&) { return std::string("oto"); },
                               [](const OneToMany&) { return std::string("otm"); },
                               [](const TwoSided&) { return std::string("tside"); }},
                    scheme);
}

int truncation_floor(double c, int d) {
  // Absorb representation error in c * d (0.3 * 50 must give 15).
  return std::max(0, static_cast<int>(std::ceil(c * d - 1e-9)));
}

static void check_two_sided(const TwoSided& s, int d1, int d2) {
  if (!(s.p1 > 0.0 && s.p1 < 1.0) || !(s.p2 > 0.0 && s.p2 < 1.0)) {
    throw ArgumentError("two-sided: p1, p2 must lie in (0,1)");
  }
  if (!(s.c_r >= 0.0 && s.c_r < 1.0) || !(s.c_s >= 0.0 && s.c_s < 1.0)) {
    throw ArgumentError("two-sided: c_r, c_s must lie in [0,1)");
  }
  if (!(s.gamma >= 0.0)) throw ArgumentError("two-sided: gamma must be nonnegative");
  const int min1 = truncation_floor(s.c_r, d1);
  const int min2 = truncation_floor(s.c_s, d2);
  // The region is nonempty iff one of its extreme corners qualifies.
  if (!in_truncation_region(d1, min2, min1, min2, s.gamma) &&
      !in_truncation_region(min1, d2, min1, min2, s.gamma)) {
    throw ArgumentError("two-sided: truncation region is empty", "infeasible_truncation");
  }
}

void validate_scheme(const MatchingScheme& scheme, int d1, int d2) {
  if (d1 < 1 || d2 < 1) throw ArgumentError("scheme: dims must be positive");
  if (d1 > d2) throw ArgumentError("scheme: expected d2 >= d1");
  std::visit(
      overloaded{
          [](const OneToOne&) {},
          [&](const OneToMany& s) {
            if (s.K < 1) throw ArgumentError("one-to-many: K must be >= 1");
            if (!(s.p0 > 0.0 && s.p0 <= 1.0)) throw ArgumentError("one-to-many: p0 must lie in (0,1]");
            if (static_cast<long long>(s.K) * d1 > d2) {
              throw ArgumentError("one-to-many: infeasible, need d2 >= K*d1", "infeasible_scheme");
            }
          },
          [&](const TwoSided& s) { check_two_sided(s, d1, d2); }},
      scheme);
}

Matching::Matching(int d1, int d2, std::vector<Pair> pairs)
    : d1_(d1), d2_(d2), pairs_(std::move(pairs)) {
  for (const auto& p : pairs_) {
    if (p.i < 0 || p.i >= d1_ || p.j < 0 || p.j >= d2_) {
      throw ArgumentError("matching: pair (" + std::to_string(p.i) + "," + std::to_string(p.j) +
                          ") out of range");
    }
  }
  std::sort(pairs_.begin(), pairs_.end());
  if (std::adjacent_find(pairs_.begin(), pairs_.end()) != pairs_.end()) {
    throw ArgumentError("matching: duplicate pair");
  }
}

std::string capacity_violation(const Matching& m, const MatchingScheme& scheme) {
  std::vector<int> col_count(m.d2(), 0);
  std::vector<int> row_count(m.d1(), 0);
  for (const auto& p : m.pairs()) {
    if (++col_count[p.j] > 1) return "column " + std::to_string(p.j) + " matched twice";
    ++row_count[p.i];
  }
  return std::visit(
      overloaded{[&](const OneToOne&) -> std::string {
                   for (int i = 0; i < m.d1(); ++i)
                     if (row_count[i] != 1) return "row " + std::to_string(i) + " not matched exactly once";
                   return {};
                 },
                 [&](const OneToMany& s) -> std::string {
                   for (int i = 0; i < m.d1(); ++i)
                     if (row_count[i] > s.K) return "row " + std::to_string(i) + " exceeds capacity K";
                   return {};
                 },
                 [&](const TwoSided&) -> std::string {
                   for (int i = 0; i < m.d1(); ++i)
                     if (row_count[i] > 1) return "row " + std::to_string(i) + " matched twice";
                   return {};
                 }},
      scheme);
}

void check_batch(const ObservationBatch& batch) {
  for (std::size_t t = 0; t < batch.records.size(); ++t) {
    const auto& rec = batch.records[t];
    if (rec.matching.d1() != batch.d1 || rec.matching.d2() != batch.d2) {
      throw DataFormatError("batch record " + std::to_string(t) + ": dims differ from header");
    }
    if (rec.rewards.size() != rec.matching.size()) {
      throw DataFormatError("batch record " + std::to_string(t) + ": rewards not aligned with pairs");
    }
  }
}

std::pair<int, int> sample_truncated_binomial(int d1, double p1, int d2, double p2, double c_r,
                                              double c_s, double gamma, Rng& rng) {
  check_two_sided(TwoSided{p1, p2, c_r, c_s, gamma}, d1, d2);
  const int min1 = truncation_floor(c_r, d1);
  const int min2 = truncation_floor(c_s, d2);
  std::binomial_distribution<int> rows(d1, p1);
  std::binomial_distribution<int> cols(d2, p2);
  constexpr int kMaxRejections = 1'000'000;
  for (int attempt = 0; attempt < kMaxRejections; ++attempt) {
    const int k1 = rows(rng);
    const int k2 = cols(rng);
    if (in_truncation_region(k1, k2, min1, min2, gamma)) return {k1, k2};
  }
  throw ArgumentError("truncated binomial: 1e6 consecutive rejections", "infeasible_truncation");
}

Matching sample_matching(const MatchingScheme& scheme, int d1, int d2, Rng& rng) {
  validate_scheme(scheme, d1, d2);
  std::vector<Pair> pairs;
  std::visit(overloaded{
                 [&](const OneToOne&) {
                   auto cols = iota_vec(d2);
                   partial_shuffle(cols, d1, rng);
                   pairs.reserve(d1);
                   for (int i = 0; i < d1; ++i) pairs.push_back({i, cols[i]});
                 },
                 [&](const OneToMany& s) {
                   std::binomial_distribution<int> degree(s.K, s.p0);
                   std::vector<int> deg(d1);
                   int total = 0;
                   for (int i = 0; i < d1; ++i) total += deg[i] = degree(rng);
                   auto cols = iota_vec(d2);
                   partial_shuffle(cols, total, rng);
                   pairs.reserve(total);
                   int next = 0;
                   for (int i = 0; i < d1; ++i)
                     for (int k = 0; k < deg[i]; ++k) pairs.push_back({i, cols[next++]});
                 },
                 [&](const TwoSided& s) {
                   const auto [br, bs] =
                       sample_truncated_binomial(d1, s.p1, d2, s.p2, s.c_r, s.c_s, s.gamma, rng);
                   auto rows = iota_vec(d1);
                   auto cols = iota_vec(d2);
                   partial_shuffle(rows, br, rng);
                   partial_shuffle(cols, bs, rng);
                   const int n = std::min(br, bs);
                   pairs.reserve(n);
                   for (int k = 0; k < n; ++k) pairs.push_back({rows[k], cols[k]});
                 }},
             scheme);
  return Matching(d1, d2, std::move(pairs));
}

EntryProbability entrywise_probability(const MatchingScheme& scheme, int d1, int d2,
                                       int mc_samples, Rng& rng) {
  validate_scheme(scheme, d1, d2);
  return std::visit(
      overloaded{[&](const OneToOne&) { return EntryProbability{1.0 / d2, 0.0}; },
                 [&](const OneToMany& s) { return EntryProbability{s.K * s.p0 / d2, 0.0}; },
                 [&](const TwoSided& s) {
                   if (mc_samples < 1) throw ArgumentError("two-sided nu: mc_samples must be >= 1");
                   double sum = 0.0;
                   double sum_sq = 0.0;
                   for (int k = 0; k < mc_samples; ++k) {
                     const auto [br, bs] =
                         sample_truncated_binomial(d1, s.p1, d2, s.p2, s.c_r, s.c_s, s.gamma, rng);
                     const double x = std::min(br, bs);
                     sum += x;
                     sum_sq += x * x;
                   }
                   const double n = mc_samples;
                   const double mean = sum / n;
                   const double var = n > 1 ? std::max(0.0, (sum_sq - n * mean * mean) / (n - 1)) : 0.0;
                   const double cells = static_cast<double>(d1) * d2;
                   return EntryProbability{mean / cells, std::sqrt(var / n) / cells};
                 }},
      scheme);
}

ObservationBatch observe(const Matrix& M, const MatchingScheme& scheme, int T, double sigma,
                         Rng& rng) {
  if (T < 1) throw ArgumentError("observe: T must be >= 1");
  if (!(sigma >= 0.0)) throw ArgumentError("observe: sigma must be nonnegative");
  const int d1 = static_cast<int>(M.rows());
  const int d2 = static_cast<int>(M.cols());
  if (const auto* ts = std::get_if<TwoSided>(&scheme); ts && (ts->c_r == 0.0 || ts->c_s == 0.0 || ts->gamma == 0.0)) {
    warn("outside_theory", "two-sided scheme with a zero truncation parameter");
  }

  ObservationBatch batch;
  batch.scheme = scheme;
  batch.d1 = d1;
  batch.d2 = d2;
  batch.sigma = sigma;
  batch.records.reserve(T);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int t = 0; t < T; ++t) {
    Observation obs;
    obs.matching = sample_matching(scheme, d1, d2, rng);
    obs.rewards.reserve(obs.matching.size());
    for (const auto& p : obs.matching.pairs()) {
      const double xi = sigma > 0.0 ? sigma * noise(rng) : 0.0;
      obs.rewards.push_back(M(p.i, p.j) + xi);
    }
    batch.records.push_back(std::move(obs));
  }
  return batch;
}

}  // namespace matchlearn
