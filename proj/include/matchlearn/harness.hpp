#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "matchlearn/estimator.hpp"
#include "matchlearn/inference.hpp"
#include "matchlearn/matmodel.hpp"
#include "matchlearn/samplers.hpp"

namespace matchlearn {

/// Linear forms a replication study can target.
struct QSpec {
  enum class Kind { entry, random_oto, oto_difference, random_otm, optimal, file };
  Kind kind = Kind::entry;
  int i = 0;
  int j = 0;
  int K = 0;
  double p0 = 0.0;
  std::string path;

  /// Canonical text form, e.g. "entry:0,0" or "random_otm:3,0.8".
  std::string label() const;
  friend bool operator==(const QSpec&, const QSpec&) = default;
};

/// Parses "entry:i,j", "random_oto", "oto_difference", "random_otm[:K,p0]",
/// "optimal" or "file:<path>". Throws ArgumentError.
QSpec parse_q_spec(const std::string& text);

/// Resolves a spec into a concrete form. Random forms draw from `rng`;
/// "optimal" needs the reference matrix.
LinearForm materialize_q(const QSpec& spec, int d1, int d2, const MatchingScheme& scheme, Rng& rng,
                         const Matrix* reference = nullptr);

struct RunConfig {
  /// "inference": full pipeline and linear-form statistics per replication.
  /// "estimate": Algorithm-1 fit on the whole batch, convergence traces only.
  std::string mode = "inference";
  int d1 = 50;
  int d2 = 150;
  int r = 2;
  MatchingScheme scheme = OneToOne{};
  int T = 600;
  /// Batch pairs; the config may say "theory" for ceil(log d2).
  int m = 20;
  double eta = 0.75;
  double sigma = 1.0;
  double scale = 20.0;
  double alpha = 0.05;
  int replications = 300;
  std::uint64_t seed = 1;
  std::vector<QSpec> q = {QSpec{}};
  std::string outputs = "out";
  bool regenerate_matrix = false;
  int mc_samples = 100000;
  /// 0 = all available threads; MATCHLEARN_WORKERS overrides.
  int workers = 0;
  bool write_traces = true;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Checks every field and reports all problems in one ArgumentError.
RunConfig parse_run_config(const nlohmann::json& j);
/// Canonical form: every field present, fixed key order.
nlohmann::json run_config_to_json(const RunConfig& config);

struct QSummary {
  std::string label;
  /// Per completed replication, in replication order.
  std::vector<double> standardized_stats;
  std::vector<double> points;
  std::vector<double> truths;
  std::vector<double> ses;
  std::vector<Interval> intervals;
  double ks_distance = 0.0;
  double coverage = 0.0;
  double mean = 0.0;
  double sd = 0.0;
};

struct ReplicationSummary {
  std::vector<int> completed;
  std::vector<std::pair<int, std::string>> failures;
  std::vector<QSummary> per_q;
  /// Convergence trace per completed replication (half-1 fit in inference mode).
  std::vector<FitTrace> traces;
  /// Replications whose estimated optimal matching equals the true one
  /// (only when an "optimal" target is configured).
  int recovery_count = 0;
  bool policy_mode = false;
  double nu = 0.0;
  double nu_mc_se = 0.0;
  SpectralInfo spectral;
};

int resolve_workers(int configured);

/// Runs the replication study. Throws NumericalError("too_many_failures")
/// when more than 10% of replications fail.
ReplicationSummary run_simulation(const RunConfig& config);

/// summary.json, standardized_stats.csv, coverage.csv, histogram.csv and
/// trace_rep<k>.csv under `dir`.
void write_outputs(const RunConfig& config, const ReplicationSummary& summary,
                   const std::string& dir);

/// sup_x |F_n(x) - Phi(x)| evaluated at the order statistics.
double ks_statistic(std::span<const double> samples);

/// Fraction of closed intervals containing `truth`.
double coverage_rate(std::span<const Interval> intervals, double truth);

/// Counts over `bins` equal bins on [lo, hi); values outside are ignored.
std::vector<int> histogram(std::span<const double> values, int bins, double lo, double hi);

/// Trace CSV: batch, rel_max_err_sq, g_sigma_min, g_sigma_max, grad_norm.
void write_trace_csv(const std::string& path, const FitTrace& trace);

}  // namespace matchlearn
