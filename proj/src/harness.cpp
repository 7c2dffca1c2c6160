#include "matchlearn/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>

#include <omp.h>

#include "matchlearn/diagnostics.hpp"
#include "matchlearn/io.hpp"
#include "matchlearn/normal.hpp"
#include "matchlearn/policy.hpp"

namespace matchlearn {

using nlohmann::json;

// --- Q specs ------------------------------------------------------------------

std::string QSpec::label() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::entry: os << "entry:" << i << ',' << j; break;
    case Kind::random_oto: os << "random_oto"; break;
    case Kind::oto_difference: os << "oto_difference"; break;
    case Kind::random_otm:
      os << "random_otm";
      if (K > 0) os << ':' << K << ',' << format_double(p0);
      break;
    case Kind::optimal: os << "optimal"; break;
    case Kind::file: os << "file:" << path; break;
  }
  return os.str();
}

QSpec parse_q_spec(const std::string& text) {
  QSpec q;
  const auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  const std::string tail = colon == std::string::npos ? "" : text.substr(colon + 1);
  auto two_numbers = [&](auto& a, auto& b) {
    const auto comma = tail.find(',');
    if (comma == std::string::npos) throw ArgumentError("q spec '" + text + "': expected a,b");
    try {
      std::size_t used_a = 0, used_b = 0;
      const std::string sa = tail.substr(0, comma), sb = tail.substr(comma + 1);
      if constexpr (std::is_same_v<std::decay_t<decltype(a)>, int>) a = std::stoi(sa, &used_a);
      else a = std::stod(sa, &used_a);
      if constexpr (std::is_same_v<std::decay_t<decltype(b)>, int>) b = std::stoi(sb, &used_b);
      else b = std::stod(sb, &used_b);
      if (used_a != sa.size() || used_b != sb.size()) throw std::invalid_argument("trailing");
    } catch (const std::logic_error&) {
      throw ArgumentError("q spec '" + text + "': malformed numbers");
    }
  };
  if (head == "entry") {
    q.kind = QSpec::Kind::entry;
    two_numbers(q.i, q.j);
  } else if (head == "random_oto" && tail.empty()) {
    q.kind = QSpec::Kind::random_oto;
  } else if (head == "oto_difference" && tail.empty()) {
    q.kind = QSpec::Kind::oto_difference;
  } else if (head == "random_otm") {
    q.kind = QSpec::Kind::random_otm;
    if (!tail.empty()) two_numbers(q.K, q.p0);
  } else if (head == "optimal" && tail.empty()) {
    q.kind = QSpec::Kind::optimal;
  } else if (head == "file" && !tail.empty()) {
    q.kind = QSpec::Kind::file;
    q.path = tail;
  } else {
    throw ArgumentError("unknown q spec '" + text + "'");
  }
  return q;
}

namespace {

LinearForm read_q_file(const std::string& path, int d1, int d2) {
  std::ifstream in(path);
  if (!in) throw DataFormatError("cannot open q file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  json j;
  try {
    j = json::parse(buf.str());
  } catch (const json::exception& e) {
    throw DataFormatError("q file " + path + ": " + e.what());
  }
  if (j.is_object()) {
    const Matching m = matching_from_json(j);
    if (m.d1() != d1 || m.d2() != d2) throw DataFormatError("q file " + path + ": dims mismatch");
    return matching_to_linear_form(m);
  }
  return linear_form_from_json(buf.str(), d1, d2);
}

}  // namespace

LinearForm materialize_q(const QSpec& spec, int d1, int d2, const MatchingScheme& scheme, Rng& rng,
                         const Matrix* reference) {
  switch (spec.kind) {
    case QSpec::Kind::entry:
      return LinearForm::single_entry(d1, d2, spec.i, spec.j);
    case QSpec::Kind::random_oto:
      return matching_to_linear_form(sample_matching(OneToOne{}, d1, d2, rng));
    case QSpec::Kind::oto_difference: {
      const auto q1 = matching_to_linear_form(sample_matching(OneToOne{}, d1, d2, rng));
      const auto q2 = matching_to_linear_form(sample_matching(OneToOne{}, d1, d2, rng));
      return q1.minus(q2);
    }
    case QSpec::Kind::random_otm: {
      OneToMany otm{spec.K, spec.p0};
      if (spec.K == 0) {
        const auto* s = std::get_if<OneToMany>(&scheme);
        if (!s) throw ArgumentError("random_otm needs K,p0 unless the scheme is one-to-many");
        otm = *s;
      }
      return matching_to_linear_form(sample_matching(otm, d1, d2, rng));
    }
    case QSpec::Kind::optimal:
      if (!reference) throw ArgumentError("optimal q needs a reference matrix");
      return matching_to_linear_form(optimal_one_to_one(*reference));
    case QSpec::Kind::file:
      return read_q_file(spec.path, d1, d2);
  }
  throw ArgumentError("unreachable q kind");
}

// --- config -------------------------------------------------------------------

RunConfig parse_run_config(const json& j) {
  if (!j.is_object()) throw ArgumentError("config: expected a JSON object");
  RunConfig c;
  std::vector<std::string> problems;
  static const std::set<std::string> kKnown{
      "mode",   "d1",      "d2",         "r",       "T",
      "m",      "eta",     "sigma",      "scale",   "alpha",
      "replications",      "seed",       "outputs", "regenerate_matrix",
      "mc_samples",        "workers",    "write_traces",
      "scheme", "q"};
  for (const auto& [key, value] : j.items())
    if (!kKnown.count(key)) problems.push_back("unknown field '" + key + "'");
  auto field = [&](const char* key, auto& target) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(target);
    } catch (const json::exception&) {
      problems.push_back(std::string(key) + ": wrong type");
    }
  };
  field("mode", c.mode);
  field("d1", c.d1);
  field("d2", c.d2);
  field("r", c.r);
  field("T", c.T);
  if (j.contains("m") && j.at("m").is_string()) {
    // "theory": m = ceil(log d2), evaluated after d2 is known.
    if (j.at("m").get<std::string>() != "theory") problems.push_back("m: expected an integer or \"theory\"");
  } else {
    field("m", c.m);
  }
  field("eta", c.eta);
  field("sigma", c.sigma);
  field("scale", c.scale);
  field("alpha", c.alpha);
  field("replications", c.replications);
  field("seed", c.seed);
  field("outputs", c.outputs);
  field("regenerate_matrix", c.regenerate_matrix);
  field("mc_samples", c.mc_samples);
  field("workers", c.workers);
  field("write_traces", c.write_traces);

  if (j.contains("m") && j.at("m").is_string() && c.d2 >= 1) {
    c.m = std::max(1, static_cast<int>(std::ceil(std::log(static_cast<double>(c.d2)))));
  }
  if (j.contains("scheme")) {
    try {
      c.scheme = scheme_from_json(j.at("scheme"));
    } catch (const Error& e) {
      problems.push_back(e.what());
    }
  }
  if (j.contains("q")) {
    std::vector<std::string> specs;
    const auto& qj = j.at("q");
    if (qj.is_string()) {
      specs.push_back(qj.get<std::string>());
    } else if (qj.is_array() && std::all_of(qj.begin(), qj.end(), [](const json& x) { return x.is_string(); })) {
      specs = qj.get<std::vector<std::string>>();
    } else {
      problems.push_back("q: expected a string or an array of strings");
    }
    c.q.clear();
    for (const auto& s : specs) {
      try {
        c.q.push_back(parse_q_spec(s));
      } catch (const Error& e) {
        problems.push_back(e.what());
      }
    }
  }

  if (c.mode != "inference" && c.mode != "estimate") problems.push_back("mode: expected inference|estimate");
  if (c.d1 < 1 || c.d2 < c.d1) problems.push_back("dims: need 1 <= d1 <= d2");
  if (c.r < 1 || c.r > c.d1) problems.push_back("r: need 1 <= r <= d1");
  if (c.m < 1) problems.push_back("m: must be >= 1");
  if (c.mode == "inference" && c.T < 4 * per_half_batch_pairs(c.m)) {
    problems.push_back("T: each half needs at least 2*ceil(m/2) observations");
  }
  if (c.mode == "estimate" && c.T < 2 * c.m) problems.push_back("T: need T >= 2m");
  if (!(c.eta > 0.0 && c.eta < 1.0)) problems.push_back("eta: must lie in (0,1)");
  if (!(c.sigma >= 0.0)) problems.push_back("sigma: must be nonnegative");
  if (!(c.scale > 0.0)) problems.push_back("scale: must be positive");
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) problems.push_back("alpha: must lie in (0,1)");
  if (c.replications < 0) problems.push_back("replications: must be >= 0");
  if (c.mc_samples < 1) problems.push_back("mc_samples: must be >= 1");
  if (c.workers < 0) problems.push_back("workers: must be >= 0");
  if (c.d1 >= 1 && c.d2 >= c.d1) {
    try {
      validate_scheme(c.scheme, c.d1, c.d2);
    } catch (const Error& e) {
      problems.push_back(e.what());
    }
    for (const auto& q : c.q) {
      if (q.kind == QSpec::Kind::entry && (q.i < 0 || q.i >= c.d1 || q.j < 0 || q.j >= c.d2)) {
        problems.push_back("q " + q.label() + ": index out of range");
      }
      if (q.kind == QSpec::Kind::random_otm) {
        if (q.K > 0) {
          try {
            validate_scheme(OneToMany{q.K, q.p0}, c.d1, c.d2);
          } catch (const Error& e) {
            problems.push_back("q " + q.label() + ": " + e.what());
          }
        } else if (!std::holds_alternative<OneToMany>(c.scheme)) {
          problems.push_back("q random_otm: give K,p0 unless the scheme is one-to-many");
        }
      }
    }
  }

  if (!problems.empty()) {
    std::string msg = "config: ";
    for (std::size_t k = 0; k < problems.size(); ++k) msg += (k ? "; " : "") + problems[k];
    throw ArgumentError(msg, "config");
  }
  return c;
}

json run_config_to_json(const RunConfig& c) {
  json q = json::array();
  for (const auto& s : c.q) q.push_back(s.label());
  return json{{"mode", c.mode},
              {"d1", c.d1},
              {"d2", c.d2},
              {"r", c.r},
              {"scheme", scheme_to_json(c.scheme)},
              {"T", c.T},
              {"m", c.m},
              {"eta", c.eta},
              {"sigma", c.sigma},
              {"scale", c.scale},
              {"alpha", c.alpha},
              {"replications", c.replications},
              {"seed", c.seed},
              {"q", std::move(q)},
              {"outputs", c.outputs},
              {"regenerate_matrix", c.regenerate_matrix},
              {"mc_samples", c.mc_samples},
              {"workers", c.workers},
              {"write_traces", c.write_traces}};
}

// --- statistics -------------------------------------------------------------------

double ks_statistic(std::span<const double> samples) {
  if (samples.empty()) throw ArgumentError("ks_statistic: empty sample");
  std::vector<double> x(samples.begin(), samples.end());
  for (double v : x)
    if (!std::isfinite(v)) throw ArgumentError("ks_statistic: non-finite sample");
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double F = normal_cdf(x[k]);
    d = std::max({d, (k + 1) / n - F, F - k / n});
  }
  return d;
}

double coverage_rate(std::span<const Interval> intervals, double truth) {
  if (intervals.empty()) throw ArgumentError("coverage_rate: empty list");
  std::size_t hits = 0;
  for (const auto& ci : intervals) hits += (ci.lo <= truth && truth <= ci.hi);
  return static_cast<double>(hits) / intervals.size();
}

std::vector<int> histogram(std::span<const double> values, int bins, double lo, double hi) {
  std::vector<int> counts(bins, 0);
  const double width = (hi - lo) / bins;
  for (double v : values) {
    if (!(v >= lo && v < hi)) continue;
    const int b = std::min(bins - 1, static_cast<int>((v - lo) / width));
    ++counts[b];
  }
  return counts;
}

int resolve_workers(int configured) {
  if (const char* env = std::getenv("MATCHLEARN_WORKERS")) {
    const int w = std::atoi(env);
    if (w > 0) return w;
  }
  return configured > 0 ? configured : omp_get_max_threads();
}

// --- simulation -----------------------------------------------------------------

namespace {

struct QOutcome {
  double stat = 0.0;
  double point = 0.0;
  double truth = 0.0;
  double se = 0.0;
  Interval ci{0.0, 0.0};
};

struct RepOutcome {
  bool ok = false;
  std::string error;
  std::vector<QOutcome> q;
  FitTrace trace;
  bool recovered = false;
};

}  // namespace

ReplicationSummary run_simulation(const RunConfig& config) {
  ReplicationSummary summary;
  const int d1 = config.d1, d2 = config.d2;
  validate_scheme(config.scheme, d1, d2);

  // The setup stream (fixed M, nu, fixed targets) never collides with a
  // replication stream seed ^ k for realistic replication counts.
  Rng setup = make_stream(config.seed, ~std::uint64_t{0});
  std::optional<RewardMatrix> fixed_M;
  if (!config.regenerate_matrix) fixed_M = generate_low_rank(d1, d2, config.r, config.scale, setup);
  const EntryProbability nu = entrywise_probability(config.scheme, d1, d2, config.mc_samples, setup);
  summary.nu = nu.nu;
  summary.nu_mc_se = nu.mc_se;
  if (fixed_M) summary.spectral = fixed_M->spectral_info();

  const bool inference = config.mode == "inference";
  std::vector<LinearForm> fixed_q(config.q.size());
  std::vector<bool> per_rep_q(config.q.size(), false);
  if (inference) {
    for (std::size_t k = 0; k < config.q.size(); ++k) {
      if (config.q[k].kind == QSpec::Kind::optimal) {
        summary.policy_mode = true;
        if (!fixed_M) {
          per_rep_q[k] = true;
          continue;
        }
      }
      fixed_q[k] = materialize_q(config.q[k], d1, d2, config.scheme, setup,
                                 fixed_M ? &fixed_M->values() : nullptr);
    }
  }

  EstimatorConfig est;
  est.r = config.r;
  est.eta = config.eta;
  est.m = config.m;
  est.nu = nu.nu;
  est.record_trace = true;

  const int reps = config.replications;
  std::vector<RepOutcome> outcomes(reps);
  std::exception_ptr fatal;
  const int workers = resolve_workers(config.workers);

#pragma omp parallel for schedule(dynamic) num_threads(workers)
  for (int rep = 0; rep < reps; ++rep) {
    RepOutcome& out = outcomes[rep];
    try {
      Rng rng = make_stream(config.seed, static_cast<std::uint64_t>(rep));
      std::optional<RewardMatrix> own_M;
      if (!fixed_M) own_M = generate_low_rank(d1, d2, config.r, config.scale, rng);
      const RewardMatrix& M = fixed_M ? *fixed_M : *own_M;
      ObservationBatch batch = observe(M, config.scheme, config.T, config.sigma, rng);
      batch.seed = config.seed ^ static_cast<std::uint64_t>(rep);

      if (!inference) {
        out.trace = fit(batch, est, &M).trace;
      } else {
        const PipelineArtifacts art = combine_and_estimate(batch, est, nu.mc_se, &M);
        out.trace = art.fits[0].trace;
        for (std::size_t k = 0; k < config.q.size(); ++k) {
          const LinearForm Q = per_rep_q[k] ? matching_to_linear_form(optimal_one_to_one(M.values()))
                                            : fixed_q[k];
          const InferenceResult res = infer_linear_form(art, Q, config.alpha);
          QOutcome qo;
          qo.truth = Q.inner(M.values());
          qo.point = res.point;
          qo.se = res.se;
          qo.ci = {res.ci_low, res.ci_high};
          qo.stat = (res.point - qo.truth) / res.se;
          out.q.push_back(qo);
          if (config.q[k].kind == QSpec::Kind::optimal) {
            out.recovered = matching_to_linear_form(optimal_one_to_one(art.M_hat)) == Q;
          }
        }
      }
      out.ok = true;
    } catch (const Error& e) {
      out.error = e.what();
    } catch (...) {
#pragma omp critical(matchlearn_fatal)
      if (!fatal) fatal = std::current_exception();
    }
  }
  if (fatal) std::rethrow_exception(fatal);

  summary.per_q.resize(inference ? config.q.size() : 0);
  for (std::size_t k = 0; k < summary.per_q.size(); ++k) summary.per_q[k].label = config.q[k].label();
  for (int rep = 0; rep < reps; ++rep) {
    auto& out = outcomes[rep];
    if (!out.ok) {
      summary.failures.emplace_back(rep, out.error);
      continue;
    }
    summary.completed.push_back(rep);
    summary.traces.push_back(std::move(out.trace));
    summary.recovery_count += out.recovered ? 1 : 0;
    for (std::size_t k = 0; k < out.q.size(); ++k) {
      auto& qs = summary.per_q[k];
      qs.standardized_stats.push_back(out.q[k].stat);
      qs.points.push_back(out.q[k].point);
      qs.truths.push_back(out.q[k].truth);
      qs.ses.push_back(out.q[k].se);
      qs.intervals.push_back(out.q[k].ci);
    }
  }
  if (reps > 0 && summary.failures.size() * 10 > static_cast<std::size_t>(reps)) {
    throw NumericalError("too_many_failures",
                         std::to_string(summary.failures.size()) + " of " + std::to_string(reps) +
                             " replications failed; first: " + summary.failures.front().second);
  }

  for (auto& qs : summary.per_q) {
    const auto n = qs.standardized_stats.size();
    if (n == 0) continue;
    std::vector<double> finite;
    for (double z : qs.standardized_stats)
      if (std::isfinite(z)) finite.push_back(z);
    qs.ks_distance = finite.empty() ? std::numeric_limits<double>::quiet_NaN() : ks_statistic(finite);
    std::size_t hits = 0;
    for (std::size_t k = 0; k < n; ++k)
      hits += (qs.intervals[k].lo <= qs.truths[k] && qs.truths[k] <= qs.intervals[k].hi);
    qs.coverage = static_cast<double>(hits) / n;
    double mean = 0.0;
    for (double z : finite) mean += z;
    mean /= std::max<std::size_t>(finite.size(), 1);
    double ss = 0.0;
    for (double z : finite) ss += (z - mean) * (z - mean);
    qs.mean = mean;
    qs.sd = finite.size() > 1 ? std::sqrt(ss / (finite.size() - 1)) : 0.0;
  }
  return summary;
}

// --- outputs -----------------------------------------------------------------

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw ArgumentError("cannot open " + p.string() + " for writing", "io");
  return out;
}

std::string num(double x) { return format_double(x); }

// Quotes labels such as "entry:0,0" that contain the separator.
std::string csv_text(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

}  // namespace

void write_trace_csv(const std::string& path, const FitTrace& trace) {
  auto out = open_out(path);
  out << "batch,rel_max_err_sq,g_sigma_min,g_sigma_max,grad_norm\n";
  for (const auto& row : trace.rows) {
    out << row.batch << ',' << num(row.rel_max_err_sq) << ',' << num(row.g_sigma_min) << ','
        << num(row.g_sigma_max) << ',' << num(row.grad_norm) << '\n';
  }
}

void write_outputs(const RunConfig& config, const ReplicationSummary& s, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path root(dir);

  json per_q = json::array();
  for (const auto& q : s.per_q) {
    per_q.push_back({{"q", q.label},
                     {"n", q.standardized_stats.size()},
                     {"ks_distance", number_or_null(q.ks_distance)},
                     {"coverage", q.coverage},
                     {"mean", q.mean},
                     {"sd", q.sd}});
  }
  json failures = json::array();
  for (const auto& [rep, msg] : s.failures) failures.push_back({{"replication", rep}, {"error", msg}});
  json summary{{"config", run_config_to_json(config)},
               {"replications_requested", config.replications},
               {"replications_completed", s.completed.size()},
               {"failures", std::move(failures)},
               {"nu", s.nu},
               {"nu_mc_se", s.nu_mc_se},
               {"spectral",
                {{"mu", s.spectral.mu},
                 {"kappa", s.spectral.kappa},
                 {"lambda_min", s.spectral.lambda_min},
                 {"lambda_max", s.spectral.lambda_max},
                 {"alpha_d", s.spectral.alpha_d}}},
               {"per_q", std::move(per_q)}};
  if (s.policy_mode) summary["optimal_matching_recovery"] = s.recovery_count;
  open_out(root / "summary.json") << summary.dump(2) << '\n';

  {
    auto out = open_out(root / "standardized_stats.csv");
    out << "replication,q,stat,point,truth,se,ci_low,ci_high,covered\n";
    for (const auto& q : s.per_q) {
      for (std::size_t k = 0; k < q.standardized_stats.size(); ++k) {
        const bool hit = q.intervals[k].lo <= q.truths[k] && q.truths[k] <= q.intervals[k].hi;
        out << s.completed[k] << ',' << csv_text(q.label) << ',' << num(q.standardized_stats[k]) << ','
            << num(q.points[k]) << ',' << num(q.truths[k]) << ',' << num(q.ses[k]) << ','
            << num(q.intervals[k].lo) << ',' << num(q.intervals[k].hi) << ',' << (hit ? 1 : 0) << '\n';
      }
    }
  }
  {
    auto out = open_out(root / "coverage.csv");
    out << "q,n,coverage,alpha\n";
    for (const auto& q : s.per_q)
      out << csv_text(q.label) << ',' << q.standardized_stats.size() << ',' << num(q.coverage) << ','
          << num(config.alpha) << '\n';
  }
  {
    auto out = open_out(root / "histogram.csv");
    out << "q,bin_lo,bin_hi,count\n";
    constexpr int kBins = 50;
    constexpr double kLo = -4.0, kHi = 4.0;
    for (const auto& q : s.per_q) {
      const auto counts = histogram(q.standardized_stats, kBins, kLo, kHi);
      for (int b = 0; b < kBins; ++b) {
        const double lo = kLo + (kHi - kLo) * b / kBins;
        const double hi = kLo + (kHi - kLo) * (b + 1) / kBins;
        out << csv_text(q.label) << ',' << num(lo) << ',' << num(hi) << ',' << counts[b] << '\n';
      }
    }
  }
  if (config.write_traces) {
    for (std::size_t k = 0; k < s.traces.size(); ++k) {
      write_trace_csv((root / ("trace_rep" + std::to_string(s.completed[k]) + ".csv")).string(),
                      s.traces[k]);
    }
  }
}

}  // namespace matchlearn
