#include "matchlearn/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "matchlearn/diagnostics.hpp"
#include "matchlearn/harness.hpp"
#include "matchlearn/io.hpp"
#include "matchlearn/policy.hpp"

namespace matchlearn {

using nlohmann::json;

namespace {

std::string kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::argument: return "config";
    case ErrorKind::numerical: return "numerical";
    case ErrorKind::data_format: return "data_format";
  }
  return "unknown";
}

int report(ErrorKind kind, const std::string& code, const std::string& message) {
  std::cerr << json{{"error", code}, {"kind", kind_name(kind)}, {"message", message}}.dump() << '\n';
  return static_cast<int>(kind);
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open " + path, "config");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ArgumentError(path + ": " + e.what(), "config");
  }
}

/// Config fields describing the data default to what the batch header says.
RunConfig config_for_batch(const std::string& path, const ObservationBatch& batch) {
  json j = read_json_file(path);
  if (!j.is_object()) throw ArgumentError(path + ": expected a JSON object", "config");
  j["d1"] = batch.d1;
  j["d2"] = batch.d2;
  j["scheme"] = scheme_to_json(batch.scheme);
  j["T"] = static_cast<int>(batch.records.size());
  return parse_run_config(j);
}

EstimatorConfig estimator_config(const RunConfig& c, double nu) {
  EstimatorConfig e;
  e.r = c.r;
  e.eta = c.eta;
  e.m = c.m;
  e.nu = nu;
  return e;
}

EntryProbability nu_for(const RunConfig& c) {
  Rng rng = make_stream(c.seed, ~std::uint64_t{0});
  return entrywise_probability(c.scheme, c.d1, c.d2, c.mc_samples, rng);
}

void print(const json& j) { std::cout << std::setprecision(17) << j.dump(2) << '\n'; }

int cmd_simulate(const std::string& config_path, const std::string& out_override) {
  const RunConfig config = parse_run_config(read_json_file(config_path));
  const std::string dir = out_override.empty() ? config.outputs : out_override;
  const ReplicationSummary s = run_simulation(config);
  write_outputs(config, s, dir);
  json per_q = json::array();
  for (const auto& q : s.per_q)
    per_q.push_back({{"q", q.label}, {"ks_distance", q.ks_distance}, {"coverage", q.coverage},
                     {"mean", q.mean}, {"sd", q.sd}});
  json out{{"outputs", dir},
           {"replications_completed", s.completed.size()},
           {"failures", s.failures.size()},
           {"per_q", std::move(per_q)}};
  if (s.policy_mode) out["optimal_matching_recovery"] = s.recovery_count;
  print(out);
  return 0;
}

int cmd_estimate(const std::string& batch_path, const std::string& config_path,
                 const std::string& out_override, const std::string& truth_path) {
  const ObservationBatch batch = read_batch_file(batch_path);
  const RunConfig config = config_for_batch(config_path, batch);
  const EntryProbability nu = nu_for(config);
  EstimatorConfig est = estimator_config(config, nu.nu);
  est.record_trace = true;
  std::optional<RewardMatrix> truth;
  if (!truth_path.empty()) {
    truth = RewardMatrix::from_values(read_matrix_csv(truth_path), config.r);
  }
  const FitResult res = fit(batch, est, truth ? &*truth : nullptr);
  const std::string dir = out_override.empty() ? config.outputs : out_override;
  std::filesystem::create_directories(dir);
  const auto m_path = (std::filesystem::path(dir) / "M_init.csv").string();
  const auto t_path = (std::filesystem::path(dir) / "trace.csv").string();
  write_matrix_csv(m_path, res.M_init, config.r);
  write_trace_csv(t_path, res.trace);
  print(json{{"M_init", m_path}, {"trace", t_path}, {"batches", res.trace.rows.size()}, {"nu", nu.nu}});
  return 0;
}

LinearForm resolve_q(const std::string& text, const RunConfig& config, const PipelineArtifacts& art) {
  QSpec spec;
  try {
    spec = parse_q_spec(text);
  } catch (const ArgumentError&) {
    if (!std::filesystem::exists(text)) throw;
    spec.kind = QSpec::Kind::file;
    spec.path = text;
  }
  Rng rng = make_stream(config.seed, ~std::uint64_t{1});
  return materialize_q(spec, config.d1, config.d2, config.scheme, rng, &art.M_hat);
}

json with_provenance(json j, const RunConfig& config) {
  j["provenance"]["seed"] = config.seed;
  j["provenance"]["scheme"] = scheme_to_json(config.scheme);
  return j;
}

int cmd_infer(const std::string& batch_path, const std::string& config_path, const std::string& q_text,
              double v0, const std::string& direction) {
  const ObservationBatch batch = read_batch_file(batch_path);
  const RunConfig config = config_for_batch(config_path, batch);
  const EntryProbability nu = nu_for(config);
  const PipelineArtifacts art = combine_and_estimate(batch, estimator_config(config, nu.nu), nu.mc_se);
  const LinearForm Q = resolve_q(q_text, config, art);
  const Direction dir = direction_from_name(direction);
  const InferenceResult res = infer_linear_form(art, Q, config.alpha, v0, dir);
  json out = with_provenance(inference_to_json(res), config);
  // Levels among 0.10, 0.05, 0.01 at which the null is rejected.
  out["reject_at"] = res.se > 0.0 ? json(test_threshold(res.point, res.se, v0, dir).reject_at) : json::array();
  print(out);
  return 0;
}

int cmd_policy(const std::string& batch_path, const std::string& config_path) {
  const ObservationBatch batch = read_batch_file(batch_path);
  const RunConfig config = config_for_batch(config_path, batch);
  const EntryProbability nu = nu_for(config);
  const PipelineArtifacts art = combine_and_estimate(batch, estimator_config(config, nu.nu), nu.mc_se);
  const PolicyEvaluation ev = evaluate_policy(art, optimal_one_to_one(art.M_hat), config.alpha);
  print(json{{"matching", matching_to_json(ev.matching)},
             {"total_reward_estimate", ev.total_reward_estimate},
             {"inference", with_provenance(inference_to_json(ev.inference), config)}});
  return 0;
}

int cmd_sample(const std::string& config_path, const std::string& out_override, int replication) {
  const RunConfig config = parse_run_config(read_json_file(config_path));
  // Same streams as replication `replication` of `simulate`.
  Rng setup = make_stream(config.seed, ~std::uint64_t{0});
  Rng rep = make_stream(config.seed, static_cast<std::uint64_t>(replication));
  const RewardMatrix M = generate_low_rank(config.d1, config.d2, config.r, config.scale,
                                           config.regenerate_matrix ? rep : setup);
  ObservationBatch batch = observe(M, config.scheme, config.T, config.sigma, rep);
  batch.seed = config.seed ^ static_cast<std::uint64_t>(replication);
  const std::string dir = out_override.empty() ? config.outputs : out_override;
  std::filesystem::create_directories(dir);
  const auto m_path = (std::filesystem::path(dir) / "M.csv").string();
  const auto b_path = (std::filesystem::path(dir) / "batch.jsonl").string();
  write_matrix_csv(m_path, M.values(), config.r);
  write_batch_file(b_path, batch);
  print(json{{"M", m_path}, {"batch", b_path}});
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"Low-rank reward estimation and inference from matching observations", "matchlearn"};
  app.require_subcommand(1);

  std::string config_path, batch_path, out_dir, q_text, direction = "two-sided", truth_path;
  double v0 = 0.0;
  int replication = 0;

  auto* simulate = app.add_subcommand("simulate", "Replication study driven by a JSON config");
  simulate->add_option("config", config_path)->required();
  simulate->add_option("--out", out_dir, "Output directory (overrides config.outputs)");

  auto* estimate = app.add_subcommand("estimate", "Fit the initial estimator; write M_init.csv and trace.csv");
  estimate->add_option("batch", batch_path)->required();
  estimate->add_option("config", config_path)->required();
  estimate->add_option("--out", out_dir, "Output directory (overrides config.outputs)");
  estimate->add_option("--truth", truth_path, "True matrix CSV; enables error traces");

  auto* infer = app.add_subcommand("infer", "Point estimate, CI and test for a linear form");
  infer->add_option("batch", batch_path)->required();
  infer->add_option("config", config_path)->required();
  infer->add_option("--q", q_text, "Q spec (entry:i,j, random_oto, ...) or a JSON file")->required();
  infer->add_option("--v0", v0, "Null value for the test");
  infer->add_option("--direction", direction, "greater | less | two-sided");

  auto* policy = app.add_subcommand("policy", "Estimated optimal one-to-one matching with evaluation");
  policy->add_option("batch", batch_path)->required();
  policy->add_option("config", config_path)->required();

  auto* sample = app.add_subcommand("sample", "Write a reward matrix and an observation batch");
  sample->add_option("config", config_path)->required();
  sample->add_option("--out", out_dir, "Output directory (overrides config.outputs)");
  sample->add_option("--replication", replication, "Replication stream to draw from")
      ->check(CLI::NonNegativeNumber);

  auto* nu = app.add_subcommand("nu", "Entrywise sampling probability of a scheme");
  std::string scheme_name = "oto";
  int d1 = 0, d2 = 0, K = 3, mc = 100000;
  double p0 = 0.8;
  TwoSided ts;
  std::uint64_t seed = 1;
  nu->add_option("--scheme", scheme_name)->check(CLI::IsMember({"oto", "otm", "tside"}));
  nu->add_option("--d1", d1)->required();
  nu->add_option("--d2", d2)->required();
  nu->add_option("--K", K);
  nu->add_option("--p0", p0);
  nu->add_option("--p1", ts.p1);
  nu->add_option("--p2", ts.p2);
  nu->add_option("--c-r", ts.c_r);
  nu->add_option("--c-s", ts.c_s);
  nu->add_option("--gamma", ts.gamma);
  nu->add_option("--mc", mc, "Monte Carlo draws for the two-sided scheme");
  nu->add_option("--seed", seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report(ErrorKind::argument, "usage", e.what());
  }

  try {
    if (*simulate) return cmd_simulate(config_path, out_dir);
    if (*estimate) return cmd_estimate(batch_path, config_path, out_dir, truth_path);
    if (*infer) return cmd_infer(batch_path, config_path, q_text, v0, direction);
    if (*policy) return cmd_policy(batch_path, config_path);
    if (*sample) return cmd_sample(config_path, out_dir, replication);
    if (*nu) {
      MatchingScheme scheme = OneToOne{};
      if (scheme_name == "otm") scheme = OneToMany{K, p0};
      if (scheme_name == "tside") scheme = ts;
      if (mc < 1) throw ArgumentError("--mc must be positive");
      validate_scheme(scheme, d1, d2);
      Rng rng = make_stream(seed, ~std::uint64_t{0});
      const EntryProbability p = entrywise_probability(scheme, d1, d2, mc, rng);
      std::cout << std::setprecision(17) << json{{"nu", p.nu}, {"mc_se", p.mc_se}}.dump() << '\n';
      return 0;
    }
  } catch (const Error& e) {
    return report(e.kind(), e.code(), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return report(ErrorKind::argument, "io", e.what());
  }
  return report(ErrorKind::argument, "usage", "no subcommand");
}

}  // namespace matchlearn
