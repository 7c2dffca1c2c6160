#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "matchlearn/diagnostics.hpp"
#include "matchlearn/io.hpp"

namespace matchlearn {

using nlohmann::json;

json scheme_to_json(const MatchingScheme& scheme) {
  if (std::holds_alternative<OneToOne>(scheme)) return {{"type", "oto"}};
  if (const auto* s = std::get_if<OneToMany>(&scheme)) {
    return {{"type", "otm"}, {"K", s->K}, {"p0", s->p0}};
  }
  const auto& s = std::get<TwoSided>(scheme);
  return {{"type", "tside"}, {"p1", s.p1}, {"p2", s.p2}, {"c_r", s.c_r}, {"c_s", s.c_s},
          {"gamma", s.gamma}};
}

MatchingScheme scheme_from_json(const json& j) {
  try {
    const std::string type = j.at("type").get<std::string>();
    if (type == "oto") return OneToOne{};
    if (type == "otm") return OneToMany{j.at("K").get<int>(), j.at("p0").get<double>()};
    if (type == "tside") {
      TwoSided s;
      s.p1 = j.value("p1", s.p1);
      s.p2 = j.value("p2", s.p2);
      s.c_r = j.value("c_r", s.c_r);
      s.c_s = j.value("c_s", s.c_s);
      s.gamma = j.value("gamma", s.gamma);
      return s;
    }
    throw ArgumentError("unknown scheme type '" + type + "'");
  } catch (const json::exception& e) {
    throw ArgumentError(std::string("scheme: ") + e.what());
  }
}

void write_batch(std::ostream& out, const ObservationBatch& batch) {
  out << json{{"scheme", scheme_to_json(batch.scheme)},
              {"d1", batch.d1},
              {"d2", batch.d2},
              {"sigma", batch.sigma},
              {"seed", batch.seed}}
             .dump()
      << '\n';
  for (std::size_t t = 0; t < batch.records.size(); ++t) {
    const auto& rec = batch.records[t];
    json pairs = json::array();
    for (const auto& p : rec.matching.pairs()) pairs.push_back({p.i, p.j});
    out << json{{"t", t}, {"pairs", std::move(pairs)}, {"y", rec.rewards}}.dump() << '\n';
  }
}

ObservationBatch read_batch(std::istream& in) {
  ObservationBatch batch;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  try {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const json j = json::parse(line);
      if (!have_header) {
        batch.scheme = scheme_from_json(j.at("scheme"));
        batch.d1 = j.at("d1").get<int>();
        batch.d2 = j.at("d2").get<int>();
        batch.sigma = j.value("sigma", 0.0);
        batch.seed = j.value("seed", std::uint64_t{0});
        if (batch.d1 < 1 || batch.d2 < 1) throw DataFormatError("batch header: bad dims");
        have_header = true;
        continue;
      }
      std::vector<Pair> pairs;
      for (const auto& p : j.at("pairs")) pairs.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
      auto y = j.at("y").get<std::vector<double>>();
      if (y.size() != pairs.size()) throw DataFormatError("y not aligned with pairs");
      // Matching sorts its pairs; carry the rewards along.
      std::vector<std::size_t> order(pairs.size());
      for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
      std::sort(order.begin(), order.end(), [&](auto a, auto b) { return pairs[a] < pairs[b]; });
      std::vector<Pair> sorted_pairs;
      std::vector<double> sorted_y;
      for (auto k : order) {
        sorted_pairs.push_back(pairs[k]);
        sorted_y.push_back(y[k]);
      }
      Observation obs;
      try {
        obs.matching = Matching(batch.d1, batch.d2, std::move(sorted_pairs));
      } catch (const ArgumentError& e) {
        throw DataFormatError(e.what());
      }
      if (const auto v = capacity_violation(obs.matching, batch.scheme); !v.empty()) {
        throw DataFormatError(v);
      }
      obs.rewards = std::move(sorted_y);
      for (double v : obs.rewards)
        if (!std::isfinite(v)) throw DataFormatError("non-finite reward");
      batch.records.push_back(std::move(obs));
    }
  } catch (const json::exception& e) {
    throw DataFormatError("batch line " + std::to_string(lineno) + ": " + e.what());
  } catch (const DataFormatError& e) {
    throw DataFormatError("batch line " + std::to_string(lineno) + ": " + e.what());
  } catch (const ArgumentError& e) {
    throw DataFormatError("batch line " + std::to_string(lineno) + ": " + e.what());
  }
  if (!have_header) throw DataFormatError("batch: missing header line");
  return batch;
}

void write_batch_file(const std::string& path, const ObservationBatch& batch) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot open " + path + " for writing", "io");
  write_batch(out, batch);
}

ObservationBatch read_batch_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataFormatError("cannot open " + path);
  return read_batch(in);
}

json matching_to_json(const Matching& m) {
  json pairs = json::array();
  for (const auto& p : m.pairs()) pairs.push_back({p.i, p.j});
  return {{"d1", m.d1()}, {"d2", m.d2()}, {"pairs", std::move(pairs)}};
}

Matching matching_from_json(const json& j) {
  try {
    std::vector<Pair> pairs;
    for (const auto& p : j.at("pairs")) pairs.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
    return Matching(j.at("d1").get<int>(), j.at("d2").get<int>(), std::move(pairs));
  } catch (const json::exception& e) {
    throw DataFormatError(std::string("matching: ") + e.what());
  } catch (const ArgumentError& e) {
    throw DataFormatError(std::string("matching: ") + e.what());
  }
}

std::string direction_name(Direction d) {
  switch (d) {
    case Direction::greater: return "greater";
    case Direction::less: return "less";
    case Direction::two_sided: break;
  }
  return "two-sided";
}

Direction direction_from_name(const std::string& name) {
  if (name == "greater") return Direction::greater;
  if (name == "less") return Direction::less;
  if (name == "two-sided" || name == "two_sided") return Direction::two_sided;
  throw ArgumentError("unknown test direction '" + name + "'");
}

namespace {

json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

}  // namespace

json inference_to_json(const InferenceResult& res) {
  json q = json::array();
  for (const auto& e : res.q.entries()) q.push_back({{"i", e.i}, {"j", e.j}, {"w", e.w}});
  return {{"q", std::move(q)},
          {"point", res.point},
          {"sigma_hat_sq", res.sigma_hat_sq},
          {"proj_mag_hat", res.proj_mag_hat},
          {"proj_mag_hat_sq", res.proj_mag_hat * res.proj_mag_hat},
          {"se", res.se},
          {"ci_low", res.ci_low},
          {"ci_high", res.ci_high},
          {"z", finite_or_null(res.z)},
          {"p_value", finite_or_null(res.p_value)},
          {"alpha", res.alpha},
          {"v0", res.v0},
          {"direction", direction_name(res.direction)},
          {"provenance", {{"T", res.T}, {"nu", res.nu}, {"nu_mc_se", res.nu_mc_se}}}};
}

}  // namespace matchlearn
