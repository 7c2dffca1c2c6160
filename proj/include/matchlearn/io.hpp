#pragma once

#include <iosfwd>
#include <string>

#include <json.hpp>

#include "matchlearn/inference.hpp"
#include "matchlearn/policy.hpp"
#include "matchlearn/samplers.hpp"

namespace matchlearn {

/// {"type": "oto"} | {"type": "otm", "K", "p0"} | {"type": "tside", "p1", "p2", "c_r", "c_s", "gamma"}
nlohmann::json scheme_to_json(const MatchingScheme& scheme);
MatchingScheme scheme_from_json(const nlohmann::json& j);

/// JSON-lines: a header {scheme, d1, d2, sigma, seed} followed by one
/// {"t", "pairs": [[i, j], ...], "y": [...]} record per line.
void write_batch(std::ostream& out, const ObservationBatch& batch);
ObservationBatch read_batch(std::istream& in);
void write_batch_file(const std::string& path, const ObservationBatch& batch);
ObservationBatch read_batch_file(const std::string& path);

/// {"d1", "d2", "pairs": [[i, j], ...]}
nlohmann::json matching_to_json(const Matching& m);
Matching matching_from_json(const nlohmann::json& j);

nlohmann::json inference_to_json(const InferenceResult& res);

std::string direction_name(Direction d);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double x);
Direction direction_from_name(const std::string& name);

}  // namespace matchlearn
