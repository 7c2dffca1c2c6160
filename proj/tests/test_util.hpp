#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "matchlearn/diagnostics.hpp"
#include "matchlearn/samplers.hpp"

namespace testutil {

/// Collects warnings for the lifetime of the object.
class WarningLog {
 public:
  WarningLog() {
    matchlearn::set_warning_handler(
        [this](const std::string& code, const std::string&) { codes.push_back(code); });
  }
  ~WarningLog() { matchlearn::set_warning_handler(nullptr); }
  bool saw(const std::string& code) const {
    for (const auto& c : codes)
      if (c == code) return true;
    return false;
  }
  std::vector<std::string> codes;
};

inline matchlearn::Observation record(int d1, int d2, std::vector<matchlearn::Pair> pairs,
                                      std::vector<double> y) {
  // Matching sorts its pairs; keep rewards aligned by sorting together.
  std::vector<std::pair<matchlearn::Pair, double>> zipped;
  for (std::size_t k = 0; k < pairs.size(); ++k) zipped.emplace_back(pairs[k], y[k]);
  std::sort(zipped.begin(), zipped.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<matchlearn::Pair> p;
  std::vector<double> r;
  for (const auto& [pp, yy] : zipped) {
    p.push_back(pp);
    r.push_back(yy);
  }
  return {matchlearn::Matching(d1, d2, std::move(p)), std::move(r)};
}

inline std::string tmp_dir(const std::string& name) {
  const auto dir = std::filesystem::path(MATCHLEARN_TEST_TMP) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace testutil
