#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "matchlearn/diagnostics.hpp"
#include "matchlearn/io.hpp"
#include "matchlearn/matmodel.hpp"

namespace matchlearn {

using nlohmann::json;

std::string format_double(double x) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

namespace {

double parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  double x = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw DataFormatError("matrix csv: cannot parse '" + std::string(s) + "'");
  }
  return x;
}

}  // namespace

void write_matrix_csv(const std::string& csv_path, const Matrix& values, int r) {
  std::ofstream out(csv_path);
  if (!out) throw ArgumentError("cannot open " + csv_path + " for writing", "io");
  for (int i = 0; i < values.rows(); ++i) {
    for (int j = 0; j < values.cols(); ++j) {
      if (j) out << ',';
      out << format_double(values(i, j));
    }
    out << '\n';
  }
  std::ofstream side(csv_path + ".json");
  side << json{{"d1", values.rows()}, {"d2", values.cols()}, {"r", r}}.dump() << '\n';
}

Matrix read_matrix_csv(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw DataFormatError("cannot open " + csv_path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      row.push_back(parse_double(std::string_view(line).substr(
          start, comma == std::string::npos ? std::string::npos : comma - start)));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw DataFormatError("matrix csv: ragged row " + std::to_string(rows.size() + 1));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataFormatError("matrix csv: empty file " + csv_path);
  Matrix A(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) A(i, j) = rows[i][j];

  std::ifstream side(csv_path + ".json");
  if (side) {
    json meta;
    try {
      side >> meta;
    } catch (const json::exception& e) {
      throw DataFormatError("matrix sidecar: " + std::string(e.what()));
    }
    if (meta.value("d1", A.rows()) != A.rows() || meta.value("d2", A.cols()) != A.cols()) {
      throw DataFormatError("matrix sidecar dims disagree with " + csv_path);
    }
  }
  return A;
}

int read_matrix_rank(const std::string& csv_path) {
  std::ifstream side(csv_path + ".json");
  if (!side) return -1;
  try {
    json meta;
    side >> meta;
    return meta.value("r", -1);
  } catch (const json::exception& e) {
    throw DataFormatError("matrix sidecar: " + std::string(e.what()));
  }
}

std::string linear_form_to_json(const LinearForm& Q) {
  json arr = json::array();
  for (const auto& e : Q.entries()) arr.push_back({{"i", e.i}, {"j", e.j}, {"w", e.w}});
  return arr.dump();
}

LinearForm linear_form_from_json(const std::string& text, int d1, int d2) {
  std::vector<LinearForm::Entry> entries;
  try {
    const json arr = json::parse(text);
    if (!arr.is_array()) throw DataFormatError("linear form: expected a JSON array");
    for (const auto& item : arr) {
      entries.push_back({item.at("i").get<int>(), item.at("j").get<int>(), item.at("w").get<double>()});
    }
  } catch (const json::exception& e) {
    throw DataFormatError("linear form: " + std::string(e.what()));
  }
  return LinearForm::from_triplets(d1, d2, std::move(entries));
}

}  // namespace matchlearn
