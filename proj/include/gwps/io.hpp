#pragma once

#include <charconv>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gwps/family.hpp"

namespace gwps {

/// Shortest round-trip decimal form via std::to_chars: locale-free and
/// byte-stable, which the reproducibility contract of the reports needs.
inline std::string format_double(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (std::isnan(x)) return "nan";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

/// OffspringSpec JSON schema (round-trip stable):
///   {"kind": "preset-exp" | "preset-geometric" | "polynomial" |
///             "explicit-coeffs",
///    "coeffs": [b_0, b_1, ...],            // polynomial / explicit only
///    "order": N,                           // presets only (materialization)
///    "radius": number | "inf",
///    "name": "..."}
inline nlohmann::json spec_to_json(const OffspringSpec<double>& spec) {
  nlohmann::json j;
  j["kind"] = to_string(spec.kind);
  j["name"] = spec.name;
  if (std::isinf(spec.radius))
    j["radius"] = "inf";
  else
    j["radius"] = spec.radius;
  if (spec.kind == SpecKind::PresetExp || spec.kind == SpecKind::PresetGeometric)
    j["order"] = spec.series.order();
  else
    j["coeffs"] = spec.series.coeffs();
  return j;
}

inline OffspringSpec<double> spec_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  double radius = std::numeric_limits<double>::infinity();
  if (j.contains("radius") && !j.at("radius").is_string())
    radius = j.at("radius").get<double>();
  const std::string name = j.value("name", std::string());
  if (kind == "preset-exp") return make_exp_spec<double>(j.value("order", kDefaultOrder));
  if (kind == "preset-geometric")
    return make_geometric_spec<double>(j.value("order", kDefaultOrder));
  if (kind == "polynomial")
    return make_polynomial_spec(j.at("coeffs").get<std::vector<double>>(),
                                name.empty() ? "polynomial" : name);
  if (kind == "explicit-coeffs")
    return make_explicit_spec(j.at("coeffs").get<std::vector<double>>(), radius,
                              name.empty() ? "explicit" : name);
  throw std::invalid_argument("spec_from_json: unknown kind '" + kind + "'");
}

/// One CSV cell per value; numbers via format_double ('.' decimal, no locale).
class CsvWriter {
 public:
  void header(const std::vector<std::string>& names) { row_strings(names); }

  template <class... Cells>
  void row(const Cells&... cells) {
    std::string line;
    ((append_cell(line, cells)), ...);
    out_ += line;
    out_ += '\n';
  }

  void comment(const std::string& text) {
    out_ += "# ";
    out_ += text;
    out_ += '\n';
  }

  const std::string& str() const { return out_; }

 private:
  void row_strings(const std::vector<std::string>& cells) {
    std::string line;
    for (const auto& c : cells) append_cell(line, c);
    out_ += line;
    out_ += '\n';
  }

  static void append_cell(std::string& line, double v) { append_raw(line, format_double(v)); }
  static void append_cell(std::string& line, int v) { append_raw(line, std::to_string(v)); }
  static void append_cell(std::string& line, long v) { append_raw(line, std::to_string(v)); }
  static void append_cell(std::string& line, std::uint64_t v) {
    append_raw(line, std::to_string(v));
  }
  static void append_cell(std::string& line, const std::string& v) { append_raw(line, v); }
  static void append_cell(std::string& line, const char* v) { append_raw(line, v); }

  static void append_raw(std::string& line, const std::string& cell) {
    if (!line.empty()) line += ',';
    line += cell;
  }

  std::string out_;
};

}  // namespace gwps
