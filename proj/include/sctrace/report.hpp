#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sctrace/errors.hpp"

namespace sctrace {

using json = nlohmann::ordered_json;

/// Shortest round-trippable decimal form; keeps emitted files byte-stable
/// across runs.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  double back = std::strtod(buf, nullptr);
  if (back == v) {
    for (int prec = 1; prec <= 16; ++prec) {
      char shorter[40];
      std::snprintf(shorter, sizeof shorter, "%.*g", prec, v);
      if (std::strtod(shorter, nullptr) == v) return shorter;
    }
  }
  return buf;
}

/// One verification record: {check, params, lhs, rhs, deviation}.
struct CheckRecord {
  std::string check;
  json params = json::object();
  double lhs = 0;
  double rhs = 0;
  double deviation = 0;
  double tolerance = 0;
  bool pass = false;

  json to_json() const {
    return json{{"check", check},   {"params", params},       {"lhs", lhs},
                {"rhs", rhs},       {"deviation", deviation}, {"tolerance", tolerance},
                {"pass", pass}};
  }
};

inline CheckRecord make_check(std::string name, json params, double lhs, double rhs,
                              double deviation, double tol) {
  CheckRecord r;
  r.check = std::move(name);
  r.params = std::move(params);
  r.lhs = lhs;
  r.rhs = rhs;
  r.deviation = deviation;
  r.tolerance = tol;
  r.pass = deviation <= tol;
  return r;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParameterError("cannot open for writing: " + path);
  os << content;
  if (!os) throw ParameterError("write failed: " + path);
}

inline void write_json_file(const std::string& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace sctrace
