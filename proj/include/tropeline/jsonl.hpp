#pragma once

#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <string>

#include "json.hpp"
#include "tropeline/error.hpp"

namespace tropeline {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// Calls fn(object, line_number) for every non-blank line. Parse failures and
// non-object lines raise DataError naming the source and line.
inline void for_each_json_line(std::istream& in, const std::string& source,
                               const std::function<void(const json&, std::size_t)>& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json value;
    try {
      value = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(source + ":" + std::to_string(line_no) + ": invalid JSON: " + e.what());
    }
    if (!value.is_object()) {
      throw DataError(source + ":" + std::to_string(line_no) + ": expected a JSON object");
    }
    try {
      fn(value, line_no);
    } catch (const json::exception& e) {
      throw DataError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return in;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  return out;
}

// Fetches a required string member or throws json::exception (mapped to DataError by the reader).
inline const std::string& require_string(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw DataError(std::string("missing field \"") + key + "\"");
  if (!it->is_string()) throw DataError(std::string("field \"") + key + "\" must be a string");
  return it->get_ref<const std::string&>();
}

}  // namespace tropeline
