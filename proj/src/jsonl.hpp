#pragma once

// Newline-delimited JSON files with a self-describing header line.

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvalign/datamodel.hpp"
#include "mvalign/errors.hpp"

namespace mvalign::jsonl {

using json = nlohmann::ordered_json;

inline constexpr int kVersion = 1;

inline json header(const std::string& format) {
  return json{{"format", format},
              {"version", kVersion},
              {"units", {{"length", "m"}, {"angle", "deg"}, {"box", "px"}, {"rotation", "quaternion_wxyz"}}}};
}

struct Record {
  std::size_t line;
  json value;
};

inline void warn_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& where,
                         Warnings* warnings) {
  if (!warnings || !obj.is_object()) return;
  for (const auto& [key, _] : obj.items()) {
    bool found = false;
    for (const char* k : known) found = found || key == k;
    if (!found) warnings->push_back(where + ": ignoring unknown field '" + key + "'");
  }
}

inline std::vector<Record> read(const std::filesystem::path& file, const std::string& format, Warnings* warnings) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  std::vector<Record> records;
  std::string text;
  std::size_t line = 0;
  bool have_header = false;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json value;
    try {
      value = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(file.string(), line, e.what());
    }
    if (!value.is_object()) throw ParseError(file.string(), line, "record is not an object");
    if (!have_header) {
      if (!value.contains("format") || value["format"] != format) {
        throw ParseError(file.string(), line, "expected header with format '" + format + "'");
      }
      if (!value.contains("version") || value["version"] != kVersion) {
        throw ParseError(file.string(), line, "unsupported version");
      }
      warn_unknown(value, {"format", "version", "units"}, file.string() + ":" + std::to_string(line), warnings);
      have_header = true;
      continue;
    }
    records.push_back({line, std::move(value)});
  }
  if (!have_header) throw ParseError(file.string(), line, "missing header record");
  return records;
}

inline void write(const std::filesystem::path& file, const std::string& format, const std::vector<json>& records) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out << header(format).dump() << '\n';
  for (const auto& r : records) out << r.dump() << '\n';
  if (!out) throw IoError("write failed for " + file.string());
}

}  // namespace mvalign::jsonl
