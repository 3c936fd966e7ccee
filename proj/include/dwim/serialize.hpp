#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dwim/core.hpp"

namespace dwim {

using json = nlohmann::json;

/// A record failed to parse or violated its schema. Carries the 1-based line
/// number within the source file (0 when not line-oriented).
class SchemaError : public std::runtime_error {
 public:
  SchemaError(std::string source, std::size_t line, const std::string& message);
  const std::string& source() const { return source_; }
  std::size_t line() const { return line_; }

 private:
  std::string source_;
  std::size_t line_;
};

void to_json(json& j, const Task& t);
void from_json(const json& j, Task& t);
void to_json(json& j, const Action& a);
void from_json(const json& j, Action& a);
void to_json(json& j, const Feedback& f);
void from_json(const json& j, Feedback& f);
void to_json(json& j, const Step& s);
void from_json(const json& j, Step& s);
void to_json(json& j, const Workflow& w);
void from_json(const json& j, Workflow& w);
void to_json(json& j, const MaskSample& m);
void from_json(const json& j, MaskSample& m);

/// Raises SchemaError unless the record carries the current schema tag.
void require_schema(const json& record, const std::string& source, std::size_t line);

/// Reads a line-delimited JSON file; blank lines are skipped. Each record is
/// passed to `visit` along with its line number; exceptions thrown from
/// `visit` are rethrown as SchemaError carrying that line.
void read_jsonl(const std::filesystem::path& path,
                const std::function<void(const json&, std::size_t)>& visit);

template <class T>
std::vector<T> read_records(const std::filesystem::path& path) {
  std::vector<T> out;
  read_jsonl(path, [&](const json& j, std::size_t line) {
    require_schema(j, path.string(), line);
    out.push_back(j.get<T>());
  });
  return out;
}

/// Canonical single-line encoding (sorted keys, no whitespace).
std::string canonical(const json& j);

/// Writes one canonical record per line. Throws std::runtime_error on I/O failure.
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records);

template <class T>
void write_records(const std::filesystem::path& path, const std::vector<T>& items) {
  std::vector<json> records;
  records.reserve(items.size());
  for (const auto& item : items) records.emplace_back(item);
  write_jsonl(path, records);
}

void write_json_file(const std::filesystem::path& path, const json& j);
json read_json_file(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace dwim
