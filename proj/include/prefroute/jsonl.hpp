#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>

#include "json.hpp"
#include "prefroute/errors.hpp"

namespace prefroute {

// Insertion-ordered JSON keeps every emitted document byte-stable run to run.
using Json = nlohmann::ordered_json;

// Reads one JSON document per line; blank lines are skipped.
class JsonlReader {
 public:
  explicit JsonlReader(const std::filesystem::path& path);

  // Next record, or nullopt at end of file. Throws ParseError on bad JSON.
  std::optional<Json> next();

  std::size_t line_number() const { return line_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::size_t line_ = 0;
};

// Buffers everything and publishes with temp-file + rename so readers never
// observe a half-written file.
class AtomicWriter {
 public:
  explicit AtomicWriter(std::filesystem::path path) : path_(std::move(path)) {}

  void line(const Json& record) { buffer_ << record.dump() << '\n'; }
  void raw(std::string_view text) { buffer_ << text; }
  std::ostream& stream() { return buffer_; }

  void commit();

 private:
  std::filesystem::path path_;
  std::ostringstream buffer_;
};

void atomic_write_text(const std::filesystem::path& path, std::string_view content);

std::string read_text_file(const std::filesystem::path& path);

// Deterministic shortest-round-trip formatting for doubles in CSV output.
std::string format_double(double v);

// Minimal CSV support for the tabular interfaces. Quotes fields containing
// commas/quotes/newlines; '#'-prefixed lines are metadata comments.
std::string csv_escape(std::string_view field);
std::vector<std::string> csv_split(const std::string& line);

// Reads a CSV table skipping '#' comment lines; first data row is the header.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace prefroute
