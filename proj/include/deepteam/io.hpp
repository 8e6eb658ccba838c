#pragma once

#include <string>
#include <vector>

namespace deepteam {

// %.17g, the round-trip format used for every number in CSV output.
std::string fmt(double v);
// Shortest decimal that reads back to the same double.
std::string fmt_short(double v);

// Accumulates CSV text: optional '#' comment lines, a header row, then data rows.
class CsvBuilder {
 public:
  CsvBuilder& comment(const std::string& line);
  CsvBuilder& header(const std::vector<std::string>& cols);
  CsvBuilder& row(const std::vector<std::string>& cells);
  const std::string& str() const { return text_; }

 private:
  std::string text_;
};

// Writes through a temporary file in the same directory and renames it into place. Refuses to replace an
// existing file unless force is set. Creates missing parent directories.
void write_file_atomic(const std::string& path, const std::string& content, bool force);

}  // namespace deepteam
