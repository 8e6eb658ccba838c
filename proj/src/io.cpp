#include "deepteam/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "deepteam/error.hpp"

namespace deepteam {

namespace fs = std::filesystem;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

CsvBuilder& CsvBuilder::comment(const std::string& line) {
  text_ += "# " + line + "\n";
  return *this;
}

CsvBuilder& CsvBuilder::header(const std::vector<std::string>& cols) { return row(cols); }

CsvBuilder& CsvBuilder::row(const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) text_ += ',';
    text_ += cells[i];
  }
  text_ += '\n';
  return *this;
}

void write_file_atomic(const std::string& path, const std::string& content, bool force) {
  const fs::path target(path);
  if (fs::exists(target) && !force) throw Error("refusing to overwrite " + path + " (use --force)");
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error("cannot rename " + tmp.string() + " to " + path + ": " + ec.message());
  }
}

}  // namespace deepteam
