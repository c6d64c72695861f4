#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace medcore {

/// "%.12g" rendering with -0 folded to 0; NaN and infinities spelled nan / inf / -inf.
std::string format_double(double v);

/// Comma-separated, LF line endings, mandatory header row.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  CsvWriter& row(std::vector<std::string> cells);
  std::string str() const;
  std::size_t columns() const { return header_.size(); }

 private:
  std::vector<std::string> header_;
  std::string body_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::size_t column(const std::string& name) const;
};
CsvTable parse_csv(const std::string& text);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace medcore
