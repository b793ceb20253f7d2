#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace alora {

// RFC-4180 style CSV: comma separated, '"' quoting with "" escapes, CRLF or LF.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lines;  // 1-based source line where each row starts
};

CsvTable parse_csv(std::string_view text, const std::string& source);
CsvTable read_csv_file(const std::filesystem::path& path);

double parse_double_field(const std::string& field, const std::string& source, std::size_t line);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
std::string quote_csv_field(const std::string& field);

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  void write_row(const std::vector<std::string>& fields);

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

}  // namespace alora
