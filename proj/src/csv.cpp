#include "alora/csv.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "alora/error.hpp"

namespace alora {

CsvTable parse_csv(std::string_view text, const std::string& source) {
  CsvTable table;
  std::vector<std::string> record;
  std::string field;
  std::size_t line = 1;
  std::size_t record_line = 1;
  bool in_quotes = false;
  bool field_started = false;
  bool any_in_record = false;

  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    const bool blank = record.size() == 1 && record[0].empty() && !any_in_record;
    if (!blank) {
      if (table.header.empty() && table.rows.empty()) {
        table.header = std::move(record);
      } else {
        table.rows.push_back(std::move(record));
        table.lines.push_back(record_line);
      }
    }
    record.clear();
    any_in_record = false;
  };

  if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF &&
      static_cast<unsigned char>(text[1]) == 0xBB && static_cast<unsigned char>(text[2]) == 0xBF) {
    text.remove_prefix(3);
  }

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field_started && !field.empty()) {
          throw DataError(source + ":" + std::to_string(line) + ": stray quote inside field");
        }
        in_quotes = true;
        field_started = true;
        any_in_record = true;
        break;
      case ',':
        end_field();
        any_in_record = true;
        break;
      case '\r':
        break;
      case '\n':
        end_record();
        ++line;
        record_line = line;
        break;
      default:
        field.push_back(c);
        field_started = true;
        any_in_record = true;
    }
  }
  if (in_quotes) throw DataError(source + ":" + std::to_string(record_line) + ": unterminated quote");
  if (any_in_record || !field.empty()) end_record();
  return table;
}

CsvTable read_csv_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str(), path.string());
}

double parse_double_field(const std::string& field, const std::string& source, std::size_t line) {
  std::string_view sv(field);
  while (!sv.empty() && (sv.front() == ' ' || sv.front() == '\t')) sv.remove_prefix(1);
  while (!sv.empty() && (sv.back() == ' ' || sv.back() == '\t')) sv.remove_suffix(1);
  if (!sv.empty() && sv.front() == '+') sv.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), value);
  if (sv.empty() || ec != std::errc() || ptr != sv.data() + sv.size() || !std::isfinite(value)) {
    throw DataError(source + ":" + std::to_string(line) + ": non-numeric cell '" + field + "'");
  }
  return value;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw NumericError("format_double: conversion failed");
  return std::string(buf, ptr);
}

std::string quote_csv_field(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : out_(path, std::ios::binary), path_(path) {
  if (!out_) throw DataError("cannot write '" + path.string() + "'");
  write_row(header);
}

void CsvWriter::write_row(const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out_ << ',';
    out_ << quote_csv_field(fields[i]);
  }
  out_ << '\n';
  if (!out_) throw DataError("write failed for '" + path_.string() + "'");
}

}  // namespace alora
