#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace frmab::io {

// Shortest text that round-trips the double exactly (17 significant digits).
std::string format_double(double v);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

nlohmann::json read_json(const std::filesystem::path& path);
// Pretty-printed with a trailing newline; keys keep nlohmann's sorted order so
// output bytes are stable.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

// Minimal numeric CSV: one header row, then rows of doubles.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

CsvTable read_csv(const std::filesystem::path& path);

}  // namespace frmab::io
