#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace frmab::cli {

inline constexpr const char* kToolVersion = "0.1.0";

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kNumericalFailure = 2;
inline constexpr int kInputError = 3;

// Parses argv (argv[0] is the program name) and runs one subcommand:
// solve, generate, train, eval, bench, replay.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// One per output directory, written as manifest.json. `argv` is the
// canonical argument list (the resolved seed always explicit), so `replay`
// reruns the command without depending on the environment.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::json config;
  nlohmann::json seeds;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string tool_version = kToolVersion;
  std::string started_at;
  std::string finished_at;
  double wall_seconds = 0.0;
  nlohmann::json timing = nlohmann::json::object();

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
  void write(const std::filesystem::path& dir) const;
  static RunManifest read(const std::filesystem::path& path);
};

// UTC, ISO 8601.
std::string utc_timestamp();

struct Series {
  std::string name;
  std::vector<double> xs, ys;
  bool step = false;  // piecewise constant, held until the next x
};

struct LinePlot {
  std::string title, xlabel, ylabel;
  std::vector<Series> series;
  // Optional vertical markers (e.g. switch times).
  std::vector<double> vlines;
};

std::string render_svg(const LinePlot& plot);

// Cells colored by class over a (x, y) grid; values[i][j] is the class at
// xs[j], ys[i].
struct ClassMap {
  std::string title, xlabel, ylabel;
  std::vector<double> xs, ys;
  std::vector<std::vector<int>> values;
  std::vector<std::string> class_names;
};

std::string render_svg(const ClassMap& map);

}  // namespace frmab::cli
