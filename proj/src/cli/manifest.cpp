#include <chrono>
#include <ctime>

#include "frmab/cli.hpp"
#include "frmab/errors.hpp"
#include "frmab/io.hpp"

namespace frmab::cli {

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

nlohmann::json RunManifest::to_json() const {
  return {{"command", command},
          {"argv", argv},
          {"config", config},
          {"seeds", seeds},
          {"inputs", inputs},
          {"outputs", outputs},
          {"tool_version", tool_version},
          {"started_at", started_at},
          {"finished_at", finished_at},
          {"wall_seconds", wall_seconds},
          {"timing", timing}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  RunManifest m;
  try {
    m.command = j.at("command").get<std::string>();
    m.argv = j.at("argv").get<std::vector<std::string>>();
    m.config = j.value("config", nlohmann::json::object());
    m.seeds = j.value("seeds", nlohmann::json::object());
    m.inputs = j.value("inputs", std::vector<std::string>{});
    m.outputs = j.value("outputs", std::vector<std::string>{});
    m.tool_version = j.value("tool_version", std::string{});
    m.started_at = j.value("started_at", std::string{});
    m.finished_at = j.value("finished_at", std::string{});
    m.wall_seconds = j.value("wall_seconds", 0.0);
    m.timing = j.value("timing", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Io, std::string("malformed manifest: ") + e.what());
  }
  return m;
}

void RunManifest::write(const std::filesystem::path& dir) const {
  io::write_json(dir / "manifest.json", to_json());
}

RunManifest RunManifest::read(const std::filesystem::path& path) {
  return from_json(io::read_json(path));
}

}  // namespace frmab::cli
