#include <cstdlib>
#include <sstream>

#include "doctest.h"
#include "frmab/cli.hpp"
#include "frmab/io.hpp"
#include "helpers.hpp"

using namespace frmab;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "frmab");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

}  // namespace

TEST_CASE("usage errors exit 3, help exits 0") {
  CHECK(run_cli({}).code == cli::kInputError);
  CHECK(run_cli({"frobnicate"}).code == cli::kInputError);
  CHECK(run_cli({"solve", "--family", "machine"}).code == cli::kInputError);  // no --out
  CHECK(run_cli({"--help"}).code == cli::kOk);
  const auto dir = test::scratch_dir("cli_usage");
  CHECK(run_cli({"solve", "--family", "nope", "--sample", "--out", dir.string()}).code == cli::kInputError);
  CHECK(run_cli({"solve", "--family", "machine", "--out", dir.string()}).code == cli::kInputError);
  CHECK(run_cli({"solve", "--family", "machine", "--sample", "--seed", "x1", "--out", dir.string()}).code ==
        cli::kInputError);
}

TEST_CASE("missing or unreadable inputs exit 3") {
  const auto dir = test::scratch_dir("cli_missing");
  CHECK(run_cli({"train", "--data", (dir / "nowhere").string(), "--out", dir.string()}).code == cli::kInputError);
  io::write_file(dir / "dataset.csv", "garbage");
  io::write_file(dir / "dataset.json", "{}");
  CHECK(run_cli({"train", "--data", dir.string(), "--out", dir.string()}).code == cli::kInputError);
  CHECK(run_cli({"eval", "--model", (dir / "model.json").string(), "--out", dir.string()}).code ==
        cli::kInputError);
  CHECK(run_cli({"replay", "--manifest", (dir / "manifest.json").string()}).code == cli::kInputError);
}

TEST_CASE("numerical failures exit 2") {
  const auto dir = test::scratch_dir("cli_numeric");
  // identical rows with conflicting labels
  io::write_file(dir / "dataset.csv", "t,x_1,x_2,label\n0.5,0.5,0.5,0\n0.5,0.5,0.5,1\n");
  io::write_file(dir / "dataset.json",
                 R"({"feature_names":["t","x_1","x_2"],"class_table":[[0,1],[1,0]],)"
                 R"("plan":{"family":"affine","terms":[]}})");
  const Result r = run_cli({"train", "--data", dir.string(), "--out", (dir / "m").string()});
  CHECK(r.code == cli::kNumericalFailure);
  CHECK(r.err.find("DegenerateData") != std::string::npos);
}

TEST_CASE("solve writes its artifacts and a manifest") {
  const auto dir = test::scratch_dir("cli_solve");
  const Result r = run_cli({"solve", "--family", "routing", "--paper-params", "--x0", "1,1", "--plot",
                            "--jobs", "1", "--seed", "3", "--out", dir.string()});
  REQUIRE(r.code == cli::kOk);
  CHECK(r.out.find("segments 2") != std::string::npos);
  for (const char* f : {"instance.json", "trajectory.csv", "segments.json", "manifest.json",
                        "trajectory.svg", "controls.svg"}) {
    CHECK(fs::exists(dir / f));
  }
  const auto m = cli::RunManifest::read(dir / "manifest.json");
  CHECK(m.command == "solve");
  CHECK(m.tool_version == cli::kToolVersion);
  CHECK(io::read_file(dir / "trajectory.svg").rfind("<svg", 0) == 0);
}

TEST_CASE("seed falls back to FRMAB_SEED and is recorded explicitly") {
  const auto dir = test::scratch_dir("cli_env_seed");
  ::setenv("FRMAB_SEED", "17", 1);
  const Result r = run_cli({"solve", "--family", "machine", "--n", "3", "--sample", "--jobs", "1",
                            "--out", dir.string()});
  ::unsetenv("FRMAB_SEED");
  REQUIRE(r.code == cli::kOk);
  const auto m = cli::RunManifest::read(dir / "manifest.json");
  CHECK(m.seeds["seed"] == 17);
  REQUIRE(m.argv.size() >= 2);
  CHECK(m.argv[m.argv.size() - 2] == "--seed");
  CHECK(m.argv.back() == "17");

  ::setenv("FRMAB_SEED", "not-a-number", 1);
  CHECK(run_cli({"solve", "--family", "machine", "--sample", "--out", dir.string()}).code ==
        cli::kInputError);
  ::unsetenv("FRMAB_SEED");
}

TEST_CASE("generate, train, eval and replay reproduce byte-identical artifacts") {
  const auto dir = test::scratch_dir("cli_pipeline");
  const std::string g = (dir / "gen").string(), t = (dir / "train").string(), e = (dir / "eval").string();
  REQUIRE(run_cli({"generate", "--family", "machine", "--n", "3", "--M", "12", "--per-segment", "5",
                   "--seed", "2", "--jobs", "2", "--out", g})
              .code == cli::kOk);
  REQUIRE(run_cli({"train", "--data", g, "--depths", "1,2", "--min-leaf", "3", "--seed", "2", "--out", t})
              .code == cli::kOk);
  REQUIRE(run_cli({"eval", "--model", t + "/model.json", "--n-instances", "3", "--points", "20",
                   "--seed", "2", "--out", e})
              .code == cli::kOk);
  CHECK(fs::exists(fs::path(e) / "report.txt"));

  const std::string g2 = (dir / "gen2").string(), t2 = (dir / "train2").string(), e2 = (dir / "eval2").string();
  REQUIRE(run_cli({"replay", "--manifest", g + "/manifest.json", "--out", g2}).code == cli::kOk);
  REQUIRE(run_cli({"replay", "--manifest", t + "/manifest.json", "--out", t2}).code == cli::kOk);
  REQUIRE(run_cli({"replay", "--manifest", e + "/manifest.json", "--out", e2}).code == cli::kOk);
  for (const char* f : {"dataset.csv", "dataset.json", "instance.json"}) {
    CHECK(io::read_file(fs::path(g) / f) == io::read_file(fs::path(g2) / f));
  }
  CHECK(io::read_file(fs::path(t) / "model.json") == io::read_file(fs::path(t2) / "model.json"));
  auto strip = [](nlohmann::json j) {
    j.erase("timing");
    return j.dump();
  };
  CHECK(strip(io::read_json(fs::path(e) / "report.json")) == strip(io::read_json(fs::path(e2) / "report.json")));
}

TEST_CASE("bench: empty config gives an empty table, failing cells are marked") {
  const auto dir = test::scratch_dir("cli_bench");
  io::write_json(dir / "empty.json", {{"cells", nlohmann::json::array()}});
  const Result empty = run_cli({"bench", "--config", (dir / "empty.json").string(), "--out",
                                (dir / "e").string()});
  CHECK(empty.code == cli::kOk);
  CHECK(io::read_json(dir / "e" / "bench.json")["cells"].empty());

  io::write_json(dir / "mixed.json",
                 {{"cells", {{{"family", "bogus"}, {"n", 3}, {"T", 1.0}},
                             {{"family", "machine"}, {"n", 3}, {"T", 1.0}}}},
                  {"M", 10},
                  {"points", 20},
                  {"n_instances", 2},
                  {"depths", {1}},
                  {"min_leaf", 3}});
  const Result mixed = run_cli({"bench", "--config", (dir / "mixed.json").string(), "--jobs", "1",
                                "--out", (dir / "m").string()});
  CHECK(mixed.code == cli::kOk);
  const auto cells = io::read_json(dir / "m" / "bench.json")["cells"];
  REQUIRE(cells.size() == 2);
  CHECK(cells[0]["status"] == "FAILED");
  CHECK(cells[1]["status"] == "ok");
  CHECK(mixed.out.find("FAILED") != std::string::npos);
}
