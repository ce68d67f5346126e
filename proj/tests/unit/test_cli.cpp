#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "stereodistill/cli.hpp"

using namespace stereodistill;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
  std::vector<std::string> artifacts;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const CommandResult r = run_cli(args, out, err);
  return {r.exit_code, out.str(), err.str(), r.artifacts};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "stereodistill_unit_cli" / name;
  fs::remove_all(p);
  fs::create_directories(p.parent_path());
  return p;
}

}  // namespace

TEST_CASE("parse failures are configuration errors") {
  CHECK(cli({}).code == exit_code::config);
  CHECK(cli({"frobnicate"}).code == exit_code::config);
  CHECK(cli({"gen-data", "--count", "2"}).code == exit_code::config);  // --out missing
  CHECK(cli({"--help"}).code == exit_code::ok);
}

TEST_CASE("profile prints module totals") {
  const Run r = cli({"profile", "--preset", "BB21-ED1-N8", "--height", "64", "--width", "128"});
  CHECK(r.code == exit_code::ok);
  CHECK(r.out.find("BB21-ED1-N8") != std::string::npos);
  CHECK(cli({"profile", "--preset", "nonsense"}).code == exit_code::config);
}

TEST_CASE("gen-data, distill, evaluate") {
  const fs::path root = scratch("flow");
  const std::string data = (root / "data").string();
  Run r = cli({"gen-data", "--out", data, "--count", "4", "--test-count", "1", "--height", "32", "--width", "64",
               "--max-disp", "12", "--seed", "2"});
  REQUIRE(r.code == exit_code::ok);
  CHECK(fs::exists(root / "data" / "manifest.json"));
  CHECK(cli({"gen-data", "--out", (root / "odd").string(), "--count", "2", "--height", "63"}).code ==
        exit_code::config);

  const std::vector<std::string> common{"--preset", "BB14-ED1-N8", "--max-disp", "16", "--dataset", data,
                                        "--epochs", "1", "--batch-size", "2", "--crop-height", "16",
                                        "--crop-width", "32"};
  auto with = [&](std::vector<std::string> head, std::vector<std::string> tail) {
    head.insert(head.end(), common.begin(), common.end());
    head.insert(head.end(), tail.begin(), tail.end());
    return head;
  };

  // The oracle cannot provide early features: nothing is written.
  const fs::path refused = root / "refused";
  r = cli(with({"distill", "--out", refused.string()}, {"--teacher", "oracle", "--points", "spw,fe"}));
  CHECK(r.code == exit_code::capability);
  CHECK(r.artifacts.empty());
  CHECK_FALSE(fs::exists(refused));

  r = cli(with({"distill", "--out", (root / "run").string()}, {"--teacher", "oracle", "--points", "spw,cv,stpw"}));
  REQUIRE(r.code == exit_code::ok);
  CHECK(fs::exists(root / "run" / "final.sdck"));
  CHECK(fs::exists(root / "run" / "metrics.csv"));

  r = cli(with({"train", "--out", (root / "bad").string()}, {"--epochs", "0"}));
  CHECK(r.code == exit_code::config);

  r = cli({"evaluate", "--checkpoint", (root / "run" / "final.sdck").string(), "--dataset", data, "--out",
           (root / "eval").string(), "--images"});
  REQUIRE(r.code == exit_code::ok);
  std::ifstream csv(root / "eval" / "metrics.csv");
  std::string header, line, last;
  std::getline(csv, header);
  CHECK(header.rfind("id,n_valid,epe_px", 0) == 0);
  while (std::getline(csv, line)) last = line;
  CHECK(last.rfind("all,", 0) == 0);

  r = cli({"evaluate", "--checkpoint", (root / "absent.sdck").string(), "--dataset", data, "--out",
           (root / "eval2").string()});
  CHECK(r.code == exit_code::io);
  CHECK_FALSE(fs::exists(root / "eval2"));
}

TEST_CASE("ablation rows are cumulative") {
  const auto& rows = ablation_rows();
  REQUIRE(rows.size() == 6);
  CHECK(rows[0].points == std::vector<Term>{Term::spw});
  for (size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].points.size() >= rows[i - 1].points.size());
  CHECK_FALSE(rows[4].attention);
  CHECK(rows[5].attention);
  CHECK(rows[4].losses.at(Term::ca) == LossKind::kld);
}
