#include "doctest.h"

#include <nlohmann/json.hpp>

#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path kBin = CLSA_BIN;
const fs::path kMini = fs::path(CLSA_SOURCE_DIR) / "data" / "mini";

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("clsa_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Runs the CLI with `args`; stdout and stderr go to `log`.
int clsa(const std::string& args, const fs::path& log) {
  const std::string cmd = kBin.string() + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kSmall = "--epochs 2 --encoder-dim 24 --decoder-dim 24 --mlp-dim 12 --batch-size 64";

// prep -> train -> evaluate -> simulate -> report into `root`.
void pipeline(const fs::path& root) {
  const auto log = root / "log.txt";
  REQUIRE(clsa("prep --data-dir " + kMini.string() + " --out " + (root / "prep").string() +
                   " --n-obs 5 --seed 3",
               log) == 0);
  REQUIRE(clsa("train --dataset " + (root / "prep").string() + " --out " +
                   (root / "run").string() + " --seed 3 " + kSmall,
               log) == 0);
  REQUIRE(clsa("evaluate --run " + (root / "run").string(), log) == 0);
  REQUIRE(clsa("simulate --events " + (root / "prep" / "events.jsonl").string() + " --run " +
                   (root / "run").string() + " --out " + (root / "sim").string() +
                   " --capacity-frac 0.02:0.20:0.02 --from-day 20",
               log) == 0);
  REQUIRE(clsa("report --run " + (root / "run").string() + " --sim " + (root / "sim").string() +
                   " --out " + (root / "plots").string(),
               log) == 0);
}

}  // namespace

TEST_CASE("bundled mini corpus stays small") {
  std::ifstream in(kMini / "u.data");
  REQUIRE(in);
  std::size_t lines = 0;
  for (std::string l; std::getline(in, l);) lines += l.empty() ? 0 : 1;
  CHECK(lines > 0);
  CHECK(lines <= 500);
}

TEST_CASE("mini pipeline runs end to end and is repeatable") {
  const auto a = scratch("a"), b = scratch("b");
  const auto start = std::chrono::steady_clock::now();
  pipeline(a);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(seconds < 60.0);
  pipeline(b);

  for (const char* f : {"prep/events.jsonl", "prep/windows.jsonl", "prep/dataset.json",
                        "prep/metadata.json", "run/config.json", "run/fold_1.ckpt",
                        "run/fold_5.ckpt", "run/loss_curves.csv", "run/metrics.json",
                        "run/confusion.csv", "run/embeddings.csv", "run/topk.csv",
                        "sim/hits.json", "sim/sweep.csv", "sim/per_day.csv",
                        "plots/loss_curves.svg", "plots/confusion.svg", "plots/hit_ratio.svg"}) {
    INFO(std::string(f));
    REQUIRE(fs::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }

  const auto hits = nlohmann::json::parse(slurp(a / "sim" / "hits.json"));
  CHECK(hits.at("optimal").at("ratio").get<double>() == 1.0);
  for (const char* p : {"lru", "lfu", "clsa"}) {
    const double r = hits.at(p).at("ratio").get<double>();
    CHECK(r >= 0.0);
    CHECK(r <= 1.0);
  }
  // 10 sweep points x 4 policies plus the header.
  std::istringstream sweep(slurp(a / "sim" / "sweep.csv"));
  std::size_t rows = 0;
  for (std::string l; std::getline(sweep, l);) ++rows;
  CHECK(rows == 41);

  const auto manifest = nlohmann::json::parse(slurp(a / "run" / "manifest.json"));
  REQUIRE(manifest.at("entries").size() == 2);
  CHECK(manifest["entries"][0]["command"] == "train");
  CHECK(manifest["entries"][1]["command"] == "evaluate");
  CHECK(manifest["entries"][0].contains("version"));
}

TEST_CASE("report without a simulation writes two plots") {
  const auto root = scratch("report");
  pipeline(root);
  const auto log = root / "partial.txt";
  CHECK(clsa("report --run " + (root / "run").string() + " --out " + (root / "p2").string(), log) ==
        0);
  CHECK(fs::exists(root / "p2" / "loss_curves.svg"));
  CHECK(fs::exists(root / "p2" / "confusion.svg"));
  CHECK_FALSE(fs::exists(root / "p2" / "hit_ratio.svg"));
  CHECK(slurp(log).find("skipped") != std::string::npos);
  CHECK(clsa("report --run " + (root / "nope").string() + " --out " + (root / "p3").string(),
             log) == 2);
}

TEST_CASE("exit codes") {
  const auto root = scratch("codes");
  const auto log = root / "log.txt";
  const auto prep = root / "prep";
  REQUIRE(clsa("prep --data-dir " + kMini.string() + " --out " + prep.string() + " --n-obs 5",
               log) == 0);

  CHECK(clsa("--help", log) == 0);
  CHECK(clsa("bogus", log) == 2);
  CHECK(clsa("prep --data-dir " + kMini.string() + " --out " + (root / "x").string() +
                 " --n-obs 0",
             log) == 2);
  CHECK(clsa("prep --data-dir " + (root / "absent").string() + " --out " + (root / "x").string(),
             log) == 2);
  CHECK(slurp(log).find("u.data") != std::string::npos);
  CHECK(clsa("simulate --events " + (prep / "events.jsonl").string() + " --policy clsa --out " +
                 (root / "s").string(),
             log) == 2);

  SUBCASE("config window length that does not match the dataset") {
    std::ofstream(root / "cfg.json") << R"({"n_obs": 10})";
    CHECK(clsa("train --dataset " + prep.string() + " --config " + (root / "cfg.json").string() +
                   " --out " + (root / "r").string(),
               log) == 3);
  }
  SUBCASE("config wins over model id with a warning") {
    std::ofstream(root / "cfg.json") << R"({"encoder_dim": 16, "decoder_dim": 16, "mlp_dim": 8,
                                          "epochs": 1, "batch_size": 64})";
    REQUIRE(clsa("train --dataset " + prep.string() + " --model-id 3 --config " +
                     (root / "cfg.json").string() + " --ablation L7 --out " +
                     (root / "r").string(),
                 log) == 0);
    CHECK(slurp(log).find("warning") != std::string::npos);
    const auto cfg = nlohmann::json::parse(slurp(root / "r" / "config.json"));
    CHECK(cfg.at("encoder_dim") == 16);
    CHECK(cfg.at("weights").at("cl").get<double>() == doctest::Approx(0.3));
    CHECK(cfg.at("weights").at("rn").get<double>() == doctest::Approx(0.2));
    CHECK(cfg.at("weights").at("sa").get<double>() == doctest::Approx(0.5));

    fs::remove(root / "r" / "fold_2.ckpt");
    CHECK(clsa("evaluate --run " + (root / "r").string(), log) == 3);
  }
}
