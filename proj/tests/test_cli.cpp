#include "gatecap/cli.hpp"

#include "gatecap/checkpoint.hpp"
#include "gatecap/corpus.hpp"

#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>

using namespace gatecap;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("gatecap_cli_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("checkpoint round-trip and rejection") {
  fs::path dir = temp_dir("ckpt");
  ModelDims dims;
  dims.hidden = 4;
  dims.feature = 3;
  dims.vocab = 7;
  dims.cell = CellKind::Lstm;
  Params params = Params::init(dims, 99);
  std::string path = (dir / "model.ckpt").string();
  save_checkpoint(path, params, 0xabcdef1234ull, true);

  SUBCASE("round-trip restores every tensor bitwise") {
    LoadedCheckpoint loaded = load_checkpoint(path, 0xabcdef1234ull);
    CHECK(loaded.gated);
    CHECK(loaded.params.dims.hidden == 4);
    CHECK(loaded.params.dims.cell == CellKind::Lstm);
    auto a = params.tensors();
    auto b = loaded.params.tensors();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(*a[i].tensor == *b[i].tensor);
    }
  }

  SUBCASE("vocab hash mismatch is rejected") {
    CHECK_THROWS_AS(load_checkpoint(path, 0x1111ull), DataError);
  }

  SUBCASE("garbage file is rejected") {
    std::string bad = (dir / "bad.ckpt").string();
    std::ofstream(bad) << "not a checkpoint";
    CHECK_THROWS_AS(load_checkpoint(bad, 0xabcdef1234ull), DataError);
  }
}

TEST_CASE("cli usage errors") {
  CHECK(run_cli({"frobnicate"}) == 2);
  CHECK(run_cli({"toyworld", "--no-such-flag"}) == 2);
  CHECK(run_cli({}) == 2);
  CHECK(run_cli({"--help"}) == 0);
}

TEST_CASE("cli data and numeric error codes") {
  fs::path dir = temp_dir("errs");
  CHECK(run_cli({"mine", "--corpus", (dir / "missing.txt").string(), "--categories",
                 (dir / "missing.txt").string(), "--features", (dir / "missing.txt").string(),
                 "--detections", (dir / "missing.txt").string(), "--out",
                 (dir / "units.json").string()}) == 3);
  // A gradcheck tolerance of zero cannot be met: numeric failure.
  CHECK(run_cli({"gradcheck", "--seed", "1", "--fixtures", "2", "--tolerance", "0",
                 "--manifest", (dir / "m.json").string()}) == 4);
}

TEST_CASE("toyworld determinism and full pipeline") {
  fs::path base = temp_dir("pipeline");
  fs::path world_a = base / "world_a";
  fs::path world_b = base / "world_b";

  auto toyworld = [&](const fs::path& out) {
    return run_cli({"toyworld", "--seed", "5", "--out", out.string(), "--categories", "6",
                    "--images", "80", "--sentences", "300", "--drop", "0.1", "--feature-dim",
                    "8"});
  };
  REQUIRE(toyworld(world_a) == 0);
  REQUIRE(toyworld(world_b) == 0);

  SUBCASE("same seed produces identical files") {
    for (const auto& name :
         {"categories.txt", "corpus.txt", "train_features.tsv", "train_detections.tsv",
          "val_features.tsv", "val_refs.tsv", "test_features.tsv", "test_refs.tsv"}) {
      CHECK(slurp(world_a / name) == slurp(world_b / name));
    }
  }

  SUBCASE("train, caption, eval, analyze chain") {
    fs::path run = base / "run";
    int code = run_cli(
        {"train", "--corpus", (world_a / "corpus.txt").string(), "--categories",
         (world_a / "categories.txt").string(), "--plurals", (world_a / "plurals.tsv").string(),
         "--adjectives", (world_a / "adjectives.txt").string(), "--features",
         (world_a / "train_features.tsv").string(), "--detections",
         (world_a / "train_detections.tsv").string(), "--val-features",
         (world_a / "val_features.tsv").string(), "--val-detections",
         (world_a / "val_detections.tsv").string(), "--val-refs",
         (world_a / "val_refs.tsv").string(), "--out", run.string(), "--seed", "0",
         "--hidden-dim", "16", "--max-epochs", "8", "--patience", "8"});
    REQUIRE(code == 0);
    CHECK(fs::exists(run / "best.ckpt"));
    CHECK(fs::exists(run / "history.csv"));
    {
      auto manifest = nlohmann::json::parse(slurp(run / "manifest.json"));
      CHECK(manifest["status"] == "ok");
      CHECK(manifest["command"] == "train");
      CHECK(manifest["config"]["alpha"] == "16");
    }

    // History has a header plus one row per epoch.
    {
      std::ifstream history(run / "history.csv");
      std::string line;
      std::getline(history, line);
      CHECK(line == "epoch,L,L_g,L_f,val_metric");
      int rows = 0;
      while (std::getline(history, line)) ++rows;
      CHECK(rows == 8);
    }

    fs::path captions = base / "captions.tsv";
    fs::path trace = base / "trace.tsv";
    code = run_cli({"caption", "--checkpoint", (run / "best.ckpt").string(), "--corpus",
                    (world_a / "corpus.txt").string(), "--categories",
                    (world_a / "categories.txt").string(), "--plurals",
                    (world_a / "plurals.tsv").string(), "--features",
                    (world_a / "test_features.tsv").string(), "--out", captions.string(),
                    "--trace", trace.string()});
    REQUIRE(code == 0);
    {
      std::ifstream caps(captions);
      std::string line;
      int rows = 0;
      while (std::getline(caps, line)) {
        CHECK(line.find('\t') != std::string::npos);
        ++rows;
      }
      CHECK(rows == 12);  // test split of 80 images at 15%
    }
    // Trace lines carry token:gate pairs with 4 decimals.
    {
      std::ifstream tr(trace);
      std::string line;
      std::getline(tr, line);
      if (line.find(':') != std::string::npos) {
        auto colon = line.rfind(':');
        CHECK(line.size() - colon - 1 >= 6);  // 0.xxxx
      }
    }

    fs::path report = base / "report.json";
    code = run_cli({"eval", "--checkpoint", (run / "best.ckpt").string(), "--corpus",
                    (world_a / "corpus.txt").string(), "--categories",
                    (world_a / "categories.txt").string(), "--plurals",
                    (world_a / "plurals.tsv").string(), "--features",
                    (world_a / "test_features.tsv").string(), "--detections",
                    (world_a / "test_detections.tsv").string(), "--refs",
                    (world_a / "test_refs.tsv").string(), "--out", report.string()});
    REQUIRE(code == 0);
    auto doc = nlohmann::json::parse(slurp(report));
    CHECK(doc["n_images"] == 12);
    CHECK(doc["bleu"].contains("bleu1"));
    CHECK(doc["bow"]["detected"].contains("f1"));
    CHECK(doc["bow"]["others"].contains("n_pairs"));
    CHECK(doc["frequency"]["object"].contains("word_type"));
    CHECK(doc["gate"].contains("mean_object"));
    CHECK(doc["external"]["cider"].is_null());

    fs::path freq = base / "freq.json";
    code = run_cli({"analyze", "--captions", captions.string(), "--corpus",
                    (world_a / "corpus.txt").string(), "--categories",
                    (world_a / "categories.txt").string(), "--plurals",
                    (world_a / "plurals.tsv").string(), "--out", freq.string()});
    REQUIRE(code == 0);
    auto freq_doc = nlohmann::json::parse(slurp(freq));
    CHECK(freq_doc["object"].contains("mean_frequency"));

    // Wrong vocabulary (different corpus) must be rejected at load.
    code = run_cli({"caption", "--checkpoint", (run / "best.ckpt").string(), "--corpus",
                    (world_a / "categories.txt").string(), "--categories",
                    (world_a / "categories.txt").string(), "--features",
                    (world_a / "test_features.tsv").string(), "--out",
                    (base / "bad.tsv").string()});
    CHECK(code == 3);
  }
}

TEST_CASE("mine command writes unit summaries") {
  fs::path base = temp_dir("mine");
  REQUIRE(run_cli({"toyworld", "--seed", "9", "--out", base.string(), "--categories", "5",
                   "--images", "40", "--sentences", "120", "--feature-dim", "6"}) == 0);
  fs::path units = base / "units.json";
  int code = run_cli({"mine", "--corpus", (base / "corpus.txt").string(), "--categories",
                      (base / "categories.txt").string(), "--plurals",
                      (base / "plurals.tsv").string(), "--adjectives",
                      (base / "adjectives.txt").string(), "--features",
                      (base / "train_features.tsv").string(), "--detections",
                      (base / "train_detections.tsv").string(), "--out", units.string()});
  REQUIRE(code == 0);
  auto doc = nlohmann::json::parse(slurp(units));
  CHECK(doc["n_units"].get<long>() > 0);
  CHECK(doc["n_units"].get<long>() ==
        doc["n_pairs"].get<long>() + doc["n_singles"].get<long>());
  REQUIRE(doc["units"].is_array());
  for (const auto& unit : doc["units"]) {
    CHECK_FALSE(unit["caption_ids"].empty());
    CHECK_FALSE(unit["image_ids"].empty());
    CHECK((unit["key"].size() == 1 || unit["key"].size() == 2));
  }
  CHECK(fs::exists(units.string() + ".manifest.json"));
}
