#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <unistd.h>

#include "brits/cli.hpp"
#include "brits/io.hpp"
#include "support.hpp"

using namespace brits;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("brits_test_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "brits");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t count_lines(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST_CASE("ndjson round trip is exact") {
  std::mt19937_64 rng(3);
  Dataset ds;
  for (int i = 0; i < 4; ++i) ds.push_back(testing::random_sample(6, 3, rng, 0.3, i % 2 ? std::optional(1.0) : std::nullopt));
  ds = hold_out(ds, 0.2, 5);
  std::stringstream buf;
  write_ndjson(buf, ds);
  const std::string text = buf.str();
  CHECK(text.find("\"values\"") < text.find("\"masks\""));
  CHECK(read_ndjson(buf) == ds);
}

TEST_CASE("ndjson treats null values as missing") {
  std::stringstream in(
      R"({"values":[[1.0],[null]],"masks":[[1],[1]],"timestamps":[0,1],"label":null})" "\n");
  const Dataset ds = read_ndjson(in);
  REQUIRE(ds.size() == 1);
  CHECK(ds[0].masks(1, 0) == 0.0);
  CHECK(ds[0].values(1, 0) == 0.0);
  CHECK(ds[0].eval_masks == Tensor(2, 1));
  CHECK_FALSE(ds[0].label.has_value());
}

TEST_CASE("ndjson errors name the line") {
  std::stringstream in("{\"values\":[[1]],\"masks\":[[1]],\"timestamps\":[0]}\n{\"values\":[[1]]}\n");
  try {
    read_ndjson(in);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("checkpoint round trip") {
  Model model(ModelConfig{ModelKind::brits, 3, 4, 2, Task::classify}, 9);
  const Checkpoint cp{model.config(), NormalizationStats{{1, 2, 3}, {0.5, 1, 2}}, model.parameters()};
  std::stringstream buf;
  write_checkpoint(buf, cp);
  const Checkpoint back = read_checkpoint(buf);
  CHECK(back.config == cp.config);
  CHECK(back.stats.mean == cp.stats.mean);
  CHECK(back.stats.std == cp.stats.std);
  REQUIRE(back.params.size() == cp.params.size());
  for (std::size_t i = 0; i < cp.params.size(); ++i) {
    CHECK(back.params.at(cp.params[i].name).value == cp.params[i].value);
  }
  CHECK(back.params.contains("bwd.W_z"));
  CHECK_NOTHROW(model_from_checkpoint(back, 3));
  try {
    model_from_checkpoint(back, 5);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("D=3") != std::string::npos);
    CHECK(msg.find("D=5") != std::string::npos);
  }
}

TEST_CASE("imputation csv has one row per entry") {
  std::mt19937_64 rng(1);
  const Dataset ds = hold_out({testing::random_sample(4, 2, rng, 0.2), testing::random_sample(3, 2, rng, 0.2)}, 0.3, 1);
  std::vector<Tensor> imp = {Tensor(4, 2, 0.5), Tensor(3, 2, 0.5)};
  std::ostringstream out;
  write_imputation_csv(out, ds, imp);
  const std::string text = out.str();
  CHECK(text.rfind("sample_id,t,d,truth,imputed,was_eval\n", 0) == 0);
  CHECK(count_lines(text) == 1 + 4 * 2 + 3 * 2);
}

TEST_CASE("generate writes identical bytes for a repeated seed") {
  TempDir dir;
  const CliResult a = cli({"generate", "--n", "100", "--length", "36", "--missing", "0.22", "--seed", "7",
                           "--out", dir / "a.ndjson", "--plot-csv", dir / "a.csv"});
  REQUIRE(a.code == kExitOk);
  CHECK(cli({"generate", "--n", "100", "--seed", "7", "--out", dir / "b.ndjson"}).code == kExitOk);
  CHECK(slurp(dir / "a.ndjson") == slurp(dir / "b.ndjson"));
  const Dataset ds = load_dataset(dir / "a.ndjson");
  CHECK(ds.size() == 100);
  for (const auto& s : ds) CHECK(s.length() == 36);
  CHECK(count_lines(slurp(dir / "a.csv")) == 1 + 100 * 36);

  REQUIRE(cli({"generate", "--n", "5", "--missing", "0", "--out", dir / "c.ndjson"}).code == kExitOk);
  for (const auto& s : load_dataset(dir / "c.ndjson")) CHECK(s.eval_masks == Tensor(36, 1));
}

TEST_CASE("train impute evaluate baseline pipeline") {
  TempDir dir;
  REQUIRE(cli({"generate", "--n", "20", "--length", "10", "--seed", "3", "--out", dir / "d.ndjson"}).code == 0);
  const CliResult tr = cli({"train", "--data", dir / "d.ndjson", "--out", dir / "run", "--model", "brits",
                            "--hidden", "4", "--epochs", "3", "--batch", "8", "--seed", "1"});
  REQUIRE(tr.code == kExitOk);
  const std::string curve = slurp(dir / "run/curve.csv");
  CHECK(curve.rfind("epoch,train_loss,val_mae\n", 0) == 0);
  CHECK(count_lines(curve) == 4);
  CHECK(fs::exists(dir / "run/metrics.json"));

  const CliResult imp = cli({"impute", "--data", dir / "d.ndjson", "--checkpoint", dir / "run/checkpoint.json"});
  REQUIRE(imp.code == kExitOk);
  CHECK(count_lines(imp.out) == 1 + 20 * 10);
  CHECK(cli({"impute", "--data", dir / "d.ndjson", "--checkpoint", dir / "run/checkpoint.json",
             "--space", "original", "--out", dir / "imp.csv"}).code == kExitOk);
  CHECK(count_lines(slurp(dir / "imp.csv")) == 1 + 20 * 10);

  const CliResult ev = cli({"evaluate", "--data", dir / "d.ndjson", "--checkpoint", dir / "run/checkpoint.json"});
  REQUIRE(ev.code == kExitOk);
  const auto report = nlohmann::json::parse(ev.out);
  const CliResult base = cli({"baseline", "--data", dir / "d.ndjson", "--kind", "mean"});
  REQUIRE(base.code == kExitOk);
  const auto base_report = nlohmann::json::parse(base.out);
  CHECK(report["count"] == base_report["count"]);
  CHECK(std::fabs(base_report["mre"].get<double>() - 1.0) <= 1e-9);

  // Idempotence: a second identical run produces identical files.
  REQUIRE(cli({"train", "--data", dir / "d.ndjson", "--out", dir / "run2", "--model", "brits", "--hidden", "4",
               "--epochs", "3", "--batch", "8", "--seed", "1"}).code == kExitOk);
  CHECK(slurp(dir / "run/checkpoint.json") == slurp(dir / "run2/checkpoint.json"));
  CHECK(slurp(dir / "run/metrics.json") == slurp(dir / "run2/metrics.json"));
}

TEST_CASE("classification training writes fold checkpoints") {
  TempDir dir;
  std::mt19937_64 rng(4);
  Dataset ds;
  for (int i = 0; i < 10; ++i) ds.push_back(testing::random_sample(5, 2, rng, 0.2, static_cast<double>(i % 2)));
  save_dataset(dir / "l.ndjson", ds);
  const CliResult tr = cli({"train", "--data", dir / "l.ndjson", "--out", dir / "c", "--task", "classify",
                            "--hidden", "3", "--epochs", "2", "--finetune-epochs", "1", "--folds", "2"});
  REQUIRE(tr.code == kExitOk);
  CHECK(fs::exists(dir / "c/fold0.json"));
  CHECK(fs::exists(dir / "c/fold1.json"));
  const auto report = nlohmann::json::parse(slurp(dir / "c/metrics.json"));
  CHECK(report["validation"].contains("accuracy"));
  const CliResult ev = cli({"evaluate", "--data", dir / "l.ndjson", "--checkpoint", dir / "c/fold0.json"});
  // The dataset has no eval entries.
  CHECK(ev.code == kExitData);
  CHECK(ev.err.find("no eval entries") != std::string::npos);
}

TEST_CASE("exit codes") {
  TempDir dir;
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"frobnicate"}).code == kExitUsage);
  CHECK(cli({"generate", "--n", "3"}).code == kExitUsage);
  CHECK(cli({"generate", "--n", "3", "--missing", "1.5", "--out", dir / "x"}).code == kExitUsage);
  REQUIRE(cli({"generate", "--n", "3", "--length", "6", "--out", dir / "d.ndjson"}).code == kExitOk);
  CHECK(cli({"train", "--data", dir / "d.ndjson", "--out", dir / "r", "--model", "nope"}).code == kExitUsage);
  CHECK(cli({"baseline", "--data", dir / "d.ndjson", "--kind", "knn"}).code == kExitUsage);
  CHECK(cli({"baseline", "--data", dir / "missing.ndjson"}).code == kExitUsage);

  std::ofstream(dir / "bad.ndjson") << "{not json\n";
  CHECK(cli({"baseline", "--data", dir / "bad.ndjson"}).code == kExitData);

  // A checkpoint for D=2 against a D=1 dataset.
  Model model(ModelConfig{ModelKind::rits_i, 2, 3}, 1);
  save_checkpoint(dir / "cp.json", Checkpoint{model.config(), NormalizationStats{{0, 0}, {1, 1}}, model.parameters()});
  const CliResult mismatch = cli({"evaluate", "--data", dir / "d.ndjson", "--checkpoint", dir / "cp.json"});
  CHECK(mismatch.code == kExitData);
  CHECK(mismatch.err.find("D=2") != std::string::npos);
  CHECK(mismatch.err.find("D=1") != std::string::npos);

  // A learning rate this large overflows within a few updates.
  const CliResult diverged = cli({"train", "--data", dir / "d.ndjson", "--out", dir / "r", "--lr", "1e200",
                                  "--no-clip", "--hidden", "2", "--epochs", "5", "--batch", "1"});
  CHECK(diverged.code == kExitNumeric);
  CHECK(diverged.err.find("epoch") != std::string::npos);
}
