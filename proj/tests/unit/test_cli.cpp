#include <doctest.h>

#include <fstream>
#include <sstream>

#include "pulsesense/cli.hpp"
#include "pulsesense/config.hpp"
#include "pulsesense/dsp.hpp"
#include "pulsesense/model.hpp"
#include "support.hpp"

using namespace pulsesense;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

// A 60 s recording with four subcarriers, plus a config that trains a tiny model quickly.
struct Workspace {
  fs::path dir = testing::scratch_dir("cli");
  fs::path config = dir / "run.json";

  Workspace() {
    std::ofstream(config) << nlohmann::json{
        {"synth", {{"scenario", {{"duration_s", 60}, {"subcarriers", 4}, {"seed", 3}}}}},
        {"ingest", {{"format", "canonical"}, {"path", (dir / "data" / "stream.jsonl").string()},
                    {"labels", (dir / "data" / "heart.csv").string()}}},
        {"pipeline", {{"mode", "heart"}, {"stride", 160}}},
        {"model", {{"lstm1_units", 6}, {"lstm2_units", 4}, {"dense_units", 4}}},
        {"training", {{"max_epochs", 2}, {"batch_size", 8}, {"seed", 1}}},
        {"output", {{"dir", (dir / "out").string()}}}}
                                .dump();
    const auto r = cli({"synth", "-c", config.string(), "--set", "output.dir=" + (dir / "data").string()});
    REQUIRE(r.code == 0);
  }
};

}  // namespace

TEST_CASE("synth, process, train and eval emit their artifacts") {
  Workspace ws;
  for (const char* f : {"stream.jsonl", "heart.csv", "breath.csv", "apnea.csv", "scenario.json"})
    CHECK(fs::exists(ws.dir / "data" / f));

  auto r = cli({"process", "-c", ws.config.string()});
  REQUIRE(r.code == 0);
  const auto summary = nlohmann::json::parse(slurp(ws.dir / "out" / "summary.json"));
  CHECK(summary["segments"] == 28);  // (4800 - 400) / 160 + 1
  CHECK(summary["window"] == 400);
  CHECK(summary["subcarriers"] == 4);
  std::ifstream dump(ws.dir / "out" / "segments.bin", std::ios::binary);
  CHECK(read_segment_dump(dump).size() == 28);

  r = cli({"train", "-c", ws.config.string(), "--repeats", "2"});
  REQUIRE(r.code == 0);
  for (const char* f : {"model.psnn", "history.csv", "metrics.json", "repeats.json"})
    CHECK(fs::exists(ws.dir / "out" / f));
  CHECK(line_count(ws.dir / "out" / "history.csv") == 3);
  const auto metrics = nlohmann::json::parse(slurp(ws.dir / "out" / "metrics.json"));
  CHECK(metrics["regression"]["n"] == 6);
  const auto model = load_model(slurp(ws.dir / "out" / "model.psnn"));
  CHECK(model.params.config().input_dim == 4);
  CHECK(model.meta["pipeline"]["stride"] == 160);

  r = cli({"eval", "-c", ws.config.string(), "-m", (ws.dir / "out" / "model.psnn").string()});
  REQUIRE(r.code == 0);
  const auto eval = nlohmann::json::parse(slurp(ws.dir / "out" / "eval_metrics.json"));
  CHECK(eval["regression"]["n"] == 28);

  // Segment dumps feed training directly.
  r = cli({"train", "-c", ws.config.string(), "--set", "ingest.format=segments", "--set",
           "ingest.path=" + (ws.dir / "out" / "segments.bin").string(), "--set",
           "output.dir=" + (ws.dir / "from_dump").string()});
  CHECK(r.code == 0);
}

TEST_CASE("reruns overwrite outputs identically") {
  Workspace ws;
  REQUIRE(cli({"train", "-c", ws.config.string()}).code == 0);
  const auto first = slurp(ws.dir / "out" / "model.psnn");
  const auto first_history = slurp(ws.dir / "out" / "history.csv");
  REQUIRE(cli({"train", "-c", ws.config.string()}).code == 0);
  CHECK(slurp(ws.dir / "out" / "model.psnn") == first);
  CHECK(slurp(ws.dir / "out" / "history.csv") == first_history);
}

TEST_CASE("infer writes one line per window") {
  Workspace ws;
  REQUIRE(cli({"train", "-c", ws.config.string()}).code == 0);
  const auto r = cli({"infer", "-c", ws.config.string(), "-m", (ws.dir / "out" / "model.psnn").string(), "--set",
                      "pipeline.stride=1"});
  REQUIRE(r.code == 0);
  const auto path = ws.dir / "out" / "predictions.csv";
  CHECK(line_count(path) == 4401);
  std::ifstream in(path);
  std::string first;
  std::getline(in, first);
  CHECK(first.substr(0, first.find(',')) == "4.9875");  // last packet of the first window
}

TEST_CASE("cv and bench") {
  Workspace ws;
  auto r = cli({"cv", "-c", ws.config.string(), "-k", "4", "--set", "training.max_epochs=1"});
  REQUIRE(r.code == 0);
  const auto cv = nlohmann::json::parse(slurp(ws.dir / "out" / "cv.json"));
  CHECK(cv["folds"].size() == 4);
  CHECK(cv["aggregate"]["mean"].contains("regression.mae"));

  r = cli({"bench", "-c", ws.config.string(), "--seq-len", "40", "--batch", "8", "--n-preds", "32"});
  REQUIRE(r.code == 0);
  std::ifstream in(ws.dir / "out" / "bench.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "model,seq_len,batch,cold_start_s,total_s,n_preds,preds_per_s,batch_mean_ms");
  CHECK(row.substr(0, 13) == "lstm,40,8,0.0");
}

TEST_CASE("errors map to exit codes and name the error") {
  Workspace ws;
  auto r = cli({"train", "-c", ws.config.string(), "--set", "training.epochs=3"});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("ConfigUnknownKey") != std::string::npos);

  r = cli({"process", "-c", ws.config.string(), "--set", "bogus.key=1"});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("ConfigUnknownKey") != std::string::npos);

  r = cli({"process", "-c", ws.config.string(), "--set", "pipeline.band.low_hz=5"});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("InvalidBand") != std::string::npos);

  r = cli({"process", "-c", ws.config.string(), "--set", "ingest.path=/nonexistent/stream.jsonl"});
  CHECK(r.code == kExitData);
  CHECK(r.err.find("IoError") != std::string::npos);

  std::ofstream(ws.dir / "broken.jsonl") << "{\"t\":0,\"re\":[1],\"im\":[1]}\nnot json\n";
  r = cli({"process", "-c", ws.config.string(), "--set", "ingest.path=" + (ws.dir / "broken.jsonl").string()});
  CHECK(r.code == kExitData);

  std::ofstream(ws.dir / "junk.psnn") << "garbage";
  r = cli({"eval", "-c", ws.config.string(), "-m", (ws.dir / "junk.psnn").string()});
  CHECK(r.code == kExitData);
  CHECK(r.err.find("BadMagic") != std::string::npos);

  r = cli({"train", "-c", ws.config.string(), "--set", "model.input_dim=9"});
  CHECK(r.code != 0);
  CHECK(r.err.find("ShapeMismatch") != std::string::npos);

  r = cli({"eval", "-c", ws.config.string()});
  CHECK(r.code == kExitConfig);

  r = cli({"launch"});
  CHECK(r.code == kExitConfig);
}

TEST_CASE("help and override parsing") {
  CHECK(cli({"--help"}).code == kExitOk);
  nlohmann::json doc = nlohmann::json::object();
  apply_override(doc, "training.seed=5");
  apply_override(doc, "ingest.path=data/x.jsonl");
  apply_override(doc, "pipeline.subcarriers=[1,2]");
  CHECK(doc["training"]["seed"] == 5);
  CHECK(doc["ingest"]["path"] == "data/x.jsonl");
  CHECK(doc["pipeline"]["subcarriers"] == nlohmann::json({1, 2}));
  CHECK(testing::error_code([&] { apply_override(doc, "novalue"); }) == ErrorCode::ConfigInvalid);
}
