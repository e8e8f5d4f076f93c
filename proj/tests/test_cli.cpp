#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "objnav/harness/cli.hpp"

namespace fs = std::filesystem;
using objnav::harness::run_cli;

namespace {

const fs::path kSource = OBJNAV_SOURCE_DIR;
const fs::path kGolden = kSource / "tests" / "golden";

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

// Runs from the source tree so that relative paths in messages are stable.
Run cli(const std::vector<std::string>& args) {
  const fs::path cwd = fs::current_path();
  fs::current_path(kSource);
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(args, out, err);
  fs::current_path(cwd);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "objnav_cli_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void golden(const std::string& name, const std::string& actual) {
  const fs::path path = kGolden / name;
  if (std::getenv("OBJNAV_UPDATE_GOLDEN") != nullptr) {
    fs::create_directories(kGolden);
    std::ofstream(path, std::ios::binary) << actual;
  }
  INFO("golden file ", path.string());
  REQUIRE(fs::exists(path));
  CHECK(slurp(path) == actual);
}

std::vector<std::string> train_args(const fs::path& out) {
  return {"--seed", "0", "--config", "tests/golden/train.cfg", "train", "--data", "fixtures/overfit", "--out", out.string()};
}

std::vector<std::string> nav_args() {
  return {"nav-eval", "--world", "fixtures/nav/world.txt", "--memory", "fixtures/nav/memory.jsonl", "--embeddings",
          "fixtures/nav/memory.lze", "--queries", "fixtures/nav/queries.tsv", "--query-embeddings",
          "fixtures/nav/queries.lze", "--start", "0.375,0.375,0"};
}

}  // namespace

TEST_CASE("train") {
  const fs::path dir = scratch("train");
  const Run r = cli(train_args(dir / "run"));
  REQUIRE(r.code == 0);
  golden("train.out", r.out);
  golden("train.losses.jsonl", slurp(dir / "run" / "losses.jsonl"));
  golden("train.manifest.json", slurp(dir / "run" / "manifest.json"));
  CHECK(fs::file_size(dir / "run" / "checkpoint.lzp") > 0);
}

TEST_CASE("index and retrieve") {
  const fs::path dir = scratch("index");
  REQUIRE(cli(train_args(dir / "run")).code == 0);
  const std::string ckpt = (dir / "run" / "checkpoint.lzp").string();
  const std::string lze = (dir / "images.lze").string();

  const Run idx = cli({"index", "--checkpoint", ckpt, "--data", "fixtures/overfit", "--out", lze});
  REQUIRE(idx.code == 0);
  golden("index.out", idx.out);

  const Run text = cli({"retrieve", "--index", lze, "--checkpoint", ckpt, "--query-text", "sofa", "--k", "3"});
  REQUIRE(text.code == 0);
  golden("retrieve_text.out", text.out);

  const Run nouns = cli({"index", "--data", "fixtures/prompt", "--from-nouns", "--out", (dir / "nouns.lze").string()});
  REQUIRE(nouns.code == 0);
  golden("index_nouns.out", nouns.out);
}

TEST_CASE("index then retrieve round-trips the embedding file") {
  const fs::path dir = scratch("roundtrip");
  const Run r = cli({"retrieve", "--index", "fixtures/retrieval/images.lze", "--query-id", "q_bravo", "--queries",
                     "fixtures/retrieval/queries.lze", "--k", "2", "--dump-index", (dir / "dump.lze").string()});
  REQUIRE(r.code == 0);
  golden("retrieve_id.out", r.out);
  CHECK(slurp(dir / "dump.lze") == slurp(kSource / "fixtures/retrieval/images.lze"));

  REQUIRE(cli(train_args(dir / "run")).code == 0);
  const std::string ckpt = (dir / "run" / "checkpoint.lzp").string();
  REQUIRE(cli({"index", "--checkpoint", ckpt, "--data", "fixtures/overfit", "--out", (dir / "a.lze").string()}).code == 0);
  REQUIRE(cli({"retrieve", "--index", (dir / "a.lze").string(), "--checkpoint", ckpt, "--query-text", "lamp",
               "--dump-index", (dir / "b.lze").string()})
              .code == 0);
  CHECK(slurp(dir / "a.lze") == slurp(dir / "b.lze"));
}

TEST_CASE("eval-retrieval on the orthonormal fixture") {
  const Run t2i = cli({"eval-retrieval", "--images", "fixtures/retrieval/images.lze", "--queries",
                       "fixtures/retrieval/queries.lze", "--gt", "fixtures/retrieval/gt.tsv", "--k", "1,5"});
  REQUIRE(t2i.code == 0);
  golden("eval_retrieval.out", t2i.out);
  const auto first = nlohmann::json::parse(t2i.out.substr(0, t2i.out.find('\n')));
  CHECK(first["metric"] == "AR@1");
  CHECK(first["value"].get<double>() == 1.0);

  const Run i2t = cli({"eval-retrieval", "--images", "fixtures/retrieval/images.lze", "--queries",
                       "fixtures/retrieval/queries.lze", "--gt", "fixtures/retrieval/gt.tsv", "--k", "1", "--direction",
                       "image-to-text"});
  REQUIRE(i2t.code == 0);
  golden("eval_retrieval_i2t.out", i2t.out);
}

TEST_CASE("eval-retrieval prompt templates") {
  const fs::path dir = scratch("templates");
  const std::string lze = (dir / "nouns.lze").string();
  REQUIRE(cli({"index", "--data", "fixtures/prompt", "--from-nouns", "--out", lze}).code == 0);
  std::string all;
  for (const std::string t : {"on-qs", "qs", "on"}) {
    const Run r = cli({"eval-retrieval", "--images", lze, "--query-text", "fixtures/prompt/queries.tsv", "--gt",
                       "fixtures/prompt/gt.tsv", "--k", "1,5", "--template", t});
    REQUIRE(r.code == 0);
    all += r.out;
  }
  golden("eval_retrieval_templates.out", all);
}

TEST_CASE("augment") {
  const fs::path dir = scratch("augment");
  const Run r = cli({"--offline", "augment", "--input", "fixtures/augment/detections.jsonl", "--out",
                     (dir / "captions.jsonl").string(), "--count", "3"});
  REQUIRE(r.code == 0);
  golden("augment.out", r.out);
  golden("augment.err", r.err);
  golden("augment.captions.jsonl", slurp(dir / "captions.jsonl"));
}

TEST_CASE("nav-eval on the fixture world") {
  const fs::path dir = scratch("nav");
  auto args = nav_args();
  args.insert(args.end(), {"--log", (dir / "episodes.jsonl").string()});
  const Run r = cli(args);
  REQUIRE(r.code == 0);
  golden("nav_eval.out", r.out);
  golden("nav_eval.episodes.jsonl", slurp(dir / "episodes.jsonl"));

  std::istringstream lines(r.out);
  std::string line;
  std::map<double, double> sr;
  while (std::getline(lines, line) && line.front() == '{') {
    const auto j = nlohmann::json::parse(line);
    if (j["metric"] == "SR") sr[j["radius_m"].get<double>()] = j["value"].get<double>();
  }
  CHECK(sr.at(1.0) == doctest::Approx(4.0 / 6));
  CHECK(sr.at(2.0) == doctest::Approx(5.0 / 6));

  auto open = nav_args();
  open.push_back("--no-occlusion");
  const Run o = cli(open);
  REQUIRE(o.code == 0);
  golden("nav_eval_no_occlusion.out", o.out);

  auto text = nav_args();
  text.erase(text.begin() + 5, text.begin() + 7);  // synthesize memory embeddings from text
  text.erase(text.begin() + 7, text.begin() + 9);
  const Run t = cli(text);
  REQUIRE(t.code == 0);
  golden("nav_eval_text.out", t.out);
}

TEST_CASE("gradcheck") {
  const Run r = cli({"--config", "tests/golden/gradcheck.cfg", "gradcheck", "--images", "1"});
  golden("gradcheck.out", r.out);
  const std::string summary = r.out.substr(r.out.find("{\"event\""));
  const auto j = nlohmann::json::parse(summary.substr(0, summary.find('\n')));
  CHECK(j["scheme"] == "richardson");
  CHECK(r.code == (j["passed"].get<bool>() ? 0 : 1));
}

TEST_CASE("usage errors") {
  const Run unknown = cli({"train", "--bogus"});
  CHECK(unknown.code == 2);
  CHECK(unknown.err.find("Usage") != std::string::npos);
  CHECK(unknown.out.empty());

  const Run none = cli({});
  CHECK(none.code == 2);

  const Run help = cli({"--help"});
  CHECK(help.code == 0);
  golden("help.out", help.out);

  const std::string command = std::string(OBJNAV_CLI) + " nav-eval --bogus >/dev/null 2>&1";
  const int status = std::system(command.c_str());
  CHECK(WEXITSTATUS(status) == 2);
}

TEST_CASE("malformed inputs report file and line") {
  const fs::path dir = scratch("malformed");
  std::ofstream(dir / "world.txt") << "#####\n#...#\n#####\nx cup one 1\n";
  auto args = nav_args();
  args[2] = (dir / "world.txt").string();
  const Run world = cli(args);
  CHECK(world.code == 1);
  const auto j = nlohmann::json::parse(world.err.substr(0, world.err.find('\n')));
  CHECK(j["file"] == args[2]);
  CHECK(j["line"] == 4);

  std::ofstream(dir / "gt.tsv") << "q_alpha\timg_alpha\nnot a pair\n";
  const Run gt = cli({"eval-retrieval", "--images", "fixtures/retrieval/images.lze", "--queries",
                      "fixtures/retrieval/queries.lze", "--gt", (dir / "gt.tsv").string()});
  CHECK(gt.code == 1);
  const auto g = nlohmann::json::parse(gt.err.substr(0, gt.err.find('\n')));
  CHECK(g["line"] == 2);

  std::ofstream(dir / "bad.cfg") << "lr = 0.1\nsurprise = 1\n";
  const Run cfg = cli({"--config", (dir / "bad.cfg").string(), "gradcheck"});
  CHECK(cfg.code == 1);
  const auto c = nlohmann::json::parse(cfg.err.substr(0, cfg.err.find('\n')));
  CHECK(c["line"] == 2);

  const Run missing = cli({"train", "--data", (dir / "nowhere").string(), "--out", (dir / "out").string()});
  CHECK(missing.code == 1);
  CHECK(nlohmann::json::parse(missing.err.substr(0, missing.err.find('\n'))).contains("error"));
}

TEST_CASE("identical inputs give identical outputs") {
  const fs::path a = scratch("determinism_a");
  const fs::path b = scratch("determinism_b");
  const Run ra = cli(train_args(a / "run"));
  const Run rb = cli(train_args(b / "run"));
  REQUIRE(ra.code == 0);
  CHECK(ra.out == rb.out);
  for (const char* f : {"checkpoint.lzp", "losses.jsonl", "manifest.json"}) {
    CHECK(slurp(a / "run" / f) == slurp(b / "run" / f));
  }
  auto nav_a = nav_args();
  nav_a.insert(nav_a.end(), {"--log", (a / "ep.jsonl").string()});
  auto nav_b = nav_args();
  nav_b.insert(nav_b.end(), {"--log", (b / "ep.jsonl").string()});
  CHECK(cli(nav_a).out == cli(nav_b).out);
  CHECK(slurp(a / "ep.jsonl") == slurp(b / "ep.jsonl"));
}
