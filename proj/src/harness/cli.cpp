#include "objnav/harness/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <numbers>
#include <optional>
#include <sstream>

#include "objnav/autodiff/checkpoint.hpp"
#include "objnav/autodiff/gradcheck.hpp"
#include "objnav/common/errors.hpp"
#include "objnav/common/rng.hpp"
#include "objnav/encoder/encoder.hpp"
#include "objnav/harness/config.hpp"
#include "objnav/harness/train.hpp"
#include "objnav/navsim/episode.hpp"
#include "objnav/promptgen/client.hpp"
#include "objnav/promptgen/dataset.hpp"
#include "objnav/promptgen/prompt.hpp"
#include "objnav/retrieval/index.hpp"
#include "objnav/retrieval/recall.hpp"

namespace objnav::harness {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

// Reported with exit code 1 and a JSON line, like malformed input.
class CommandError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  bool offline = false;
};

TrainConfig resolve_config(const Globals& g) {
  TrainConfig c;
  if (!g.config_file.empty()) apply_config_file(c, g.config_file);
  if (g.seed) c.seed = *g.seed;
  c.validate();
  return c;
}

ad::ParameterStore resolve_params(const std::string& checkpoint, const TrainConfig& config) {
  if (checkpoint.empty()) return encoder::init_parameters(config.encoder, derive_seed(config.seed, kInitTag));
  ad::ParameterStore p = ad::load_checkpoint(checkpoint);
  if (p.count("txt.embed") == 0 || p.count("img.patch.w") == 0) {
    throw ParseError(checkpoint, 0, "checkpoint lacks encoder parameters");
  }
  if (p.at("txt.embed").cols() != config.encoder.dim) {
    throw ParseError(checkpoint, 0, "checkpoint width differs from the configured dim");
  }
  return p;
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(precision) << v;
  return out.str();
}

void print_table(std::ostream& out, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows) {
    width.resize(std::max(width.size(), r.size()), 0);
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  }
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t i = 0; i < r.size(); ++i) {
      line += r[i];
      if (i + 1 < r.size()) line += std::string(width[i] - r[i].size() + 2, ' ');
    }
    out << line << '\n';
  }
}

std::vector<std::size_t> parse_ks(const std::string& text) {
  std::vector<std::size_t> ks;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    std::size_t used = 0;
    long long k = 0;
    try {
      k = std::stoll(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || k < 1) throw CommandError("--k expects positive integers, got '" + text + "'");
    ks.push_back(static_cast<std::size_t>(k));
  }
  if (ks.empty()) throw CommandError("--k is empty");
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  return ks;
}

std::vector<double> parse_numbers(const std::string& text, const std::string& flag) {
  std::vector<double> xs;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw CommandError(flag + " expects comma-separated numbers, got '" + text + "'");
    xs.push_back(v);
  }
  return xs;
}

struct TextQuery {
  std::string id;
  std::string noun;  // empty for plain-text queries
  std::optional<std::string> sentence;
  std::string text;  // plain text
};

// "id<TAB>text" or "id<TAB>noun<TAB>sentence".
std::vector<TextQuery> read_text_queries(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open query file");
  std::vector<TextQuery> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string> cols;
    std::stringstream fields(line);
    for (std::string c; std::getline(fields, c, '\t');) cols.push_back(c);
    if (cols.size() < 2 || cols.size() > 3 || cols[0].empty() || cols[1].empty()) {
      throw ParseError(path, n, "expected id<TAB>text or id<TAB>noun<TAB>sentence");
    }
    TextQuery q;
    q.id = cols[0];
    if (cols.size() == 3) {
      q.noun = cols[1];
      if (!cols[2].empty()) q.sentence = cols[2];
    } else {
      q.text = cols[1];
    }
    for (const TextQuery& other : out) {
      if (other.id == q.id) throw ParseError(path, n, "duplicate query id " + q.id);
    }
    out.push_back(std::move(q));
  }
  return out;
}

std::string query_text(const TextQuery& q, promptgen::PromptTemplate tmpl) {
  return q.noun.empty() ? q.text : promptgen::format_query(tmpl, q.noun, q.sentence);
}

retrieval::EmbeddingIndex embed_queries(const std::vector<TextQuery>& queries, promptgen::PromptTemplate tmpl,
                                        const ad::ParameterStore& params, const TrainConfig& config) {
  if (queries.empty()) throw CommandError("no queries");
  ad::Matrix rows(static_cast<ad::Index>(queries.size()), config.encoder.dim);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    rows.row(static_cast<ad::Index>(i)) = encoder::embed_text(query_text(queries[i], tmpl), params, config.encoder);
    ids.push_back(queries[i].id);
  }
  return retrieval::build_index(rows, std::move(ids));
}

// Normalized sum of the text embeddings of the nouns visible in a record.
retrieval::Embedding noun_embedding(const promptgen::CaptionRecord& r, const ad::ParameterStore& params,
                                    const TrainConfig& config) {
  retrieval::Embedding sum = retrieval::Embedding::Zero(config.encoder.dim);
  for (const promptgen::ObjectRecord& o : r.objects) sum += encoder::embed_text(o.noun, params, config.encoder);
  const double norm = sum.norm();
  if (!(norm > 0.0)) throw CommandError("record " + r.image_id + " has no visible objects to embed");
  return sum / norm;
}

ordered_json summary_line(const std::string& event) {
  ordered_json j;
  j["event"] = event;
  return j;
}

// --- subcommands ------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string out;
  std::string init;
  int steps = -1;
};

int cmd_train(const Globals& g, const TrainArgs& a, std::ostream& out) {
  TrainConfig config = resolve_config(g);
  if (a.steps >= 0) {
    config.total_steps = a.steps;
    config.warmup_steps = std::min(config.warmup_steps, config.total_steps);
  }
  const std::vector<LabeledImage> data = load_training_set(a.data);
  ad::ParameterStore params = resolve_params(a.init, config);
  TrainingRun run = train(data, config, std::move(params));

  const fs::path dir(a.out);
  fs::create_directories(dir);
  ad::save_checkpoint(dir / "checkpoint.lzp", run.params);
  {
    std::ofstream log(dir / "losses.jsonl");
    for (std::size_t s = 0; s < run.losses.size(); ++s) log << format_loss_line(static_cast<int>(s), run.losses[s]) << '\n';
  }

  ordered_json manifest;
  manifest["config"] = describe(config);
  ordered_json inputs;
  const fs::path data_dir(a.data);
  inputs["dataset.jsonl"] = file_sha1(data_dir / "dataset.jsonl");
  for (const LabeledImage& item : data) {
    const std::string rel = "images/" + item.record.image_id + ".ppm";
    inputs[rel] = file_sha1(data_dir / rel);
  }
  if (!g.config_file.empty()) inputs["config"] = file_sha1(g.config_file);
  if (!a.init.empty()) inputs["init"] = file_sha1(a.init);
  manifest["inputs"] = inputs;
  manifest["optimizer"] = "gradient descent, linear warmup then exponential decay";
  manifest["adam"] = "not implemented";
  manifest["losses"] = ordered_json::array();
  for (std::size_t s = 0; s < run.losses.size(); ++s) {
    manifest["losses"].push_back(ordered_json::parse(format_loss_line(static_cast<int>(s), run.losses[s])));
  }
  const std::string ckpt_sha = file_sha1(dir / "checkpoint.lzp");
  manifest["checkpoint"] = {{"path", "checkpoint.lzp"}, {"sha1", ckpt_sha}};
  {
    std::ofstream m(dir / "manifest.json");
    m << manifest.dump(2) << '\n';
  }

  ordered_json s = summary_line("train");
  s["steps"] = run.losses.size();
  s["initial_total"] = run.losses.empty() ? 0.0 : run.losses.front().total;
  s["final_total"] = run.losses.empty() ? 0.0 : run.losses.back().total;
  s["checkpoint_sha1"] = ckpt_sha;
  out << s.dump() << '\n';
  std::vector<std::vector<std::string>> table{{"step", "L_C", "L_L1", "L_GIoU", "L_MC", "total"}};
  for (std::size_t i = 0; i < run.losses.size(); ++i) {
    if (i != 0 && i + 1 != run.losses.size() && i % 10 != 0) continue;
    const auto& r = run.losses[i];
    table.push_back({std::to_string(i), fmt(r.contrastive), fmt(r.l1), fmt(r.giou), fmt(r.multilabel), fmt(r.total)});
  }
  print_table(out, table);
  return 0;
}

struct IndexArgs {
  std::string checkpoint;
  std::string data;
  std::string images;
  std::string texts;
  std::string tmpl = "on-qs";
  bool from_nouns = false;
  std::string out;
};

int cmd_index(const Globals& g, const IndexArgs& a, std::ostream& out) {
  const TrainConfig config = resolve_config(g);
  const int sources = static_cast<int>(!a.data.empty()) + static_cast<int>(!a.images.empty()) + static_cast<int>(!a.texts.empty());
  if (sources != 1) throw CommandError("index needs exactly one of --data, --images, --texts");
  const ad::ParameterStore params = resolve_params(a.checkpoint, config);

  std::vector<retrieval::Embedding> rows;
  std::vector<std::string> ids;
  std::string kind;
  if (!a.texts.empty()) {
    kind = "text";
    const retrieval::EmbeddingIndex q =
        embed_queries(read_text_queries(a.texts), promptgen::parse_template(a.tmpl), params, config);
    for (std::size_t i = 0; i < q.size(); ++i) rows.emplace_back(q.matrix().row(static_cast<ad::Index>(i)));
    ids = q.ids();
  } else if (!a.data.empty()) {
    kind = a.from_nouns ? "nouns" : "image";
    const fs::path dir(a.data);
    for (const promptgen::CaptionRecord& r : promptgen::load_dataset((dir / "dataset.jsonl").string(), false)) {
      if (a.from_nouns) {
        rows.push_back(noun_embedding(r, params, config));
      } else {
        rows.push_back(index_embedding(encoder::read_ppm((dir / "images" / (r.image_id + ".ppm")).string()), params, config));
      }
      ids.push_back(r.image_id);
    }
  } else {
    kind = "image";
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(a.images)) {
      if (e.path().extension() == ".ppm") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const fs::path& f : files) {
      rows.push_back(index_embedding(encoder::read_ppm(f.string()), params, config));
      ids.push_back(f.stem().string());
    }
  }
  if (rows.empty()) throw CommandError("nothing to index");
  ad::Matrix m(static_cast<ad::Index>(rows.size()), config.encoder.dim);
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<ad::Index>(i)) = rows[i];
  const retrieval::EmbeddingIndex index = retrieval::build_index(m, ids);
  retrieval::save_embeddings(a.out, index);

  ordered_json s = summary_line("index");
  s["kind"] = kind;
  s["count"] = index.size();
  s["dim"] = index.dim();
  s["sha1"] = file_sha1(a.out);
  out << s.dump() << '\n';
  return 0;
}

struct RetrieveArgs {
  std::string index;
  std::string query_text;
  std::string query_id;
  std::string queries;
  std::string checkpoint;
  std::size_t k = 5;
  std::string dump_index;
};

int cmd_retrieve(const Globals& g, const RetrieveArgs& a, std::ostream& out) {
  const retrieval::EmbeddingIndex index = retrieval::load_embeddings(a.index);
  if (!a.dump_index.empty()) retrieval::save_embeddings(a.dump_index, index);
  if (a.query_text.empty() == a.query_id.empty()) {
    if (!a.dump_index.empty() && a.query_text.empty()) {
      ordered_json s = summary_line("dump-index");
      s["count"] = index.size();
      s["sha1"] = file_sha1(a.dump_index);
      out << s.dump() << '\n';
      return 0;
    }
    throw CommandError("retrieve needs exactly one of --query-text, --query-id");
  }
  retrieval::Embedding query;
  std::string label;
  if (!a.query_text.empty()) {
    const TrainConfig config = resolve_config(g);
    query = encoder::embed_text(a.query_text, resolve_params(a.checkpoint, config), config.encoder);
    label = a.query_text;
  } else {
    if (a.queries.empty()) throw CommandError("--query-id needs --queries");
    const retrieval::EmbeddingIndex q = retrieval::load_embeddings(a.queries);
    const ad::Index row = q.find(a.query_id);
    if (row < 0) throw CommandError("query id " + a.query_id + " not found in " + a.queries);
    query = q.matrix().row(row);
    label = a.query_id;
  }
  if (query.size() != index.dim()) throw CommandError("query and index dimensions differ");
  const std::vector<std::string> ids = retrieval::topk(query, index, std::min(a.k, index.size()));
  ordered_json j;
  j["query"] = label;
  j["results"] = ordered_json::array();
  std::vector<std::vector<std::string>> table{{"rank", "id", "score"}};
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const double score = index.matrix().row(index.find(ids[i])).dot(query);
    j["results"].push_back({{"id", ids[i]}, {"score", score}});
    table.push_back({std::to_string(i + 1), ids[i], fmt(score)});
  }
  out << j.dump() << '\n';
  print_table(out, table);
  if (!a.dump_index.empty()) {
    ordered_json s = summary_line("dump-index");
    s["count"] = index.size();
    s["sha1"] = file_sha1(a.dump_index);
    out << s.dump() << '\n';
  }
  return 0;
}

struct EvalArgs {
  std::string images;
  std::string queries;
  std::string query_text;
  std::string checkpoint;
  std::string gt;
  std::string ks = "1,5";
  std::string direction = "text-to-image";
  std::string tmpl = "on-qs";
};

int cmd_eval(const Globals& g, const EvalArgs& a, std::ostream& out, std::ostream& err) {
  if (a.queries.empty() == a.query_text.empty()) throw CommandError("eval-retrieval needs exactly one of --queries, --query-text");
  if (a.direction != "text-to-image" && a.direction != "image-to-text") {
    throw CommandError("--direction must be text-to-image or image-to-text");
  }
  const std::vector<std::size_t> ks = parse_ks(a.ks);
  const retrieval::EmbeddingIndex images = retrieval::load_embeddings(a.images);
  retrieval::EmbeddingIndex texts;
  if (!a.queries.empty()) {
    texts = retrieval::load_embeddings(a.queries);
  } else {
    const TrainConfig config = resolve_config(g);
    texts = embed_queries(read_text_queries(a.query_text), promptgen::parse_template(a.tmpl),
                          resolve_params(a.checkpoint, config), config);
  }
  if (texts.dim() != images.dim()) throw CommandError("query and image dimensions differ");
  retrieval::GroundTruth truth = retrieval::read_ground_truth(a.gt);

  const bool t2i = a.direction == "text-to-image";
  const retrieval::EmbeddingIndex& queries = t2i ? texts : images;
  const retrieval::EmbeddingIndex& items = t2i ? images : texts;
  if (!t2i) truth = retrieval::transpose(truth);
  const std::size_t k_max = std::min(ks.back(), items.size());
  retrieval::RankedResults results;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    results.emplace_back(queries.ids()[i], retrieval::topk(queries.matrix().row(static_cast<ad::Index>(i)), items, k_max));
  }
  const retrieval::RecallReport report = retrieval::average_recall(results, truth, ks);
  for (const std::string& w : report.warnings) {
    ordered_json j;
    j["warning"] = w;
    err << j.dump() << '\n';
  }
  std::vector<std::vector<std::string>> table{{"metric", "value"}};
  for (std::size_t k : ks) {
    ordered_json j;
    j["metric"] = "AR@" + std::to_string(k);
    j["direction"] = a.direction;
    j["value"] = report.recall.at(k);
    j["queries"] = results.size();
    out << j.dump() << '\n';
    table.push_back({"AR@" + std::to_string(k), fmt(report.recall.at(k))});
  }
  print_table(out, table);
  return 0;
}

struct AugmentArgs {
  std::string input;
  std::string output;
  int count = 10;
};

int cmd_augment(const Globals& g, const AugmentArgs& a, std::ostream& out, std::ostream& err) {
  const TrainConfig config = resolve_config(g);
  std::ifstream in(a.input);
  if (!in) throw ParseError(a.input, 0, "cannot open detection file");
  promptgen::GenerationClient client = promptgen::GenerationClient::from_environment(g.offline, config.seed);
  const promptgen::ConversionReport report = promptgen::convert_detection_dataset(in, a.count, client);
  {
    std::ofstream o(a.output);
    if (!o) throw CommandError("cannot write " + a.output);
    promptgen::write_dataset(o, report.records);
  }
  for (const promptgen::LineError& e : report.errors) {
    ordered_json j;
    j["error"] = "malformed record";
    j["file"] = a.input;
    j["line"] = e.line;
    j["message"] = e.message;
    err << j.dump() << '\n';
  }
  for (const std::string& w : report.warnings) {
    ordered_json j;
    j["warning"] = w;
    err << j.dump() << '\n';
  }
  ordered_json s = summary_line("augment");
  s["client"] = client.is_stub() ? "stub" : "live";
  s["records"] = report.records.size();
  s["labels"] = report.labels;
  s["unique_nouns"] = report.unique_nouns;
  s["generated_captions"] = report.generated_captions;
  s["skipped_lines"] = report.errors.size();
  out << s.dump() << '\n';
  print_table(out, {{"records", "labels", "generated captions", "skipped lines"},
                    {std::to_string(report.records.size()), std::to_string(report.labels),
                     std::to_string(report.generated_captions), std::to_string(report.errors.size())}});
  return 0;
}

struct NavArgs {
  std::string world;
  double cell_m = 0.25;
  std::string memory;
  std::string embeddings;
  std::string queries;
  std::string query_embeddings;
  std::string checkpoint;
  std::string tmpl = "on-qs";
  std::string start = "0,0,0";
  std::size_t k = 3;
  double half_angle_deg = 45.0;
  double range = 3.0;
  bool no_occlusion = false;
  std::string radii = "1,2";
  std::string log;
};

int cmd_nav(const Globals& g, const NavArgs& a, std::ostream& out) {
  const TrainConfig config = resolve_config(g);
  const navsim::GridWorld world = navsim::GridWorld::load(a.world, a.cell_m);
  const std::vector<double> start = parse_numbers(a.start, "--start");
  if (start.size() != 3) throw CommandError("--start expects x,y,theta");
  const std::vector<double> radii = parse_numbers(a.radii, "--radii");
  if (radii.empty()) throw CommandError("--radii is empty");

  const std::vector<promptgen::CaptionRecord> records = promptgen::load_dataset(a.memory, false);
  const std::vector<TextQuery> queries = read_text_queries(a.queries);
  std::optional<ad::ParameterStore> params;
  auto text_params = [&]() -> const ad::ParameterStore& {
    if (!params) params = resolve_params(a.checkpoint, config);
    return *params;
  };

  std::optional<retrieval::EmbeddingIndex> stored;
  if (!a.embeddings.empty()) stored = retrieval::load_embeddings(a.embeddings);
  std::vector<navsim::MemoryEntry> memory;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const promptgen::CaptionRecord& r = records[i];
    if (!r.pose) throw ParseError(a.memory, i + 1, "memory record " + r.image_id + " has no pose");
    navsim::MemoryEntry e{r.image_id, navsim::make_pose(r.pose->x, r.pose->y, r.pose->theta), {}};
    if (stored) {
      const ad::Index row = stored->find(r.image_id);
      if (row < 0) throw CommandError("no embedding for memory record " + r.image_id + " in " + a.embeddings);
      e.embedding = stored->matrix().row(row);
    } else {
      e.embedding = noun_embedding(r, text_params(), config);
    }
    memory.push_back(std::move(e));
  }

  std::optional<retrieval::EmbeddingIndex> query_rows;
  if (!a.query_embeddings.empty()) query_rows = retrieval::load_embeddings(a.query_embeddings);
  navsim::EpisodeOptions options;
  options.k = a.k;
  options.fov.half_angle = a.half_angle_deg * std::numbers::pi / 180.0;
  options.fov.max_range = a.range;
  options.fov.occlusion = !a.no_occlusion;
  options.prompt = promptgen::parse_template(a.tmpl);
  const navsim::Pose start_pose = navsim::make_pose(start[0], start[1], start[2]);

  std::vector<navsim::EpisodeResult> episodes;
  for (const TextQuery& q : queries) {
    if (q.noun.empty()) throw CommandError("nav-eval queries need id<TAB>noun<TAB>sentence, got plain text for " + q.id);
    const navsim::EpisodeQuery eq{q.noun, q.sentence};
    if (query_rows) {
      const ad::Index row = query_rows->find(q.id);
      if (row < 0) throw CommandError("no embedding for query " + q.id + " in " + a.query_embeddings);
      episodes.push_back(navsim::execute_episode(eq, query_rows->matrix().row(row), memory, world, options, start_pose));
    } else {
      episodes.push_back(navsim::execute_episode(
          eq, memory, world, options,
          [&](const std::string& text) { return encoder::embed_text(text, text_params(), config.encoder); }, start_pose));
    }
  }
  if (!a.log.empty()) {
    std::ofstream log(a.log);
    if (!log) throw CommandError("cannot write " + a.log);
    navsim::write_episode_log(log, episodes);
  }

  std::vector<std::vector<std::string>> table{{"metric", "value"}};
  double fov = 0.0;
  for (double radius : radii) {
    const navsim::SuccessReport r = navsim::success_rate(episodes, radius);
    fov = r.fov_rate;
    ordered_json j;
    j["metric"] = "SR";
    j["radius_m"] = radius;
    j["value"] = r.success_rate;
    j["successes"] = r.successes;
    j["episodes"] = r.episodes;
    out << j.dump() << '\n';
    std::ostringstream name;
    name << "SR(" << radius << "m)";
    table.push_back({name.str(), fmt(r.success_rate)});
  }
  ordered_json j;
  j["metric"] = "FOV";
  j["value"] = fov;
  j["episodes"] = episodes.size();
  out << j.dump() << '\n';
  table.push_back({"FOV", fmt(fov)});
  print_table(out, table);
  return 0;
}

struct GradArgs {
  std::string data;
  std::string checkpoint;
  double step = 3e-4;
  double tolerance = 1e-4;
  int images = 2;
  std::string scheme = "richardson";
};

// Seeded random images with two boxes each, used when no dataset is given.
std::vector<objectives::TrainingExample> synthetic_batch(const TrainConfig& config, int count) {
  Rng rng(derive_seed(config.seed, 0x9c));
  static const char* nouns[] = {"sofa", "lamp", "chair", "plant", "table", "television"};
  std::vector<objectives::TrainingExample> batch;
  for (int b = 0; b < count; ++b) {
    objectives::TrainingExample ex;
    ex.id = "synthetic" + std::to_string(b);
    ex.image = encoder::Image(config.encoder.image_size, config.encoder.image_size);
    for (double& v : ex.image.planar) v = rng.uniform();
    for (int o = 0; o < 2; ++o) {
      const double x1 = rng.uniform(0.0, 0.5);
      const double y1 = rng.uniform(0.0, 0.5);
      ex.annotations.push_back({nouns[rng.below(6)], {x1, y1, x1 + rng.uniform(0.1, 0.5), y1 + rng.uniform(0.1, 0.5)}});
    }
    if (ex.annotations[0].caption == ex.annotations[1].caption) ex.annotations[1].caption += " stand";
    batch.push_back(std::move(ex));
  }
  return batch;
}

int cmd_gradcheck(const Globals& g, const GradArgs& a, std::ostream& out, std::ostream& err) {
  const TrainConfig config = resolve_config(g);
  const ad::ParameterStore params = resolve_params(a.checkpoint, config);
  std::vector<objectives::TrainingExample> batch;
  if (!a.data.empty()) {
    const std::vector<LabeledImage> data = load_training_set(a.data);
    for (std::size_t i = 0; i < data.size() && static_cast<int>(i) < a.images; ++i) batch.push_back(to_example(data[i], 0, 0));
  } else {
    batch = synthetic_batch(config, a.images);
  }
  encoder::TextCache texts(params, config.encoder);
  objectives::LossOptions options;
  options.weights = config.weights;
  options.matching = config.matching;
  options.seed = derive_seed(config.seed, kStepTag);
  auto lg = objectives::build_total_loss(batch, params, config.encoder, options, texts);
  const ad::GradCheckReport report = ad::finite_difference_check(
      lg->graph, lg->total, a.step, a.tolerance, a.scheme == "richardson" ? ad::Difference::kRichardson : ad::Difference::kCentral);
  std::vector<std::vector<std::string>> table{{"parameter", "checked", "skipped", "max rel error"}};
  for (const auto& [name, check] : report.per_parameter) {
    ordered_json j;
    j["parameter"] = name;
    j["checked"] = check.checked;
    j["skipped_at_kink"] = check.skipped_at_kink;
    j["max_relative_error"] = check.max_relative_error;
    j["worst_index"] = check.worst_index;
    j["analytic"] = check.worst_analytic;
    j["numeric"] = check.worst_numeric;
    out << j.dump() << '\n';
    std::ostringstream e;
    e << std::scientific << std::setprecision(2) << check.max_relative_error;
    table.push_back({name, std::to_string(check.checked), std::to_string(check.skipped_at_kink), e.str()});
  }
  ordered_json s = summary_line("gradcheck");
  s["scheme"] = a.scheme;
  s["step"] = a.step;
  s["loss"] = lg->report.total;
  s["worst"] = report.worst;
  s["tolerance"] = a.tolerance;
  s["passed"] = report.passed;
  out << s.dump() << '\n';
  print_table(out, table);
  if (!report.passed) {
    ordered_json j;
    j["error"] = "gradient check failed";
    j["worst"] = report.worst;
    err << j.dump() << '\n';
    return 1;
  }
  return 0;
}

void error_line(std::ostream& err, const std::string& kind, const std::string& message,
                const std::string& file = {}, std::optional<std::size_t> line = std::nullopt) {
  ordered_json j;
  j["error"] = kind;
  j["message"] = message;
  if (!file.empty()) j["file"] = file;
  if (line) j["line"] = *line;
  err << j.dump() << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Object-centric retrieval and navigation toolkit", "objnav"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config_file, "key = value configuration file");
  auto* seed_opt = app.add_option("--seed", seed, "global seed");
  app.add_flag("--offline", g.offline, "use the offline caption generator");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train the image encoder");
  train_cmd->add_option("--data", train_args.data, "dataset directory (dataset.jsonl, images/)")->required();
  train_cmd->add_option("--out", train_args.out, "output directory")->required();
  train_cmd->add_option("--init", train_args.init, "initial checkpoint");
  train_cmd->add_option("--steps", train_args.steps, "override total_steps");

  IndexArgs index_args;
  auto* index_cmd = app.add_subcommand("index", "embed images or texts into an LZE1 file");
  index_cmd->add_option("--checkpoint", index_args.checkpoint, "parameter checkpoint");
  index_cmd->add_option("--data", index_args.data, "dataset directory");
  index_cmd->add_option("--images", index_args.images, "directory of .ppm images");
  index_cmd->add_option("--texts", index_args.texts, "query file");
  index_cmd->add_option("--template", index_args.tmpl, "on-qs, qs or on");
  index_cmd->add_flag("--from-nouns", index_args.from_nouns, "embed each record as the sum of its noun embeddings");
  index_cmd->add_option("--out", index_args.out, "output .lze file")->required();

  RetrieveArgs retrieve_args;
  auto* retrieve_cmd = app.add_subcommand("retrieve", "rank an index for one query");
  retrieve_cmd->add_option("--index", retrieve_args.index, "LZE1 index")->required();
  retrieve_cmd->add_option("--query-text", retrieve_args.query_text, "query text");
  retrieve_cmd->add_option("--query-id", retrieve_args.query_id, "row id in --queries");
  retrieve_cmd->add_option("--queries", retrieve_args.queries, "LZE1 query embeddings");
  retrieve_cmd->add_option("--checkpoint", retrieve_args.checkpoint, "parameter checkpoint");
  retrieve_cmd->add_option("--k", retrieve_args.k, "results to return")->check(CLI::PositiveNumber);
  retrieve_cmd->add_option("--dump-index", retrieve_args.dump_index, "write the loaded index back out");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval-retrieval", "average recall at k");
  eval_cmd->add_option("--images", eval_args.images, "LZE1 image embeddings")->required();
  eval_cmd->add_option("--queries", eval_args.queries, "LZE1 text embeddings");
  eval_cmd->add_option("--query-text", eval_args.query_text, "query file");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "parameter checkpoint");
  eval_cmd->add_option("--gt", eval_args.gt, "ground truth TSV")->required();
  eval_cmd->add_option("--k", eval_args.ks, "comma-separated cutoffs");
  eval_cmd->add_option("--direction", eval_args.direction, "text-to-image or image-to-text");
  eval_cmd->add_option("--template", eval_args.tmpl, "on-qs, qs or on");

  AugmentArgs augment_args;
  auto* augment_cmd = app.add_subcommand("augment", "turn detection labels into multi-label captions");
  augment_cmd->add_option("--input", augment_args.input, "detection records")->required();
  augment_cmd->add_option("--out", augment_args.output, "caption records")->required();
  augment_cmd->add_option("--count", augment_args.count, "generated captions per label")->check(CLI::PositiveNumber);

  NavArgs nav_args;
  auto* nav_cmd = app.add_subcommand("nav-eval", "success rate of retrieval-driven navigation");
  nav_cmd->add_option("--world", nav_args.world, "world file")->required();
  nav_cmd->add_option("--cell-m", nav_args.cell_m, "cell size in meters")->check(CLI::PositiveNumber);
  nav_cmd->add_option("--memory", nav_args.memory, "image-pose memory records")->required();
  nav_cmd->add_option("--embeddings", nav_args.embeddings, "LZE1 memory embeddings");
  nav_cmd->add_option("--queries", nav_args.queries, "id<TAB>noun<TAB>sentence")->required();
  nav_cmd->add_option("--query-embeddings", nav_args.query_embeddings, "LZE1 query embeddings");
  nav_cmd->add_option("--checkpoint", nav_args.checkpoint, "parameter checkpoint");
  nav_cmd->add_option("--template", nav_args.tmpl, "on-qs, qs or on");
  nav_cmd->add_option("--start", nav_args.start, "x,y,theta");
  nav_cmd->add_option("--k", nav_args.k, "candidates to visit")->check(CLI::PositiveNumber);
  nav_cmd->add_option("--half-angle-deg", nav_args.half_angle_deg, "field-of-view half angle");
  nav_cmd->add_option("--range", nav_args.range, "field-of-view range in meters");
  nav_cmd->add_flag("--no-occlusion", nav_args.no_occlusion, "ignore line of sight");
  nav_cmd->add_option("--radii", nav_args.radii, "comma-separated success radii in meters");
  nav_cmd->add_option("--log", nav_args.log, "episode log output");

  GradArgs grad_args;
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of the total loss");
  grad_cmd->add_option("--data", grad_args.data, "dataset directory");
  grad_cmd->add_option("--checkpoint", grad_args.checkpoint, "parameter checkpoint");
  grad_cmd->add_option("--step", grad_args.step, "difference step")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--tolerance", grad_args.tolerance, "relative error bound")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--images", grad_args.images, "batch size")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--scheme", grad_args.scheme, "central or richardson (two extrapolated central differences)")
      ->check(CLI::IsMember({"central", "richardson"}));

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n\n" << app.help();
    return 2;
  }
  if (seed_opt->count() > 0) g.seed = seed;

  try {
    if (*train_cmd) return cmd_train(g, train_args, out);
    if (*index_cmd) return cmd_index(g, index_args, out);
    if (*retrieve_cmd) return cmd_retrieve(g, retrieve_args, out);
    if (*eval_cmd) return cmd_eval(g, eval_args, out, err);
    if (*augment_cmd) return cmd_augment(g, augment_args, out, err);
    if (*nav_cmd) return cmd_nav(g, nav_args, out);
    if (*grad_cmd) return cmd_gradcheck(g, grad_args, out, err);
  } catch (const ParseError& e) {
    error_line(err, "malformed input", e.what(), e.file(), e.line());
    return 1;
  } catch (const TrainingError& e) {
    error_line(err, "training failed", e.what());
    return 1;
  } catch (const ContractError& e) {
    error_line(err, "invalid argument", e.what());
    return 1;
  } catch (const std::exception& e) {
    error_line(err, "failed", e.what());
    return 1;
  }
  return 2;
}

}  // namespace objnav::harness
