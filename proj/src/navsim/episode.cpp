#include "objnav/navsim/episode.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <ostream>

#include "objnav/common/errors.hpp"
#include "objnav/promptgen/prompt.hpp"

namespace objnav::navsim {

namespace {

double distance_to(const Pose& p, const Eigen::Vector2d& target) { return std::hypot(target.x() - p.x, target.y() - p.y); }

// Distance to the nearest in-view instance, else to the nearest instance.
std::pair<double, bool> measure(const GridWorld& world, const std::vector<const ObjectInstance*>& targets,
                                const Pose& pose, const FovOptions& fov) {
  double nearest = std::numeric_limits<double>::infinity();
  double nearest_visible = std::numeric_limits<double>::infinity();
  for (const ObjectInstance* o : targets) {
    const Eigen::Vector2d c = world.center(o->cell);
    const double d = distance_to(pose, c);
    nearest = std::min(nearest, d);
    if (in_fov(world, pose, c, fov)) nearest_visible = std::min(nearest_visible, d);
  }
  if (std::isfinite(nearest_visible)) return {nearest_visible, true};
  return {nearest, false};
}

}  // namespace

EpisodeResult execute_episode(const EpisodeQuery& query, const std::vector<MemoryEntry>& memory,
                              const GridWorld& world, const EpisodeOptions& options, const QueryEncoder& encode,
                              const Pose& start) {
  return execute_episode(query, encode(promptgen::format_query(options.prompt, query.noun, query.sentence)), memory, world, options,
                         start);
}

EpisodeResult execute_episode(const EpisodeQuery& query, const retrieval::Embedding& query_embedding,
                              const std::vector<MemoryEntry>& memory, const GridWorld& world,
                              const EpisodeOptions& options, const Pose& start) {
  if (options.k < 1) throw ContractError("execute_episode: k must be at least 1");
  if (memory.empty()) throw ContractError("execute_episode: empty memory");
  const auto targets = world.instances_of(query.noun);
  if (targets.empty()) throw ContractError("execute_episode: no '" + query.noun + "' in the world");

  EpisodeResult result;
  result.query = promptgen::format_query(options.prompt, query.noun, query.sentence);
  result.target = query.noun;

  ad::Matrix rows(static_cast<ad::Index>(memory.size()), memory.front().embedding.size());
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < memory.size(); ++i) {
    if (memory[i].embedding.size() != rows.cols()) throw ContractError("execute_episode: memory embedding sizes differ");
    rows.row(static_cast<ad::Index>(i)) = memory[i].embedding;
    ids.push_back(memory[i].image_id);
  }
  const retrieval::EmbeddingIndex index = retrieval::build_index(rows, ids);
  result.candidates = retrieval::topk(query_embedding, index, std::min(options.k, memory.size()));

  Pose here = start;
  for (const std::string& id : result.candidates) {
    const MemoryEntry& entry = memory[static_cast<std::size_t>(index.find(id))];
    const Cell goal = world.cell_of(entry.pose.x, entry.pose.y);
    if (world.occupied(goal)) {
      result.notes.push_back("candidate " + id + " skipped: pose lies in an occupied cell");
      continue;
    }
    const std::vector<Cell> path = plan_path(world, world.cell_of(here.x, here.y), goal);
    if (path.empty()) {
      result.notes.push_back("candidate " + id + " skipped: unreachable");
      continue;
    }
    result.path_cells += path.size() - 1;
    here = make_pose(entry.pose.x, entry.pose.y, entry.pose.theta);
    result.visited.push_back(here);
    result.visited_ids.push_back(id);
    if (measure(world, targets, here, options.fov).second) break;
  }

  if (result.visited.empty()) {
    result.failed = true;
    result.notes.push_back("no candidate pose was reachable");
  }
  result.stop = here;
  std::tie(result.distance, result.in_fov) = measure(world, targets, here, options.fov);
  if (result.failed) result.in_fov = false;
  return result;
}

SuccessReport success_rate(const std::vector<EpisodeResult>& episodes, double radius) {
  if (episodes.empty()) throw ContractError("success_rate: no episodes");
  if (!(radius > 0.0)) throw ContractError("success_rate: radius must be positive");
  SuccessReport r;
  r.radius = radius;
  r.episodes = episodes.size();
  std::size_t in_view = 0;
  for (const EpisodeResult& e : episodes) {
    if (e.in_fov) ++in_view;
    if (e.in_fov && e.distance <= radius) ++r.successes;
  }
  r.success_rate = static_cast<double>(r.successes) / static_cast<double>(r.episodes);
  r.fov_rate = static_cast<double>(in_view) / static_cast<double>(r.episodes);
  return r;
}

std::string format_episode(const EpisodeResult& e) {
  nlohmann::ordered_json j;
  j["query"] = e.query;
  j["target"] = e.target;
  j["candidates"] = e.candidates;
  j["visited"] = e.visited_ids;
  j["stop"] = {{"x", e.stop.x}, {"y", e.stop.y}, {"theta", e.stop.theta}};
  j["distance"] = e.distance;
  j["in_fov"] = e.in_fov;
  j["path_cells"] = e.path_cells;
  j["failed"] = e.failed;
  j["notes"] = e.notes;
  return j.dump();
}

void write_episode_log(std::ostream& out, const std::vector<EpisodeResult>& episodes) {
  for (const EpisodeResult& e : episodes) out << format_episode(e) << '\n';
}

}  // namespace objnav::navsim
