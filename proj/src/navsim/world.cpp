#include "objnav/navsim/world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numbers>
#include <queue>
#include <sstream>
#include <tuple>

#include "objnav/common/errors.hpp"

namespace objnav::navsim {

double normalize_angle(double theta) {
  if (!std::isfinite(theta)) throw ContractError("normalize_angle: non-finite angle");
  double t = std::remainder(theta, 2.0 * std::numbers::pi);
  if (t <= -std::numbers::pi) t += 2.0 * std::numbers::pi;
  return t;
}

Pose make_pose(double x, double y, double theta) { return {x, y, normalize_angle(theta)}; }

GridWorld::GridWorld(std::vector<std::vector<bool>> grid, std::vector<ObjectInstance> objects, double cell_m)
    : cell_m_(cell_m), occupied_(std::move(grid)), objects_(std::move(objects)) {
  if (!(cell_m_ > 0.0)) throw ContractError("GridWorld: cell size must be positive");
  if (occupied_.empty() || occupied_.front().empty()) throw ContractError("GridWorld: empty grid");
  height_ = static_cast<int>(occupied_.size());
  width_ = static_cast<int>(occupied_.front().size());
  for (const auto& row : occupied_) {
    if (static_cast<int>(row.size()) != width_) throw ContractError("GridWorld: grid is not rectangular");
  }
  for (const ObjectInstance& o : objects_) {
    if (!in_bounds(o.cell)) throw ContractError("GridWorld: object " + o.id + " lies outside the grid");
    bool reachable_side = !occupied(o.cell);
    for (const Cell d : {Cell{1, 0}, Cell{-1, 0}, Cell{0, 1}, Cell{0, -1}}) {
      reachable_side = reachable_side || !occupied({o.cell.x + d.x, o.cell.y + d.y});
    }
    if (!reachable_side) throw ContractError("GridWorld: object " + o.id + " is enclosed by occupied cells");
  }
}

GridWorld GridWorld::parse(std::istream& in, const std::string& source, double cell_m) {
  std::vector<std::vector<bool>> grid;
  std::vector<ObjectInstance> objects;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (objects.empty() && line.find_first_not_of("#.") == std::string::npos) {
      std::vector<bool> row;
      for (char c : line) row.push_back(c == '#');
      if (!grid.empty() && row.size() != grid.front().size()) throw ParseError(source, n, "grid row has a different width");
      grid.push_back(std::move(row));
      continue;
    }
    if (grid.empty()) throw ParseError(source, n, "object table before the grid");
    std::istringstream fields(line);
    std::vector<std::string> tokens;
    for (std::string t; fields >> t;) tokens.push_back(t);
    if (tokens.size() < 4) throw ParseError(source, n, "object line needs: id noun cell_x cell_y");
    ObjectInstance o;
    o.id = tokens.front();
    for (std::size_t i = 1; i + 2 < tokens.size(); ++i) o.noun += (o.noun.empty() ? "" : " ") + tokens[i];
    try {
      std::size_t used_x = 0;
      std::size_t used_y = 0;
      o.cell.x = std::stoi(tokens[tokens.size() - 2], &used_x);
      o.cell.y = std::stoi(tokens.back(), &used_y);
      if (used_x != tokens[tokens.size() - 2].size() || used_y != tokens.back().size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw ParseError(source, n, "object cell coordinates must be integers");
    }
    for (const ObjectInstance& other : objects) {
      if (other.id == o.id) throw ParseError(source, n, "duplicate object id " + o.id);
    }
    objects.push_back(std::move(o));
  }
  if (grid.empty()) throw ParseError(source, 0, "world file has no grid");
  try {
    return GridWorld(std::move(grid), std::move(objects), cell_m);
  } catch (const ContractError& e) {
    throw ParseError(source, 0, e.what());
  }
}

GridWorld GridWorld::load(const std::filesystem::path& path, double cell_m) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open world file");
  return parse(in, path.string(), cell_m);
}

bool GridWorld::occupied(Cell c) const {
  if (!in_bounds(c)) return true;
  return occupied_[static_cast<std::size_t>(c.y)][static_cast<std::size_t>(c.x)];
}

Cell GridWorld::cell_of(double x, double y) const {
  return {static_cast<int>(std::floor(x / cell_m_)), static_cast<int>(std::floor(y / cell_m_))};
}

Eigen::Vector2d GridWorld::center(Cell c) const { return {(c.x + 0.5) * cell_m_, (c.y + 0.5) * cell_m_}; }

std::vector<const ObjectInstance*> GridWorld::instances_of(const std::string& noun) const {
  std::vector<const ObjectInstance*> out;
  for (const ObjectInstance& o : objects_) {
    if (o.noun == noun) out.push_back(&o);
  }
  return out;
}

std::string GridWorld::render() const {
  std::string out;
  for (const auto& row : occupied_) {
    for (bool b : row) out.push_back(b ? '#' : '.');
    out.push_back('\n');
  }
  return out;
}

std::vector<Cell> plan_path(const GridWorld& world, const Pose& start, const Pose& goal) {
  return plan_path(world, world.cell_of(start.x, start.y), world.cell_of(goal.x, goal.y));
}

std::vector<Cell> plan_path(const GridWorld& world, Cell start, Cell goal) {
  if (world.occupied(start)) throw ContractError("plan_path: start cell is occupied or outside the grid");
  if (world.occupied(goal)) throw ContractError("plan_path: goal cell is occupied or outside the grid");
  const int w = world.width();
  const auto index = [w](Cell c) { return static_cast<std::size_t>(c.y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(c.x); };
  const auto heuristic = [goal](Cell c) { return std::abs(c.x - goal.x) + std::abs(c.y - goal.y); };

  const std::size_t total = static_cast<std::size_t>(w) * static_cast<std::size_t>(world.height());
  constexpr int kUnseen = std::numeric_limits<int>::max();
  std::vector<int> g(total, kUnseen);
  std::vector<Cell> parent(total);
  std::vector<bool> closed(total, false);

  // (f, h, insertion order, cell); smallest first.
  using Entry = std::tuple<int, int, std::size_t, Cell>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  std::size_t order = 0;
  g[index(start)] = 0;
  open.emplace(heuristic(start), heuristic(start), order++, start);

  while (!open.empty()) {
    const Cell c = std::get<3>(open.top());
    open.pop();
    if (closed[index(c)]) continue;
    closed[index(c)] = true;
    if (c == goal) {
      std::vector<Cell> path{c};
      for (Cell p = c; p != start;) {
        p = parent[index(p)];
        path.push_back(p);
      }
      std::reverse(path.begin(), path.end());
      return path;
    }
    for (const Cell d : {Cell{1, 0}, Cell{-1, 0}, Cell{0, 1}, Cell{0, -1}}) {
      const Cell nb{c.x + d.x, c.y + d.y};
      if (world.occupied(nb) || closed[index(nb)]) continue;
      const int cost = g[index(c)] + 1;
      if (cost < g[index(nb)]) {
        g[index(nb)] = cost;
        parent[index(nb)] = c;
        open.emplace(cost + heuristic(nb), heuristic(nb), order++, nb);
      }
    }
  }
  return {};
}

bool in_fov(const Pose& pose, const Eigen::Vector2d& target, double half_angle, double max_range) {
  if (!(half_angle > 0.0 && half_angle < std::numbers::pi)) throw ContractError("in_fov: half angle must be in (0, pi)");
  if (!(max_range > 0.0)) throw ContractError("in_fov: range must be positive");
  const double dx = target.x() - pose.x;
  const double dy = target.y() - pose.y;
  const double dist = std::hypot(dx, dy);
  if (dist > max_range) return false;
  if (dist == 0.0) return true;
  return std::abs(normalize_angle(std::atan2(dy, dx) - pose.theta)) <= half_angle;
}

std::vector<Cell> traverse(const GridWorld& world, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  const double c = world.cell_m();
  const Eigen::Vector2d p = a / c;
  const Eigen::Vector2d q = b / c;
  Cell cur{static_cast<int>(std::floor(p.x())), static_cast<int>(std::floor(p.y()))};
  const Cell end{static_cast<int>(std::floor(q.x())), static_cast<int>(std::floor(q.y()))};
  const Eigen::Vector2d dir = q - p;
  constexpr double kInf = std::numeric_limits<double>::infinity();

  const int step_x = dir.x() > 0 ? 1 : (dir.x() < 0 ? -1 : 0);
  const int step_y = dir.y() > 0 ? 1 : (dir.y() < 0 ? -1 : 0);
  double t_max_x = kInf;
  double t_max_y = kInf;
  double t_delta_x = kInf;
  double t_delta_y = kInf;
  if (step_x != 0) {
    const double boundary = step_x > 0 ? cur.x + 1.0 : static_cast<double>(cur.x);
    t_max_x = (boundary - p.x()) / dir.x();
    t_delta_x = 1.0 / std::abs(dir.x());
  }
  if (step_y != 0) {
    const double boundary = step_y > 0 ? cur.y + 1.0 : static_cast<double>(cur.y);
    t_max_y = (boundary - p.y()) / dir.y();
    t_delta_y = 1.0 / std::abs(dir.y());
  }

  std::vector<Cell> cells{cur};
  const int limit = std::abs(end.x - cur.x) + std::abs(end.y - cur.y);
  for (int i = 0; i < limit && cur != end; ++i) {
    if (t_max_x <= t_max_y) {
      cur.x += step_x;
      t_max_x += t_delta_x;
    } else {
      cur.y += step_y;
      t_max_y += t_delta_y;
    }
    cells.push_back(cur);
  }
  return cells;
}

bool in_fov(const GridWorld& world, const Pose& pose, const Eigen::Vector2d& target, const FovOptions& options) {
  if (!in_fov(pose, target, options.half_angle, options.max_range)) return false;
  if (!options.occlusion) return true;
  const std::vector<Cell> cells = traverse(world, {pose.x, pose.y}, target);
  for (std::size_t i = 1; i + 1 < cells.size(); ++i) {
    if (world.occupied(cells[i])) return false;
  }
  return true;
}

}  // namespace objnav::navsim
