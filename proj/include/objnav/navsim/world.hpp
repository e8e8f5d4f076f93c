#pragma once

#include <compare>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace objnav::navsim {

// Map-frame pose in meters; theta in (-pi, pi].
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  friend bool operator==(const Pose&, const Pose&) = default;
};

double normalize_angle(double theta);
Pose make_pose(double x, double y, double theta);

struct Cell {
  int x = 0;
  int y = 0;

  friend auto operator<=>(const Cell&, const Cell&) = default;
};

struct ObjectInstance {
  std::string id;
  std::string noun;
  Cell cell;
};

// Rectangular occupancy grid; row index is y, column index is x. Cell (x, y)
// covers [x*c, (x+1)*c) x [y*c, (y+1)*c) in meters for cell size c.
class GridWorld {
 public:
  GridWorld(std::vector<std::vector<bool>> occupied, std::vector<ObjectInstance> objects, double cell_m);

  // Grid rows of '#' (occupied) and '.' (free), then one object per line:
  // `id noun cell_x cell_y` (the noun may contain spaces). Blank lines are ignored.
  static GridWorld parse(std::istream& in, const std::string& source, double cell_m = 0.25);
  static GridWorld load(const std::filesystem::path& path, double cell_m = 0.25);

  int width() const { return width_; }
  int height() const { return height_; }
  double cell_m() const { return cell_m_; }
  bool in_bounds(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width_ && c.y < height_; }
  // Out-of-bounds cells count as occupied.
  bool occupied(Cell c) const;
  Cell cell_of(double x, double y) const;
  Eigen::Vector2d center(Cell c) const;

  const std::vector<ObjectInstance>& objects() const { return objects_; }
  std::vector<const ObjectInstance*> instances_of(const std::string& noun) const;

  std::string render() const;

 private:
  int width_;
  int height_;
  double cell_m_;
  std::vector<std::vector<bool>> occupied_;
  std::vector<ObjectInstance> objects_;
};

// Shortest 4-connected path (unit step cost) from the start cell to the goal
// cell, both included. Empty when unreachable. Throws ContractError when
// either endpoint is occupied.
std::vector<Cell> plan_path(const GridWorld& world, const Pose& start, const Pose& goal);
std::vector<Cell> plan_path(const GridWorld& world, Cell start, Cell goal);

struct FovOptions {
  double half_angle = 0.7853981633974483;  // 45 degrees
  double max_range = 3.0;                  // meters
  bool occlusion = true;
};

// Range and bearing test only.
bool in_fov(const Pose& pose, const Eigen::Vector2d& target, double half_angle, double max_range);

// Range and bearing test plus a grid ray cast: any occupied cell strictly
// between the pose cell and the target cell blocks the view.
bool in_fov(const GridWorld& world, const Pose& pose, const Eigen::Vector2d& target, const FovOptions& options);

// Cells crossed by the segment a -> b, in order (Amanatides-Woo traversal).
std::vector<Cell> traverse(const GridWorld& world, const Eigen::Vector2d& a, const Eigen::Vector2d& b);

}  // namespace objnav::navsim
