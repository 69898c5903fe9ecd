#pragma once

#include <string>
#include <utility>
#include <vector>

#include "diffsearch/prior.hpp"
#include "diffsearch/rng.hpp"
#include "diffsearch/verifier.hpp"

namespace diffsearch {

struct WallBox {
    Eigen::Vector2d center;
    double half_width = 0.5;
};

// Grid maze: '#' wall, '.' free, 'S' start, 'G' goal. Cell (cx, cy) occupies
// the unit box [cx, cx+1) x [cy, cy+1); cy indexes rows top to bottom.
struct MazeSpec {
    int width = 0;
    int height = 0;
    std::vector<std::string> cells;  // height rows of width chars
    std::vector<WallBox> wall_boxes;
    Eigen::Vector2d start;
    Eigen::Vector2d goal;
    double goal_radius = 0.5;

    bool is_wall(int cx, int cy) const {
        if (cx < 0 || cy < 0 || cx >= width || cy >= height) return false;
        return cells[cy][cx] == '#';
    }
};

struct Trajectory {
    std::vector<Eigen::Vector2d> points;

    int horizon() const { return static_cast<int>(points.size()); }
    Vec flatten() const;
    static Trajectory from_flat(const Vec& x);
};

MazeSpec parse_maze(const std::vector<std::string>& rows, double goal_radius = 0.5);
MazeSpec load_maze(const std::string& path, double goal_radius = 0.5);
void save_maze(const MazeSpec& maze, const std::string& path);

// Depth of penetration into the containing wall box: 0 in free space,
// otherwise the minimum distance to the four box faces.
double point_violation(const MazeSpec& maze, double x, double y);

// Gradient of point_violation wrt (x, y); ties broken toward the face of
// lowest index (x-low, x-high, y-low, y-high).
Eigen::Vector2d point_violation_grad(const MazeSpec& maze, double x, double y);

// f(tau) = exp(-sum_i L(x_i, y_i)^2) over a flattened trajectory in R^{2H}.
Verifier maze_verifier(const MazeSpec& maze);

// Margin-aware penetration: inside a wall or outside the grid the penalty is
// depth + margin; in free space within `margin` of a wall it is margin minus
// the distance to the nearest wall face; zero otherwise. Out-of-grid points
// count as blocked. Optional gradient wrt (x, y).
double clearance_violation(const MazeSpec& maze, double x, double y, double margin,
                           Eigen::Vector2d* grad = nullptr);

// Segment-aware maze verifier: clearance penalties are accumulated over
// points interpolated along each segment at roughly `spacing`, averaged per
// segment, and passed through a Huber penalty so guidance forces stay
// bounded. Unlike maze_verifier this also punishes wall cuts between
// waypoints, which is what segment-level success actually requires.
Verifier clearance_verifier(const MazeSpec& maze, double margin = 0.2,
                            double spacing = 0.15);

// Segment-level success: waypoints free, consecutive segments avoid all wall
// boxes, and the final waypoint lies within goal_radius of the goal.
bool check_success(const MazeSpec& maze, const Trajectory& traj);

bool segment_hits_box(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                      const WallBox& box);

// Perfect maze via randomized depth-first carving; the emitted grid is
// (2*width+1) x (2*height+1) with start bottom-left and goal top-right.
MazeSpec generate_maze(int width, int height, std::uint64_t seed);

// Shortest free-cell path from start to goal, resampled to H waypoints.
Trajectory reference_plan(const MazeSpec& maze, int horizon);

// Free-cell connectivity from start to goal (flood fill).
bool maze_connected(const MazeSpec& maze);

} // namespace diffsearch
