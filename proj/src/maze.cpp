#include "diffsearch/maze.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <functional>
#include <limits>

#include "diffsearch/errors.hpp"

namespace diffsearch {

Vec Trajectory::flatten() const {
    Vec v(2 * points.size());
    for (size_t i = 0; i < points.size(); ++i) {
        v[2 * i] = points[i].x();
        v[2 * i + 1] = points[i].y();
    }
    return v;
}

Trajectory Trajectory::from_flat(const Vec& x) {
    if (x.size() % 2 != 0) throw ArgumentError("Trajectory: flat vector has odd length");
    Trajectory t;
    t.points.resize(x.size() / 2);
    for (size_t i = 0; i < t.points.size(); ++i)
        t.points[i] = {x[2 * i], x[2 * i + 1]};
    return t;
}

MazeSpec parse_maze(const std::vector<std::string>& rows, double goal_radius) {
    if (rows.empty()) throw ConfigError("maze: empty grid");
    MazeSpec m;
    m.height = static_cast<int>(rows.size());
    m.width = static_cast<int>(rows[0].size());
    m.goal_radius = goal_radius;
    bool have_start = false, have_goal = false;
    for (int cy = 0; cy < m.height; ++cy) {
        if (static_cast<int>(rows[cy].size()) != m.width)
            throw ConfigError("maze: ragged grid");
        for (int cx = 0; cx < m.width; ++cx) {
            char c = rows[cy][cx];
            if (c == '#') {
                m.wall_boxes.push_back({{cx + 0.5, cy + 0.5}, 0.5});
            } else if (c == 'S') {
                if (have_start) throw ConfigError("maze: duplicate S cell");
                m.start = {cx + 0.5, cy + 0.5};
                have_start = true;
            } else if (c == 'G') {
                if (have_goal) throw ConfigError("maze: duplicate G cell");
                m.goal = {cx + 0.5, cy + 0.5};
                have_goal = true;
            } else if (c != '.') {
                throw ConfigError("maze: unexpected character '" + std::string(1, c) + "'");
            }
        }
    }
    if (!have_start || !have_goal) throw ConfigError("maze: missing S or G cell");
    m.cells = rows;
    return m;
}

MazeSpec load_maze(const std::string& path, double goal_radius) {
    std::ifstream in(path);
    if (!in) throw ConfigError("maze: cannot open '" + path + "'");
    std::vector<std::string> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) rows.push_back(line);
    }
    return parse_maze(rows, goal_radius);
}

void save_maze(const MazeSpec& maze, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("maze: cannot write '" + path + "'");
    for (const auto& row : maze.cells) out << row << '\n';
}

double point_violation(const MazeSpec& maze, double x, double y) {
    int cx = static_cast<int>(std::floor(x));
    int cy = static_cast<int>(std::floor(y));
    if (!maze.is_wall(cx, cy)) return 0.0;
    return std::min(std::min(x - cx, cx + 1.0 - x), std::min(y - cy, cy + 1.0 - y));
}

Eigen::Vector2d point_violation_grad(const MazeSpec& maze, double x, double y) {
    int cx = static_cast<int>(std::floor(x));
    int cy = static_cast<int>(std::floor(y));
    if (!maze.is_wall(cx, cy)) return {0.0, 0.0};
    double faces[4] = {x - cx, cx + 1.0 - x, y - cy, cy + 1.0 - y};
    int arg = 0;
    for (int i = 1; i < 4; ++i)
        if (faces[i] < faces[arg]) arg = i;
    switch (arg) {
        case 0: return {1.0, 0.0};
        case 1: return {-1.0, 0.0};
        case 2: return {0.0, 1.0};
        default: return {0.0, -1.0};
    }
}

Verifier maze_verifier(const MazeSpec& maze) {
    MazeSpec m = maze;
    auto log_fn = [m](const Vec& flat) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i + 1 < flat.size(); i += 2) {
            double L = point_violation(m, flat[i], flat[i + 1]);
            acc += L * L;
        }
        return -acc;
    };
    auto grad_fn = [m](const Vec& flat) -> Vec {
        Vec g = Vec::Zero(flat.size());
        for (Eigen::Index i = 0; i + 1 < flat.size(); i += 2) {
            double L = point_violation(m, flat[i], flat[i + 1]);
            if (L <= 0.0) continue;
            Eigen::Vector2d gl = point_violation_grad(m, flat[i], flat[i + 1]);
            g[i] = -2.0 * L * gl.x();
            g[i + 1] = -2.0 * L * gl.y();
        }
        return g;
    };
    return Verifier(log_fn, grad_fn, 1.0, "maze");
}

double clearance_violation(const MazeSpec& maze, double x, double y, double margin,
                           Eigen::Vector2d* grad) {
    auto blocked = [&](int cx, int cy) {
        return cx < 0 || cy < 0 || cx >= maze.width || cy >= maze.height
               || maze.is_wall(cx, cy);
    };
    int cx = static_cast<int>(std::floor(x));
    int cy = static_cast<int>(std::floor(y));
    if (blocked(cx, cy)) {
        if (cx >= 0 && cy >= 0 && cx < maze.width && cy < maze.height) {
            if (grad) *grad = point_violation_grad(maze, x, y);
            return point_violation(maze, x, y) + margin;
        }
        // outside the grid: distance back to the boundary, offset so leaving
        // the grid always costs more than sitting inside a wall face
        double tx = std::clamp(x, 0.0, static_cast<double>(maze.width));
        double ty = std::clamp(y, 0.0, static_cast<double>(maze.height));
        double d = std::hypot(x - tx, y - ty);
        if (grad)
            *grad = d > 1e-12 ? Eigen::Vector2d((x - tx) / d, (y - ty) / d)
                              : Eigen::Vector2d(0.0, 0.0);
        return d + 0.5 + margin;
    }
    // free cell: distance to the nearest blocked box among the 3x3 neighbors
    double best = std::numeric_limits<double>::infinity();
    Eigen::Vector2d dir(0.0, 0.0);
    for (int dx = -1; dx <= 1; ++dx)
        for (int dy = -1; dy <= 1; ++dy) {
            if (!blocked(cx + dx, cy + dy)) continue;
            double px = std::clamp(x, cx + dx + 0.0, cx + dx + 1.0);
            double py = std::clamp(y, cy + dy + 0.0, cy + dy + 1.0);
            double d = std::hypot(x - px, y - py);
            if (d < best) {
                best = d;
                dir = {x - px, y - py};
            }
        }
    if (best >= margin) {
        if (grad) *grad = {0.0, 0.0};
        return 0.0;
    }
    if (grad) *grad = best > 1e-12 ? Eigen::Vector2d(-dir / best) : Eigen::Vector2d(0.0, 0.0);
    return margin - best;
}

Verifier clearance_verifier(const MazeSpec& maze, double margin, double spacing) {
    MazeSpec m = maze;
    // visit interpolated points (i, j, u, weight, p) along every segment
    auto for_each_point = [m, spacing](
        const Trajectory& tr,
        const std::function<void(int, int, double, double, const Eigen::Vector2d&)>& fn) {
        for (int i = 0; i + 1 < tr.horizon(); ++i) {
            double len = (tr.points[i + 1] - tr.points[i]).norm();
            int n = std::min(64, std::max(2, static_cast<int>(std::ceil(len / spacing))));
            // per-segment average so the force scale is independent of n
            for (int k = 0; k < n; ++k) {
                double u = static_cast<double>(k) / n;
                fn(i, i + 1, u, 1.0 / n, (1.0 - u) * tr.points[i] + u * tr.points[i + 1]);
            }
        }
        fn(tr.horizon() - 1, tr.horizon() - 1, 0.0, 1.0, tr.points.back());
    };
    // Huber form of the squared penalty keeps guidance forces bounded
    const double hc = 0.3;
    auto huber = [hc](double L) { return L <= hc ? L * L : hc * (2.0 * L - hc); };
    auto huber_slope = [hc](double L) { return 2.0 * std::min(L, hc); };
    auto log_fn = [m, margin, for_each_point, huber](const Vec& x) {
        Trajectory tr = Trajectory::from_flat(x);
        double s = 0.0;
        for_each_point(tr, [&](int, int, double, double w, const Eigen::Vector2d& p) {
            s += w * huber(clearance_violation(m, p.x(), p.y(), margin));
        });
        return -s;
    };
    auto grad_fn = [m, margin, for_each_point, huber_slope](const Vec& x) {
        Trajectory tr = Trajectory::from_flat(x);
        Vec g = Vec::Zero(x.size());
        for_each_point(tr, [&](int i, int j, double u, double w, const Eigen::Vector2d& p) {
            Eigen::Vector2d dL;
            double L = clearance_violation(m, p.x(), p.y(), margin, &dL);
            if (L <= 0.0) return;
            double sl = w * huber_slope(L);
            g[2 * i] += -sl * dL.x() * (1.0 - u);
            g[2 * i + 1] += -sl * dL.y() * (1.0 - u);
            g[2 * j] += -sl * dL.x() * u;
            g[2 * j + 1] += -sl * dL.y() * u;
        });
        return g;
    };
    return Verifier(log_fn, grad_fn, 1.0, "maze-clearance");
}

bool segment_hits_box(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                      const WallBox& box) {
    // Slab clipping; touching the boundary does not count as a hit.
    double tmin = 0.0, tmax = 1.0;
    for (int axis = 0; axis < 2; ++axis) {
        double lo = box.center[axis] - box.half_width;
        double hi = box.center[axis] + box.half_width;
        double d = b[axis] - a[axis];
        if (std::abs(d) < 1e-300) {
            if (a[axis] <= lo || a[axis] >= hi) return false;
        } else {
            double t0 = (lo - a[axis]) / d;
            double t1 = (hi - a[axis]) / d;
            if (t0 > t1) std::swap(t0, t1);
            tmin = std::max(tmin, t0);
            tmax = std::min(tmax, t1);
            if (tmin >= tmax) return false;
        }
    }
    return tmax > tmin + 1e-12;
}

bool check_success(const MazeSpec& maze, const Trajectory& traj) {
    if (traj.horizon() < 2) return false;
    for (const auto& p : traj.points)
        if (point_violation(maze, p.x(), p.y()) > 0.0) return false;
    for (int i = 0; i + 1 < traj.horizon(); ++i)
        for (const auto& box : maze.wall_boxes)
            if (segment_hits_box(traj.points[i], traj.points[i + 1], box)) return false;
    return (traj.points.back() - maze.goal).norm() <= maze.goal_radius;
}

MazeSpec generate_maze(int width, int height, std::uint64_t seed) {
    if (width < 3 || height < 3) throw ConfigError("generate_maze: width, height must be >= 3");
    int gw = 2 * width + 1, gh = 2 * height + 1;
    std::vector<std::string> rows(gh, std::string(gw, '#'));

    RngStream rng(mix_keys(0x3A2EULL, seed));
    std::vector<std::pair<int, int>> stack;
    std::vector<std::vector<bool>> visited(height, std::vector<bool>(width, false));
    auto carve_cell = [&](int cx, int cy) { rows[2 * cy + 1][2 * cx + 1] = '.'; };

    stack.emplace_back(0, height - 1);  // bottom-left
    visited[height - 1][0] = true;
    carve_cell(0, height - 1);

    const int dx[4] = {1, -1, 0, 0};
    const int dy[4] = {0, 0, 1, -1};
    while (!stack.empty()) {
        auto [cx, cy] = stack.back();
        int dirs[4] = {0, 1, 2, 3};
        // Fisher-Yates on the direction order.
        for (int i = 3; i > 0; --i)
            std::swap(dirs[i], dirs[static_cast<int>(rng.next_u64() % (i + 1))]);
        bool moved = false;
        for (int d : dirs) {
            int nx = cx + dx[d], ny = cy + dy[d];
            if (nx < 0 || ny < 0 || nx >= width || ny >= height || visited[ny][nx]) continue;
            visited[ny][nx] = true;
            carve_cell(nx, ny);
            rows[2 * cy + 1 + dy[d]][2 * cx + 1 + dx[d]] = '.';  // open the wall between
            stack.emplace_back(nx, ny);
            moved = true;
            break;
        }
        if (!moved) stack.pop_back();
    }

    rows[2 * (height - 1) + 1][1] = 'S';
    rows[1][2 * (width - 1) + 1] = 'G';
    return parse_maze(rows);
}

bool maze_connected(const MazeSpec& maze) {
    return !reference_plan(maze, 2).points.empty();
}

Trajectory reference_plan(const MazeSpec& maze, int horizon) {
    auto cell_of = [&](const Eigen::Vector2d& p) {
        return std::pair<int, int>{static_cast<int>(std::floor(p.x())),
                                   static_cast<int>(std::floor(p.y()))};
    };
    auto [sx, sy] = cell_of(maze.start);
    auto [gx, gy] = cell_of(maze.goal);

    // BFS over free cells.
    std::vector<std::vector<std::pair<int, int>>> parent(
        maze.height, std::vector<std::pair<int, int>>(maze.width, {-1, -1}));
    std::vector<std::vector<bool>> seen(maze.height, std::vector<bool>(maze.width, false));
    std::deque<std::pair<int, int>> q;
    q.emplace_back(sx, sy);
    seen[sy][sx] = true;
    const int dx[4] = {1, -1, 0, 0};
    const int dy[4] = {0, 0, 1, -1};
    while (!q.empty()) {
        auto [cx, cy] = q.front();
        q.pop_front();
        if (cx == gx && cy == gy) break;
        for (int d = 0; d < 4; ++d) {
            int nx = cx + dx[d], ny = cy + dy[d];
            if (nx < 0 || ny < 0 || nx >= maze.width || ny >= maze.height) continue;
            if (maze.is_wall(nx, ny) || seen[ny][nx]) continue;
            seen[ny][nx] = true;
            parent[ny][nx] = {cx, cy};
            q.emplace_back(nx, ny);
        }
    }
    if (!seen[gy][gx]) return {};

    std::vector<Eigen::Vector2d> path;
    for (std::pair<int, int> c = {gx, gy}; c != std::pair<int, int>{-1, -1};
         c = parent[c.second][c.first]) {
        path.push_back({c.first + 0.5, c.second + 0.5});
        if (c == std::pair<int, int>{sx, sy}) break;
    }
    std::reverse(path.begin(), path.end());
    path.front() = maze.start;
    path.back() = maze.goal;

    // Arc-length resampling to the requested horizon.
    std::vector<double> cum{0.0};
    for (size_t i = 1; i < path.size(); ++i)
        cum.push_back(cum.back() + (path[i] - path[i - 1]).norm());
    double total = cum.back();
    Trajectory out;
    out.points.resize(horizon);
    for (int i = 0; i < horizon; ++i) {
        double s = total * i / (horizon - 1);
        size_t j = std::upper_bound(cum.begin(), cum.end(), s) - cum.begin();
        j = std::min(std::max<size_t>(j, 1), path.size() - 1);
        double seg = cum[j] - cum[j - 1];
        double u = seg > 0.0 ? (s - cum[j - 1]) / seg : 0.0;
        out.points[i] = (1.0 - u) * path[j - 1] + u * path[j];
    }
    return out;
}

} // namespace diffsearch
