#include "diffsearch/plot.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "diffsearch/config.hpp"
#include "diffsearch/errors.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace diffsearch {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                          "#8c564b"};

std::string color_for(size_t i) { return kPalette[i % 6]; }

struct CurvePoint {
    double nfe = 0.0;
    double mean = 0.0;
    double se = 0.0;
};

double fmt_round(double v) { return std::round(v * 100.0) / 100.0; }

std::string num(double v) {
    std::ostringstream o;
    o << fmt_round(v);
    return o.str();
}

void svg_header(std::ostream& o, int w, int h) {
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\""
      << h << "\" viewBox=\"0 0 " << w << " " << h << "\">\n"
      << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::vector<std::vector<std::string>> rows;
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(std::move(cells));
    }
    return rows;
}

void write_curves(const std::string& dir, const std::string& metric, std::ostream& log) {
    std::ifstream in(dir + "/results.jsonl");
    if (!in) throw ConfigError("plot: missing " + dir + "/results.jsonl");

    // method -> budget -> (metric values, nfe values)
    std::map<std::string, std::map<double, std::pair<std::vector<double>, std::vector<double>>>>
        groups;
    std::string line;
    std::string ylabel = metric;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || j.value("failed", false)) continue;
        double y;
        if (metric == "auto") {
            if (j.contains("success")) {
                y = j["success"].get<bool>() ? 1.0 : 0.0;
                ylabel = "success rate";
            } else if (j.contains("target_mode")) {
                y = j["target_mode"].get<bool>() ? 1.0 : 0.0;
                ylabel = "target-mode rate";
            } else {
                continue;
            }
        } else {
            if (!j.contains(metric)) continue;
            if (j[metric].is_boolean()) y = j[metric].get<bool>() ? 1.0 : 0.0;
            else y = j[metric].get<double>();
        }
        auto& cell = groups[j.value("method", "?")][j.value("budget", 0.0)];
        cell.first.push_back(y);
        cell.second.push_back(j.value("nfe_total", 0.0));
    }
    if (groups.empty()) throw ConfigError("plot: no usable records in results.jsonl");

    std::map<std::string, std::vector<CurvePoint>> curves;
    double xmin = 1e300, xmax = 0.0, ymin = 1e300, ymax = -1e300;
    for (auto& [method, budgets] : groups) {
        for (auto& [budget, vals] : budgets) {
            CurvePoint p;
            for (double v : vals.second) p.nfe += v;
            p.nfe /= vals.second.size();
            for (double v : vals.first) p.mean += v;
            p.mean /= vals.first.size();
            if (vals.first.size() > 1) {
                double ss = 0.0;
                for (double v : vals.first) ss += (v - p.mean) * (v - p.mean);
                p.se = std::sqrt(ss / (vals.first.size() - 1) / vals.first.size());
            }
            if (p.nfe <= 0.0) p.nfe = budget > 0.0 ? budget : 1.0;
            curves[method].push_back(p);
            xmin = std::min(xmin, p.nfe);
            xmax = std::max(xmax, p.nfe);
            ymin = std::min(ymin, p.mean - p.se);
            ymax = std::max(ymax, p.mean + p.se);
        }
        std::sort(curves[method].begin(), curves[method].end(),
                  [](const CurvePoint& a, const CurvePoint& b) { return a.nfe < b.nfe; });
    }
    if (ymin > 0.0 && ymin < 0.2) ymin = 0.0;
    if (ymax < 1.0 && ymax > 0.8) ymax = 1.0;
    if (ymax <= ymin) ymax = ymin + 1.0;
    if (xmax <= xmin) xmax = xmin * 2.0;

    const int W = 640, H = 480, L = 70, R = 150, T = 30, B = 50;
    auto X = [&](double nfe) {
        return L + (std::log(nfe) - std::log(xmin)) / (std::log(xmax) - std::log(xmin))
                   * (W - L - R);
    };
    auto Y = [&](double v) { return H - B - (v - ymin) / (ymax - ymin) * (H - T - B); };

    std::ofstream o(dir + "/curves.svg");
    svg_header(o, W, H);
    o << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R
      << "\" height=\"" << H - T - B << "\" fill=\"none\" stroke=\"#333\"/>\n";

    // ticks: powers of 2 on x, fifths on y
    for (double tick = std::pow(2.0, std::ceil(std::log2(xmin))); tick <= xmax * 1.001;
         tick *= 2.0) {
        double x = X(tick);
        o << "<line x1=\"" << num(x) << "\" y1=\"" << H - B << "\" x2=\"" << num(x)
          << "\" y2=\"" << H - B + 5 << "\" stroke=\"#333\"/>\n"
          << "<text x=\"" << num(x) << "\" y=\"" << H - B + 18
          << "\" font-size=\"11\" text-anchor=\"middle\">" << static_cast<long>(tick)
          << "</text>\n";
    }
    for (int i = 0; i <= 5; ++i) {
        double v = ymin + (ymax - ymin) * i / 5.0;
        double y = Y(v);
        o << "<line x1=\"" << L - 5 << "\" y1=\"" << num(y) << "\" x2=\"" << L
          << "\" y2=\"" << num(y) << "\" stroke=\"#333\"/>\n"
          << "<text x=\"" << L - 8 << "\" y=\"" << num(y + 4)
          << "\" font-size=\"11\" text-anchor=\"end\">" << num(v) << "</text>\n";
    }
    o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12
      << "\" font-size=\"13\" text-anchor=\"middle\">NFE (log scale)</text>\n"
      << "<text x=\"18\" y=\"" << (T + H - B) / 2
      << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << (T + H - B) / 2 << ")\">" << ylabel << "</text>\n";

    size_t ci = 0;
    for (const auto& [method, pts] : curves) {
        std::string color = color_for(ci);
        // stderr band
        std::ostringstream band;
        for (const auto& p : pts) band << num(X(p.nfe)) << "," << num(Y(p.mean + p.se)) << " ";
        for (auto it = pts.rbegin(); it != pts.rend(); ++it)
            band << num(X(it->nfe)) << "," << num(Y(it->mean - it->se)) << " ";
        o << "<polygon points=\"" << band.str() << "\" fill=\"" << color
          << "\" opacity=\"0.15\"/>\n";
        std::ostringstream pl;
        for (const auto& p : pts) pl << num(X(p.nfe)) << "," << num(Y(p.mean)) << " ";
        o << "<polyline points=\"" << pl.str() << "\" fill=\"none\" stroke=\"" << color
          << "\" stroke-width=\"2\"/>\n";
        for (const auto& p : pts)
            o << "<circle cx=\"" << num(X(p.nfe)) << "\" cy=\"" << num(Y(p.mean))
              << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        o << "<rect x=\"" << W - R + 10 << "\" y=\"" << T + 10 + 20 * ci
          << "\" width=\"14\" height=\"4\" fill=\"" << color << "\"/>\n"
          << "<text x=\"" << W - R + 30 << "\" y=\"" << T + 17 + 20 * ci
          << "\" font-size=\"12\">" << method << "</text>\n";
        ++ci;
    }
    o << "</svg>\n";
    log << "wrote " << dir << "/curves.svg\n";
}

void write_scatter(const std::string& dir, std::ostream& log) {
    if (!fs::exists(dir + "/meta.json") || !fs::exists(dir + "/samples.csv")) {
        log << "scatter skipped: meta.json or samples.csv missing\n";
        return;
    }
    Experiment exp;
    try {
        std::ifstream meta(dir + "/meta.json");
        json mj = json::parse(meta);
        exp = parse_experiment(mj.at("config"), dir);
    } catch (const std::exception& e) {
        log << "scatter skipped: " << e.what() << "\n";
        return;
    }

    double lo_x, lo_y, hi_x, hi_y;
    if (exp.task == TaskKind::Maze) {
        lo_x = lo_y = 0.0;
        hi_x = exp.maze->width;
        hi_y = exp.maze->height;
    } else {
        lo_x = exp.oracle_lo.x();
        lo_y = exp.oracle_lo.y();
        hi_x = exp.oracle_hi.x();
        hi_y = exp.oracle_hi.y();
    }
    const int W = 560, H = 560, M = 20;
    double sx = (W - 2 * M) / (hi_x - lo_x);
    double sy = (H - 2 * M) / (hi_y - lo_y);
    auto X = [&](double x) { return M + (x - lo_x) * sx; };
    auto Y = [&](double y) { return M + (y - lo_y) * sy; };

    std::ofstream o(dir + "/scatter.svg");
    svg_header(o, W, H);

    if (exp.task == TaskKind::Maze) {
        for (const auto& box : exp.maze->wall_boxes)
            o << "<rect x=\"" << num(X(box.center.x() - box.half_width)) << "\" y=\""
              << num(Y(box.center.y() - box.half_width)) << "\" width=\""
              << num(2 * box.half_width * sx) << "\" height=\"" << num(2 * box.half_width * sy)
              << "\" fill=\"#444\"/>\n";
        o << "<circle cx=\"" << num(X(exp.maze->start.x())) << "\" cy=\""
          << num(Y(exp.maze->start.y())) << "\" r=\"5\" fill=\"#2ca02c\"/>\n"
          << "<circle cx=\"" << num(X(exp.maze->goal.x())) << "\" cy=\""
          << num(Y(exp.maze->goal.y())) << "\" r=\"" << num(exp.maze->goal_radius * sx)
          << "\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"2\"/>\n";
    } else {
        // density shading of the prior on a coarse grid
        const int G = 80;
        double vmax = -1e300;
        std::vector<double> lp(G * G);
        for (int iy = 0; iy < G; ++iy)
            for (int ix = 0; ix < G; ++ix) {
                Vec x(2);
                x << lo_x + (ix + 0.5) * (hi_x - lo_x) / G,
                     lo_y + (iy + 0.5) * (hi_y - lo_y) / G;
                lp[iy * G + ix] = exp.prior->log_density0(x);
                vmax = std::max(vmax, lp[iy * G + ix]);
            }
        for (int iy = 0; iy < G; ++iy)
            for (int ix = 0; ix < G; ++ix) {
                double rel = std::exp(lp[iy * G + ix] - vmax);
                if (rel < 0.02) continue;
                int shade = 255 - static_cast<int>(rel * 120.0);
                o << "<rect x=\"" << num(X(lo_x + ix * (hi_x - lo_x) / G)) << "\" y=\""
                  << num(Y(lo_y + iy * (hi_y - lo_y) / G)) << "\" width=\""
                  << num((hi_x - lo_x) / G * sx + 0.5) << "\" height=\""
                  << num((hi_y - lo_y) / G * sy + 0.5) << "\" fill=\"rgb(" << shade << ","
                  << shade << "," << shade << ")\"/>\n";
            }
    }

    auto rows = read_csv(dir + "/samples.csv");
    std::map<std::string, size_t> method_color;
    // group rows into per-(method,budget,seed) tracks for maze polylines
    std::map<std::string, std::vector<std::pair<double, double>>> tracks;
    for (size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() < 6) continue;
        const std::string& method = rows[i][0];
        if (!method_color.count(method)) {
            size_t idx = method_color.size();
            method_color[method] = idx;
        }
        double px = std::stod(rows[i][4]);
        double py = std::stod(rows[i][5]);
        if (exp.task == TaskKind::Maze) {
            tracks[method + "|" + rows[i][1] + "|" + rows[i][2]].push_back({px, py});
        } else {
            o << "<circle cx=\"" << num(X(px)) << "\" cy=\"" << num(Y(py))
              << "\" r=\"2.5\" fill=\"" << color_for(method_color[method])
              << "\" opacity=\"0.6\"/>\n";
        }
    }
    for (const auto& [key, pts] : tracks) {
        std::string method = key.substr(0, key.find('|'));
        std::ostringstream pl;
        for (const auto& [px, py] : pts) pl << num(X(px)) << "," << num(Y(py)) << " ";
        o << "<polyline points=\"" << pl.str() << "\" fill=\"none\" stroke=\""
          << color_for(method_color[method]) << "\" stroke-width=\"1.2\" opacity=\"0.5\"/>\n";
    }
    size_t ci = 0;
    for (const auto& [method, idx] : method_color) {
        o << "<rect x=\"" << 10 << "\" y=\"" << 10 + 18 * ci << "\" width=\"12\" height=\"12\" fill=\""
          << color_for(idx) << "\"/>\n"
          << "<text x=\"26\" y=\"" << 20 + 18 * ci << "\" font-size=\"12\">" << method
          << "</text>\n";
        ++ci;
    }
    o << "</svg>\n";
    log << "wrote " << dir << "/scatter.svg\n";
}

} // namespace

int plot_results(const std::string& results_dir, const std::string& metric,
                 std::ostream& log) {
    write_curves(results_dir, metric, log);
    write_scatter(results_dir, log);
    return 0;
}

} // namespace diffsearch
