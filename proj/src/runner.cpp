#include "diffsearch/runner.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <thread>

#include "diffsearch/errors.hpp"
#include "diffsearch/oracle.hpp"

using nlohmann::json;
using nlohmann::ordered_json;

namespace fs = std::filesystem;

namespace diffsearch {

namespace {

std::uint64_t double_bits(double d) {
    std::uint64_t u;
    std::memcpy(&u, &d, sizeof(u));
    return u;
}

std::uint64_t cell_key(const Experiment& exp, std::uint64_t seed, const std::string& method,
                       double budget) {
    std::uint64_t k = mix_keys(fnv1a(exp.config_hash), seed + 0x9E3779B97F4A7C15ULL);
    return mix_keys(k, mix_keys(fnv1a(method), double_bits(budget)));
}

std::string budget_text(double budget) {
    return json(budget).dump();  // shortest round-trip representation
}

struct Cell {
    std::uint64_t seed;
    std::string method;
    double budget;
};

std::vector<Cell> all_cells(const Experiment& exp) {
    std::vector<Cell> cells;
    for (std::uint64_t seed : exp.run.seeds)
        for (const std::string& method : exp.run.methods)
            for (double budget : exp.run.budget_grid)
                cells.push_back({seed, method, budget});
    return cells;
}

} // namespace

RunRecord run_cell(const Experiment& exp, std::uint64_t seed, const std::string& method,
                   double budget) {
    RunRecord r;
    r.config_hash = exp.config_hash;
    r.seed = seed;
    r.method = method;
    r.budget = budget;

    auto t0 = std::chrono::steady_clock::now();
    try {
        BudgetedMethod bm = derive_budget(exp, method, budget);
        NfeLedger ledger;
        ledger.w_verifier = exp.w_verifier;
        ledger.w_verifier_grad = exp.w_verifier_grad;

        StepFn step = make_guided_step(*exp.prior, exp.gradient_verifier, exp.schedule,
                                       exp.guidance);
        RngStream rng(cell_key(exp, seed, method, budget));

        SearchReport report;
        if (method == "bon") {
            report = best_of_n(*exp.prior, exp.selection_verifier, exp.schedule, step,
                               bm.K, rng, ledger);
        } else if (method == "bfs") {
            BfsConfig c = exp.bfs;
            c.K = bm.K;
            c.nfe_cap = budget;
            c.step_cost = bm.step_cost;
            report = bfs_search(*exp.prior, exp.selection_verifier, exp.schedule, step, c,
                                rng, ledger);
        } else if (method == "dfs") {
            DfsConfig c = exp.dfs;
            c.B = bm.B;
            c.nfe_cap = budget;
            c.step_cost = bm.step_cost;
            report = dfs_search(*exp.prior, exp.selection_verifier, exp.schedule, step, c,
                                rng, ledger);
        } else {
            throw ArgumentError("run_cell: unknown method '" + method + "'");
        }

        r.nfe_total = report.nfe.total();
        r.score_evals = report.nfe.score_evals;
        r.verifier_evals = report.nfe.verifier_evals;
        r.verifier_grad_evals = report.nfe.verifier_grad_evals;
        r.best_score = report.best_score;
        r.best_sample = report.best_sample;
        if (exp.task == TaskKind::Mixture) {
            r.metric = exp.gmm->nearest_component(report.best_sample) == exp.target_component
                           ? 1.0 : 0.0;
        } else {
            r.metric = check_success(*exp.maze, Trajectory::from_flat(report.best_sample))
                           ? 1.0 : 0.0;
        }
    } catch (const std::exception& e) {
        r.failed = true;
        r.error = e.what();
    }
    auto t1 = std::chrono::steady_clock::now();
    r.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    return r;
}

std::string record_json_line(const Experiment& exp, const RunRecord& r) {
    ordered_json j;
    j["config_hash"] = r.config_hash;
    j["seed"] = r.seed;
    j["method"] = r.method;
    j["budget"] = r.budget;
    j["nfe_total"] = r.nfe_total;
    j["score_evals"] = r.score_evals;
    j["verifier_evals"] = r.verifier_evals;
    j["verifier_grad_evals"] = r.verifier_grad_evals;
    j["best_score"] = r.best_score;
    j[exp.task == TaskKind::Maze ? "success" : "target_mode"] = r.metric != 0.0;
    j["failed"] = r.failed;
    if (r.failed) j["error"] = r.error;
    return j.dump();
}

int resolve_workers(int cli_workers) {
    if (const char* env = std::getenv("DIFFSEARCH_WORKERS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    if (cli_workers >= 1) return cli_workers;
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

int run_experiment(const Experiment& exp, bool force, int workers, std::ostream& log) {
    fs::create_directories(exp.run.output_dir);
    const std::string results_path = exp.run.output_dir + "/results.jsonl";
    const std::string summary_path = exp.run.output_dir + "/summary.csv";
    const std::string samples_path = exp.run.output_dir + "/samples.csv";
    const std::string timing_path = exp.run.output_dir + "/timing.csv";
    const std::string meta_path = exp.run.output_dir + "/meta.json";

    // Previously completed cells (same config hash) are skipped unless forced.
    std::set<std::string> done;
    std::map<std::pair<std::string, std::string>, std::vector<double>> metric_groups;
    if (!force && fs::exists(results_path)) {
        std::ifstream in(results_path);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json j = json::parse(line, nullptr, false);
            if (j.is_discarded() || j.value("config_hash", "") != exp.config_hash) continue;
            std::string budget = j.at("budget").dump();
            done.insert(j.at("seed").dump() + "|" + j.value("method", "") + "|" + budget);
            double metric = 0.0;
            if (j.contains("success")) metric = j["success"].get<bool>() ? 1.0 : 0.0;
            if (j.contains("target_mode")) metric = j["target_mode"].get<bool>() ? 1.0 : 0.0;
            if (!j.value("failed", false))
                metric_groups[{j.value("method", ""), budget}].push_back(metric);
        }
    }
    if (force) {
        fs::remove(results_path);
        fs::remove(samples_path);
        fs::remove(timing_path);
    }

    std::vector<Cell> cells = all_cells(exp);
    std::vector<int> todo;
    for (size_t i = 0; i < cells.size(); ++i) {
        std::string key = std::to_string(cells[i].seed) + "|" + cells[i].method + "|"
                        + budget_text(cells[i].budget);
        if (!done.count(key)) todo.push_back(static_cast<int>(i));
    }

    std::vector<RunRecord> records(cells.size());
    std::atomic<size_t> next{0};
    auto work = [&]() {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= todo.size()) return;
            const Cell& c = cells[todo[i]];
            records[todo[i]] = run_cell(exp, c.seed, c.method, c.budget);
        }
    };
    int n_workers = std::max(1, workers);
    {
        std::vector<std::thread> pool;
        for (int w = 1; w < n_workers; ++w) pool.emplace_back(work);
        work();
        for (auto& th : pool) th.join();
    }

    // Single writer, cell order fixed by the config regardless of worker count.
    bool fresh_samples = !fs::exists(samples_path) || fs::file_size(samples_path) == 0;
    bool fresh_timing = !fs::exists(timing_path) || fs::file_size(timing_path) == 0;
    std::ofstream out(results_path, std::ios::app);
    std::ofstream samples(samples_path, std::ios::app);
    std::ofstream timing(timing_path, std::ios::app);
    if (fresh_samples) samples << "method,budget,seed,idx,x,y\n";
    if (fresh_timing) timing << "method,budget,seed,wall_ms\n";
    for (int i : todo) {
        const RunRecord& r = records[i];
        out << record_json_line(exp, r) << "\n";
        timing << r.method << "," << budget_text(r.budget) << "," << r.seed << ","
               << r.wall_ms << "\n";
        if (!r.failed) {
            metric_groups[{r.method, budget_text(r.budget)}].push_back(r.metric);
            if (exp.task == TaskKind::Mixture && r.best_sample.size() == 2) {
                samples << r.method << "," << budget_text(r.budget) << "," << r.seed
                        << ",0," << r.best_sample[0] << "," << r.best_sample[1] << "\n";
            } else if (exp.task == TaskKind::Maze) {
                Trajectory tr = Trajectory::from_flat(r.best_sample);
                for (int p = 0; p < tr.horizon(); ++p)
                    samples << r.method << "," << budget_text(r.budget) << "," << r.seed
                            << "," << p << "," << tr.points[p].x() << ","
                            << tr.points[p].y() << "\n";
            }
        }
    }
    out.close();

    std::ofstream summary(summary_path);
    summary << "method,budget,mean,stderr\n";
    for (const std::string& method : exp.run.methods) {
        for (double budget : exp.run.budget_grid) {
            const auto& vals = metric_groups[{method, budget_text(budget)}];
            double mean = 0.0, se = 0.0;
            if (!vals.empty()) {
                for (double v : vals) mean += v;
                mean /= vals.size();
                if (vals.size() > 1) {
                    double ss = 0.0;
                    for (double v : vals) ss += (v - mean) * (v - mean);
                    se = std::sqrt(ss / (vals.size() - 1) / vals.size());
                }
            }
            summary << method << "," << budget_text(budget) << "," << mean << "," << se
                    << "\n";
        }
    }

    std::ofstream meta(meta_path);
    ordered_json mj;
    mj["config_hash"] = exp.config_hash;
    mj["config"] = json::parse(exp.canonical);
    meta << mj.dump(2) << "\n";

    log << "computed " << todo.size() << " of " << cells.size() << " cells -> "
        << exp.run.output_dir << "\n";
    return static_cast<int>(todo.size());
}

int oracle_experiment(const Experiment& exp, std::ostream& log) {
    if (!exp.gmm || exp.prior->dim() != 2)
        throw ConfigError("oracle: requires a 2-dimensional mixture target");
    fs::create_directories(exp.run.output_dir);

    GridDensity grid = grid_target(*exp.prior, exp.selection_verifier, exp.lambda,
                                   exp.oracle_lo, exp.oracle_hi, exp.oracle_resolution);

    RngStream rng(mix_keys(fnv1a(exp.config_hash), 0x0AC1EULL));
    double M = exp.lambda == 0.0 ? 1.0
             : std::pow(exp.selection_verifier.sup_score(), exp.lambda);
    RngStream rej = rng.child(1);
    std::vector<Vec> samples = rejection_samples(*exp.prior, exp.selection_verifier,
                                                 exp.lambda, M, exp.oracle_n_reject, rej);
    RngStream imp = rng.child(2);

    ordered_json j;
    j["config_hash"] = exp.config_hash;
    j["log_z"] = grid.log_z;
    std::vector<double> masses;
    for (int k = 0; k < exp.gmm->n_components(); ++k)
        masses.push_back(grid_mode_mass(grid, *exp.gmm, k));
    j["grid_mode_mass"] = masses;
    j["target_component"] = exp.target_component;
    j["rejection_mode_mass"] = sample_mode_mass(samples, *exp.gmm, exp.target_component);
    j["importance_mode_mass"] = importance_mode_mass(*exp.gmm, exp.selection_verifier,
                                                     exp.lambda, exp.target_component,
                                                     exp.oracle_n_reject, imp);
    j["n_samples"] = samples.size();

    std::ofstream out(exp.run.output_dir + "/oracle.json");
    out << j.dump(2) << "\n";
    std::ofstream csv(exp.run.output_dir + "/rejection_samples.csv");
    csv << "x,y\n";
    for (const Vec& s : samples) csv << s[0] << "," << s[1] << "\n";

    log << "oracle fixtures -> " << exp.run.output_dir << "\n";
    return 0;
}

} // namespace diffsearch
