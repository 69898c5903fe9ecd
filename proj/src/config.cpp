#include "diffsearch/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "diffsearch/errors.hpp"

using nlohmann::json;

namespace diffsearch {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw ConfigError(path + ": " + what);
}

const json& member(const json& j, const std::string& path, const std::string& key) {
    if (!j.is_object()) fail(path, "expected an object");
    auto it = j.find(key);
    if (it == j.end()) fail(path + "." + key, "missing");
    return *it;
}

double get_num(const json& j, const std::string& path, const std::string& key) {
    const json& v = member(j, path, key);
    if (!v.is_number()) fail(path + "." + key, "expected a number");
    return v.get<double>();
}

double get_num_or(const json& j, const std::string& path, const std::string& key,
                  double fallback) {
    if (!j.is_object() || !j.contains(key)) return fallback;
    return get_num(j, path, key);
}

int get_int(const json& j, const std::string& path, const std::string& key) {
    const json& v = member(j, path, key);
    if (!v.is_number_integer()) fail(path + "." + key, "expected an integer");
    return v.get<int>();
}

int get_int_or(const json& j, const std::string& path, const std::string& key,
               int fallback) {
    if (!j.is_object() || !j.contains(key)) return fallback;
    return get_int(j, path, key);
}

std::string get_str(const json& j, const std::string& path, const std::string& key) {
    const json& v = member(j, path, key);
    if (!v.is_string()) fail(path + "." + key, "expected a string");
    return v.get<std::string>();
}

std::string get_str_or(const json& j, const std::string& path, const std::string& key,
                       const std::string& fallback) {
    if (!j.is_object() || !j.contains(key)) return fallback;
    return get_str(j, path, key);
}

Vec get_vec(const json& j, const std::string& path, const std::string& key,
            int expect_size = -1) {
    const json& v = member(j, path, key);
    if (!v.is_array()) fail(path + "." + key, "expected an array of numbers");
    Vec out(v.size());
    for (size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number()) fail(path + "." + key, "expected an array of numbers");
        out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
    }
    if (expect_size >= 0 && out.size() != expect_size)
        fail(path + "." + key, "expected " + std::to_string(expect_size) + " entries");
    return out;
}

Mat get_mat(const json& j, const std::string& path, const std::string& key) {
    const json& v = member(j, path, key);
    if (!v.is_array() || v.empty()) fail(path + "." + key, "expected a matrix (array of rows)");
    size_t cols = 0;
    Mat out;
    for (size_t r = 0; r < v.size(); ++r) {
        if (!v[r].is_array()) fail(path + "." + key, "expected a matrix (array of rows)");
        if (r == 0) {
            cols = v[r].size();
            out.resize(v.size(), cols);
        } else if (v[r].size() != cols) {
            fail(path + "." + key, "ragged matrix");
        }
        for (size_t c = 0; c < cols; ++c) {
            if (!v[r][c].is_number()) fail(path + "." + key, "expected numeric entries");
            out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                v[r][c].get<double>();
        }
    }
    return out;
}

std::vector<int> default_bfs_evals(int T) {
    return {3 * T / 4, T / 2, T / 4};
}

std::vector<int> default_dfs_evals(int T, TaskKind task) {
    if (task == TaskKind::Mixture) return {T / 2, T / 4};
    std::vector<int> s;
    for (int t = 3 * T / 4; t >= 1; --t) s.push_back(t);
    return s;
}

std::shared_ptr<GaussianMixturePrior> parse_gmm(const json& pj, const std::string& path) {
    const json& comps = member(pj, path, "components");
    if (!comps.is_array() || comps.empty()) fail(path + ".components", "expected a nonempty array");
    std::vector<MixtureComponent> cs;
    for (size_t i = 0; i < comps.size(); ++i) {
        std::string cpath = path + ".components[" + std::to_string(i) + "]";
        MixtureComponent c;
        c.weight = get_num(comps[i], cpath, "w");
        c.mean = get_vec(comps[i], cpath, "mu");
        if (comps[i].contains("cov")) {
            c.cov = get_mat(comps[i], cpath, "cov");
        } else {
            c.cov = Mat::Identity(c.mean.size(), c.mean.size());
        }
        cs.push_back(std::move(c));
    }
    try {
        return std::make_shared<GaussianMixturePrior>(std::move(cs));
    } catch (const std::exception& e) {
        fail(path, e.what());
    }
}

Verifier parse_verifier(const json& vj, const std::string& path,
                        const std::shared_ptr<const GaussianMixturePrior>& gmm,
                        const std::optional<MazeSpec>& maze, int* target_out) {
    std::string kind = get_str(vj, path, "kind");
    if (kind == "region") {
        Vec center = get_vec(vj, path, "center");
        double radius = get_num(vj, path, "radius");
        double sharp = get_num_or(vj, path, "sharpness", 1.0);
        if (radius <= 0.0 || sharp <= 0.0) fail(path, "radius and sharpness must be positive");
        return region_verifier(center, radius, sharp);
    }
    if (kind == "mode") {
        if (!gmm) fail(path, "mode verifier requires a Gaussian-mixture prior");
        int target = get_int(vj, path, "target");
        if (target < 0 || target >= gmm->n_components())
            fail(path + ".target", "component index out of range");
        double temp = get_num_or(vj, path, "temperature", 1.0);
        if (temp <= 0.0) fail(path + ".temperature", "must be positive");
        if (target_out) *target_out = target;
        return mode_verifier(gmm, target, temp);
    }
    if (kind == "maze") {
        if (!maze) fail(path, "maze verifier requires a maze section");
        return maze_verifier(*maze);
    }
    if (kind == "power") {
        double lambda = get_num(vj, path, "lambda");
        if (lambda < 0.0) fail(path + ".lambda", "must be nonnegative");
        Verifier base = parse_verifier(member(vj, path, "base"), path + ".base",
                                       gmm, maze, target_out);
        return power_verifier(base, lambda);
    }
    fail(path + ".kind", "unknown verifier kind '" + kind + "'");
}

} // namespace

std::string canonical_dump(const json& j) {
    // nlohmann objects iterate in sorted key order; dump() is locale-free.
    return j.dump();
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

Experiment load_experiment(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config: " + std::string(e.what()));
    }
    std::string base_dir = ".";
    if (auto slash = path.find_last_of('/'); slash != std::string::npos)
        base_dir = path.substr(0, slash);
    return parse_experiment(j, base_dir);
}

Experiment parse_experiment(const json& j, const std::string& base_dir) {
    Experiment exp;
    exp.canonical = canonical_dump(j);
    {
        std::ostringstream h;
        h << std::hex << fnv1a(exp.canonical);
        exp.config_hash = h.str();
    }

    std::string task = get_str_or(j, "config", "task", "mixture");
    if (task == "mixture") exp.task = TaskKind::Mixture;
    else if (task == "maze") exp.task = TaskKind::Maze;
    else fail("task", "expected 'mixture' or 'maze'");

    // schedule
    const json& sj = member(j, "config", "schedule");
    int T = get_int(sj, "schedule", "steps");
    if (T < 2) fail("schedule.steps", "must be >= 2");
    double floor = get_num_or(sj, "schedule", "alpha_floor", 1e-3);
    ScheduleKind skind = schedule_kind_from_string(get_str_or(sj, "schedule", "kind", "cosine-vp"));
    exp.schedule = build_schedule(skind, T, floor);

    // maze (before prior: trajectory priors anchor at the maze endpoints)
    if (j.contains("maze")) {
        const json& mj = j.at("maze");
        double goal_radius = get_num_or(mj, "maze", "goal_radius", 0.5);
        if (mj.contains("file")) {
            std::string f = get_str(mj, "maze", "file");
            std::string full = f.front() == '/' ? f : base_dir + "/" + f;
            exp.maze = load_maze(full, goal_radius);
        } else if (mj.contains("generate")) {
            const json& gj = mj.at("generate");
            int w = get_int(gj, "maze.generate", "width");
            int h = get_int(gj, "maze.generate", "height");
            int seed = get_int_or(gj, "maze.generate", "seed", 0);
            MazeSpec m = generate_maze(w, h, static_cast<std::uint64_t>(seed));
            m.goal_radius = goal_radius;
            exp.maze = std::move(m);
        } else {
            fail("maze", "expected 'file' or 'generate'");
        }
        exp.horizon = get_int_or(mj, "maze", "horizon", 64);
        if (exp.horizon < 2) fail("maze.horizon", "must be >= 2");
    }
    if (exp.task == TaskKind::Maze && !exp.maze) fail("maze", "required for the maze task");

    // prior
    const json& pj = member(j, "config", "prior");
    std::string pkind = get_str(pj, "prior", "kind");
    if (pkind == "gmm") {
        auto gmm = parse_gmm(pj, "prior");
        exp.gmm = gmm;
        exp.prior = gmm;
    } else if (pkind == "trajectory") {
        TrajectoryPriorSpec spec;
        spec.horizon = get_int_or(pj, "prior", "horizon", exp.horizon);
        exp.horizon = spec.horizon;
        if (exp.maze) {
            spec.start = exp.maze->start;
            spec.goal = exp.maze->goal;
        }
        if (pj.contains("start")) {
            Vec s = get_vec(pj, "prior", "start", 2);
            spec.start = {s[0], s[1]};
        }
        if (pj.contains("goal")) {
            Vec g = get_vec(pj, "prior", "goal", 2);
            spec.goal = {g[0], g[1]};
        }
        if (!exp.maze && !pj.contains("start"))
            fail("prior", "trajectory prior needs start/goal or a maze section");
        spec.anchor_kappa = get_num_or(pj, "prior", "anchor_kappa", 1e4);
        spec.smoothness_weight = get_num_or(pj, "prior", "smoothness_weight", 1.0);
        spec.ridge = get_num_or(pj, "prior", "ridge", 0.0);
        auto gmm = std::make_shared<GaussianMixturePrior>(build_trajectory_prior(spec));
        exp.gmm = gmm;
        exp.prior = gmm;
    } else {
        fail("prior.kind", "expected 'gmm' or 'trajectory'");
    }

    // verifier
    const json& vj = member(j, "config", "verifier");
    if (get_str(vj, "verifier", "kind") == "double") {
        exp.gradient_verifier = parse_verifier(member(vj, "verifier", "gradient"),
                                               "verifier.gradient", exp.gmm, exp.maze,
                                               &exp.target_component);
        exp.selection_verifier = parse_verifier(member(vj, "verifier", "selection"),
                                                "verifier.selection", exp.gmm, exp.maze,
                                                &exp.target_component);
        if (!exp.gradient_verifier.differentiable())
            fail("verifier.gradient", "must be differentiable");
    } else {
        Verifier v = parse_verifier(vj, "verifier", exp.gmm, exp.maze, &exp.target_component);
        exp.gradient_verifier = v;
        exp.selection_verifier = v;
    }

    // sampler + nfe weights
    if (j.contains("sampler")) {
        const json& smj = j.at("sampler");
        exp.guidance.sampler = sampler_kind_from_string(get_str_or(smj, "sampler", "kind", "ddim"));
        exp.guidance.variance =
            variance_choice_from_string(get_str_or(smj, "sampler", "variance", "beta_tilde"));
    }
    if (j.contains("nfe")) {
        const json& nj = j.at("nfe");
        exp.w_verifier = get_num_or(nj, "nfe", "w_verifier", 0.0);
        exp.w_verifier_grad = get_num_or(nj, "nfe", "w_verifier_grad", 0.0);
        if (exp.w_verifier < 0.0 || exp.w_verifier_grad < 0.0)
            fail("nfe", "weights must be nonnegative");
    }

    // local search
    if (j.contains("local")) {
        const json& lj = j.at("local");
        exp.guidance.rho_bar = get_num_or(lj, "local", "rho_bar", 0.0);
        exp.guidance.mu_bar = get_num_or(lj, "local", "mu_bar", 0.0);
        exp.guidance.gamma_bar = get_num_or(lj, "local", "gamma_bar", 0.0);
        exp.guidance.n_mc = get_int_or(lj, "local", "n_mc", 4);
        exp.guidance.n_recur = get_int_or(lj, "local", "n_recur", 0);
        exp.guidance.n_iter = get_int_or(lj, "local", "n_iter", 1);
        exp.guidance.strength_schedule =
            strength_schedule_from_string(get_str_or(lj, "local", "schedule", "increase"));
        if (exp.guidance.rho_bar < 0.0 || exp.guidance.mu_bar < 0.0 ||
            exp.guidance.gamma_bar < 0.0)
            fail("local", "guidance strengths must be nonnegative");
        if (exp.guidance.n_recur < 0) fail("local.n_recur", "must be >= 0");
        if (exp.guidance.n_iter < 1) fail("local.n_iter", "must be >= 1");
        if (exp.guidance.n_mc < 1) fail("local.n_mc", "must be >= 1");
    }
    if (exp.guidance.guidance_active() && !exp.gradient_verifier.differentiable())
        fail("local", "guidance requires a differentiable verifier");

    // tree search
    const json sr = j.contains("search") ? j.at("search") : json::object();
    auto parse_evals = [&](const char* key, std::vector<int> fallback) {
        if (!sr.contains(key)) return fallback;
        const json& a = sr.at(key);
        if (!a.is_array()) fail(std::string("search.") + key, "expected an array");
        std::vector<int> out;
        for (const auto& e : a) {
            if (!e.is_number_integer()) fail(std::string("search.") + key, "expected integers");
            int t = e.get<int>();
            if (t < 1 || t > T - 1) fail(std::string("search.") + key, "timesteps must be in [1, T-1]");
            out.push_back(t);
        }
        return out;
    };
    exp.bfs.eval_steps = parse_evals("eval_steps", default_bfs_evals(T));
    exp.bfs.tau_bar = get_num_or(sr, "search", "tau_bar", 1.0);
    if (exp.bfs.tau_bar < 0.0) fail("search.tau_bar", "must be nonnegative");
    exp.bfs.tau_schedule =
        strength_schedule_from_string(get_str_or(sr, "search", "tau_schedule", "increase"));
    exp.bfs.mode = bfs_mode_from_string(get_str_or(sr, "search", "mode", "resample"));
    exp.bfs.rounding =
        rounding_from_string(get_str_or(sr, "search", "rounding", "largest-remainder"));

    exp.dfs.eval_steps = parse_evals("dfs_eval_steps", default_dfs_evals(T, exp.task));
    exp.dfs.delta_T = get_int_or(sr, "search", "delta_T", std::max(1, T / 4));
    if (exp.dfs.delta_T < 1) fail("search.delta_T", "must be >= 1");
    exp.dfs.delta_bar = get_num_or(sr, "search", "delta_bar", 0.0);
    exp.dfs.threshold_schedule =
        strength_schedule_from_string(get_str_or(sr, "search", "threshold_schedule", "constant"));

    // oracle
    if (j.contains("oracle")) {
        const json& oj = j.at("oracle");
        if (oj.contains("bounds")) {
            const json& b = oj.at("bounds");
            if (!b.is_array() || b.size() != 2) fail("oracle.bounds", "expected [[lo],[hi]]");
            Mat bm = get_mat(oj, "oracle", "bounds");
            if (bm.rows() != 2 || bm.cols() != 2) fail("oracle.bounds", "expected [[lo_x,lo_y],[hi_x,hi_y]]");
            exp.oracle_lo = {bm(0, 0), bm(0, 1)};
            exp.oracle_hi = {bm(1, 0), bm(1, 1)};
            if (!(exp.oracle_hi.x() > exp.oracle_lo.x() && exp.oracle_hi.y() > exp.oracle_lo.y()))
                fail("oracle.bounds", "empty box");
        }
        exp.oracle_resolution = get_int_or(oj, "oracle", "resolution", 512);
        if (exp.oracle_resolution < 2) fail("oracle.resolution", "must be >= 2");
        exp.oracle_n_reject = get_int_or(oj, "oracle", "n_reject", 100000);
        exp.oracle_n_projections = get_int_or(oj, "oracle", "n_projections", 64);
        exp.lambda = get_num_or(oj, "oracle", "lambda", 1.0);
        if (exp.lambda < 0.0) fail("oracle.lambda", "must be nonnegative");
    }

    // run plan
    const json& rj = member(j, "config", "run");
    const json& seeds = member(rj, "run", "seeds");
    if (!seeds.is_array() || seeds.empty()) fail("run.seeds", "expected a nonempty array");
    for (const auto& s : seeds) {
        if (!s.is_number_integer() || s.get<long long>() < 0)
            fail("run.seeds", "expected nonnegative integers");
        exp.run.seeds.push_back(s.get<std::uint64_t>());
    }
    const json& grid = member(rj, "run", "budget_grid");
    if (!grid.is_array() || grid.empty()) fail("run.budget_grid", "expected a nonempty array");
    for (const auto& b : grid) {
        if (!b.is_number() || b.get<double>() <= 0.0)
            fail("run.budget_grid", "expected positive NFE targets");
        exp.run.budget_grid.push_back(b.get<double>());
    }
    const json& methods = member(rj, "run", "methods");
    if (!methods.is_array() || methods.empty()) fail("run.methods", "expected a nonempty array");
    for (const auto& m : methods) {
        std::string name = m.is_string() ? m.get<std::string>() : "";
        if (name != "bon" && name != "bfs" && name != "dfs")
            fail("run.methods", "expected 'bon', 'bfs', or 'dfs'");
        exp.run.methods.push_back(name);
    }
    exp.run.output_dir = get_str_or(rj, "run", "output_dir", "results");
    if (!exp.run.output_dir.empty() && exp.run.output_dir.front() != '/')
        exp.run.output_dir = base_dir + "/" + exp.run.output_dir;

    return exp;
}

BudgetedMethod derive_budget(const Experiment& exp, const std::string& method,
                             double nfe_target) {
    const int T = exp.schedule.T;
    const GuidanceConfig& g = exp.guidance;
    BudgetedMethod out;

    // One denoise transition: (n_recur + 1) score evals, and when guidance is
    // on, (n_recur + 1)(n_iter + 1) verifier-gradient evals.
    double per_step = (g.n_recur + 1)
        * (1.0 + (g.guidance_active() ? exp.w_verifier_grad * (g.n_iter + 1) : 0.0));
    out.step_cost = per_step;
    out.chain_cost = T * per_step;

    double eval_cost = 1.0 + exp.w_verifier;  // intermediate f(x0|t): 1 score + 1 f

    if (method == "bon") {
        double per_chain = out.chain_cost + exp.w_verifier;  // terminal selection eval
        out.K = std::max(1, static_cast<int>(std::floor(nfe_target / per_chain)));
    } else if (method == "bfs") {
        double per_chain;
        if (exp.bfs.mode == BfsMode::Prune && !exp.bfs.eval_steps.empty()) {
            // Pruned particles only pay for the descent to the first
            // evaluation; admit by that minimum cost and let the in-run cap
            // shed whatever the realized survival cannot afford.
            int first = *std::max_element(exp.bfs.eval_steps.begin(),
                                          exp.bfs.eval_steps.end());
            per_chain = (T - first) * per_step + eval_cost;
        } else {
            per_chain = out.chain_cost + exp.w_verifier
                + eval_cost * static_cast<double>(exp.bfs.eval_steps.size());
        }
        out.K = std::max(1, static_cast<int>(std::floor(nfe_target / per_chain)));
    } else if (method == "dfs") {
        double slack = nfe_target - out.chain_cost - exp.w_verifier
            - eval_cost * static_cast<double>(exp.dfs.eval_steps.size());
        double per_backtrack = exp.dfs.delta_T * per_step + eval_cost;
        out.B = std::max(0, static_cast<int>(std::floor(slack / per_backtrack)));
    } else {
        throw ArgumentError("derive_budget: unknown method '" + method + "'");
    }
    return out;
}

} // namespace diffsearch
