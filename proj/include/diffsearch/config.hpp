#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "diffsearch/local_search.hpp"
#include "diffsearch/maze.hpp"
#include "diffsearch/prior.hpp"
#include "diffsearch/schedule.hpp"
#include "diffsearch/tree_search.hpp"
#include "diffsearch/verifier.hpp"

namespace diffsearch {

enum class TaskKind { Mixture, Maze };

struct RunPlan {
    std::vector<std::uint64_t> seeds;
    std::vector<double> budget_grid;  // NFE targets
    std::vector<std::string> methods; // subset of {bon, bfs, dfs}
    std::string output_dir = "results";
};

// A fully validated experiment: every section is checked and instantiated
// before any compute starts.
struct Experiment {
    std::string config_hash;      // FNV-1a of the canonical serialization
    std::string canonical;        // canonical JSON text (sorted keys)

    NoiseSchedule schedule;
    std::shared_ptr<ScorePrior> prior;
    std::shared_ptr<const GaussianMixturePrior> gmm;  // set for both tasks

    Verifier gradient_verifier;
    Verifier selection_verifier;

    GuidanceConfig guidance;
    double w_verifier = 0.0;
    double w_verifier_grad = 0.0;

    BfsConfig bfs;
    DfsConfig dfs;
    RunPlan run;

    TaskKind task = TaskKind::Mixture;
    int target_component = 0;
    double lambda = 1.0;

    // oracle section
    Eigen::Vector2d oracle_lo{-8.0, -8.0};
    Eigen::Vector2d oracle_hi{8.0, 8.0};
    int oracle_resolution = 512;
    int oracle_n_reject = 100000;
    int oracle_n_projections = 64;

    std::optional<MazeSpec> maze;
    int horizon = 64;
};

Experiment load_experiment(const std::string& path);
Experiment parse_experiment(const nlohmann::json& j, const std::string& base_dir);

// Sorted-key, locale-independent JSON text used for hashing and replay.
std::string canonical_dump(const nlohmann::json& j);
std::uint64_t fnv1a(const std::string& s);

// Per-method search parameters derived from one NFE target; the closed-form
// cost model is documented in docs/budgets.md.
struct BudgetedMethod {
    int K = 1;            // bon / bfs initial particles
    int B = 0;            // dfs backtrack budget
    double chain_cost = 0.0;  // NFE of one full unguided-or-guided chain
    double step_cost = 1.0;   // NFE of a single denoise step
};

BudgetedMethod derive_budget(const Experiment& exp, const std::string& method,
                             double nfe_target);

} // namespace diffsearch
