#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "diffsearch/config.hpp"

namespace diffsearch {

// One (seed, method, budget) cell of an experiment.
struct RunRecord {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string method;
    double budget = 0.0;
    double nfe_total = 0.0;
    long score_evals = 0;
    long verifier_evals = 0;
    long verifier_grad_evals = 0;
    double best_score = 0.0;
    double metric = 0.0;  // target-mode flag (mixture) or success flag (maze)
    bool failed = false;
    std::string error;

    Vec best_sample;      // samples.csv only
    double wall_ms = 0.0; // timing.csv only; never serialized into the JSON lines
};

// Deterministic serialization with a fixed key order; excludes wall-clock time
// so identical (config, seed) runs are byte-identical.
std::string record_json_line(const Experiment& exp, const RunRecord& r);

RunRecord run_cell(const Experiment& exp, std::uint64_t seed, const std::string& method,
                   double budget);

// Executes all cells on `workers` threads, writes results.jsonl, summary.csv,
// samples.csv, timing.csv, and meta.json under run.output_dir. Returns the
// number of newly computed cells; previously completed cells are skipped
// unless force is set.
int run_experiment(const Experiment& exp, bool force, int workers, std::ostream& log);

// Writes ground-truth fixtures (oracle.json + rejection_samples.csv) for the
// configured 2-D mixture target.
int oracle_experiment(const Experiment& exp, std::ostream& log);

int resolve_workers(int cli_workers);

} // namespace diffsearch
