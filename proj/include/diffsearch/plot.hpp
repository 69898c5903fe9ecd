#pragma once

#include <iosfwd>
#include <string>

namespace diffsearch {

// Renders curves.svg (task metric vs NFE, one curve per method with stderr
// bands) and scatter.svg (samples over the maze or the prior density) from a
// results directory produced by run_experiment. `metric` selects the y-axis
// field; "auto" uses the task's success / target-mode flag.
int plot_results(const std::string& results_dir, const std::string& metric,
                 std::ostream& log);

} // namespace diffsearch
