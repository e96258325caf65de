#pragma once

#include <string>
#include <vector>

#include "spec_file.hpp"

namespace metagap::cli {

/// Resolved command-line options shared by every subcommand.
struct RunOptions {
    std::string out_dir = ".";
    std::vector<long long> seed_override;  ///< --seed; empty keeps spec seeds
    int threads = 1;                       ///< from METAGAP_THREADS
};

// Each command reads its parameters from the spec view (every field has an
// embedded default reproducing the reference configuration), writes CSV/JSON
// into opt.out_dir, and returns 0. Failures surface as exceptions which
// main() maps onto exit codes.
int cmd_fig_hardness(const SpecView& spec, const RunOptions& opt);
int cmd_fig_geography(const SpecView& spec, const RunOptions& opt);
int cmd_fig_envgrid(const SpecView& spec, const RunOptions& opt);
int cmd_convergence(const SpecView& spec, const RunOptions& opt);
int cmd_neuron(const SpecView& spec, const RunOptions& opt);
int cmd_upweight(const SpecView& spec, const RunOptions& opt);
int cmd_verify(const SpecView& spec, const RunOptions& opt);

}  // namespace metagap::cli
