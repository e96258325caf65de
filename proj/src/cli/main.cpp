#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"
#include "metagap/errors.hpp"
#include "spec_file.hpp"

namespace {

int read_threads_env() {
    const char* raw = std::getenv("METAGAP_THREADS");
    if (!raw) return 1;
    try {
        const int n = std::stoi(raw);
        if (n < 1) throw std::invalid_argument("non-positive");
        return n;
    } catch (const std::exception&) {
        throw metagap::ValidationError(
            "METAGAP_THREADS must be a positive integer");
    }
}

}  // namespace

int main(int argc, char** argv) {
    using namespace metagap::cli;

    CLI::App app{"metagap: adaptive vs non-adaptive multi-task regression "
                 "experiments"};
    app.require_subcommand(1);

    std::string spec_path;
    std::string out_dir = "out";
    std::vector<long long> seed_override;

    struct Entry {
        const char* name;
        const char* help;
        int (*run)(const SpecView&, const RunOptions&);
    };
    const Entry entries[] = {
        {"fig-hardness",
         "Two-task solution coordinates and risks versus hard-task hardness",
         cmd_fig_hardness},
        {"fig-geography",
         "Risks and ratios while the cluster separation sweeps under fixed "
         "spread regimes",
         cmd_fig_geography},
        {"fig-envgrid",
         "Sampled task optima and both population solutions for the four "
         "reference environments",
         cmd_fig_envgrid},
        {"convergence",
         "Distance of trained solutions to population ones versus task or "
         "episode count",
         cmd_convergence},
        {"neuron",
         "One-neuron objective landscapes and stationary-point diagnostics",
         cmd_neuron},
        {"upweight",
         "Hard-task up-weighting sweep against meta-training in the hard/easy "
         "mixture",
         cmd_upweight},
        {"verify", "Cross-check suite (statistical identities, oracles, "
                   "gradients); exit 2 on failure",
         cmd_verify},
    };

    const Entry* selected = nullptr;
    for (const Entry& e : entries) {
        CLI::App* sub = app.add_subcommand(e.name, e.help);
        sub->add_option("--spec", spec_path,
                        "Spec file (TOML subset or JSON); omit for the "
                        "embedded defaults");
        sub->add_option("--seed", seed_override,
                        "Seed override (repeatable; replaces the spec seeds)");
        sub->add_option("--out", out_dir, "Output directory");
        sub->callback([&selected, &e] { selected = &e; });
    }

    CLI11_PARSE(app, argc, argv);

    try {
        RunOptions opt;
        opt.out_dir = out_dir;
        opt.seed_override = seed_override;
        opt.threads = read_threads_env();
        const SpecView spec(spec_path.empty()
                                ? nlohmann::json::object()
                                : load_spec_file(spec_path));
        return selected->run(spec, opt);
    } catch (const metagap::VerificationError& e) {
        std::cerr << "verification failure: " << e.what() << '\n';
        return 2;
    } catch (const metagap::DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << '\n';
        return 3;
    } catch (const metagap::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
