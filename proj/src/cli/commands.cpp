#include "commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <vector>

#include <json.hpp>

#include "csv.hpp"
#include "metagap/closed_form.hpp"
#include "metagap/empirical.hpp"
#include "metagap/errors.hpp"
#include "metagap/monte_carlo.hpp"
#include "metagap/neuron.hpp"
#include "metagap/rng.hpp"
#include "metagap/task_env.hpp"

namespace metagap::cli {

namespace {

using nlohmann::json;

std::string out_path(const RunOptions& opt, const std::string& name) {
    std::filesystem::create_directories(opt.out_dir);
    return (std::filesystem::path(opt.out_dir) / name).string();
}

std::vector<long long> resolve_seeds(const SpecView& spec,
                                     const RunOptions& opt,
                                     std::vector<long long> fallback) {
    if (!opt.seed_override.empty()) return opt.seed_override;
    auto seeds = spec.integers("seeds", std::move(fallback));
    if (seeds.empty()) throw ValidationError("seed list must be non-empty");
    return seeds;
}

void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open output file '" + path + "'");
    out << j.dump(2) << '\n';
}

/// The two-task pool w₁* = +1_d (hard), w₂* = −1_d (easy).
TaskEnvironment two_task_pm_ones(double rho_hard, double rho_easy, int d,
                                 double noise_var) {
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(d);
    return make_two_task_env(rho_hard, rho_easy, ones, -ones, noise_var);
}

/// Mean and 95% half-width across per-seed values.
std::pair<double, double> seed_mean_ci(const std::vector<double>& values) {
    Welford wf;
    for (double v : values) wf.add(v);
    return {wf.mean(), 1.96 * wf.std_error()};
}

double slope_loglog(const std::vector<double>& xs,
                    const std::vector<double>& ys) {
    const std::size_t n = xs.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += std::log(xs[i]);
        my += std::log(ys[i]);
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = std::log(xs[i]) - mx;
        num += dx * (std::log(ys[i]) - my);
        den += dx * dx;
    }
    if (den == 0.0) throw ValidationError("slope fit needs >= 2 distinct values");
    return num / den;
}

}  // namespace

// ---------------------------------------------------------------------------
// fig-hardness: two-task solution coordinates and risks versus ρ_H, with
// SGD-trained counterparts.
// ---------------------------------------------------------------------------

int cmd_fig_hardness(const SpecView& spec, const RunOptions& opt) {
    const int d = static_cast<int>(spec.integer("env.dim", 10));
    const double noise_var = spec.number("env.noise_var", 0.01);
    const double rho_easy = spec.number("env.rho_easy", 1.0);
    const double alpha = spec.number("algo.alpha", 1.0 / rho_easy);
    const auto rho_values = spec.numbers(
        "sweep.values",
        {0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0});
    const auto m_values = spec.integers("algo.m_values", {100, 2000});
    const auto seeds = resolve_seeds(spec, opt, {101, 202});

    SgdConfig nal_cfg;
    nal_cfg.meta_lr = spec.number("sgd.meta_lr_nal", 0.025);
    nal_cfg.iterations = spec.integer("sgd.iterations", 3000);
    nal_cfg.inner_lr = alpha;
    SgdConfig maml_cfg = nal_cfg;
    maml_cfg.meta_lr = spec.number("sgd.meta_lr_maml", 0.25);
    const int n_per_task = static_cast<int>(spec.integer("sgd.n_per_task", 50));
    const int n_outer = static_cast<int>(spec.integer("sgd.n_outer", 25));

    CsvWriter csv(out_path(opt, "fig_hardness.csv"),
                  {"rho_H", "m", "coord1_nal", "coord1_maml", "risk_nal",
                   "risk_maml", "emp_risk_nal_mean", "emp_risk_nal_ci",
                   "emp_risk_maml_mean", "emp_risk_maml_ci"});

    for (long long m : m_values) {
        for (double rho_hard : rho_values) {
            const TaskEnvironment env =
                two_task_pm_ones(rho_hard, rho_easy, d, noise_var);
            const Eigen::VectorXd w_nal = population_nal(env);
            const Eigen::VectorXd w_maml = population_maml(env, alpha, m);
            const double risk_nal = excess_risk_nal(env, alpha, m).value;
            const double risk_maml = excess_risk_maml(env, alpha, m, m).value;

            std::vector<double> emp_nal, emp_maml;
            for (long long seed : seeds) {
                SplitRng rng(static_cast<std::uint64_t>(seed));
                SplitRng rng_nal = rng.split(1);
                SplitRng rng_maml = rng.split(2);
                const auto sol_nal = sgd_nal(env, nal_cfg, n_per_task, rng_nal);
                const auto sol_maml = sgd_maml(env, maml_cfg,
                                               static_cast<int>(m), n_outer,
                                               rng_maml);
                emp_nal.push_back(
                    excess_risk_at(env, sol_nal.weights, alpha, m).value);
                emp_maml.push_back(
                    excess_risk_at(env, sol_maml.weights, alpha, m).value);
            }
            const auto [nal_mean, nal_ci] = seed_mean_ci(emp_nal);
            const auto [maml_mean, maml_ci] = seed_mean_ci(emp_maml);

            csv.row({fmt(rho_hard), std::to_string(m), fmt(w_nal[0]),
                     fmt(w_maml[0]), fmt(risk_nal), fmt(risk_maml),
                     fmt(nal_mean), fmt(nal_ci), fmt(maml_mean),
                     fmt(maml_ci)});
        }
    }
    std::cout << "wrote " << out_path(opt, "fig_hardness.csv") << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// fig-geography: closed-form and SGD risks while the cluster separation R
// sweeps under two fixed (R²/r_H, R²/r_E) regimes.
// ---------------------------------------------------------------------------

int cmd_fig_geography(const SpecView& spec, const RunOptions& opt) {
    const int d = static_cast<int>(spec.integer("env.dim", 10));
    const double noise_var = spec.number("env.noise_var", 0.01);
    const double rho_hard = spec.number("env.rho_hard", 0.1);
    const double rho_easy = spec.number("env.rho_easy", 0.9);
    const double alpha = spec.number("algo.alpha", 1.0 / rho_easy);
    const long long m = spec.integer("algo.m", 500);
    const long long n_inner = spec.integer("algo.n_inner", m);
    const auto r_values =
        spec.numbers("sweep.values", {0.5, 1.0, 2.0, 3.0, 4.0, 6.0});
    const auto seeds = resolve_seeds(spec, opt, {31, 32});

    SgdConfig nal_cfg;
    nal_cfg.meta_lr = spec.number("sgd.meta_lr_nal", 0.025);
    nal_cfg.iterations = spec.integer("sgd.iterations", 2000);
    nal_cfg.inner_lr = alpha;
    SgdConfig maml_cfg = nal_cfg;
    maml_cfg.meta_lr = spec.number("sgd.meta_lr_maml", 0.1);
    const int n_outer = static_cast<int>(spec.integer("sgd.n_outer", 25));
    const int n_per_task =
        static_cast<int>(spec.integer("sgd.n_per_task", n_inner + n_outer));

    // Regime label "a:b" means R²/r_H = a and R²/r_E = b.
    struct Regime {
        const char* label;
        double r2_over_rh;
        double r2_over_re;
    };
    const Regime regimes[] = {{"0.5:10", 0.5, 10.0}, {"10:0.5", 10.0, 0.5}};

    CsvWriter csv(out_path(opt, "fig_geography.csv"),
                  {"R", "regime", "risk_nal_cf", "risk_maml_cf", "ratio_cf",
                   "ratio_approx", "emp_nal", "emp_maml"});

    for (const Regime& regime : regimes) {
        for (double r_sep : r_values) {
            HardEasyMixture mix;
            mix.rho_hard = rho_hard;
            mix.rho_easy = rho_easy;
            mix.center_dist = r_sep;
            mix.spread_hard = r_sep * r_sep / regime.r2_over_rh;
            mix.spread_easy = r_sep * r_sep / regime.r2_over_re;
            mix.dim = d;
            mix.noise_var = noise_var;
            const TaskEnvironment env = TaskEnvironment::mixture(mix);

            const double risk_nal = excess_risk_nal(env, alpha, m).value;
            const double risk_maml =
                excess_risk_maml(env, alpha, m, n_inner).value;
            const double ratio_cf = risk_nal / risk_maml;
            const double approx =
                geography_ratio_approx(mix.center_dist, mix.spread_hard);

            std::vector<double> emp_nal, emp_maml;
            for (long long seed : seeds) {
                SplitRng rng(static_cast<std::uint64_t>(seed));
                SplitRng rng_nal = rng.split(1);
                SplitRng rng_maml = rng.split(2);
                const auto sol_nal = sgd_nal(env, nal_cfg, n_per_task, rng_nal);
                const auto sol_maml =
                    sgd_maml(env, maml_cfg, static_cast<int>(n_inner), n_outer,
                             rng_maml);
                emp_nal.push_back(
                    excess_risk_at(env, sol_nal.weights, alpha, m).value);
                emp_maml.push_back(
                    excess_risk_at(env, sol_maml.weights, alpha, m).value);
            }
            const auto [nal_mean, nal_ci] = seed_mean_ci(emp_nal);
            const auto [maml_mean, maml_ci] = seed_mean_ci(emp_maml);
            (void)nal_ci;
            (void)maml_ci;

            csv.row({fmt(r_sep), regime.label, fmt(risk_nal), fmt(risk_maml),
                     fmt(ratio_cf), fmt(approx), fmt(nal_mean),
                     fmt(maml_mean)});
        }
    }
    std::cout << "wrote " << out_path(opt, "fig_geography.csv") << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// fig-envgrid: per-panel scatter of sampled task optima plus both population
// solutions; risks go to a JSON sidecar.
// ---------------------------------------------------------------------------

int cmd_fig_envgrid(const SpecView& spec, const RunOptions& opt) {
    const int d = static_cast<int>(spec.integer("env.dim", 10));
    const double noise_var = spec.number("env.noise_var", 0.01);
    const double rho_easy = spec.number("env.rho_easy", 0.9);
    const double alpha = spec.number("algo.alpha", 1.0 / rho_easy);
    const long long m = spec.integer("algo.m", 500);
    const long long n_inner = spec.integer("algo.n_inner", m);
    const int n_optima = static_cast<int>(spec.integer("n_optima", 100));
    const auto seeds = resolve_seeds(spec, opt, {7});

    struct Panel {
        const char* name;
        double rho_hard, center_dist, spread_hard, spread_easy;
    };
    const Panel panels[] = {
        {"a", rho_easy, 2.0, 1.0, 1.0},  // equal hardness
        {"b", 0.1, 0.3, 1.0, 1.0},       // clusters nearly coincide
        {"c", 0.1, 2.0, 2.0, 1.0},       // wide hard cluster
        {"d", 0.1, 2.0, 0.1, 1.0},       // tight far hard cluster
    };

    std::vector<std::string> columns = {"panel", "kind"};
    for (int c = 1; c <= d; ++c) columns.push_back("coord" + std::to_string(c));

    for (const Panel& panel : panels) {
        HardEasyMixture mix;
        mix.rho_hard = panel.rho_hard;
        mix.rho_easy = rho_easy;
        mix.center_dist = panel.center_dist;
        mix.spread_hard = panel.spread_hard;
        mix.spread_easy = panel.spread_easy;
        mix.dim = d;
        mix.noise_var = noise_var;
        const TaskEnvironment env = TaskEnvironment::mixture(mix);

        const Eigen::VectorXd w_nal = population_nal(env);
        const Eigen::VectorXd w_maml = population_maml(env, alpha, n_inner);
        const double risk_nal = excess_risk_nal(env, alpha, m).value;
        const double risk_maml = excess_risk_maml(env, alpha, m, n_inner).value;

        const std::string base = std::string("envgrid_") + panel.name;
        CsvWriter csv(out_path(opt, base + ".csv"), columns);
        auto emit = [&](const std::string& kind, const Eigen::VectorXd& v) {
            std::vector<std::string> cells = {panel.name, kind};
            for (int c = 0; c < d; ++c) cells.push_back(fmt(v[c]));
            csv.row(cells);
        };

        SplitRng rng(static_cast<std::uint64_t>(seeds.front()));
        for (int i = 0; i < n_optima; ++i) {
            const TaggedTask drawn = sample_task_tagged(env, rng);
            emit(drawn.is_hard ? "hard_optimum" : "easy_optimum",
                 drawn.task.weights_star);
        }
        emit("solution_nal", w_nal);
        emit("solution_maml", w_maml);

        json j;
        j["panel"] = panel.name;
        j["rho_hard"] = mix.rho_hard;
        j["rho_easy"] = mix.rho_easy;
        j["center_dist"] = mix.center_dist;
        j["spread_hard"] = mix.spread_hard;
        j["spread_easy"] = mix.spread_easy;
        j["dim"] = d;
        j["noise_var"] = noise_var;
        j["alpha"] = alpha;
        j["m"] = m;
        j["n_inner"] = n_inner;
        j["risk_nal"] = risk_nal;
        j["risk_maml"] = risk_maml;
        j["risk_ratio"] = risk_nal / risk_maml;
        write_json_file(out_path(opt, base + ".json"), j);
    }
    std::cout << "wrote envgrid panels to " << opt.out_dir << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// convergence: distance of empirically trained solutions to their population
// counterparts versus sampled task count T (non-adaptive) and episodes per
// task τ (meta-learned), with a log-log slope summary row.
// ---------------------------------------------------------------------------

int cmd_convergence(const SpecView& spec, const RunOptions& opt) {
    const int d = static_cast<int>(spec.integer("env.dim", 10));
    const double noise_var = spec.number("env.noise_var", 0.01);
    const double rho_hard = spec.number("env.rho_hard", 0.5);
    const double rho_easy = spec.number("env.rho_easy", 1.0);
    const double alpha = spec.number("algo.alpha", 1.0);
    const int n_per_task = static_cast<int>(spec.integer("algo.n", 4096));
    const int ep_inner = static_cast<int>(spec.integer("algo.n_inner", 8));
    const int ep_outer = static_cast<int>(spec.integer("algo.n_outer", 8));
    const std::string axis = spec.text("sweep.parameter", "both");
    const auto values =
        spec.integers("sweep.values", {8, 32, 128, 512});
    const auto seeds = resolve_seeds(spec, opt, {401, 402, 403, 404, 405, 406,
                                                 407, 408, 409, 410});
    if (axis != "T" && axis != "tau" && axis != "both")
        throw ValidationError("sweep.parameter must be one of T, tau, both");

    const TaskEnvironment env =
        two_task_pm_ones(rho_hard, rho_easy, d, noise_var);
    const Eigen::VectorXd pop_nal = population_nal(env);
    const Eigen::VectorXd pop_maml = population_maml(env, alpha, ep_inner);

    CsvWriter csv(out_path(opt, "convergence.csv"),
                  {"axis", "value", "dist_nal", "dist_maml", "seeds"});

    std::vector<double> mean_nal, mean_maml;
    const std::string n_seeds = std::to_string(seeds.size());

    if (axis == "T" || axis == "both") {
        for (long long t_count : values) {
            Welford wf;
            for (long long seed : seeds) {
                SplitRng rng(static_cast<std::uint64_t>(seed));
                SplitRng sub = rng.split(static_cast<std::uint64_t>(t_count));
                std::vector<Dataset> datasets;
                datasets.reserve(t_count);
                for (long long i = 0; i < t_count; ++i)
                    datasets.push_back(sample_dataset(sample_task(env, sub),
                                                      n_per_task, sub));
                const auto sol = solve_nal_exact(datasets);
                wf.add((sol.weights - pop_nal).norm());
            }
            mean_nal.push_back(wf.mean());
            csv.row({"T", std::to_string(t_count), fmt(wf.mean()), "",
                     n_seeds});
        }
    }
    if (axis == "tau" || axis == "both") {
        for (long long tau : values) {
            Welford wf;
            for (long long seed : seeds) {
                SplitRng rng(static_cast<std::uint64_t>(seed));
                SplitRng sub = rng.split(1000 + static_cast<std::uint64_t>(tau));
                // Fixed task multiset: every pool task contributes exactly τ
                // episodes, so the only randomness left is per-episode data.
                std::vector<std::vector<EpisodeBatch>> episodes;
                for (const auto& [task, prob] : env.pool()) {
                    (void)prob;
                    const Dataset data = sample_dataset(
                        task, static_cast<int>(tau) * (ep_inner + ep_outer),
                        sub);
                    episodes.push_back(split_episodes(data, ep_inner, ep_outer));
                }
                const auto sol = solve_maml_exact(episodes, alpha);
                wf.add((sol.weights - pop_maml).norm());
            }
            mean_maml.push_back(wf.mean());
            csv.row({"tau", std::to_string(tau), "", fmt(wf.mean()), n_seeds});
        }
    }

    std::vector<double> xs(values.begin(), values.end());
    const std::string slope_nal =
        mean_nal.empty() ? "" : fmt(slope_loglog(xs, mean_nal));
    const std::string slope_maml =
        mean_maml.empty() ? "" : fmt(slope_loglog(xs, mean_maml));
    csv.row({"slope", "0", slope_nal, slope_maml, n_seeds});

    std::cout << "wrote " << out_path(opt, "convergence.csv") << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// neuron: objective landscapes and stationary-point diagnostics for the
// one-neuron environments.
// ---------------------------------------------------------------------------

namespace {

NeuronTask neuron_task(double w1, double w2, double input_scale) {
    NeuronTask task;
    task.weights_star = Eigen::MatrixXd(2, 1);
    task.weights_star << w1, w2;
    task.activation = Activation::Softplus;
    task.input_scale = input_scale;
    return task;
}

/// Four equally hard tasks at the corners (±1.5, ±1.5).
std::vector<NeuronTask> equal_hardness_tasks() {
    return {neuron_task(1.5, 1.5, 1.0), neuron_task(-1.5, 1.5, 1.0),
            neuron_task(1.5, -1.5, 1.0), neuron_task(-1.5, -1.5, 1.0)};
}

/// One hard task (damped inputs) far out at (2,2), three easy ones near 0.
std::vector<NeuronTask> hard_easy_tasks() {
    const double hard_scale = std::sqrt(0.5);
    return {neuron_task(2.0, 2.0, hard_scale), neuron_task(0.5, 0.0, 1.0),
            neuron_task(0.0, 0.5, 1.0), neuron_task(-0.35, 0.35, 1.0)};
}

/// Two-task diagnostic pair; hard first.
std::vector<NeuronTask> two_task_pair() {
    return {neuron_task(1.6, 1.6, std::sqrt(0.5)),
            neuron_task(0.5, 0.2, 1.0)};
}

void write_grid_csv(const std::string& path, const LandscapeGrid& grid) {
    CsvWriter csv(path, {"x", "y", "value"});
    for (int i = 0; i < grid.steps; ++i)
        for (int j = 0; j < grid.steps; ++j)
            csv.row({fmt(grid.axis(j)), fmt(grid.axis(i)),
                     fmt(grid.values(i, j))});
}

/// Sidecar metadata describing a landscape grid CSV: axes, sampling
/// parameters, and the coordinate convention used by the (x, y) columns.
json grid_sidecar(const LandscapeGrid& grid, const char* env_name,
                  const char* kind_name, double alpha, int n_samples,
                  long long seed) {
    json j;
    j["schema"] = "metagap-grid/1";
    j["environment"] = env_name;
    j["objective"] = kind_name;
    j["alpha"] = alpha;
    j["n_samples"] = n_samples;
    j["seed"] = seed;
    j["axes"] = {{"w_min", grid.w_min},
                 {"w_max", grid.w_max},
                 {"steps", grid.steps}};
    j["columns"] = {{"x", "first weight coordinate"},
                    {"y", "second weight coordinate"},
                    {"value", "objective under common random numbers"}};
    const Eigen::Vector2d best = grid.argmin();
    j["argmin"] = {best[0], best[1]};
    return j;
}

}  // namespace

int cmd_neuron(const SpecView& spec, const RunOptions& opt) {
    const double alpha = spec.number("algo.alpha", 0.5);
    const int n_samples = static_cast<int>(spec.integer("algo.m", 250));
    const int steps = static_cast<int>(spec.integer("grid.steps", 61));
    const double tol = spec.number("stationary.tol", 1e-7);
    const long long max_iters = spec.integer("stationary.max_iters", 4000);
    const auto seeds = resolve_seeds(spec, opt, {5});
    SplitRng surface_rng(static_cast<std::uint64_t>(seeds.front()));

    struct EnvCase {
        const char* name;
        std::vector<NeuronTask> tasks;
        double w_min, w_max;
    };
    const EnvCase cases[] = {
        {"equal", equal_hardness_tasks(), -3.0, 3.0},
        {"hardeasy", hard_easy_tasks(), -1.0, 3.0},
    };

    for (const EnvCase& c : cases) {
        for (ObjectiveKind kind : {ObjectiveKind::NAL, ObjectiveKind::MAML}) {
            const char* kind_name = kind == ObjectiveKind::NAL ? "nal" : "maml";
            const LandscapeGrid grid =
                landscape_grid(c.tasks, kind, alpha, c.w_min, c.w_max, steps,
                               n_samples, surface_rng);
            const std::string stem =
                std::string("neuron_grid_") + c.name + "_" + kind_name;
            write_grid_csv(out_path(opt, stem + ".csv"), grid);
            write_json_file(out_path(opt, stem + ".json"),
                            grid_sidecar(grid, c.name, kind_name, alpha,
                                         n_samples, seeds.front()));

            Eigen::MatrixXd w0(2, 1);
            const Eigen::Vector2d start = grid.argmin();
            w0 << start[0], start[1];
            const StationaryReport report = find_stationary(
                c.tasks, kind, alpha, w0, tol, max_iters, n_samples,
                surface_rng);
            std::ofstream out(out_path(opt, std::string("neuron_stationary_") +
                                                c.name + "_" + kind_name +
                                                ".json"),
                              std::ios::binary);
            out << report.to_json() << '\n';
        }
    }

    // Two-task diagnostics: gradient-norm equality at the non-adaptive
    // stationary point, and the gradient-ratio inequality at the
    // meta-learning stationary point.
    {
        const auto tasks = two_task_pair();
        Eigen::MatrixXd w0(2, 1);
        w0 << 1.0, 1.0;
        json j;

        const StationaryReport nal_report =
            find_stationary(tasks, ObjectiveKind::NAL, alpha, w0, tol,
                            max_iters, n_samples, surface_rng);
        j["nal_stationary"] = json::parse(nal_report.to_json());
        j["nal_grad_norm_gap"] =
            std::abs(nal_report.grad_norms[0] - nal_report.grad_norms[1]) /
            std::max(nal_report.grad_norms[0], nal_report.grad_norms[1]);

        const StationaryReport maml_report =
            find_stationary(tasks, ObjectiveKind::MAML, alpha, w0, tol,
                            max_iters, n_samples, surface_rng);
        const HessianBounds hard = estimate_hessian_bounds(
            tasks[0], maml_report.point, n_samples, surface_rng);
        const HessianBounds easy = estimate_hessian_bounds(
            tasks[1], maml_report.point, n_samples, surface_rng);
        const GradientRatioCheck check =
            check_gradient_ratio(maml_report, hard, easy, alpha);
        j["maml_stationary"] = json::parse(maml_report.to_json());
        j["lhs"] = check.lhs;
        j["rhs"] = check.rhs;
        j["factor"] = check.factor;
        j["factor_linear"] = check.factor_linear;
        j["factor_squared"] = check.factor_squared;
        j["slack_budget"] = check.slack_budget;
        j["holds"] = check.holds;
        j["beta_easy"] = easy.beta_hat;
        j["lip_hard"] = hard.lip_hat;
        write_json_file(out_path(opt, "neuron_ratio_check.json"), j);
    }

    std::cout << "wrote neuron outputs to " << opt.out_dir << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// upweight: ζ-weighted non-adaptive training versus meta-training in the
// hard/easy mixture; table of mean first coordinates and test errors.
// ---------------------------------------------------------------------------

namespace {

/// Stationary first coordinate of ζ-weighted batch SGD: batches of k tasks
/// have Binomial(k, ½) hard counts, and a batch with h hard tasks gives the
/// hard component total weight hζ/(hζ+(k−h)).
double upweight_population_coord(double zeta, int tasks_per_iter,
                                 double rho_hard, double rho_easy,
                                 double center_dist) {
    const int k = tasks_per_iter;
    double hard_weight = 0.0;  // E[hζ/(hζ+e)]
    double comb = 1.0;         // C(k,h) built incrementally
    const double p = std::pow(0.5, k);
    for (int h = 0; h <= k; ++h) {
        if (h > 0) comb = comb * (k - h + 1) / h;
        const double denom = h * zeta + (k - h);
        hard_weight += comb * p * (denom > 0.0 ? h * zeta / denom : 0.0);
    }
    return center_dist * rho_hard * hard_weight /
           (rho_hard * hard_weight + rho_easy * (1.0 - hard_weight));
}

}  // namespace

int cmd_upweight(const SpecView& spec, const RunOptions& opt) {
    const int d = static_cast<int>(spec.integer("env.dim", 10));
    HardEasyMixture mix;
    mix.rho_hard = spec.number("env.rho_hard", 0.1);
    mix.rho_easy = spec.number("env.rho_easy", 1.0);
    mix.center_dist = spec.number("env.center_dist", 2.0);
    mix.spread_hard = spec.number("env.spread_hard", 1.0);
    mix.spread_easy = spec.number("env.spread_easy", 1.0);
    mix.dim = d;
    mix.noise_var = spec.number("env.noise_var", 0.01);
    const TaskEnvironment env = TaskEnvironment::mixture(mix);

    const double alpha = spec.number("algo.alpha", 1.0);
    const int n_inner = static_cast<int>(spec.integer("algo.n_inner", 500));
    const int n_outer = static_cast<int>(spec.integer("algo.n_outer", 25));
    const int test_m = static_cast<int>(spec.integer("algo.m", 500));
    const long long test_trials = spec.integer("trials", 3000);
    const auto zetas = spec.numbers("sweep.values", {1.0, 2.0, 5.0, 10.0});
    const auto seeds = resolve_seeds(spec, opt, {61, 62});

    SgdConfig base;
    base.inner_lr = alpha;
    base.iterations = spec.integer("sgd.iterations", 4000);
    base.tasks_per_iter = static_cast<int>(spec.integer("sgd.tasks_per_iter", 10));

    CsvWriter csv(out_path(opt, "upweight.csv"),
                  {"method", "zeta", "mean_coord", "coord_pred", "test_error",
                   "seeds"});

    auto run_rows = [&](bool maml, double zeta) {
        SgdConfig cfg = base;
        cfg.hard_weight_zeta = zeta;
        cfg.meta_lr = maml ? spec.number("sgd.meta_lr_maml", n_inner / 1e4)
                           : spec.number("sgd.meta_lr_nal", 0.025);
        Welford coord, err;
        for (long long seed : seeds) {
            SplitRng rng(static_cast<std::uint64_t>(seed));
            SplitRng train_rng = rng.split(maml ? 2 : 1);
            SplitRng test_rng = rng.split(99);
            const SolutionReport sol =
                maml ? sgd_maml(env, cfg, n_inner, n_outer, train_rng)
                     : sgd_nal(env, cfg, n_inner + n_outer, train_rng);
            coord.add(sol.weights.mean());
            err.add(estimate_fm(env, sol.weights, alpha, test_m, test_trials,
                                test_rng, opt.threads)
                        .mean);
        }
        const double pred =
            maml ? population_maml(env, alpha, n_inner)[0]
                 : upweight_population_coord(zeta, base.tasks_per_iter,
                                             mix.rho_hard, mix.rho_easy,
                                             mix.center_dist);
        csv.row({maml ? "maml" : "nal", fmt(zeta), fmt(coord.mean()),
                 fmt(pred), fmt(err.mean()), std::to_string(seeds.size())});
    };

    for (double zeta : zetas) run_rows(false, zeta);
    run_rows(true, 1.0);

    std::cout << "wrote " << out_path(opt, "upweight.csv") << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// verify: cross-checks between independent computations; JSON report and a
// VerificationError (exit 2) if anything fails.
// ---------------------------------------------------------------------------

namespace {

struct CheckResult {
    std::string name;
    bool pass;
    std::string detail;
};

/// Random small SPD-pool environment for the oracle-equivalence check.
TaskEnvironment random_pool(SplitRng& rng, int d, int n_tasks) {
    std::vector<TaskEnvironment::PoolEntry> pool;
    for (int i = 0; i < n_tasks; ++i) {
        LinearTask task;
        task.weights_star = Eigen::VectorXd::NullaryExpr(
            d, [&](Eigen::Index) { return 2.0 * rng.next_gaussian(); });
        const double rho = 0.2 + 0.8 * rng.next_double();
        task.covariance = rho * Eigen::MatrixXd::Identity(d, d);
        task.noise_var = 0.01;
        pool.emplace_back(std::move(task), 1.0 / n_tasks);
    }
    // Fix rounding drift so probabilities sum to exactly one.
    double total = 0.0;
    for (const auto& e : pool) total += e.second;
    pool.back().second += 1.0 - total;
    return TaskEnvironment::finite_pool(std::move(pool));
}

}  // namespace

int cmd_verify(const SpecView& spec, const RunOptions& opt) {
    const long long mc_trials = spec.integer("trials", 200000);
    const auto seeds = resolve_seeds(spec, opt, {424242});
    SplitRng rng(static_cast<std::uint64_t>(seeds.front()));
    std::vector<CheckResult> results;

    // 1. Fourth-moment identity, generic diagonal Σ and the Σ=A=I corner.
    {
        const int d = 3, n = 5;
        Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
        cov.diagonal() << 1.0, 2.0, 0.5;
        Eigen::MatrixXd a(d, d);
        a << 1.0, 0.3, -0.2, 0.3, 2.0, 0.1, -0.2, 0.1, 0.7;
        SplitRng sub = rng.split(1);
        const auto report = verify_fourth_moment(cov, a, n, mc_trials, sub,
                                                 opt.threads);
        bool pass = true;
        double worst = 0.0;
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < d; ++c) {
                const double sigmas =
                    std::abs(report.empirical(r, c) - report.analytic(r, c)) /
                    report.std_err(r, c);
                worst = std::max(worst, sigmas);
                if (sigmas > 5.0) pass = false;
            }
        const auto eye_report = verify_fourth_moment(
            Eigen::MatrixXd::Identity(d, d), Eigen::MatrixXd::Identity(d, d),
            n, mc_trials, sub, opt.threads);
        const Eigen::MatrixXd expected =
            (1.0 + static_cast<double>(d + 1) / n) *
            Eigen::MatrixXd::Identity(d, d);
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < d; ++c) {
                const double sigmas =
                    std::abs(eye_report.empirical(r, c) - expected(r, c)) /
                    eye_report.std_err(r, c);
                worst = std::max(worst, sigmas);
                if (sigmas > 5.0) pass = false;
            }
        results.push_back({"fourth_moment_identity", pass,
                           "max deviation " + fmt(worst) + " sigma"});
    }

    // 2. Monte-Carlo excess risk agrees with the closed form at both
    //    population solutions over random pools.
    {
        bool pass = true;
        double worst = 0.0;
        const double alpha = 0.8;
        const int m = 40;
        for (int trial = 0; trial < 3; ++trial) {
            SplitRng sub = rng.split(100 + trial);
            const TaskEnvironment env = random_pool(sub, 4, 3);
            for (const bool maml : {false, true}) {
                const Eigen::VectorXd w =
                    maml ? population_maml(env, alpha, m) : population_nal(env);
                const double cf = excess_risk_at(env, w, alpha, m).value;
                const McEstimate mc = estimate_excess(env, w, alpha, m,
                                                      mc_trials / 4, sub,
                                                      opt.threads);
                const double sigmas = std::abs(mc.mean - cf) / mc.std_err;
                worst = std::max(worst, sigmas);
                if (sigmas > 3.0) pass = false;
            }
        }
        results.push_back({"oracle_equivalence", pass,
                           "max deviation " + fmt(worst) + " sigma"});
    }

    // 3. Analytic gradients against central finite differences.
    {
        SplitRng sub = rng.split(200);
        bool pass = true;
        double worst = 0.0;
        const double alpha = 0.7, h = 1e-6;
        for (int trial = 0; trial < 5; ++trial) {
            const int d = 3;
            LinearTask task;
            task.weights_star = Eigen::VectorXd::NullaryExpr(
                d, [&](Eigen::Index) { return sub.next_gaussian(); });
            task.covariance = Eigen::MatrixXd::Identity(d, d);
            task.noise_var = 0.05;
            const Dataset data = sample_dataset(task, 12, sub);
            const auto episodes = split_episodes(data, 8, 4);
            const EpisodeBatch& ep = episodes.front();
            Eigen::VectorXd w = Eigen::VectorXd::NullaryExpr(
                d, [&](Eigen::Index) { return sub.next_gaussian(); });
            const Eigen::VectorXd grad = maml_episode_grad(w, ep, alpha);
            auto loss = [&](const Eigen::VectorXd& v) {
                const Eigen::VectorXd adapted =
                    adapt(v, ep.inner_inputs, ep.inner_labels, alpha);
                return 0.5 *
                       (ep.outer_inputs * adapted - ep.outer_labels)
                           .squaredNorm() /
                       ep.n_outer();
            };
            for (int c = 0; c < d; ++c) {
                Eigen::VectorXd hi = w, lo = w;
                hi[c] += h;
                lo[c] -= h;
                const double fd = (loss(hi) - loss(lo)) / (2.0 * h);
                const double rel = std::abs(grad[c] - fd) /
                                   std::max(1e-12, std::abs(fd));
                worst = std::max(worst, rel);
                if (rel > 1e-4) pass = false;
            }
        }
        results.push_back({"gradient_check", pass,
                           "max relative error " + fmt(worst)});
    }

    // 4. The mixture closed form collapses to exact pool enumeration when
    //    the clusters have zero spread.
    {
        HardEasyMixture mix;
        mix.rho_hard = 0.1;
        mix.rho_easy = 0.9;
        mix.center_dist = 2.0;
        mix.spread_hard = 0.0;
        mix.spread_easy = 0.0;
        mix.dim = 6;
        mix.noise_var = 0.01;
        const TaskEnvironment mixture = TaskEnvironment::mixture(mix);
        const Eigen::VectorXd hard_w =
            mix.center_dist * Eigen::VectorXd::Ones(mix.dim);
        const TaskEnvironment pool = make_two_task_env(
            mix.rho_hard, mix.rho_easy, hard_w,
            Eigen::VectorXd::Zero(mix.dim), mix.noise_var);
        const double alpha = 1.0 / mix.rho_easy;
        const int m = 500;
        const double nal_gap = std::abs(excess_risk_nal(mixture, alpha, m).value -
                                        excess_risk_nal(pool, alpha, m).value);
        const double maml_gap =
            std::abs(excess_risk_maml(mixture, alpha, m, m).value -
                     excess_risk_maml(pool, alpha, m, m).value);
        const double sol_gap =
            (population_maml(mixture, alpha, m) - population_maml(pool, alpha, m))
                .norm();
        const bool pass = nal_gap < 1e-10 && maml_gap < 1e-10 && sol_gap < 1e-10;
        results.push_back({"mixture_pool_collapse", pass,
                           "max gap " +
                               fmt(std::max({nal_gap, maml_gap, sol_gap}))});
    }

    // 5. E[P̂ᵀ Σ P̂] over random inner batches equals Q^(n₂).
    {
        SplitRng sub = rng.split(300);
        const int d = 3, n2 = 5;
        const double alpha = 0.6;
        LinearTask task;
        task.weights_star = Eigen::VectorXd::Zero(d);
        task.covariance = Eigen::MatrixXd::Zero(d, d);
        task.covariance.diagonal() << 0.8, 1.5, 0.4;
        task.noise_var = 0.0;
        const Eigen::MatrixXd q_expected =
            q_matrix(task.covariance, alpha, n2).matrix;
        Welford elems[3][3];
        for (std::int64_t t = 0; t < mc_trials / 4; ++t) {
            const Dataset data = sample_dataset(task, n2, sub);
            const Eigen::MatrixXd p_hat =
                Eigen::MatrixXd::Identity(d, d) -
                (alpha / n2) * (data.inputs.transpose() * data.inputs);
            const Eigen::MatrixXd sample =
                p_hat.transpose() * task.covariance * p_hat;
            for (int r = 0; r < d; ++r)
                for (int c = 0; c < d; ++c) elems[r][c].add(sample(r, c));
        }
        bool pass = true;
        double worst = 0.0;
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < d; ++c) {
                const double sigmas =
                    std::abs(elems[r][c].mean() - q_expected(r, c)) /
                    elems[r][c].std_error();
                worst = std::max(worst, sigmas);
                if (sigmas > 5.0) pass = false;
            }
        results.push_back({"preconditioner_moment", pass,
                           "max deviation " + fmt(worst) + " sigma"});
    }

    json j;
    j["checks"] = json::array();
    bool all_pass = true;
    for (const auto& r : results) {
        j["checks"].push_back(
            {{"name", r.name}, {"pass", r.pass}, {"detail", r.detail}});
        all_pass = all_pass && r.pass;
        std::cout << (r.pass ? "PASS " : "FAIL ") << r.name << " (" << r.detail
                  << ")\n";
    }
    j["all_pass"] = all_pass;
    write_json_file(out_path(opt, "verify_report.json"), j);
    if (!all_pass)
        throw VerificationError("verification suite failed; see " +
                                out_path(opt, "verify_report.json"));
    return 0;
}

}  // namespace metagap::cli
