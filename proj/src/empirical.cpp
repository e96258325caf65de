#include "metagap/empirical.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>

#include <Eigen/LU>
#include <json.hpp>

#include "metagap/errors.hpp"

namespace metagap {

const char* to_string(SolveMethod m) {
    switch (m) {
        case SolveMethod::NalExact: return "nal_exact";
        case SolveMethod::MamlExact: return "maml_exact";
        case SolveMethod::NalSgd: return "nal_sgd";
        case SolveMethod::MamlSgd: return "maml_sgd";
    }
    return "unknown";
}

std::string SolutionReport::to_json() const {
    nlohmann::json j;
    j["weights"] = std::vector<double>(weights.data(),
                                       weights.data() + weights.size());
    j["method"] = to_string(method);
    j["iterations"] = iterations;
    j["config_digest"] = config_digest;
    return j.dump(2);
}

void SgdConfig::validate() const {
    if (!(meta_lr > 0.0)) throw ValidationError("meta_lr must be positive");
    if (inner_lr < 0.0) throw ValidationError("inner_lr must be >= 0");
    if (iterations < 1) throw ValidationError("iterations must be >= 1");
    if (tasks_per_iter < 1)
        throw ValidationError("tasks_per_iter must be >= 1");
    if (!(hard_weight_zeta > 0.0))
        throw ValidationError("hard_weight_zeta must be positive");
}

std::string SgdConfig::digest() const {
    // FNV-1a over a canonical rendering; stable across runs and platforms.
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%.17g|%.17g|%" PRId64 "|%d|%.17g",
                  meta_lr, inner_lr, iterations, tasks_per_iter,
                  hard_weight_zeta);
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (const char* p = buf; *p; ++p) {
        h ^= static_cast<unsigned char>(*p);
        h *= 0x100000001B3ull;
    }
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016" PRIx64, h);
    return hex;
}

namespace {

Eigen::VectorXd solve_normal_equations(const Eigen::MatrixXd& lhs,
                                       const Eigen::VectorXd& rhs,
                                       const char* what) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(lhs);
    if (!lu.isInvertible())
        throw SingularMatrixError(std::string(what) +
                                  ": normal equations are singular "
                                  "(too few samples or degenerate inputs)");
    return lu.solve(rhs);
}

void check_guard(const Eigen::VectorXd& w, SolveMethod method,
                 std::int64_t iter) {
    if (w.norm() > kDivergenceGuard || !w.allFinite())
        throw DivergenceError(std::string(to_string(method)) +
                              " diverged at iteration " +
                              std::to_string(iter) +
                              "; reduce meta_lr or inner_lr");
}

/// ζ-normalized batch weights: h hard tasks and e easy tasks give each hard
/// task weight ζ/(hζ+e) and each easy task 1/(hζ+e) (weights sum to one).
std::vector<double> batch_weights(const std::vector<TaggedTask>& batch,
                                  double zeta) {
    double denom = 0.0;
    for (const auto& t : batch) denom += t.is_hard ? zeta : 1.0;
    std::vector<double> w;
    w.reserve(batch.size());
    for (const auto& t : batch) w.push_back((t.is_hard ? zeta : 1.0) / denom);
    return w;
}

}  // namespace

SolutionReport solve_nal_exact(const std::vector<Dataset>& datasets) {
    if (datasets.empty())
        throw ValidationError("need at least one dataset");
    const auto d = datasets.front().inputs.cols();
    Eigen::MatrixXd lhs = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
    for (const auto& data : datasets) {
        if (data.inputs.cols() != d)
            throw ValidationError("datasets must share one input dimension");
        if (data.labels.size() != data.inputs.rows())
            throw ValidationError("dataset rows and labels disagree");
        lhs += data.inputs.transpose() * data.inputs;
        rhs += data.inputs.transpose() * data.labels;
    }
    SolutionReport report;
    report.weights = solve_normal_equations(lhs, rhs, "solve_nal_exact");
    report.method = SolveMethod::NalExact;
    return report;
}

SolutionReport solve_maml_exact(
    const std::vector<std::vector<EpisodeBatch>>& episodes_per_task,
    double alpha) {
    Eigen::Index d = -1;
    for (const auto& task_eps : episodes_per_task)
        for (const auto& ep : task_eps) {
            d = ep.inner_inputs.cols();
            break;
        }
    if (d < 0) throw ValidationError("need at least one episode");

    // One adaptation step maps w to P̂w + (α/n₂)X^inᵀy^in with
    // P̂ = I − (α/n₂)X^inᵀX^in, so each episode contributes a linear
    // least-squares block G w ≈ t with G = X^out P̂ and
    // t = y^out − (α/n₂)X^out X^inᵀ y^in. Episodes are weighted by 1/n₁
    // (mean-squared loss) so unequal outer sizes still average correctly.
    Eigen::MatrixXd lhs = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
    for (const auto& task_eps : episodes_per_task)
        for (const auto& ep : task_eps) {
            if (ep.inner_inputs.cols() != d || ep.outer_inputs.cols() != d)
                throw ValidationError("episodes must share one input dimension");
            const double inner_scale =
                alpha / static_cast<double>(ep.n_inner());
            const Eigen::MatrixXd p_hat =
                eye - inner_scale * (ep.inner_inputs.transpose() *
                                     ep.inner_inputs);
            const Eigen::MatrixXd g = ep.outer_inputs * p_hat;
            const Eigen::VectorXd t =
                ep.outer_labels - inner_scale * (ep.outer_inputs *
                                                 (ep.inner_inputs.transpose() *
                                                  ep.inner_labels));
            const double w = 1.0 / static_cast<double>(ep.n_outer());
            lhs += w * g.transpose() * g;
            rhs += w * g.transpose() * t;
        }

    SolutionReport report;
    report.weights = solve_normal_equations(lhs, rhs, "solve_maml_exact");
    report.method = SolveMethod::MamlExact;
    return report;
}

Eigen::VectorXd adapt(const Eigen::VectorXd& weights,
                      const Eigen::MatrixXd& inputs,
                      const Eigen::VectorXd& labels, double alpha) {
    const auto m = inputs.rows();
    if (m < 1) throw ValidationError("adaptation batch must be non-empty");
    if (labels.size() != m)
        throw ValidationError("adaptation rows and labels disagree");
    return weights - (alpha / static_cast<double>(m)) *
                         (inputs.transpose() * (inputs * weights - labels));
}

Eigen::VectorXd maml_episode_grad(const Eigen::VectorXd& weights,
                                  const EpisodeBatch& episode, double alpha) {
    const Eigen::VectorXd adapted =
        adapt(weights, episode.inner_inputs, episode.inner_labels, alpha);
    const Eigen::VectorXd outer_grad =
        episode.outer_inputs.transpose() *
        (episode.outer_inputs * adapted - episode.outer_labels) /
        static_cast<double>(episode.n_outer());
    // Back-propagate through the adaptation step: P̂ᵀg with symmetric P̂.
    const double inner_scale = alpha / static_cast<double>(episode.n_inner());
    return outer_grad - inner_scale * (episode.inner_inputs.transpose() *
                                       (episode.inner_inputs * outer_grad));
}

SolutionReport sgd_nal(const TaskEnvironment& env, const SgdConfig& cfg,
                       int n_per_task, SplitRng& rng) {
    cfg.validate();
    if (n_per_task < 1)
        throw ValidationError("n_per_task must be >= 1");
    const int d = env.dim();
    Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
    std::vector<TaggedTask> batch(cfg.tasks_per_iter);
    for (std::int64_t it = 0; it < cfg.iterations; ++it) {
        for (auto& t : batch) t = sample_task_tagged(env, rng);
        const std::vector<double> wt =
            batch_weights(batch, cfg.hard_weight_zeta);
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(d);
        for (std::size_t k = 0; k < batch.size(); ++k) {
            const Dataset data =
                sample_dataset(batch[k].task, n_per_task, rng);
            grad += wt[k] * (data.inputs.transpose() *
                             (data.inputs * w - data.labels)) /
                    static_cast<double>(n_per_task);
        }
        w -= cfg.meta_lr * grad;
        check_guard(w, SolveMethod::NalSgd, it);
    }
    SolutionReport report;
    report.weights = std::move(w);
    report.method = SolveMethod::NalSgd;
    report.iterations = cfg.iterations;
    report.config_digest = cfg.digest();
    return report;
}

SolutionReport sgd_maml(const TaskEnvironment& env, const SgdConfig& cfg,
                        int n_inner, int n_outer, SplitRng& rng) {
    cfg.validate();
    if (n_inner < 1 || n_outer < 1)
        throw ValidationError("episode sizes must be >= 1");
    const int d = env.dim();
    Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
    std::vector<TaggedTask> batch(cfg.tasks_per_iter);
    for (std::int64_t it = 0; it < cfg.iterations; ++it) {
        for (auto& t : batch) t = sample_task_tagged(env, rng);
        const std::vector<double> wt =
            batch_weights(batch, cfg.hard_weight_zeta);
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(d);
        for (std::size_t k = 0; k < batch.size(); ++k) {
            const Dataset data =
                sample_dataset(batch[k].task, n_inner + n_outer, rng);
            const auto episodes = split_episodes(data, n_inner, n_outer);
            grad += wt[k] *
                    maml_episode_grad(w, episodes.front(), cfg.inner_lr);
        }
        w -= cfg.meta_lr * grad;
        check_guard(w, SolveMethod::MamlSgd, it);
    }
    SolutionReport report;
    report.weights = std::move(w);
    report.method = SolveMethod::MamlSgd;
    report.iterations = cfg.iterations;
    report.config_digest = cfg.digest();
    return report;
}

}  // namespace metagap
