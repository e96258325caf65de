#include "metagap/neuron.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <json.hpp>

#include "metagap/errors.hpp"

namespace metagap {

const char* to_string(Activation a) {
    switch (a) {
        case Activation::ReLU: return "relu";
        case Activation::Softplus: return "softplus";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Tanh: return "tanh";
    }
    return "unknown";
}

double activation_value(Activation a, double z) {
    switch (a) {
        case Activation::ReLU:
            return z > 0.0 ? z : 0.0;
        case Activation::Softplus:
            // Stable on both tails: log(1+e^z) = max(z,0) + log1p(e^−|z|).
            return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
        case Activation::Sigmoid:
            return 1.0 / (1.0 + std::exp(-z));
        case Activation::Tanh:
            return std::tanh(z);
    }
    return 0.0;
}

double activation_deriv(Activation a, double z) {
    switch (a) {
        case Activation::ReLU:
            return z > 0.0 ? 1.0 : 0.0;
        case Activation::Softplus:
            return 1.0 / (1.0 + std::exp(-z));
        case Activation::Sigmoid: {
            const double s = 1.0 / (1.0 + std::exp(-z));
            return s * (1.0 - s);
        }
        case Activation::Tanh: {
            const double t = std::tanh(z);
            return 1.0 - t * t;
        }
    }
    return 0.0;
}

void NeuronTask::validate() const {
    if (dim() < 1 || neurons() < 1)
        throw ValidationError("neuron task weights must be non-empty");
    if (!weights_star.allFinite())
        throw ValidationError("neuron task weights contain non-finite entries");
    if (!(input_scale > 0.0))
        throw ValidationError("input_scale must be positive");
}

namespace {

/// The common-random-number sample set: `rng` is copied, so every call with
/// the same generator value yields the same standard normals, and tasks that
/// differ only in input_scale see scaled versions of one point cloud.
Eigen::MatrixXd sample_inputs(const NeuronTask& task, int n_samples,
                              const SplitRng& rng) {
    SplitRng local = rng;
    Eigen::MatrixXd x(n_samples, task.dim());
    for (int r = 0; r < n_samples; ++r)
        for (int c = 0; c < task.dim(); ++c)
            x(r, c) = task.input_scale * local.next_gaussian();
    return x;
}

Eigen::VectorXd model_output(const NeuronTask& task, const Eigen::MatrixXd& x,
                             const Eigen::MatrixXd& w) {
    const Eigen::MatrixXd z = x * w;  // n×M pre-activations
    Eigen::VectorXd out = Eigen::VectorXd::Zero(x.rows());
    for (Eigen::Index k = 0; k < z.cols(); ++k)
        for (Eigen::Index r = 0; r < z.rows(); ++r)
            out[r] += activation_value(task.activation, z(r, k));
    return out;
}

void check_shape(const NeuronTask& task, const Eigen::MatrixXd& w) {
    if (w.rows() != task.weights_star.rows() ||
        w.cols() != task.weights_star.cols())
        throw ValidationError("parameter shape does not match the task");
}

}  // namespace

double neuron_loss(const NeuronTask& task, const Eigen::MatrixXd& w,
                   int n_samples, const SplitRng& rng) {
    check_shape(task, w);
    if (n_samples < 1) throw ValidationError("n_samples must be >= 1");
    const Eigen::MatrixXd x = sample_inputs(task, n_samples, rng);
    const Eigen::VectorXd residual =
        model_output(task, x, w) - model_output(task, x, task.weights_star);
    return 0.5 * residual.squaredNorm() / static_cast<double>(n_samples);
}

Eigen::MatrixXd neuron_grad(const NeuronTask& task, const Eigen::MatrixXd& w,
                            int n_samples, const SplitRng& rng) {
    check_shape(task, w);
    if (n_samples < 1) throw ValidationError("n_samples must be >= 1");
    const Eigen::MatrixXd x = sample_inputs(task, n_samples, rng);
    const Eigen::VectorXd residual =
        model_output(task, x, w) - model_output(task, x, task.weights_star);
    const Eigen::MatrixXd z = x * w;
    Eigen::MatrixXd deriv(z.rows(), z.cols());
    for (Eigen::Index k = 0; k < z.cols(); ++k)
        for (Eigen::Index r = 0; r < z.rows(); ++r)
            deriv(r, k) =
                residual[r] * activation_deriv(task.activation, z(r, k));
    return x.transpose() * deriv / static_cast<double>(n_samples);
}

double nal_objective(const std::vector<NeuronTask>& tasks,
                     const Eigen::MatrixXd& w, int n_samples,
                     const SplitRng& rng) {
    if (tasks.empty()) throw ValidationError("need at least one task");
    double total = 0.0;
    for (const auto& task : tasks) total += neuron_loss(task, w, n_samples, rng);
    return total / static_cast<double>(tasks.size());
}

double maml_full_step_objective(const std::vector<NeuronTask>& tasks,
                                const Eigen::MatrixXd& w, double alpha,
                                int n_samples, const SplitRng& rng) {
    if (tasks.empty()) throw ValidationError("need at least one task");
    double total = 0.0;
    for (const auto& task : tasks) {
        const Eigen::MatrixXd adapted =
            w - alpha * neuron_grad(task, w, n_samples, rng);
        total += neuron_loss(task, adapted, n_samples, rng);
    }
    return total / static_cast<double>(tasks.size());
}

namespace {

double objective_value(const std::vector<NeuronTask>& tasks,
                       ObjectiveKind kind, const Eigen::MatrixXd& w,
                       double alpha, int n_samples, const SplitRng& rng) {
    return kind == ObjectiveKind::NAL
               ? nal_objective(tasks, w, n_samples, rng)
               : maml_full_step_objective(tasks, w, alpha, n_samples, rng);
}

/// Objective gradient. The plain average has an analytic gradient; the
/// post-adaptation surface is differentiated by central differences, which
/// is accurate on the common-random-number surface because that surface is
/// a fixed smooth function (no re-sampling noise between evaluations).
Eigen::MatrixXd objective_grad(const std::vector<NeuronTask>& tasks,
                               ObjectiveKind kind, const Eigen::MatrixXd& w,
                               double alpha, int n_samples,
                               const SplitRng& rng) {
    if (kind == ObjectiveKind::NAL) {
        Eigen::MatrixXd g = Eigen::MatrixXd::Zero(w.rows(), w.cols());
        for (const auto& task : tasks)
            g += neuron_grad(task, w, n_samples, rng);
        return g / static_cast<double>(tasks.size());
    }
    constexpr double kStep = 1e-5;
    Eigen::MatrixXd g(w.rows(), w.cols());
    Eigen::MatrixXd probe = w;
    for (Eigen::Index c = 0; c < w.cols(); ++c)
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            probe(r, c) = w(r, c) + kStep;
            const double hi =
                objective_value(tasks, kind, probe, alpha, n_samples, rng);
            probe(r, c) = w(r, c) - kStep;
            const double lo =
                objective_value(tasks, kind, probe, alpha, n_samples, rng);
            probe(r, c) = w(r, c);
            g(r, c) = (hi - lo) / (2.0 * kStep);
        }
    return g;
}

}  // namespace

StationaryReport find_stationary(const std::vector<NeuronTask>& tasks,
                                 ObjectiveKind objective, double alpha,
                                 const Eigen::MatrixXd& w0, double tol,
                                 std::int64_t max_iters, int n_samples,
                                 const SplitRng& rng) {
    if (tasks.empty()) throw ValidationError("need at least one task");
    for (const auto& task : tasks) {
        task.validate();
        check_shape(task, w0);
    }
    if (!(tol > 0.0)) throw ValidationError("tolerance must be positive");

    Eigen::MatrixXd w = w0;
    double f = objective_value(tasks, objective, w, alpha, n_samples, rng);
    double step = 1.0;
    double residual = 0.0;
    bool converged = false;
    std::int64_t iter = 0;

    for (; iter < max_iters; ++iter) {
        const Eigen::MatrixXd g =
            objective_grad(tasks, objective, w, alpha, n_samples, rng);
        residual = g.norm();
        if (residual < tol) {
            converged = true;
            break;
        }
        // Backtracking Armijo line search along −g.
        double t = step;
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            const Eigen::MatrixXd w_new = w - t * g;
            const double f_new =
                objective_value(tasks, objective, w_new, alpha, n_samples, rng);
            if (f_new <= f - 1e-4 * t * residual * residual) {
                w = w_new;
                f = f_new;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) break;  // surface noise floor reached
        step = std::min(t * 2.0, 64.0);
    }

    if (!converged) {
        // The loop may have moved w after the last residual evaluation;
        // re-measure at the returned point so that converged <=> residual
        // below tolerance holds for every exit path.
        residual =
            objective_grad(tasks, objective, w, alpha, n_samples, rng).norm();
        converged = residual < tol;
    }

    StationaryReport report;
    report.point = std::move(w);
    report.objective = objective;
    report.alpha = alpha;
    report.converged = converged;
    report.residual = residual;
    report.iterations = iter;
    report.grad_norms.reserve(tasks.size());
    for (const auto& task : tasks)
        report.grad_norms.push_back(
            neuron_grad(task, report.point, n_samples, rng).norm());
    return report;
}

HessianBounds estimate_hessian_bounds(const NeuronTask& task,
                                      const Eigen::MatrixXd& w, int n_samples,
                                      const SplitRng& rng) {
    check_shape(task, w);
    const Eigen::Index params = w.size();
    if (params > 64)
        throw ValidationError("Hessian estimation is budgeted for <= 64 "
                              "parameters");
    constexpr double kStep = 1e-4;
    Eigen::MatrixXd hess(params, params);
    Eigen::MatrixXd probe = w;
    for (Eigen::Index p = 0; p < params; ++p) {
        probe(p) = w(p) + kStep;
        const Eigen::MatrixXd hi = neuron_grad(task, probe, n_samples, rng);
        probe(p) = w(p) - kStep;
        const Eigen::MatrixXd lo = neuron_grad(task, probe, n_samples, rng);
        probe(p) = w(p);
        const Eigen::MatrixXd col = (hi - lo) / (2.0 * kStep);
        hess.col(p) = Eigen::Map<const Eigen::VectorXd>(col.data(), params);
    }
    const Eigen::MatrixXd sym = 0.5 * (hess + hess.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym,
                                                      Eigen::EigenvaluesOnly);
    return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

GradientRatioCheck check_gradient_ratio(const StationaryReport& report,
                                        const HessianBounds& bounds_hard,
                                        const HessianBounds& bounds_easy,
                                        double alpha) {
    if (report.grad_norms.size() < 2)
        throw ValidationError("the ratio check needs a hard and an easy task");
    const double beta_easy = bounds_easy.beta_hat;
    const double lip_hard = bounds_hard.lip_hat;
    const double lip_bound = std::max(bounds_hard.lip_hat, bounds_easy.lip_hat);
    if (!(alpha >= 0.0) || alpha * lip_bound > 1.0)
        throw ValidationError("step size out of range: the ratio check "
                              "requires 0 <= alpha <= 1/max smoothness");
    const double contraction = 1.0 - alpha * lip_hard;
    if (contraction <= 0.0)
        throw ValidationError("step size too large for the measured "
                              "smoothness (alpha*L >= 1)");

    GradientRatioCheck check;
    check.factor_linear =
        (1.0 - 2.0 * alpha * beta_easy) / (contraction * contraction);
    const double ratio = (1.0 - alpha * beta_easy) / contraction;
    check.factor_squared = ratio * ratio;
    check.factor = std::max(check.factor_linear, check.factor_squared);

    const double grad_max =
        *std::max_element(report.grad_norms.begin(), report.grad_norms.end());
    check.slack_budget =
        10.0 * lip_bound * lip_bound * grad_max * alpha * alpha;

    check.lhs = report.grad_norms[0];
    check.rhs = check.factor * report.grad_norms[1];
    check.holds = check.lhs <= check.rhs + check.slack_budget;
    return check;
}

double LandscapeGrid::axis(int idx) const {
    if (steps < 2) throw ValidationError("grid needs at least 2 steps");
    if (idx < 0 || idx >= steps) throw ValidationError("grid index range");
    return w_min + (w_max - w_min) * static_cast<double>(idx) /
                       static_cast<double>(steps - 1);
}

Eigen::Vector2d LandscapeGrid::argmin() const {
    Eigen::Index row = 0, col = 0;
    values.minCoeff(&row, &col);
    return {axis(static_cast<int>(col)), axis(static_cast<int>(row))};
}

LandscapeGrid landscape_grid(const std::vector<NeuronTask>& tasks,
                             ObjectiveKind objective, double alpha,
                             double w_min, double w_max, int steps,
                             int n_samples, const SplitRng& rng) {
    if (tasks.empty()) throw ValidationError("need at least one task");
    for (const auto& task : tasks)
        if (task.dim() != 2 || task.neurons() != 1)
            throw ValidationError("the landscape grid visualizes the "
                                  "(d=2, M=1) setting only");
    if (steps < 2) throw ValidationError("grid needs at least 2 steps");
    if (!(w_max > w_min)) throw ValidationError("need w_max > w_min");

    LandscapeGrid grid;
    grid.w_min = w_min;
    grid.w_max = w_max;
    grid.steps = steps;
    grid.values.resize(steps, steps);
    Eigen::MatrixXd w(2, 1);
    for (int i = 0; i < steps; ++i)
        for (int j = 0; j < steps; ++j) {
            w(0, 0) = grid.axis(j);
            w(1, 0) = grid.axis(i);
            grid.values(i, j) =
                objective_value(tasks, objective, w, alpha, n_samples, rng);
        }
    return grid;
}

SpectralProfile spectral_profile(const NeuronTask& task) {
    task.validate();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(task.weights_star);
    SpectralProfile profile;
    profile.singular_values = svd.singularValues();
    const auto m = profile.singular_values.size();
    const double smallest = profile.singular_values[m - 1];
    if (!(smallest > 0.0))
        throw ValidationError("ground-truth weights are rank deficient");
    profile.kappa = profile.singular_values[0] / smallest;
    double prod = 1.0;
    for (Eigen::Index k = 0; k < m; ++k)
        prod *= profile.singular_values[k] / smallest;
    profile.lambda = prod;
    return profile;
}

std::string StationaryReport::to_json() const {
    nlohmann::json j;
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < point.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < point.cols(); ++c)
            row.push_back(point(r, c));
        rows.push_back(std::move(row));
    }
    j["point"] = std::move(rows);
    j["grad_norms"] = grad_norms;
    j["objective"] = objective == ObjectiveKind::NAL ? "nal" : "maml";
    j["alpha"] = alpha;
    j["converged"] = converged;
    j["residual"] = residual;
    j["iterations"] = iterations;
    return j.dump(2);
}

}  // namespace metagap
