#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "metagap/rng.hpp"

namespace metagap {

enum class Activation { ReLU, Softplus, Sigmoid, Tanh };

const char* to_string(Activation a);
double activation_value(Activation a, double z);
double activation_deriv(Activation a, double z);

/**
 * One realizable sum-of-neurons regression task. The model maps x to
 * h_W(x) = Σ_k σ(⟨w^k, x⟩) for W = [w^1 … w^M] ∈ R^{d×M}; labels come from a
 * ground-truth W* through the same map, noiselessly. Inputs are
 * x ~ N(0, input_scale²·I_d): the scale is how task hardness is realized
 * (lower input variance ⇒ slower gradient-descent progress ⇒ harder task).
 */
struct NeuronTask {
    Eigen::MatrixXd weights_star;  ///< d×M, columns are neurons
    Activation activation = Activation::Softplus;
    double input_scale = 1.0;      ///< std dev multiplier on N(0, I_d) inputs

    int dim() const { return static_cast<int>(weights_star.rows()); }
    int neurons() const { return static_cast<int>(weights_star.cols()); }

    void validate() const;
};

enum class ObjectiveKind { NAL, MAML };

/// Result of a stationary-point search on a sampled objective surface.
struct StationaryReport {
    Eigen::MatrixXd point;           ///< d×M parameters at termination
    std::vector<double> grad_norms;  ///< per-task ‖∇f_i‖ at the point
    ObjectiveKind objective = ObjectiveKind::NAL;
    double alpha = 0.0;
    bool converged = false;
    double residual = 0.0;           ///< final objective-gradient norm
    std::int64_t iterations = 0;

    std::string to_json() const;
};

/// Extreme-eigenvalue estimates of a task's loss Hessian at a point.
struct HessianBounds {
    double beta_hat = 0.0;  ///< smallest eigenvalue (local strong convexity)
    double lip_hat = 0.0;   ///< largest eigenvalue (local smoothness)
};

/// Outcome of the stationary-point gradient-ratio diagnostic.
struct GradientRatioCheck {
    double lhs = 0.0;           ///< gradient norm on the hard task
    double rhs = 0.0;           ///< factor · gradient norm on the easy task
    double factor = 0.0;        ///< the (looser) multiplicative factor used
    double factor_linear = 0.0; ///< (1−2αβ₂)/(1−αL₁)²
    double factor_squared = 0.0;///< ((1−αβ₂)/(1−αL₁))²
    double slack_budget = 0.0;  ///< C·α² second-order allowance
    bool holds = false;
};

/// Cell grid of objective values over a 2-D parameter box (M=1, d=2 only).
struct LandscapeGrid {
    double w_min = 0.0;
    double w_max = 0.0;
    int steps = 0;
    Eigen::MatrixXd values;  ///< values(i,j) at w = (axis[j], axis[i])

    double axis(int idx) const;
    /// Coordinates of the minimizing cell.
    Eigen::Vector2d argmin() const;
};

/**
 * Sample-average estimate of the task's population loss
 * f(W) = ½E[(h_W(x) − y)²] over n_samples common-random-number draws:
 * the rng argument pins the sample set, so calling with the same rng value
 * across many W evaluates one fixed smooth surface.
 */
double neuron_loss(const NeuronTask& task, const Eigen::MatrixXd& w,
                   int n_samples, const SplitRng& rng);

/// Gradient of the same sample-average loss; column k is
/// mean[(h_W(x) − y)·σ′(⟨w^k, x⟩)·x]. ReLU uses subgradient 0 at 0.
Eigen::MatrixXd neuron_grad(const NeuronTask& task, const Eigen::MatrixXd& w,
                            int n_samples, const SplitRng& rng);

/// Post-adaptation objective with a full inner gradient step:
/// mean_i f_i(W − α∇f_i(W)), every term under common random numbers.
double maml_full_step_objective(const std::vector<NeuronTask>& tasks,
                                const Eigen::MatrixXd& w, double alpha,
                                int n_samples, const SplitRng& rng);

/// Average plain loss mean_i f_i(W) (the non-adaptive objective).
double nal_objective(const std::vector<NeuronTask>& tasks,
                     const Eigen::MatrixXd& w, int n_samples,
                     const SplitRng& rng);

/**
 * Gradient descent with backtracking line search on the selected objective
 * surface (common random numbers throughout). Non-convergence within
 * max_iters is reported via converged=false, never an exception.
 */
StationaryReport find_stationary(const std::vector<NeuronTask>& tasks,
                                 ObjectiveKind objective, double alpha,
                                 const Eigen::MatrixXd& w0, double tol,
                                 std::int64_t max_iters, int n_samples,
                                 const SplitRng& rng);

/// Central-finite-difference Hessian of the task loss at w, symmetrized;
/// returns its extreme eigenvalues. Budgeted for M·d ≤ 64.
HessianBounds estimate_hessian_bounds(const NeuronTask& task,
                                      const Eigen::MatrixXd& w, int n_samples,
                                      const SplitRng& rng);

/**
 * Checks the stationary-point inequality
 *   ‖∇f_hard‖ ≤ factor · ‖∇f_easy‖ + C·α²
 * with factor = max{(1−2αβ₂)/(1−αL₁)², ((1−αβ₂)/(1−αL₁))²} from the measured
 * curvature bounds (β₂ of the easy task, L₁ of the hard task) and slack
 * constant C = 10·max(L̂)²·max‖∇f_i‖. The report keeps lhs, rhs, both
 * factors, and the slack separate so the budget can be audited.
 * Task index 0 of the report's grad_norms must be the hard task.
 */
GradientRatioCheck check_gradient_ratio(const StationaryReport& report,
                                        const HessianBounds& bounds_hard,
                                        const HessianBounds& bounds_easy,
                                        double alpha);

/// Objective values over a square grid in the (M=1, d=2) visualization
/// setting, under common random numbers.
LandscapeGrid landscape_grid(const std::vector<NeuronTask>& tasks,
                             ObjectiveKind objective, double alpha,
                             double w_min, double w_max, int steps,
                             int n_samples, const SplitRng& rng);

/// Singular-value profile of a task's ground-truth weights.
struct SpectralProfile {
    Eigen::VectorXd singular_values;  ///< descending
    double kappa = 0.0;               ///< s₁ / s_M
    double lambda = 0.0;              ///< Π s_k / s_M^M
};

SpectralProfile spectral_profile(const NeuronTask& task);

}  // namespace metagap
