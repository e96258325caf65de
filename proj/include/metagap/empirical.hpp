#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "metagap/rng.hpp"
#include "metagap/task_env.hpp"

namespace metagap {

enum class SolveMethod { NalExact, MamlExact, NalSgd, MamlSgd };

const char* to_string(SolveMethod m);

/// A trained weight vector plus provenance.
struct SolutionReport {
    Eigen::VectorXd weights;
    SolveMethod method = SolveMethod::NalExact;
    std::int64_t iterations = 0;  ///< 0 for exact solves
    std::string config_digest;    ///< hex digest of the producing config

    std::string to_json() const;
};

/// Hyper-parameters for the stochastic trainers.
struct SgdConfig {
    double meta_lr = 0.025;        ///< step size on the meta-parameters
    double inner_lr = 1.0;         ///< adaptation step size α
    std::int64_t iterations = 5000;
    int tasks_per_iter = 1;
    double hard_weight_zeta = 1.0; ///< hard-task loss weight ratio ζ (1 = uniform)

    void validate() const;
    std::string digest() const;
};

/// Weight norm beyond which a trainer aborts with DivergenceError.
inline constexpr double kDivergenceGuard = 1e6;

/**
 * Pooled least-squares solution over all tasks' data:
 *   w = (Σᵢ XᵢᵀXᵢ)⁻¹ Σᵢ Xᵢᵀyᵢ,
 * the exact minimizer of the average (non-adaptive) training loss.
 */
SolutionReport solve_nal_exact(const std::vector<Dataset>& datasets);

/**
 * Exact minimizer of the episodic meta-training objective
 *   (1/(Tτ)) Σᵢⱼ ‖X^out_ij(w − (α/n₂)X^inᵀ_ij(X^in_ij w − y^in_ij)) − y^out_ij‖²/(2n₁),
 * obtained from its normal equations with P̂ᵢⱼ = I − (α/n₂)X^inᵀX^in:
 *   (Σᵢⱼ P̂ᵀX^outᵀX^outP̂) w = Σᵢⱼ P̂ᵀX^outᵀ(y^out − (α/n₂)X^out X^inᵀ y^in).
 */
SolutionReport solve_maml_exact(
    const std::vector<std::vector<EpisodeBatch>>& episodes_per_task,
    double alpha);

/// One adaptation step on an m-point batch under the mean-squared loss:
/// w − (α/m)Xᵀ(Xw − y).
Eigen::VectorXd adapt(const Eigen::VectorXd& weights,
                      const Eigen::MatrixXd& inputs,
                      const Eigen::VectorXd& labels, double alpha);

/// Analytic gradient of the one-episode meta-loss
/// (1/(2n₁))‖X^out w′ − y^out‖² with w′ = w − (α/n₂)X^inᵀ(X^in w − y^in);
/// includes the P̂ᵀ back-propagation factor.
Eigen::VectorXd maml_episode_grad(const Eigen::VectorXd& weights,
                                  const EpisodeBatch& episode, double alpha);

/**
 * SGD on the (optionally hardness-weighted) average training loss. Each
 * iteration samples cfg.tasks_per_iter fresh tasks with n_per_task samples
 * each; the batch gradient is the weighted mean of per-task least-squares
 * gradients, where a batch with h hard and e easy tasks gives each hard task
 * weight ζ/(hζ+e) and each easy task 1/(hζ+e). Initialization is the zero
 * vector; weights beyond the divergence guard raise DivergenceError.
 */
SolutionReport sgd_nal(const TaskEnvironment& env, const SgdConfig& cfg,
                       int n_per_task, SplitRng& rng);

/**
 * SGD on the episodic meta-objective: per iteration and task, sample a fresh
 * episode (n_inner adaptation rows, n_outer evaluation rows) and take the
 * exact gradient of the one-episode meta-loss, averaged over the batch.
 */
SolutionReport sgd_maml(const TaskEnvironment& env, const SgdConfig& cfg,
                        int n_inner, int n_outer, SplitRng& rng);

}  // namespace metagap
