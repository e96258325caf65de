#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "metagap/rng.hpp"

namespace metagap {

/**
 * One linear-regression task: labels are generated as y = ⟨w*, x⟩ + z with
 * inputs x ~ N(0, Σ) and noise z ~ N(0, ν²).
 */
struct LinearTask {
    Eigen::VectorXd weights_star;   ///< ground-truth weights w*
    Eigen::MatrixXd covariance;     ///< input covariance Σ (symmetric PD)
    double noise_var = 0.0;         ///< label-noise variance ν²

    int dim() const { return static_cast<int>(weights_star.size()); }

    /// Throws ValidationError if the invariants do not hold
    /// (symmetry within 1e-12, positive-definite Σ, finite w*, ν² ≥ 0).
    void validate() const;
};

/**
 * Two-component hard/easy task generator. A fair coin picks the component;
 * the hard branch draws w* ~ N(center_dist·1_d, spread_hard·I) with
 * Σ = rho_hard·I, the easy branch draws w* ~ N(0, spread_easy·I) with
 * Σ = rho_easy·I. The mixture weight is fixed at one half.
 */
struct HardEasyMixture {
    double rho_hard = 0.0;     ///< hardness (strong-convexity scale) of hard tasks
    double rho_easy = 0.0;     ///< hardness of easy tasks (≥ rho_hard)
    double center_dist = 0.0;  ///< per-coordinate offset R of the hard cluster center
    double spread_hard = 0.0;  ///< variance r_H of hard-task optima around the center
    double spread_easy = 0.0;  ///< variance r_E of easy-task optima around zero
    int dim = 0;
    double noise_var = 0.0;

    static constexpr double kMixWeight = 0.5;
};

/**
 * A distribution over tasks: either an explicit finite pool of
 * (task, probability) pairs or a HardEasyMixture generator.
 *
 * Immutable after construction; construction validates all invariants.
 */
class TaskEnvironment {
public:
    enum class Kind { FinitePool, HardEasyMixture };

    using PoolEntry = std::pair<LinearTask, double>;

    static TaskEnvironment finite_pool(std::vector<PoolEntry> pool);
    static TaskEnvironment mixture(HardEasyMixture mix);

    Kind kind() const { return kind_; }
    bool is_pool() const { return kind_ == Kind::FinitePool; }
    bool is_mixture() const { return kind_ == Kind::HardEasyMixture; }

    /// Pool accessor; only valid when is_pool().
    const std::vector<PoolEntry>& pool() const;
    /// Mixture accessor; only valid when is_mixture().
    const HardEasyMixture& mixture_params() const;

    /// Task dimension d (uniform across the environment).
    int dim() const;

    /// Serialization; schema field is "metagap-env/1".
    std::string to_json() const;
    static TaskEnvironment from_json(const std::string& text);

private:
    TaskEnvironment() = default;

    Kind kind_ = Kind::FinitePool;
    std::vector<PoolEntry> pool_;
    HardEasyMixture mixture_;
};

/// A sampled regression dataset: n×d inputs and n labels.
struct Dataset {
    Eigen::MatrixXd inputs;
    Eigen::VectorXd labels;

    int rows() const { return static_cast<int>(inputs.rows()); }
};

/// One meta-training episode: n₂ inner (adaptation) rows followed by
/// n₁ outer (evaluation) rows.
struct EpisodeBatch {
    Eigen::MatrixXd inner_inputs;
    Eigen::VectorXd inner_labels;
    Eigen::MatrixXd outer_inputs;
    Eigen::VectorXd outer_labels;

    int n_inner() const { return static_cast<int>(inner_inputs.rows()); }
    int n_outer() const { return static_cast<int>(outer_inputs.rows()); }
};

/// A task draw annotated with which branch produced it; the hard flag is
/// what loss re-weighting in the trainers keys on. For finite pools the
/// task with the smallest covariance trace is considered hard (ties: none
/// are hard unless traces differ).
struct TaggedTask {
    LinearTask task;
    bool is_hard = false;
};

/// Two-task pool used throughout the hardness analysis: task 1 has
/// Σ = rho_hard·I, task 2 has Σ = rho_easy·I, equal probability 0.5.
TaskEnvironment make_two_task_env(double rho_hard, double rho_easy,
                                  const Eigen::VectorXd& w1,
                                  const Eigen::VectorXd& w2,
                                  double noise_var);

/// Draws one task from the environment.
LinearTask sample_task(const TaskEnvironment& env, SplitRng& rng);

/// Draws one task plus its hard/easy tag (used by weighted trainers).
TaggedTask sample_task_tagged(const TaskEnvironment& env, SplitRng& rng);

/// Samples `count` i.i.d. rows x ~ N(0, Σ) with labels y = ⟨w*, x⟩ + z.
Dataset sample_dataset(const LinearTask& task, int count, SplitRng& rng);

/// Partitions a dataset into episodes of n_inner + n_outer consecutive rows,
/// in order and without reuse. The row count must be divisible by
/// (n_inner + n_outer); anything else is rejected rather than truncated.
std::vector<EpisodeBatch> split_episodes(const Dataset& data, int n_inner,
                                         int n_outer);

}  // namespace metagap
