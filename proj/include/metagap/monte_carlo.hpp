#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "metagap/rng.hpp"
#include "metagap/task_env.hpp"

namespace metagap {

/// Streaming mean/variance accumulator (Welford). Numerically stable at
/// large trial counts and mergeable across shards by exact pooling.
class Welford {
public:
    void add(double x) {
        ++count_;
        const double delta = x - mean_;
        mean_ += delta / static_cast<double>(count_);
        m2_ += delta * (x - mean_);
    }

    /// Exact pooled combination of two accumulators (Chan et al.).
    void merge(const Welford& other) {
        if (other.count_ == 0) return;
        if (count_ == 0) {
            *this = other;
            return;
        }
        const double na = static_cast<double>(count_);
        const double nb = static_cast<double>(other.count_);
        const double delta = other.mean_ - mean_;
        const double n = na + nb;
        mean_ += delta * nb / n;
        m2_ += other.m2_ + delta * delta * na * nb / n;
        count_ += other.count_;
    }

    std::int64_t count() const { return count_; }
    double mean() const { return mean_; }
    double variance() const {
        return count_ > 1 ? m2_ / static_cast<double>(count_ - 1) : 0.0;
    }
    double std_error() const {
        return count_ > 1
                   ? std::sqrt(variance() / static_cast<double>(count_))
                   : 0.0;
    }

private:
    std::int64_t count_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

/// A Monte-Carlo estimate: sample mean, its standard error, and the trial
/// count that produced them.
struct McEstimate {
    double mean = 0.0;
    double std_err = 0.0;
    std::int64_t trials = 0;
};

/**
 * Monte-Carlo estimate of the post-adaptation population loss
 *   F_m(w) = E_task E_batch[ f(w − α∇f̂(w; batch)) ]
 * at initialization w. Each trial samples a task and an m-point adaptation
 * batch, takes the gradient step, and evaluates the task's population loss
 * analytically: f(v) = ½(v−w*)ᵀΣ(v−w*) + ½ν². Evaluating f in closed form
 * keeps the estimator's randomness confined to tasks and adaptation batches.
 *
 * Trials are sharded across `threads` workers (split rng streams, exact
 * mean/variance pooling); the result is independent of the shard count.
 */
McEstimate estimate_fm(const TaskEnvironment& env, const Eigen::VectorXd& w,
                       double alpha, int m, std::int64_t trials,
                       SplitRng& rng, int threads = 1);

/// estimate_fm minus the analytic best-achievable baseline
/// ½E[ν² + (α²ν²/m)tr(Σ²)]; this is the quantity the closed-form
/// excess-risk functions predict.
McEstimate estimate_excess(const TaskEnvironment& env,
                           const Eigen::VectorXd& w, double alpha, int m,
                           std::int64_t trials, SplitRng& rng,
                           int threads = 1);

/// Elementwise report for the fourth-moment identity check.
struct FourthMomentReport {
    Eigen::MatrixXd empirical;  ///< mean over trials of (XᵀX/n)A(XᵀX/n)
    Eigen::MatrixXd analytic;   ///< ΣAΣ + (1/n)(tr(ΣA)I + ΣA)Σ
    Eigen::MatrixXd std_err;    ///< per-element standard error of `empirical`
    double max_abs_err = 0.0;   ///< max |empirical − analytic|
};

/**
 * Statistical verification of the Gaussian fourth-moment identity
 *   E[(XᵀX/n) A (XᵀX/n)] = ΣAΣ + (1/n)(tr(ΣA)·I + ΣA)Σ
 * for diagonal Σ (the hypothesis under which it holds) and symmetric A,
 * where the n rows of X are i.i.d. N(0, Σ).
 */
FourthMomentReport verify_fourth_moment(const Eigen::MatrixXd& cov,
                                        const Eigen::MatrixXd& a_matrix,
                                        int n, std::int64_t trials,
                                        SplitRng& rng, int threads = 1);

}  // namespace metagap
