#pragma once

#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "metagap/errors.hpp"
#include "metagap/task_env.hpp"

namespace metagap {

/**
 * Adaptation-batch size appearing in the 1/s perturbation terms. The
 * analysis frequently takes the large-batch limit, so the type carries an
 * explicit infinite mode instead of a magic large integer: in every formula
 * the batch size enters only through 1/s, and inv() returns 0 for the limit.
 */
class SampleCount {
public:
    // Implicit on purpose: lets call sites pass plain integers.
    SampleCount(long long n) : n_(n) {
        if (n < 1) throw ValidationError("sample count must be >= 1");
    }

    static SampleCount infinite() {
        SampleCount s;
        s.n_ = kInfinite;
        return s;
    }

    bool is_infinite() const { return n_ == kInfinite; }

    long long value() const {
        if (is_infinite())
            throw ValidationError("infinite sample count has no finite value");
        return n_;
    }

    /// 1/s, the only way the count enters the formulas; 0 in the limit.
    double inv() const {
        return is_infinite() ? 0.0 : 1.0 / static_cast<double>(n_);
    }

private:
    SampleCount() : n_(kInfinite) {}
    static constexpr long long kInfinite = -1;
    long long n_;
};

/**
 * Preconditioned covariance
 *   Q^(s) = (I−αΣ)Σ(I−αΣ) + (α²/s)(tr(Σ²)Σ + Σ³).
 * This is the effective weight a task carries in the meta-learned solution:
 * the first factor discounts directions one adaptation step can fix, the
 * second is the stochastic-gradient perturbation from an s-sample step.
 */
struct QMatrix {
    Eigen::MatrixXd matrix;
    double alpha = 0.0;
    SampleCount sample_count = SampleCount::infinite();
};

/// Scalar Q-values of the two isotropic tasks in the hard/easy analysis:
/// a_H = ρ_H(1−αρ_H)² + ((d+1)/m)α²ρ_H³ and the same for a_E.
struct TwoTaskCoefficients {
    double a_hard = 0.0;
    double a_easy = 0.0;
};

/// A scalar risk value together with how it was obtained.
struct RiskEstimate {
    enum class Source { ClosedForm, MonteCarlo };

    double value = 0.0;
    Source source = Source::ClosedForm;
    double std_err = 0.0;  ///< 0 for closed form
};

/// Evaluates Q^(s) for a symmetric positive-definite covariance.
QMatrix q_matrix(const Eigen::MatrixXd& cov, double alpha, SampleCount s);

/// Population-optimal non-adaptive solution w*_NAL = E[Σ]⁻¹ E[Σ w*].
/// Finite pools use probability-weighted sums; the mixture uses its
/// analytic form (ρ_H R/(ρ_H+ρ_E))·1_d.
Eigen::VectorXd population_nal(const TaskEnvironment& env);

/// Population-optimal meta-learned solution
/// w*_MAML = E[Q^(n_inner)]⁻¹ E[Q^(n_inner) w*].
Eigen::VectorXd population_maml(const TaskEnvironment& env, double alpha,
                                SampleCount n_inner);

/// Excess post-adaptation risk of w*_NAL: the expected loss after one
/// m-sample gradient step from the solution, minus the per-task optimum.
/// Finite pools are evaluated by exact enumeration over task pairs; the
/// mixture path uses the closed form in the hard/easy geometry.
RiskEstimate excess_risk_nal(const TaskEnvironment& env, double alpha,
                             SampleCount m);

/// Excess post-adaptation risk of w*_MAML; n_inner is the episode batch
/// size that shaped the solution, m the evaluation adaptation batch.
RiskEstimate excess_risk_maml(const TaskEnvironment& env, double alpha,
                              SampleCount m, SampleCount n_inner);

/// Excess risk of an arbitrary initialization w (closed form):
/// ½ E_i ‖w − w_i*‖²_{Q_i^(m)}. The two functions above are this evaluated
/// at the respective population solutions.
RiskEstimate excess_risk_at(const TaskEnvironment& env,
                            const Eigen::VectorXd& w, double alpha,
                            SampleCount m);

/// Scalar a-values for a pair of isotropic hardness levels.
TwoTaskCoefficients two_task_coefficients(double rho_hard, double rho_easy,
                                          double alpha, SampleCount m, int d);

/// Leading-order risk ratio in the hard/easy geometry: 1 + R²/r_H.
double geography_ratio_approx(double center_dist, double spread_hard);

}  // namespace metagap
