#include "metagap/closed_form.hpp"

#include <cmath>

#include <Eigen/LU>

namespace metagap {

namespace {

/// Scalar value of Q^(s) for an isotropic covariance ρ·I in dimension d:
/// ρ(1−αρ)² + ((d+1)/s)·α²ρ³.
double q_scalar(double rho, double alpha, SampleCount s, int d) {
    const double contraction = 1.0 - alpha * rho;
    return rho * contraction * contraction +
           s.inv() * (d + 1) * alpha * alpha * rho * rho * rho;
}

Eigen::VectorXd solve_spd(const Eigen::MatrixXd& lhs,
                          const Eigen::VectorXd& rhs, const char* what) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(lhs);
    if (!lu.isInvertible())
        throw SingularMatrixError(std::string(what) +
                                  ": expected task-weighting matrix is singular");
    return lu.solve(rhs);
}

}  // namespace

QMatrix q_matrix(const Eigen::MatrixXd& cov, double alpha, SampleCount s) {
    const auto d = cov.rows();
    if (cov.cols() != d) throw ValidationError("covariance must be square");
    const Eigen::MatrixXd contraction =
        Eigen::MatrixXd::Identity(d, d) - alpha * cov;
    const Eigen::MatrixXd cov_sq = cov * cov;
    QMatrix q;
    q.matrix = contraction * cov * contraction +
               s.inv() * alpha * alpha * (cov_sq.trace() * cov + cov_sq * cov);
    q.alpha = alpha;
    q.sample_count = s;
    return q;
}

Eigen::VectorXd population_nal(const TaskEnvironment& env) {
    const int d = env.dim();
    if (env.is_pool()) {
        Eigen::MatrixXd lhs = Eigen::MatrixXd::Zero(d, d);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
        for (const auto& [task, prob] : env.pool()) {
            lhs += prob * task.covariance;
            rhs += prob * task.covariance * task.weights_star;
        }
        return solve_spd(lhs, rhs, "population_nal");
    }
    const auto& mix = env.mixture_params();
    // E[Σ] = ½(ρ_H+ρ_E)·I and E[Σ w*] = ½ρ_H R·1, so the solution is
    // the hard-cluster center shrunk by ρ_H/(ρ_H+ρ_E).
    const double coeff =
        mix.rho_hard * mix.center_dist / (mix.rho_hard + mix.rho_easy);
    return coeff * Eigen::VectorXd::Ones(d);
}

Eigen::VectorXd population_maml(const TaskEnvironment& env, double alpha,
                                SampleCount n_inner) {
    const int d = env.dim();
    if (env.is_pool()) {
        Eigen::MatrixXd lhs = Eigen::MatrixXd::Zero(d, d);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
        for (const auto& [task, prob] : env.pool()) {
            const Eigen::MatrixXd q =
                q_matrix(task.covariance, alpha, n_inner).matrix;
            lhs += prob * q;
            rhs += prob * q * task.weights_star;
        }
        return solve_spd(lhs, rhs, "population_maml");
    }
    const auto& mix = env.mixture_params();
    const double b_hard = q_scalar(mix.rho_hard, alpha, n_inner, d);
    const double b_easy = q_scalar(mix.rho_easy, alpha, n_inner, d);
    const double denom = b_hard + b_easy;
    if (denom <= 0.0)
        throw SingularMatrixError(
            "population_maml: both mixture components carry zero weight");
    return (b_hard * mix.center_dist / denom) * Eigen::VectorXd::Ones(d);
}

RiskEstimate excess_risk_at(const TaskEnvironment& env,
                            const Eigen::VectorXd& w, double alpha,
                            SampleCount m) {
    if (w.size() != env.dim())
        throw ValidationError("initialization dimension does not match tasks");
    double risk = 0.0;
    if (env.is_pool()) {
        for (const auto& [task, prob] : env.pool()) {
            const Eigen::VectorXd delta = w - task.weights_star;
            const Eigen::MatrixXd q =
                q_matrix(task.covariance, alpha, m).matrix;
            risk += 0.5 * prob * delta.dot(q * delta);
        }
    } else {
        // For an isotropic component with Q^(m) = a·I and optima drawn
        // N(c, r·I): E ‖w−w*‖²_Q = a (‖w−c‖² + d·r).
        const auto& mix = env.mixture_params();
        const int d = mix.dim;
        const double a_hard = q_scalar(mix.rho_hard, alpha, m, d);
        const double a_easy = q_scalar(mix.rho_easy, alpha, m, d);
        const Eigen::VectorXd center =
            mix.center_dist * Eigen::VectorXd::Ones(d);
        const double hard_term =
            a_hard * ((w - center).squaredNorm() + d * mix.spread_hard);
        const double easy_term =
            a_easy * (w.squaredNorm() + d * mix.spread_easy);
        risk = 0.5 * HardEasyMixture::kMixWeight * (hard_term + easy_term);
    }
    return {risk, RiskEstimate::Source::ClosedForm, 0.0};
}

RiskEstimate excess_risk_nal(const TaskEnvironment& env, double alpha,
                             SampleCount m) {
    return excess_risk_at(env, population_nal(env), alpha, m);
}

RiskEstimate excess_risk_maml(const TaskEnvironment& env, double alpha,
                              SampleCount m, SampleCount n_inner) {
    return excess_risk_at(env, population_maml(env, alpha, n_inner), alpha, m);
}

TwoTaskCoefficients two_task_coefficients(double rho_hard, double rho_easy,
                                          double alpha, SampleCount m, int d) {
    if (!(rho_hard > 0.0) || !(rho_easy > 0.0))
        throw ValidationError("hardness parameters must be positive");
    if (d < 1) throw ValidationError("dimension must be >= 1");
    return {q_scalar(rho_hard, alpha, m, d), q_scalar(rho_easy, alpha, m, d)};
}

double geography_ratio_approx(double center_dist, double spread_hard) {
    if (!(spread_hard > 0.0))
        throw ValidationError(
            "the leading-order ratio needs spread_hard > 0");
    return 1.0 + center_dist * center_dist / spread_hard;
}

}  // namespace metagap
