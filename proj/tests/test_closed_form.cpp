// Closed-form solutions, preconditioned covariances, and excess risks.
//
// Numeric oracles in this file were frozen from independent hand arithmetic
// before the implementation existed; they are not regression snapshots.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <metagap/closed_form.hpp>
#include <metagap/errors.hpp>
#include <metagap/rng.hpp>
#include <metagap/task_env.hpp>

#include <cmath>

using namespace metagap;

namespace {

LinearTask iso_task(const Eigen::VectorXd& w, double rho, double noise = 0.0) {
    return {w, rho * Eigen::MatrixXd::Identity(w.size(), w.size()), noise};
}

Eigen::VectorXd basis(int d, int i) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(d);
    e[i] = 1.0;
    return e;
}

/// The hardness-pair environment used throughout: task 1 at +u with Σ=ρ_H·I,
/// task 2 at −u with Σ=ρ_E·I, both probability one half.
TaskEnvironment pm_env(int d, double rho_hard, double rho_easy,
                       double noise = 0.01) {
    const Eigen::VectorXd u = basis(d, 0);
    return make_two_task_env(rho_hard, rho_easy, u, -u, noise);
}

}  // namespace

TEST_CASE("sample counts expose 1/s and reject nonsense") {
    CHECK(SampleCount(4).inv() == doctest::Approx(0.25));
    CHECK(SampleCount(4).value() == 4);
    CHECK_FALSE(SampleCount(4).is_infinite());
    CHECK(SampleCount::infinite().inv() == 0.0);
    CHECK(SampleCount::infinite().is_infinite());
    CHECK_THROWS_AS(SampleCount(0), ValidationError);
    CHECK_THROWS_AS(SampleCount(-3), ValidationError);
    CHECK_THROWS_AS(SampleCount::infinite().value(), ValidationError);
}

TEST_CASE("preconditioned covariance at the identity is exactly 3I") {
    // Σ=I₂, α=1, s=1: the adapted part vanishes and the perturbation is
    // tr(Σ²)Σ + Σ³ = 2I + I.
    const QMatrix q =
        q_matrix(Eigen::MatrixXd::Identity(2, 2), 1.0, SampleCount(1));
    CHECK((q.matrix - 3.0 * Eigen::MatrixXd::Identity(2, 2)).norm() < 1e-14);
}

TEST_CASE("preconditioned covariance has the closed scalar form on isotropy") {
    const int d = 3;
    const double rho = 0.4, alpha = 0.7;
    const long long s = 25;
    const QMatrix q = q_matrix(rho * Eigen::MatrixXd::Identity(d, d), alpha,
                               SampleCount(s));
    const double expected = rho * std::pow(1.0 - alpha * rho, 2) +
                            (double(d) + 1.0) / double(s) * alpha * alpha *
                                rho * rho * rho;
    for (int i = 0; i < d; ++i) CHECK(q.matrix(i, i) == doctest::Approx(expected));
    CHECK(q.matrix.norm() ==
          doctest::Approx(std::sqrt(double(d)) * expected));
}

TEST_CASE("infinite adaptation batches drop the perturbation term") {
    Eigen::MatrixXd cov(2, 2);
    cov << 0.8, 0.2, 0.2, 0.5;
    const double alpha = 0.3;
    const QMatrix q = q_matrix(cov, alpha, SampleCount::infinite());
    const Eigen::MatrixXd damp =
        Eigen::MatrixXd::Identity(2, 2) - alpha * cov;
    CHECK((q.matrix - damp * cov * damp).norm() < 1e-14);
}

TEST_CASE("preconditioned covariance matches a by-hand diagonal case") {
    // Σ = diag(1, 2), α = 0.25, s = 8.
    // Per-eigenvalue: λ(1−αλ)² + (α²/8)(tr(Σ²)λ + λ³), tr(Σ²)=5.
    Eigen::MatrixXd cov = Eigen::Vector2d(1.0, 2.0).asDiagonal();
    const QMatrix q = q_matrix(cov, 0.25, SampleCount(8));
    const double q1 = 1.0 * 0.5625 + (0.0625 / 8.0) * (5.0 + 1.0);
    const double q2 = 2.0 * 0.25 + (0.0625 / 8.0) * (10.0 + 8.0);
    CHECK(q.matrix(0, 0) == doctest::Approx(q1));
    CHECK(q.matrix(1, 1) == doctest::Approx(q2));
    CHECK(std::abs(q.matrix(0, 1)) < 1e-15);
}

TEST_CASE("pool solution weights tasks by their covariances") {
    const int d = 4;
    const auto env = pm_env(d, 0.1, 1.0);
    const Eigen::VectorXd w = population_nal(env);
    // E[Σ]⁻¹E[Σw*] = ((ρ_H−ρ_E)/(ρ_H+ρ_E))·e₁ = −0.8181..·e₁.
    CHECK(w[0] == doctest::Approx((0.1 - 1.0) / 1.1));
    for (int i = 1; i < d; ++i) CHECK(std::abs(w[i]) < 1e-14);
}

TEST_CASE("meta solution reduces to the non-adaptive one when adaptation is off") {
    const auto env = pm_env(5, 0.3, 0.9);
    const Eigen::VectorXd nal = population_nal(env);
    // α = 0 makes Q = Σ exactly, so the weighting coincides.
    const Eigen::VectorXd maml0 =
        population_maml(env, 0.0, SampleCount::infinite());
    CHECK((nal - maml0).norm() < 1e-14);
}

TEST_CASE("equal-hardness pools make both solutions coincide") {
    const int d = 3;
    const Eigen::VectorXd u = Eigen::VectorXd::Ones(d);
    const auto env = make_two_task_env(0.7, 0.7, u, -u, 0.0);
    CHECK(population_nal(env).norm() < 1e-14);
    CHECK(population_maml(env, 0.9, SampleCount(40)).norm() < 1e-14);
    const auto nal = excess_risk_nal(env, 0.9, SampleCount(40));
    const auto maml = excess_risk_maml(env, 0.9, SampleCount(40), 40);
    CHECK(nal.value == doctest::Approx(maml.value));
}

TEST_CASE("mixture solutions have their analytic coordinates") {
    HardEasyMixture mix;
    mix.rho_hard = 0.1;
    mix.rho_easy = 1.0;
    mix.center_dist = 2.0;
    mix.spread_hard = 1.0;
    mix.spread_easy = 1.0;
    mix.dim = 10;
    mix.noise_var = 0.01;
    const auto env = TaskEnvironment::mixture(mix);

    // Non-adaptive: ρ_H R/(ρ_H+ρ_E) = 0.2/1.1 per coordinate.
    const Eigen::VectorXd nal = population_nal(env);
    for (int i = 0; i < mix.dim; ++i)
        CHECK(nal[i] == doctest::Approx(0.2 / 1.1));

    // Meta: R·b_H/(b_H+b_E) with b = q-scalars at α=1, n₂=500.
    // b_H = 0.1·0.81 + (11/500)·0.001 = 0.081022, b_E = 11/500 = 0.022,
    // coordinate = 2·0.081022/0.103022 = 1.572907…  (hand arithmetic)
    const Eigen::VectorXd maml = population_maml(env, 1.0, SampleCount(500));
    for (int i = 0; i < mix.dim; ++i)
        CHECK(maml[i] == doctest::Approx(1.572907).epsilon(1e-5));
}

TEST_CASE("hardness-pair risks reproduce the frozen hand values") {
    // ρ_H=0.1, ρ_E=1, α=1, m=n₂=2000, ν²=0.01, w* = ±e₁ in d=10.
    const auto env = pm_env(10, 0.1, 1.0);
    const auto nal = excess_risk_nal(env, 1.0, SampleCount(2000));
    const auto maml =
        excess_risk_maml(env, 1.0, SampleCount(2000), SampleCount(2000));

    CHECK(nal.value == doctest::Approx(0.066992).epsilon(1e-4));
    CHECK(maml.value == doctest::Approx(0.0051503).epsilon(1e-4));
    CHECK(nal.value / maml.value == doctest::Approx(13.008).epsilon(0.01));
    CHECK(nal.source == RiskEstimate::Source::ClosedForm);
    CHECK(nal.std_err == 0.0);

    // Separation scale: w* = ±1_d multiplies both risks by d, not the ratio.
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(10);
    const auto env10 = make_two_task_env(0.1, 1.0, ones, -ones, 0.01);
    const auto nal10 = excess_risk_nal(env10, 1.0, SampleCount(2000));
    CHECK(nal10.value == doctest::Approx(10.0 * nal.value).epsilon(1e-10));
}

TEST_CASE("risk at a point matches an independent quadratic evaluation") {
    const auto env = pm_env(3, 0.2, 0.8);
    const double alpha = 0.9;
    const SampleCount m(50);
    SplitRng rng(66);
    for (int rep = 0; rep < 5; ++rep) {
        Eigen::VectorXd w(3);
        for (int i = 0; i < 3; ++i) w[i] = rng.next_gaussian();
        // Direct form: ½ Σᵢ pᵢ (w−wᵢ*)ᵀQᵢ(w−wᵢ*).
        double expected = 0.0;
        for (const auto& [task, prob] : env.pool()) {
            const Eigen::VectorXd diff = w - task.weights_star;
            expected += 0.5 * prob *
                        diff.dot(q_matrix(task.covariance, alpha, m).matrix *
                                 diff);
        }
        CHECK(excess_risk_at(env, w, alpha, m).value ==
              doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("mixture risk at a point matches the component decomposition") {
    HardEasyMixture mix;
    mix.rho_hard = 0.25;
    mix.rho_easy = 0.75;
    mix.center_dist = 1.5;
    mix.spread_hard = 0.4;
    mix.spread_easy = 0.9;
    mix.dim = 6;
    mix.noise_var = 0.0;
    const auto env = TaskEnvironment::mixture(mix);
    const double alpha = 0.8;
    const SampleCount m(30);

    const auto coeff = two_task_coefficients(mix.rho_hard, mix.rho_easy,
                                             alpha, m, mix.dim);
    SplitRng rng(31);
    for (int rep = 0; rep < 5; ++rep) {
        Eigen::VectorXd w(mix.dim);
        for (int i = 0; i < mix.dim; ++i) w[i] = rng.next_gaussian();
        const Eigen::VectorXd center =
            mix.center_dist * Eigen::VectorXd::Ones(mix.dim);
        // ½·½·[a_H(‖w−R·1‖² + d·r_H) + a_E(‖w‖² + d·r_E)]: the spread terms
        // are the variance of each branch's optimum around its center.
        const double expected =
            0.25 * (coeff.a_hard * ((w - center).squaredNorm() +
                                    mix.dim * mix.spread_hard) +
                    coeff.a_easy *
                        (w.squaredNorm() + mix.dim * mix.spread_easy));
        CHECK(excess_risk_at(env, w, alpha, m).value ==
              doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("risk helpers evaluate the risk exactly at their own solutions") {
    const auto env = pm_env(4, 0.15, 0.85);
    const double alpha = 1.0;
    const SampleCount m(200);

    const auto direct_nal = excess_risk_at(env, population_nal(env), alpha, m);
    CHECK(excess_risk_nal(env, alpha, m).value ==
          doctest::Approx(direct_nal.value).epsilon(1e-12));

    const auto direct_maml = excess_risk_at(
        env, population_maml(env, alpha, SampleCount(64)), alpha, m);
    CHECK(excess_risk_maml(env, alpha, m, SampleCount(64)).value ==
          doctest::Approx(direct_maml.value).epsilon(1e-12));
}

TEST_CASE("the meta solution minimizes the risk it was trained for") {
    // With n_inner = m the solution is the argmin of E_m, so any perturbation
    // can only increase the risk; NAL is one such perturbation.
    const auto env = pm_env(5, 0.1, 1.0);
    const double alpha = 1.0;
    const SampleCount m(500);
    const Eigen::VectorXd w_maml = population_maml(env, alpha, m);
    const double risk_maml = excess_risk_at(env, w_maml, alpha, m).value;

    CHECK(risk_maml <= excess_risk_at(env, population_nal(env), alpha, m).value);
    SplitRng rng(12);
    for (int rep = 0; rep < 10; ++rep) {
        Eigen::VectorXd w = w_maml;
        for (int i = 0; i < w.size(); ++i) w[i] += 0.1 * rng.next_gaussian();
        CHECK(excess_risk_at(env, w, alpha, m).value >= risk_maml);
    }
}

TEST_CASE("risks are nonnegative everywhere") {
    const auto env = pm_env(3, 0.3, 0.6);
    SplitRng rng(77);
    for (int rep = 0; rep < 20; ++rep) {
        Eigen::VectorXd w(3);
        for (int i = 0; i < 3; ++i) w[i] = 3.0 * rng.next_gaussian();
        const double alpha = 2.0 * rng.next_double();
        CHECK(excess_risk_at(env, w, alpha, SampleCount(10)).value >= 0.0);
    }
}

TEST_CASE("gain collapses as the hardness gap closes") {
    // As ρ_H → ρ_E the two tasks are equally hard and the ratio tends to 1.
    const SampleCount m(2000);
    double prev_ratio = std::numeric_limits<double>::infinity();
    for (const double rho_hard : {0.2, 0.5, 0.8, 0.9999}) {
        const auto env = pm_env(10, rho_hard, 1.0);
        const double r = excess_risk_nal(env, 1.0, m).value /
                         excess_risk_maml(env, 1.0, m, m).value;
        CHECK(r <= prev_ratio * (1.0 + 1e-9));
        prev_ratio = r;
    }
    CHECK(prev_ratio == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("a fully adapted single task yields a singular weighting") {
    // One task, Σ=I, α=1, infinite batch: Q = (I−Σ)Σ(I−Σ) = 0, so the
    // normal equations cannot be solved.
    const Eigen::VectorXd w = Eigen::VectorXd::Ones(2);
    const auto env = TaskEnvironment::finite_pool({{iso_task(w, 1.0), 1.0}});
    CHECK_THROWS_AS(population_maml(env, 1.0, SampleCount::infinite()),
                    SingularMatrixError);
}

TEST_CASE("the leading-order ratio approximation is 1 + R^2/r_H") {
    CHECK(geography_ratio_approx(2.0, 0.5) == doctest::Approx(9.0));
    CHECK(geography_ratio_approx(3.0, 0.1) == doctest::Approx(91.0));
    CHECK(geography_ratio_approx(0.0, 1.0) == doctest::Approx(1.0));
}

TEST_CASE("large-batch mixtures approach the leading-order ratio") {
    // In the regime where the analysis is sharp (α = 1/ρ_E, large m = n₂,
    // strong hard/easy separation) the exact ratio lands within 30% of
    // 1 + R²/r_H.
    HardEasyMixture mix;
    mix.rho_hard = 0.1;
    mix.rho_easy = 1.0;
    mix.center_dist = 3.0;
    mix.spread_hard = 0.5;
    mix.spread_easy = 1.0;
    mix.dim = 10;
    mix.noise_var = 0.01;
    const auto env = TaskEnvironment::mixture(mix);
    const SampleCount m(1000000);
    const double ratio = excess_risk_nal(env, 1.0, m).value /
                         excess_risk_maml(env, 1.0, m, m).value;
    const double approx = geography_ratio_approx(3.0, 0.5);
    CHECK(std::abs(ratio - approx) / approx < 0.30);
}

TEST_CASE("scalar coefficients match their defining formula") {
    const auto c = two_task_coefficients(0.1, 1.0, 1.0, SampleCount(2000), 10);
    CHECK(c.a_hard == doctest::Approx(0.1 * 0.81 + 0.0055 * 0.001));
    CHECK(c.a_easy == doctest::Approx(0.0055));
    const auto inf = two_task_coefficients(0.3, 0.9, 0.5,
                                           SampleCount::infinite(), 5);
    CHECK(inf.a_hard == doctest::Approx(0.3 * std::pow(1.0 - 0.15, 2)));
    CHECK(inf.a_easy == doctest::Approx(0.9 * std::pow(1.0 - 0.45, 2)));
}
