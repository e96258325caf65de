// Streaming statistics, Monte-Carlo estimators, and the fourth-moment check.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <metagap/closed_form.hpp>
#include <metagap/monte_carlo.hpp>
#include <metagap/rng.hpp>
#include <metagap/task_env.hpp>

#include <cmath>
#include <vector>

using namespace metagap;

namespace {

LinearTask iso_task(const Eigen::VectorXd& w, double rho, double noise = 0.0) {
    return {w, rho * Eigen::MatrixXd::Identity(w.size(), w.size()), noise};
}

TaskEnvironment small_env() {
    Eigen::VectorXd w1(3), w2(3);
    w1 << 1.0, 0.5, -0.2;
    w2 << -0.8, 0.1, 0.6;
    return TaskEnvironment::finite_pool(
        {{iso_task(w1, 0.2, 0.01), 0.4}, {iso_task(w2, 0.9, 0.01), 0.6}});
}

}  // namespace

TEST_CASE("streaming moments match direct formulas") {
    const std::vector<double> xs = {2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0};
    Welford acc;
    for (double x : xs) acc.add(x);
    CHECK(acc.count() == 8);
    CHECK(acc.mean() == doctest::Approx(5.0));
    // Sample variance with Bessel correction: 32/7.
    CHECK(acc.variance() == doctest::Approx(32.0 / 7.0));
    CHECK(acc.std_error() == doctest::Approx(std::sqrt(32.0 / 7.0 / 8.0)));
}

TEST_CASE("merging accumulators equals one sequential pass") {
    SplitRng rng(13);
    std::vector<double> xs(997);
    for (double& x : xs) x = rng.next_gaussian() * 3.0 + 1.0;

    Welford whole;
    for (double x : xs) whole.add(x);

    Welford left, right, merged;
    for (std::size_t i = 0; i < xs.size(); ++i)
        (i < 400 ? left : right).add(xs[i]);
    merged.merge(left);
    merged.merge(right);

    CHECK(merged.count() == whole.count());
    CHECK(merged.mean() == doctest::Approx(whole.mean()).epsilon(1e-13));
    CHECK(merged.variance() ==
          doctest::Approx(whole.variance()).epsilon(1e-12));

    Welford empty;
    merged.merge(empty);  // merging nothing changes nothing
    CHECK(merged.count() == whole.count());
}

TEST_CASE("estimators are independent of the worker count") {
    const auto env = small_env();
    Eigen::VectorXd w(3);
    w << 0.1, -0.2, 0.3;

    SplitRng rng1(2025), rng3(2025);
    const McEstimate a = estimate_fm(env, w, 0.8, 10, 30000, rng1, 1);
    const McEstimate b = estimate_fm(env, w, 0.8, 10, 30000, rng3, 3);
    CHECK(a.mean == b.mean);          // bit-identical by construction
    CHECK(a.std_err == b.std_err);
    CHECK(a.trials == b.trials);
    CHECK(a.trials == 30000);
}

TEST_CASE("consecutive estimates from one generator are fresh draws") {
    const auto env = small_env();
    Eigen::VectorXd w(3);
    w << 0.1, -0.2, 0.3;
    SplitRng rng(5);
    const McEstimate first = estimate_fm(env, w, 0.8, 10, 5000, rng);
    const McEstimate second = estimate_fm(env, w, 0.8, 10, 5000, rng);
    CHECK(first.mean != second.mean);
    // Both still estimate the same quantity.
    CHECK(std::abs(first.mean - second.mean) <
          5.0 * std::hypot(first.std_err, second.std_err));
}

TEST_CASE("a realizable single task at its optimum has zero excess risk") {
    // Noiseless, one task, w = w*: the adaptation step stays at w* and the
    // population loss equals the baseline exactly, trial by trial.
    Eigen::VectorXd w(2);
    w << 1.0, -2.0;
    const auto env = TaskEnvironment::finite_pool({{iso_task(w, 0.7), 1.0}});
    SplitRng rng(8);
    const McEstimate excess = estimate_excess(env, w, 0.5, 5, 2000, rng);
    CHECK(excess.mean == 0.0);
    CHECK(excess.std_err == 0.0);
}

TEST_CASE("the excess estimator agrees with the closed form") {
    const auto env = small_env();
    const double alpha = 0.8;
    const int m = 10;
    SplitRng rng(31337);
    for (const Eigen::VectorXd& w :
         {population_nal(env), population_maml(env, alpha, SampleCount(m))}) {
        SplitRng local = rng.split(static_cast<std::uint64_t>(w[0] * 1e6));
        const McEstimate mc = estimate_excess(env, w, alpha, m, 40000, local);
        const double cf = excess_risk_at(env, w, alpha, SampleCount(m)).value;
        CHECK(std::abs(mc.mean - cf) < 4.0 * mc.std_err);
        CHECK(mc.std_err > 0.0);
    }
}

TEST_CASE("the mixture excess estimator agrees with the closed form") {
    HardEasyMixture mix;
    mix.rho_hard = 0.1;
    mix.rho_easy = 1.0;
    mix.center_dist = 2.0;
    mix.spread_hard = 0.5;
    mix.spread_easy = 1.0;
    mix.dim = 4;
    mix.noise_var = 0.01;
    const auto env = TaskEnvironment::mixture(mix);
    const double alpha = 1.0;
    const int m = 25;
    const Eigen::VectorXd w = population_maml(env, alpha, SampleCount(m));
    SplitRng rng(99);
    const McEstimate mc = estimate_excess(env, w, alpha, m, 60000, rng);
    const double cf = excess_risk_at(env, w, alpha, SampleCount(m)).value;
    CHECK(std::abs(mc.mean - cf) < 4.0 * mc.std_err);
}

TEST_CASE("fourth-moment identity holds elementwise on a diagonal case") {
    Eigen::MatrixXd cov = Eigen::Vector2d(1.0, 2.0).asDiagonal();
    Eigen::MatrixXd a(2, 2);
    a << 1.5, 0.3, 0.3, 0.7;
    const int n = 4;
    SplitRng rng(4242);
    const FourthMomentReport report =
        verify_fourth_moment(cov, a, n, 150000, rng);

    // The analytic matrix matches an independent evaluation of the formula.
    const Eigen::MatrixXd expected =
        cov * a * cov +
        (1.0 / n) * ((cov * a).trace() * Eigen::MatrixXd::Identity(2, 2) +
                     cov * a) *
            cov;
    CHECK((report.analytic - expected).cwiseAbs().maxCoeff() < 1e-12);

    // Every element of the empirical mean is statistically compatible.
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) {
            const double err = std::abs(report.empirical(r, c) -
                                        report.analytic(r, c));
            CHECK(err < 6.0 * report.std_err(r, c));
        }
    CHECK(report.max_abs_err ==
          doctest::Approx(
              (report.empirical - report.analytic).cwiseAbs().maxCoeff()));
}

TEST_CASE("identity inputs give the (1 + (d+1)/n) scaling") {
    const int d = 3, n = 5;
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
    SplitRng rng(777);
    const FourthMomentReport report =
        verify_fourth_moment(eye, eye, n, 200000, rng);
    const Eigen::MatrixXd target = (1.0 + double(d + 1) / n) * eye;
    CHECK((report.analytic - target).cwiseAbs().maxCoeff() < 1e-12);
    for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c)
            CHECK(std::abs(report.empirical(r, c) - target(r, c)) <
                  6.0 * std::max(report.std_err(r, c), 1e-12));
}

TEST_CASE("the fourth-moment check is worker-count independent") {
    Eigen::MatrixXd cov = Eigen::Vector2d(0.5, 1.5).asDiagonal();
    const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(2, 2);
    SplitRng rng1(31), rng2(31);
    const auto one = verify_fourth_moment(cov, a, 6, 20000, rng1, 1);
    const auto two = verify_fourth_moment(cov, a, 6, 20000, rng2, 4);
    CHECK((one.empirical - two.empirical).cwiseAbs().maxCoeff() == 0.0);
    CHECK((one.std_err - two.std_err).cwiseAbs().maxCoeff() == 0.0);
}
