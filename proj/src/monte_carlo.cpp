#include "metagap/monte_carlo.hpp"

#include <atomic>
#include <cmath>
#include <thread>
#include <vector>

#include "metagap/errors.hpp"

namespace metagap {

namespace {

// Trials are grouped into fixed-size blocks; block b always draws from the
// substream rng.split(b) regardless of how many workers run. Workers pull
// block indices from a shared counter and the per-block accumulators are
// merged in index order afterwards, so the estimate is bit-identical for
// any thread count.
constexpr std::int64_t kBlockTrials = 8192;

template <typename BlockFn>
void run_blocks(std::int64_t blocks, int threads, BlockFn&& fn) {
    if (threads <= 1 || blocks <= 1) {
        for (std::int64_t b = 0; b < blocks; ++b) fn(b);
        return;
    }
    std::atomic<std::int64_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::int64_t b = next.fetch_add(1);
            if (b >= blocks) return;
            fn(b);
        }
    };
    std::vector<std::thread> pool;
    const int n_workers = static_cast<int>(
        std::min<std::int64_t>(threads, blocks));
    pool.reserve(n_workers);
    for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
}

/// One post-adaptation loss draw: sample a task and an m-point batch, take
/// the inner gradient step, evaluate the task's population loss analytically.
double fm_trial(const TaskEnvironment& env, const Eigen::VectorXd& w,
                double alpha, int m, SplitRng& rng) {
    const LinearTask task = sample_task(env, rng);
    const Dataset batch = sample_dataset(task, m, rng);
    const Eigen::VectorXd residual = batch.inputs * w - batch.labels;
    const Eigen::VectorXd adapted =
        w - (alpha / static_cast<double>(m)) *
                (batch.inputs.transpose() * residual);
    const Eigen::VectorXd delta = adapted - task.weights_star;
    return 0.5 * delta.dot(task.covariance * delta) + 0.5 * task.noise_var;
}

}  // namespace

McEstimate estimate_fm(const TaskEnvironment& env, const Eigen::VectorXd& w,
                       double alpha, int m, std::int64_t trials,
                       SplitRng& rng, int threads) {
    if (trials < 1) throw ValidationError("trial count must be >= 1");
    if (m < 1) throw ValidationError("adaptation batch size must be >= 1");
    if (w.size() != env.dim())
        throw ValidationError("initialization dimension does not match tasks");

    // Per-call substream: advances the parent so back-to-back estimates are
    // independent, while blocks within one call stay reproducible.
    const SplitRng call_rng = rng.split(rng.next_u64());
    const std::int64_t blocks = (trials + kBlockTrials - 1) / kBlockTrials;
    std::vector<Welford> acc(static_cast<std::size_t>(blocks));
    run_blocks(blocks, threads, [&](std::int64_t b) {
        SplitRng block_rng = call_rng.split(static_cast<std::uint64_t>(b));
        const std::int64_t lo = b * kBlockTrials;
        const std::int64_t hi = std::min(trials, lo + kBlockTrials);
        Welford& wf = acc[static_cast<std::size_t>(b)];
        for (std::int64_t t = lo; t < hi; ++t)
            wf.add(fm_trial(env, w, alpha, m, block_rng));
    });

    Welford total;
    for (const auto& wf : acc) total.merge(wf);
    return {total.mean(), total.std_error(), total.count()};
}

McEstimate estimate_excess(const TaskEnvironment& env,
                           const Eigen::VectorXd& w, double alpha, int m,
                           std::int64_t trials, SplitRng& rng, int threads) {
    McEstimate est = estimate_fm(env, w, alpha, m, trials, rng, threads);

    // Best-achievable baseline ½E[ν²(1 + (α²/m)tr(Σ²))]: the label noise
    // plus the noise the m-sample adaptation step itself injects.
    double baseline = 0.0;
    const double step_factor = alpha * alpha / static_cast<double>(m);
    if (env.is_pool()) {
        for (const auto& [task, prob] : env.pool()) {
            const double tr_sq = (task.covariance * task.covariance).trace();
            baseline += 0.5 * prob * task.noise_var * (1.0 + step_factor * tr_sq);
        }
    } else {
        const auto& mix = env.mixture_params();
        const double d = static_cast<double>(mix.dim);
        const double tr_hard = d * mix.rho_hard * mix.rho_hard;
        const double tr_easy = d * mix.rho_easy * mix.rho_easy;
        baseline = 0.5 * HardEasyMixture::kMixWeight * mix.noise_var *
                   ((1.0 + step_factor * tr_hard) + (1.0 + step_factor * tr_easy));
    }

    est.mean -= baseline;
    return est;
}

FourthMomentReport verify_fourth_moment(const Eigen::MatrixXd& cov,
                                        const Eigen::MatrixXd& a_matrix,
                                        int n, std::int64_t trials,
                                        SplitRng& rng, int threads) {
    const auto d = cov.rows();
    if (cov.cols() != d || a_matrix.rows() != d || a_matrix.cols() != d)
        throw ValidationError("covariance and weighting matrix must be square "
                              "with equal dimension");
    if ((cov - cov.diagonal().asDiagonal().toDenseMatrix())
            .cwiseAbs()
            .maxCoeff() > 0.0)
        throw ValidationError("the fourth-moment identity needs diagonal Σ");
    if ((a_matrix - a_matrix.transpose()).cwiseAbs().maxCoeff() > 1e-12)
        throw ValidationError("weighting matrix must be symmetric");
    if (cov.diagonal().minCoeff() <= 0.0)
        throw ValidationError("covariance must be positive definite");
    if (n < 1) throw ValidationError("row count must be >= 1");
    if (trials < 1) throw ValidationError("trial count must be >= 1");

    // Per-element streaming moments; one matrix-valued Welford per block.
    struct MatWelford {
        std::int64_t count = 0;
        Eigen::MatrixXd mean, m2;
        void init(Eigen::Index dim) {
            mean = Eigen::MatrixXd::Zero(dim, dim);
            m2 = Eigen::MatrixXd::Zero(dim, dim);
        }
        void add(const Eigen::MatrixXd& x) {
            ++count;
            const Eigen::MatrixXd delta = x - mean;
            mean += delta / static_cast<double>(count);
            m2 += delta.cwiseProduct(x - mean);
        }
        void merge(const MatWelford& o) {
            if (o.count == 0) return;
            if (count == 0) {
                *this = o;
                return;
            }
            const double na = static_cast<double>(count);
            const double nb = static_cast<double>(o.count);
            const Eigen::MatrixXd delta = o.mean - mean;
            mean += delta * (nb / (na + nb));
            m2 += o.m2 + delta.cwiseProduct(delta) * (na * nb / (na + nb));
            count += o.count;
        }
    };

    const Eigen::VectorXd sd = cov.diagonal().cwiseSqrt();
    const SplitRng call_rng = rng.split(rng.next_u64());
    const std::int64_t blocks = (trials + kBlockTrials - 1) / kBlockTrials;
    std::vector<MatWelford> acc(static_cast<std::size_t>(blocks));
    run_blocks(blocks, threads, [&](std::int64_t b) {
        SplitRng block_rng = call_rng.split(static_cast<std::uint64_t>(b));
        MatWelford& wf = acc[static_cast<std::size_t>(b)];
        wf.init(d);
        Eigen::MatrixXd x(n, d);
        const std::int64_t lo = b * kBlockTrials;
        const std::int64_t hi = std::min(trials, lo + kBlockTrials);
        for (std::int64_t t = lo; t < hi; ++t) {
            for (int r = 0; r < n; ++r)
                for (Eigen::Index c = 0; c < d; ++c)
                    x(r, c) = sd[c] * block_rng.next_gaussian();
            const Eigen::MatrixXd s = (x.transpose() * x) / static_cast<double>(n);
            wf.add(s * a_matrix * s);
        }
    });

    MatWelford total;
    for (const auto& wf : acc) total.merge(wf);

    FourthMomentReport report;
    report.empirical = total.mean;
    report.analytic =
        cov * a_matrix * cov +
        (1.0 / static_cast<double>(n)) *
            ((cov * a_matrix).trace() * Eigen::MatrixXd::Identity(d, d) +
             cov * a_matrix) *
            cov;
    const double denom = static_cast<double>(total.count) *
                         static_cast<double>(total.count - 1);
    report.std_err = (total.m2 / denom).cwiseSqrt();
    report.max_abs_err =
        (report.empirical - report.analytic).cwiseAbs().maxCoeff();
    return report;
}

}  // namespace metagap
