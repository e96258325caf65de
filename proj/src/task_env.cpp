#include "metagap/task_env.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "metagap/errors.hpp"

namespace metagap {

namespace {

constexpr double kSymTol = 1e-12;
constexpr double kProbTol = 1e-12;

bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

}  // namespace

void LinearTask::validate() const {
    const auto d = weights_star.size();
    if (d < 1) throw ValidationError("task weights must be non-empty");
    if (!all_finite(weights_star))
        throw ValidationError("task weights contain non-finite entries");
    if (covariance.rows() != d || covariance.cols() != d)
        throw ValidationError("covariance dimensions do not match weights");
    if (!all_finite(covariance))
        throw ValidationError("covariance contains non-finite entries");
    const double asym = (covariance - covariance.transpose()).cwiseAbs().maxCoeff();
    if (asym > kSymTol)
        throw ValidationError("covariance is not symmetric (asymmetry " +
                              std::to_string(asym) + ")");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(covariance,
                                                      Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() <= 0.0)
        throw ValidationError("covariance is not positive definite");
    if (noise_var < 0.0) throw ValidationError("noise variance must be >= 0");
}

TaskEnvironment TaskEnvironment::finite_pool(std::vector<PoolEntry> pool) {
    if (pool.empty()) throw ValidationError("task pool must be non-empty");
    double total = 0.0;
    const int d = pool.front().first.dim();
    for (const auto& [task, prob] : pool) {
        task.validate();
        if (task.dim() != d)
            throw ValidationError("tasks in a pool must share one dimension");
        if (prob < 0.0) throw ValidationError("task probability must be >= 0");
        total += prob;
    }
    if (std::abs(total - 1.0) > kProbTol)
        throw ValidationError("task probabilities must sum to 1, got " +
                              std::to_string(total));
    TaskEnvironment env;
    env.kind_ = Kind::FinitePool;
    env.pool_ = std::move(pool);
    return env;
}

TaskEnvironment TaskEnvironment::mixture(HardEasyMixture mix) {
    if (!(mix.rho_hard > 0.0) || !(mix.rho_easy > 0.0))
        throw ValidationError("hardness parameters must be positive");
    if (mix.rho_hard > mix.rho_easy)
        throw ValidationError("rho_hard must not exceed rho_easy");
    if (mix.spread_hard < 0.0 || mix.spread_easy < 0.0)
        throw ValidationError("spreads must be >= 0");
    if (mix.center_dist < 0.0)
        throw ValidationError("center distance must be >= 0");
    if (mix.dim < 1) throw ValidationError("dimension must be >= 1");
    if (mix.noise_var < 0.0)
        throw ValidationError("noise variance must be >= 0");
    TaskEnvironment env;
    env.kind_ = Kind::HardEasyMixture;
    env.mixture_ = mix;
    return env;
}

const std::vector<TaskEnvironment::PoolEntry>& TaskEnvironment::pool() const {
    if (!is_pool())
        throw ValidationError("environment is not a finite pool");
    return pool_;
}

const HardEasyMixture& TaskEnvironment::mixture_params() const {
    if (!is_mixture())
        throw ValidationError("environment is not a hard/easy mixture");
    return mixture_;
}

int TaskEnvironment::dim() const {
    return is_pool() ? pool_.front().first.dim() : mixture_.dim;
}

TaskEnvironment make_two_task_env(double rho_hard, double rho_easy,
                                  const Eigen::VectorXd& w1,
                                  const Eigen::VectorXd& w2,
                                  double noise_var) {
    if (!(rho_hard > 0.0) || !(rho_easy > 0.0))
        throw ValidationError("hardness parameters must be positive");
    if (rho_hard > rho_easy)
        throw ValidationError("rho_hard must not exceed rho_easy");
    if (w1.size() != w2.size())
        throw ValidationError("task weights must have equal dimension");
    const auto d = w1.size();
    LinearTask hard{w1, rho_hard * Eigen::MatrixXd::Identity(d, d), noise_var};
    LinearTask easy{w2, rho_easy * Eigen::MatrixXd::Identity(d, d), noise_var};
    return TaskEnvironment::finite_pool({{hard, 0.5}, {easy, 0.5}});
}

TaggedTask sample_task_tagged(const TaskEnvironment& env, SplitRng& rng) {
    if (env.is_pool()) {
        const auto& pool = env.pool();
        const double u = rng.next_double();
        double cum = 0.0;
        std::size_t pick = pool.size() - 1;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            cum += pool[i].second;
            if (u < cum) {
                pick = i;
                break;
            }
        }
        // Hardness of a pool entry = strictly smallest covariance trace.
        double min_trace = std::numeric_limits<double>::infinity();
        double max_trace = -std::numeric_limits<double>::infinity();
        for (const auto& [task, prob] : pool) {
            min_trace = std::min(min_trace, task.covariance.trace());
            max_trace = std::max(max_trace, task.covariance.trace());
        }
        const bool hard = max_trace > min_trace &&
                          pool[pick].first.covariance.trace() <= min_trace;
        return {pool[pick].first, hard};
    }

    const auto& mix = env.mixture_params();
    const int d = mix.dim;
    const bool hard = rng.next_double() < HardEasyMixture::kMixWeight;
    LinearTask task;
    task.noise_var = mix.noise_var;
    task.weights_star.resize(d);
    if (hard) {
        const double sd = std::sqrt(mix.spread_hard);
        for (int i = 0; i < d; ++i)
            task.weights_star[i] = mix.center_dist + sd * rng.next_gaussian();
        task.covariance = mix.rho_hard * Eigen::MatrixXd::Identity(d, d);
    } else {
        const double sd = std::sqrt(mix.spread_easy);
        for (int i = 0; i < d; ++i)
            task.weights_star[i] = sd * rng.next_gaussian();
        task.covariance = mix.rho_easy * Eigen::MatrixXd::Identity(d, d);
    }
    return {std::move(task), hard};
}

LinearTask sample_task(const TaskEnvironment& env, SplitRng& rng) {
    return sample_task_tagged(env, rng).task;
}

Dataset sample_dataset(const LinearTask& task, int count, SplitRng& rng) {
    if (count < 1) throw ValidationError("sample count must be >= 1");
    const int d = task.dim();
    Dataset data;
    data.inputs.resize(count, d);

    // Isotropic covariances (the common case here) only need a scalar
    // scaling; general SPD covariances go through a Cholesky factor.
    const Eigen::MatrixXd& cov = task.covariance;
    const bool isotropic =
        (cov - cov(0, 0) * Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff() == 0.0;
    if (isotropic) {
        const double sd = std::sqrt(cov(0, 0));
        for (int r = 0; r < count; ++r)
            for (int c = 0; c < d; ++c)
                data.inputs(r, c) = sd * rng.next_gaussian();
    } else {
        Eigen::LLT<Eigen::MatrixXd> llt(cov);
        if (llt.info() != Eigen::Success)
            throw ValidationError("covariance is not positive definite");
        const Eigen::MatrixXd chol_t = llt.matrixL().toDenseMatrix().transpose();
        for (int r = 0; r < count; ++r) {
            Eigen::RowVectorXd g(d);
            for (int c = 0; c < d; ++c) g[c] = rng.next_gaussian();
            data.inputs.row(r) = g * chol_t;
        }
    }

    data.labels = data.inputs * task.weights_star;
    if (task.noise_var > 0.0) {
        const double sd = std::sqrt(task.noise_var);
        for (int r = 0; r < count; ++r)
            data.labels[r] += sd * rng.next_gaussian();
    }
    return data;
}

std::vector<EpisodeBatch> split_episodes(const Dataset& data, int n_inner,
                                         int n_outer) {
    if (n_inner < 1 || n_outer < 1)
        throw ValidationError("episode sizes must be >= 1");
    const int chunk = n_inner + n_outer;
    const int n = data.rows();
    if (data.labels.size() != n)
        throw ValidationError("dataset rows and labels disagree");
    if (n % chunk != 0)
        throw ValidationError(
            "dataset size " + std::to_string(n) +
            " is not divisible by the episode size " + std::to_string(chunk) +
            " (inner " + std::to_string(n_inner) + " + outer " +
            std::to_string(n_outer) + "); refusing to drop rows");
    const int episodes = n / chunk;
    std::vector<EpisodeBatch> out;
    out.reserve(episodes);
    for (int e = 0; e < episodes; ++e) {
        const int base = e * chunk;
        EpisodeBatch ep;
        ep.inner_inputs = data.inputs.middleRows(base, n_inner);
        ep.inner_labels = data.labels.segment(base, n_inner);
        ep.outer_inputs = data.inputs.middleRows(base + n_inner, n_outer);
        ep.outer_labels = data.labels.segment(base + n_inner, n_outer);
        out.push_back(std::move(ep));
    }
    return out;
}

// --- JSON serialization (schema "metagap-env/1") ---

namespace {

using nlohmann::json;

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    if (!j.is_array() || j.empty())
        throw ValidationError("expected a non-empty matrix");
    const auto rows = j.size();
    const auto cols = j.front().size();
    Eigen::MatrixXd m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        if (j[r].size() != cols)
            throw ValidationError("matrix rows have unequal lengths");
        for (std::size_t c = 0; c < cols; ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                j[r][c].get<double>();
    }
    return m;
}

constexpr const char* kSchema = "metagap-env/1";

}  // namespace

std::string TaskEnvironment::to_json() const {
    json j;
    j["schema"] = kSchema;
    if (is_pool()) {
        j["kind"] = "finite_pool";
        json tasks = json::array();
        for (const auto& [task, prob] : pool_) {
            json t;
            t["weights_star"] = std::vector<double>(
                task.weights_star.data(),
                task.weights_star.data() + task.weights_star.size());
            t["covariance"] = matrix_to_json(task.covariance);
            t["noise_var"] = task.noise_var;
            t["probability"] = prob;
            tasks.push_back(std::move(t));
        }
        j["tasks"] = std::move(tasks);
    } else {
        j["kind"] = "hard_easy_mixture";
        j["rho_hard"] = mixture_.rho_hard;
        j["rho_easy"] = mixture_.rho_easy;
        j["center_dist"] = mixture_.center_dist;
        j["spread_hard"] = mixture_.spread_hard;
        j["spread_easy"] = mixture_.spread_easy;
        j["dim"] = mixture_.dim;
        j["noise_var"] = mixture_.noise_var;
        j["mix_weight"] = HardEasyMixture::kMixWeight;
    }
    return j.dump(2);
}

TaskEnvironment TaskEnvironment::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed environment JSON: ") +
                              e.what());
    }
    if (!j.contains("schema") || j["schema"] != kSchema)
        throw ValidationError("unsupported or missing environment schema");
    const std::string kind = j.value("kind", "");
    try {
        if (kind == "finite_pool") {
            std::vector<PoolEntry> pool;
            for (const auto& t : j.at("tasks")) {
                LinearTask task;
                const auto w = t.at("weights_star").get<std::vector<double>>();
                task.weights_star =
                    Eigen::Map<const Eigen::VectorXd>(w.data(), w.size());
                task.covariance = matrix_from_json(t.at("covariance"));
                task.noise_var = t.at("noise_var").get<double>();
                pool.emplace_back(std::move(task),
                                  t.at("probability").get<double>());
            }
            return finite_pool(std::move(pool));
        }
        if (kind == "hard_easy_mixture") {
            HardEasyMixture mix;
            mix.rho_hard = j.at("rho_hard").get<double>();
            mix.rho_easy = j.at("rho_easy").get<double>();
            mix.center_dist = j.at("center_dist").get<double>();
            mix.spread_hard = j.at("spread_hard").get<double>();
            mix.spread_easy = j.at("spread_easy").get<double>();
            mix.dim = j.at("dim").get<int>();
            mix.noise_var = j.at("noise_var").get<double>();
            return mixture(mix);
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed environment JSON: ") +
                              e.what());
    }
    throw ValidationError("unknown environment kind '" + kind + "'");
}

}  // namespace metagap
