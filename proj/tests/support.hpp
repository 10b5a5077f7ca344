#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "prefrank/dataio.hpp"
#include "prefrank/pairspace.hpp"
#include "prefrank/rng.hpp"

namespace testing {

using namespace prefrank;

/// Synthetic instance with the default generator.
struct Instance {
    ScoreMatrix theta;
    GapMatrix M_star;
    ComparisonDataset data;
};

inline Instance make_instance(int d2, double p, std::uint64_t seed, int d1 = 0, bool noiseless = false) {
    SyntheticConfig cfg;
    cfg.d2 = d2;
    cfg.d1 = d1;
    cfg.p_blocks = {{1.0, p}};
    cfg.seed = seed;
    Instance out;
    Rng theta_rng = make_rng(seed, kStreamTheta);
    out.theta = generate_theta(cfg, theta_rng);
    out.M_star = build_gap_matrix(out.theta);
    Rng sample_rng = make_rng(seed, kStreamSample);
    SampleOptions opts;
    opts.noiseless = noiseless;
    out.data = sample_comparisons(out.theta, assign_probabilities(cfg.p_blocks, cfg.users()), sample_rng, opts);
    return out;
}

/// base plus per-item offsets so the column means equal `means` (shifted
/// to sum zero, which keeps every row centred).
inline ScoreMatrix with_item_means(const ScoreMatrix& base, Vector means) {
    means.array() -= means.mean();
    const Vector shift = means - base.values.colwise().mean().transpose();
    ScoreMatrix out{base.values.rowwise() + shift.transpose(), true};
    return out;
}

inline ComparisonDataset sample(const ScoreMatrix& theta, double p, std::uint64_t seed) {
    Rng rng = make_rng(seed, kStreamSample);
    return sample_comparisons(theta, std::vector<double>(static_cast<std::size_t>(theta.users()), p), rng);
}

/// Dataset observing every (user, pair) with outcome = value of `y`.
inline ComparisonDataset full_dataset(const Matrix& y, double p, OutcomeKind kind = OutcomeKind::expected) {
    const auto d1 = static_cast<int>(y.rows());
    const auto K = static_cast<int>(y.cols());
    int d2 = 2;
    while (d2 * (d2 - 1) / 2 < K) ++d2;
    std::vector<Comparison> entries;
    for (int i = 0; i < d1; ++i) {
        for (int k = 0; k < K; ++k) entries.push_back({i, k, y(i, k)});
    }
    return ComparisonDataset(d1, PairSpace(d2), entries, std::vector<double>(static_cast<std::size_t>(d1), p), kind);
}

/// Subgradient descent on the convex objective, averaged over the last tenth.
inline Matrix subgradient_oracle(const ComparisonDataset& data, double lambda, long iters, double step) {
    const DenseObservations obs = data.dense();
    Matrix L = Matrix::Zero(obs.weight.rows(), obs.weight.cols());
    Matrix avg = Matrix::Zero(L.rows(), L.cols());
    const long tail = iters - iters / 10;
    for (long t = 0; t < iters; ++t) {
        Eigen::JacobiSVD<Matrix> svd(L, Eigen::ComputeThinU | Eigen::ComputeThinV);
        Matrix sub = Matrix::Zero(L.rows(), L.cols());
        for (Eigen::Index j = 0; j < svd.singularValues().size(); ++j) {
            if (svd.singularValues()(j) > 1e-12) sub += svd.matrixU().col(j) * svd.matrixV().col(j).transpose();
        }
        const Matrix g = obs.weight.cwiseProduct(L - obs.outcome) + lambda * sub;
        L -= step * g;
        if (t >= tail) avg += L;
    }
    return avg / static_cast<double>(iters - tail);
}

/// Fresh scratch directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("prefrank_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::filesystem::path write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream(path) << text;
    return path;
}

}  // namespace testing
