#include "prefrank/debias.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

#include "prefrank/kernels.hpp"
#include "prefrank/svd.hpp"

namespace prefrank {

GapMatrix nr_debias(const GapMatrix& M_hat, const ComparisonDataset& data) {
    if (M_hat.users() != data.num_users() || M_hat.pairs() != data.num_pairs()) {
        throw std::invalid_argument("nr_debias: gap matrix shape does not match the dataset");
    }
    const DenseObservations obs = data.dense();
    GapMatrix out;
    kernels::newton_debias(M_hat.values, obs.weight, obs.outcome, out.values);
    return out;
}

std::pair<ComparisonDataset, ComparisonDataset> split_sample(const ComparisonDataset& data, Rng& rng) {
    const auto& entries = data.entries();
    if (entries.size() < 2) throw std::invalid_argument("split_sample: need at least two observations");
    std::vector<std::size_t> order(entries.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Fisher-Yates with explicit draws so the permutation is library independent.
    for (std::size_t n = order.size() - 1; n > 0; --n) {
        std::uniform_int_distribution<std::size_t> pick(0, n);
        std::swap(order[n], order[pick(rng)]);
    }
    const std::size_t half = (entries.size() + 1) / 2;
    std::vector<Comparison> a, b;
    a.reserve(half);
    b.reserve(entries.size() - half);
    for (std::size_t n = 0; n < order.size(); ++n) (n < half ? a : b).push_back(entries[order[n]]);
    const double frac = 0.5 * data.sampling_fraction();
    return {ComparisonDataset(data.num_users(), data.space(), std::move(a), data.p(), data.outcome_kind(), frac),
            ComparisonDataset(data.num_users(), data.space(), std::move(b), data.p(), data.outcome_kind(), frac)};
}

std::pair<GapMatrix, GapMatrix> cross_fit_debias(const EstimateBundle& fit1, const EstimateBundle& fit2,
                                                 const ComparisonDataset& s1, const ComparisonDataset& s2) {
    return {nr_debias(fit1.M_hat, s2), nr_debias(fit2.M_hat, s1)};
}

int estimate_rank(const Matrix& M_hat, double rel_threshold) {
    if (!(rel_threshold > 0.0 && rel_threshold < 1.0)) {
        throw std::invalid_argument("estimate_rank: threshold must lie in (0, 1)");
    }
    if (M_hat.size() == 0 || M_hat.cwiseAbs().maxCoeff() == 0.0) {
        throw std::invalid_argument("estimate_rank: matrix is zero");
    }
    const Vector s = Eigen::BDCSVD<Matrix>(M_hat).singularValues();
    int q = 0;
    while (q < s.size() && s(q) > rel_threshold * s(0)) ++q;
    return std::max(q, 1);
}

Projection rank_q_project(const Matrix& M, int q) {
    const Eigen::Index limit = std::min(M.rows(), M.cols());
    if (q < 1 || q > limit) {
        throw std::invalid_argument("rank_q_project: q = " + std::to_string(q) + " outside [1, " +
                                    std::to_string(limit) + "]");
    }
    const ThinSvd svd = truncate_svd(dense_svd(M), q);
    return {svd.reconstruct(), svd.U, svd.V, svd.s};
}

Matrix combine_projections(const Matrix& P1, const Matrix& P2) {
    if (P1.rows() != P2.rows() || P1.cols() != P2.cols()) {
        throw std::invalid_argument("combine_projections: shape mismatch");
    }
    return 0.5 * (P1 + P2);
}

const Projection& DebiasedEstimates::subspace_projection() const {
    if (!split) throw std::logic_error("individual inference needs the cross-fitted (split) pipeline");
    return subspace_half == 2 ? split->proj2 : split->proj1;
}

DebiasedEstimates debias_pipeline(const ComparisonDataset& data, const DebiasConfig& cfg, Rng& split_rng) {
    if (cfg.subspace_half != 1 && cfg.subspace_half != 2) {
        throw std::invalid_argument("debias_pipeline: subspace_half must be 1 or 2");
    }
    DebiasedEstimates est;
    est.subspace_half = cfg.subspace_half;
    est.full = estimate_pipeline(data, cfg.solver);
    est.M_nr = nr_debias(est.full.M_hat, data);
    est.q = cfg.rank ? *cfg.rank : estimate_rank(est.full.M_hat.values, cfg.rank_threshold);
    if (!cfg.split) return est;

    auto [s1, s2] = split_sample(data, split_rng);
    SplitFit sf;
    sf.fit1 = estimate_pipeline(s1, cfg.solver);
    sf.fit2 = estimate_pipeline(s2, cfg.solver);
    std::tie(sf.M_nr_1, sf.M_nr_2) = cross_fit_debias(sf.fit1, sf.fit2, s1, s2);
    sf.proj1 = rank_q_project(sf.M_nr_1.values, est.q);
    sf.proj2 = rank_q_project(sf.M_nr_2.values, est.q);
    sf.M_proj = combine_projections(sf.proj1.M, sf.proj2.M);
    sf.s1 = std::move(s1);
    sf.s2 = std::move(s2);
    est.split = std::move(sf);
    return est;
}

Matrix project_full(const DebiasedEstimates& est) {
    return rank_q_project(est.M_nr.values, est.q).M;
}

}  // namespace prefrank
