#pragma once

#include <optional>
#include <utility>

#include "prefrank/dataio.hpp"
#include "prefrank/estimator.hpp"
#include "prefrank/rng.hpp"
#include "prefrank/types.hpp"

namespace prefrank {

/// One Newton step of the per-entry logistic log-likelihood at M_hat:
///   M_nr = M_hat + delta / pi_i * (y - sigma(M_hat)) / sigma'(M_hat),
/// with pi_i = data.inclusion_prob(i). Unobserved entries keep M_hat.
GapMatrix nr_debias(const GapMatrix& M_hat, const ComparisonDataset& data);

/// Uniformly random partition of the observed entries into two halves whose
/// sizes differ by at most one. Both halves keep the design p and carry
/// sampling_fraction halved, so their inclusion probability is p_i / 2.
std::pair<ComparisonDataset, ComparisonDataset> split_sample(const ComparisonDataset& data, Rng& rng);

/// Debias each half's pilot with the other half's residuals (factor 2 / p_i).
std::pair<GapMatrix, GapMatrix> cross_fit_debias(const EstimateBundle& fit1, const EstimateBundle& fit2,
                                                 const ComparisonDataset& s1, const ComparisonDataset& s2);

/// Number of singular values strictly above rel_threshold * sigma_1.
int estimate_rank(const Matrix& M_hat, double rel_threshold = 0.1);

struct Projection {
    Matrix M;   ///< best rank-q approximation
    Matrix U;   ///< d1 x q
    Matrix V;   ///< K x q
    Vector s;   ///< top-q singular values
};

/// Top-q SVD approximation (sign-normalised singular vectors).
Projection rank_q_project(const Matrix& M, int q);

/// Entrywise average (P1 + P2) / 2.
Matrix combine_projections(const Matrix& P1, const Matrix& P2);

struct DebiasConfig {
    SolverConfig solver;
    /// Projection rank; unset means estimate_rank on the full-sample M_hat.
    std::optional<int> rank;
    double rank_threshold = 0.1;
    /// Cross-fit and project (needed for individual inference).
    bool split = true;
    /// Which half's singular vectors enter the individual variance (1 or 2).
    int subspace_half = 1;
};

struct SplitFit {
    ComparisonDataset s1;
    ComparisonDataset s2;
    EstimateBundle fit1;
    EstimateBundle fit2;
    GapMatrix M_nr_1;
    GapMatrix M_nr_2;
    Projection proj1;
    Projection proj2;
    Matrix M_proj;   ///< (proj1.M + proj2.M) / 2
};

struct DebiasedEstimates {
    EstimateBundle full;
    GapMatrix M_nr;
    int q = 0;
    std::optional<SplitFit> split;
    int subspace_half = 1;

    const Projection& subspace_projection() const;
};

/// Full-sample estimate and debias; with cfg.split also the two half-sample
/// fits, cross-fitted debiasing and rank-q projections.
DebiasedEstimates debias_pipeline(const ComparisonDataset& data, const DebiasConfig& cfg, Rng& split_rng);

/// Projection of the full-sample M_nr without splitting.
Matrix project_full(const DebiasedEstimates& est);

}  // namespace prefrank
