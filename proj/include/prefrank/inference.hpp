#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "prefrank/dataio.hpp"
#include "prefrank/debias.hpp"
#include "prefrank/types.hpp"

namespace prefrank {

// ---------------------------------------------------------------------------
// Normal distribution helpers

double normal_cdf(double x);

/// Inverse standard normal CDF: Acklam's rational approximation followed by
/// one Halley step against erfc (absolute error below 1e-13 on (1e-300, 1)).
double normal_quantile(double u);

/// Kolmogorov-Smirnov distance between the empirical CDF of xs and N(0, 1).
double ks_distance_normal(std::vector<double> xs);

// ---------------------------------------------------------------------------
// Configuration

struct BootstrapConfig {
    int B = 2000;
    double alpha = 0.05;
    std::uint64_t seed = 1;

    void validate() const;
};

/// Users with at least one observation; the others are excluded from
/// every inferential quantity.
std::vector<int> active_users(const ComparisonDataset& data);

/// Per-entry inverse Fisher information 1 / (pi_i sigma'(M_hat_ik)), zero
/// on rows of users without observations.
Matrix inverse_fisher_matrix(const GapMatrix& M_hat, const ComparisonDataset& data);

// ---------------------------------------------------------------------------
// Aggregated gaps

/// v_k = n^-2 sum_i 1 / (pi_i sigma'(M_hat_ik)) over the n active users.
double agg_variance(const GapMatrix& M_hat, const ComparisonDataset& data, int k);
Vector agg_variances(const GapMatrix& M_hat, const ComparisonDataset& data);

/// Mean of M_nr over active users, per pair.
Vector agg_points(const GapMatrix& M_nr, const ComparisonDataset& data);

struct GapTest {
    int user = -1;       ///< -1 for the aggregated scope
    int k = 0;
    double point = 0.0;
    double variance = 0.0;
    double h0 = 0.0;
    double z = 0.0;
    double p_value = 1.0;
    double lo = 0.0;
    double hi = 0.0;
    double alpha = 0.05;
};

GapTest agg_gap_test(const GapMatrix& M_nr, const GapMatrix& M_hat, const ComparisonDataset& data, int k,
                     double alpha, double h0 = 0.0);

/// z-statistic, two-sided p-value and interval for a point estimate.
GapTest z_test(double point, double variance, double alpha, double h0 = 0.0);

// ---------------------------------------------------------------------------
// Individual gaps

struct IndivVariance {
    double w1 = 0.0;
    double w2 = 0.0;
    double w = 0.0;
};

/// w1 = sum_k' (V_k' . V_k)^2 / (pi_i sigma'(M_hat_ik')),
/// w2 = sum_i' (U_i' . U_i)^2 / (pi_i' sigma'(M_hat_i'k)).
IndivVariance indiv_variance(const Matrix& U, const Matrix& V, const GapMatrix& M_hat, const ComparisonDataset& data,
                             int i, int k);

/// w for user i and every pair.
Vector indiv_variances(const Matrix& U, const Matrix& V, const GapMatrix& M_hat, const ComparisonDataset& data,
                       int i);

GapTest indiv_gap_test(const Matrix& M_proj, const IndivVariance& w, int i, int k, double alpha, double h0 = 0.0);

// ---------------------------------------------------------------------------
// Gaussian multiplier bootstrap

/// Ordered comparison (j, j2) with the pair index and the sign that turns
/// M[., k] into Theta_j - Theta_j2.
struct Comparand {
    int j = 0;
    int j2 = 0;
    int k = 0;
    int sign = 1;
};

/// (j, j2) for j in J, j2 in K_set \ {j}, in that nesting order.
std::vector<Comparand> comparands(const PairSpace& space, const std::vector<int>& J, const std::vector<int>& K_set);

/// Order statistic ceil((1 - alpha) B) of the replicate values.
double upper_quantile(std::vector<double> values, double alpha);

/// max over comparands of |sum_i xi_ik Z_i| / (n sqrt(v_k)),
/// xi_ik = delta / pi_i (y - sigma(M_hat)) / sigma'(M_hat).
double bootstrap_agg_quantile(const GapMatrix& M_hat, const ComparisonDataset& data, const std::vector<int>& J,
                              const std::vector<int>& K_set, const BootstrapConfig& cfg);

/// One-sided version: max over comparands of -sign sum_i xi_ik Z_i / (n sqrt(v_k))
/// (no absolute value).
double bootstrap_agg_quantile_one_sided(const GapMatrix& M_hat, const ComparisonDataset& data,
                                        const std::vector<int>& J, const std::vector<int>& K_set,
                                        const BootstrapConfig& cfg);

/// Individual bootstrap for user i from the cross-fitted halves; each target
/// combines pair multipliers (through the opposite half's V) and user
/// multipliers (through the opposite half's U), normalised by sqrt(w_ik).
double bootstrap_indiv_quantile(const DebiasedEstimates& est, const ComparisonDataset& data, int i,
                                const std::vector<int>& J, const std::vector<int>& K_set, const BootstrapConfig& cfg);

// ---------------------------------------------------------------------------
// Rank confidence intervals

struct PairInterval {
    Comparand c;
    double gap = 0.0;     ///< estimate of Theta_j - Theta_j2
    double sd = 0.0;
    double lo = 0.0;      ///< C_L
    double hi = 0.0;      ///< C_U
};

struct ItemInterval {
    int item = 0;
    int r_upper = 1;      ///< best plausible rank
    int r_lower = 1;      ///< worst plausible rank
    int length() const { return r_lower - r_upper; }
};

struct RankIntervals {
    std::string scope = "aggregated";
    int user = -1;
    std::vector<int> J;
    std::vector<int> K_set;
    double alpha = 0.05;
    int B = 0;
    std::uint64_t seed = 0;
    double quantile = 0.0;
    std::vector<PairInterval> pairs;
    std::vector<ItemInterval> items;
};

/// points[k], variances[k] on the M scale (Theta_a - Theta_b for a < b).
/// C_L = sign point - G sd, C_U = sign point + G sd,
/// r_upper = 1 + #{C_U < 0}, r_lower = |K_set| - #{C_L > 0}.
RankIntervals rank_intervals(const PairSpace& space, const Vector& points, const Vector& variances, double quantile,
                             const std::vector<int>& J, const std::vector<int>& K_set);

/// Aggregated two-sided intervals with the bootstrap quantile.
RankIntervals agg_rank_intervals(const DebiasedEstimates& est, const ComparisonDataset& data,
                                 const std::vector<int>& J, const std::vector<int>& K_set, const BootstrapConfig& cfg);

/// Individual two-sided intervals for user i (needs the split pipeline).
RankIntervals indiv_rank_intervals(const DebiasedEstimates& est, const ComparisonDataset& data, int i,
                                   const std::vector<int>& J, const std::vector<int>& K_set,
                                   const BootstrapConfig& cfg);

/// Rank interval of each item under exact scores: best = 1 + #{strictly
/// better}, worst = #{at least as good}; ties widen the interval.
std::vector<ItemInterval> true_rank_intervals(const Vector& scores);

/// Overlap test used for coverage against (possibly tied) truth.
bool covers(const ItemInterval& ci, const ItemInterval& truth);

// ---------------------------------------------------------------------------
// Top-K

/// Indices of the K largest entries, ties to the smaller id; ascending ids.
std::vector<int> top_k_select(const Vector& scores, int K);

/// Row i of theta (user >= 0) or its column means (user < 0).
Vector scope_scores(const ScoreMatrix& theta, int user);

struct OneSidedRanks {
    double quantile = 0.0;
    std::vector<int> items;
    std::vector<int> r_tilde_upper;   ///< 1 + #{C_L(j, j2) > 0}
};

/// C_L(j, j2) = -sign point - G sd lower-bounds Theta_j2 - Theta_j.
OneSidedRanks one_sided_upper_ranks(const PairSpace& space, const Vector& points, const Vector& variances,
                                    double quantile, const std::vector<int>& J, const std::vector<int>& K_set);

struct PlacementTest {
    int item = 0;
    int K = 1;
    double quantile = 0.0;
    int r_tilde_upper = 1;
    bool reject = false;   ///< H0: aggregated rank of item <= K
};

PlacementTest top_k_placement_test(const DebiasedEstimates& est, const ComparisonDataset& data, int item, int K,
                                   const BootstrapConfig& cfg);

struct ScreeningResult {
    double quantile = 0.0;
    std::vector<int> r_tilde_upper;
    std::vector<int> selected;
};

ScreeningResult sure_screen_top_k(const DebiasedEstimates& est, const ComparisonDataset& data, int K,
                                  const BootstrapConfig& cfg);

// ---------------------------------------------------------------------------
// Output

/// JSON text: per target {scope, user, pair, items, point, variance, ci, z,
/// p_value} plus bootstrap metadata when given.
std::string inference_report_json(const PairSpace& space, const std::vector<GapTest>& tests,
                                  const std::optional<RankIntervals>& ranks = std::nullopt);

/// CSV: item,r_upper,r_lower[,true_rank] with 1-based ids; a tied true rank
/// is written as "best-worst".
std::string rank_intervals_csv(const RankIntervals& ri, const std::vector<ItemInterval>* truth = nullptr);

}  // namespace prefrank
