#pragma once

#include <optional>
#include <vector>

#include "prefrank/dataio.hpp"
#include "prefrank/svd.hpp"
#include "prefrank/types.hpp"

namespace prefrank {

/// Settings for the nuclear-norm regularised least-squares solve
///   min_L 0.5 * sum_{(i,k) in S} (y_ik - L_ik)^2 / p_i + lambda * ||L||_*.
struct SolverConfig {
    /// Unset: lambda = sqrt(lambda_scale_sq * dbar / pbar), dbar = d1 + K.
    std::optional<double> lambda;
    double lambda_scale_sq = 0.5;
    int max_iters = 2000;
    /// Stop when the relative objective change drops below this.
    double tol = 1e-7;
    double clip_eps = 1e-6;
    /// FISTA momentum with function-value restart; off gives plain
    /// proximal gradient with a monotone objective.
    bool accelerate = true;
    bool compute_kkt = false;
    double kkt_tol = 1e-2;

    void validate() const;
};

double default_lambda(const ComparisonDataset& data, double lambda_scale_sq = 0.5);
double resolve_lambda(const ComparisonDataset& data, const SolverConfig& cfg);

/// Optimality certificate for the convex problem at L = U diag(s) V'.
/// G = sum_{S} (L_ik - y_ik) / p_i e_i e_k' is the loss gradient.
struct KktReport {
    double lambda = 0.0;
    Eigen::Index rank = 0;
    double perp_op_norm = 0.0;       ///< ||P_T^perp(G)||_op, must be <= lambda (1 + tol)
    double tangent_residual = 0.0;   ///< ||P_T(G) + lambda U V'||_F, must be <= tol lambda sqrt(rank)
    double tol = 0.0;
    bool satisfied = false;
};

KktReport kkt_certificate(const ThinSvd& factors, const ComparisonDataset& data, double lambda, double tol);

struct ConvexSolution {
    Matrix L;
    ThinSvd factors;
    double lambda = 0.0;
    int iterations = 0;
    int restarts = 0;
    bool converged = false;
    std::vector<double> objective_trace;
    std::optional<KktReport> kkt;
};

/// Proximal gradient on the convex objective with step 1 / max_i p_i^{-1}.
/// Returns the best iterate seen; `converged` is false when max_iters ran out.
ConvexSolution solve_convex(const ComparisonDataset& data, const SolverConfig& cfg);

/// Objective value with the nuclear norm from a dense SVD (reference use).
double convex_objective(const Matrix& L, const ComparisonDataset& data, double lambda);

/// Clip into [clip_eps, 1 - clip_eps] and apply the logit.
GapMatrix recover_gaps(const Matrix& L_hat, double clip_eps);

/// Theta[., j] = (sum_{j2 > j} M[., L(j,j2)] - sum_{j2 < j} M[., L(j2,j)]) / d2.
ScoreMatrix average_scores(const GapMatrix& M_hat);

struct EstimateBundle {
    Matrix L_hat;
    GapMatrix M_hat;
    ScoreMatrix theta_hat;
    std::vector<double> objective_trace;
    int solver_iters = 0;
    bool converged = false;
    double lambda = 0.0;
    /// Users without observations: their rows are flagged and held at
    /// L = 1/2 (M = 0, Theta = 0).
    std::vector<int> empty_users;
    std::optional<KktReport> kkt;
    Eigen::Index solution_rank = 0;
};

/// solve_convex -> recover_gaps -> average_scores.
EstimateBundle estimate_pipeline(const ComparisonDataset& data, const SolverConfig& cfg);

// ---------------------------------------------------------------------------
// Factored surrogate
//   f(X, Y) = 0.5 * sum_S (y_ik - [X Y']_ik)^2 / p_i + lambda/2 (||X||_F^2 + ||Y||_F^2)

struct FactoredConfig {
    int rank = 1;
    /// Unset: 0.2 / sigma_max of the spectral initialisation.
    std::optional<double> step;
    int iters = 2000;
    std::optional<double> lambda;
    double lambda_scale_sq = 0.5;
};

struct FactoredSolution {
    Matrix X;
    Matrix Y;
    Matrix L;
    double gradient_norm = 0.0;
    int best_iter = 0;
    double step = 0.0;
    double lambda = 0.0;
    std::vector<double> objective_trace;
};

double factored_objective(const Matrix& X, const Matrix& Y, const DenseObservations& obs, double lambda);
void factored_gradient(const Matrix& X, const Matrix& Y, const DenseObservations& obs, double lambda, Matrix& grad_x,
                       Matrix& grad_y);

/// Gradient descent from the spectral initialisation (rank-R SVD of the
/// p^{-1}-weighted zero-filled observations); returns the iterate with the
/// smallest gradient norm. Throws std::runtime_error on divergence.
FactoredSolution solve_factored(const ComparisonDataset& data, const FactoredConfig& cfg);

}  // namespace prefrank
