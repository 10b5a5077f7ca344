#include "prefrank/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "prefrank/kernels.hpp"

namespace prefrank {

void SolverConfig::validate() const {
    if (lambda && !(*lambda > 0.0)) throw std::invalid_argument("SolverConfig: lambda must be > 0");
    if (!(lambda_scale_sq > 0.0)) throw std::invalid_argument("SolverConfig: lambda scale must be > 0");
    if (max_iters < 1) throw std::invalid_argument("SolverConfig: max_iters must be >= 1");
    if (!(tol > 0.0)) throw std::invalid_argument("SolverConfig: tol must be > 0");
    if (!(clip_eps > 0.0 && clip_eps < 0.5)) throw std::invalid_argument("SolverConfig: clip_eps outside (0, 0.5)");
}

double default_lambda(const ComparisonDataset& data, double lambda_scale_sq) {
    const double dbar = static_cast<double>(data.num_users()) + static_cast<double>(data.num_pairs());
    return std::sqrt(lambda_scale_sq * dbar / data.mean_inclusion_prob());
}

double resolve_lambda(const ComparisonDataset& data, const SolverConfig& cfg) {
    return cfg.lambda ? *cfg.lambda : default_lambda(data, cfg.lambda_scale_sq);
}

namespace {

Matrix loss_gradient(const Matrix& L, const DenseObservations& obs) {
    return obs.weight.cwiseProduct(L - obs.outcome);
}

}  // namespace

KktReport kkt_certificate(const ThinSvd& factors, const ComparisonDataset& data, double lambda, double tol) {
    const DenseObservations obs = data.dense();
    const Matrix L = factors.U.cols() > 0 ? factors.reconstruct() : Matrix::Zero(data.num_users(), data.num_pairs());
    const Matrix G = loss_gradient(L, obs);
    const Matrix& U = factors.U;
    const Matrix& V = factors.V;

    KktReport r;
    r.lambda = lambda;
    r.rank = factors.rank();
    r.tol = tol;
    Matrix perp = G;
    if (r.rank > 0) {
        perp -= U * (U.transpose() * G);
        perp -= (perp * V) * V.transpose();
        const Matrix tangent = G - perp + lambda * U * V.transpose();
        r.tangent_residual = tangent.norm();
    }
    r.perp_op_norm = spectral_norm(perp);
    r.satisfied = r.perp_op_norm <= lambda * (1.0 + tol) &&
                  r.tangent_residual <= tol * lambda * std::sqrt(static_cast<double>(std::max<Eigen::Index>(r.rank, 1)));
    return r;
}

ConvexSolution solve_convex(const ComparisonDataset& data, const SolverConfig& cfg) {
    cfg.validate();
    if (data.empty()) throw std::invalid_argument("solve_convex: dataset has no observations");
    const DenseObservations obs = data.dense();
    const double lambda = resolve_lambda(data, cfg);
    const double step = 1.0 / obs.weight.maxCoeff();
    const double tau = lambda * step;
    const Eigen::Index d1 = data.num_users();
    const Eigen::Index K = data.num_pairs();

    SingularValueThresholder svt;
    ConvexSolution out;
    out.lambda = lambda;

    Matrix x = Matrix::Zero(d1, K);
    Matrix x_prev = x;
    ThinSvd x_factors{Matrix(d1, 0), Vector(0), Matrix(K, 0)};
    double f_x = kernels::weighted_loss(x, obs.weight, obs.outcome);
    double momentum = 1.0;

    Matrix best = x;
    ThinSvd best_factors = x_factors;
    double f_best = f_x;
    Matrix point, z;

    for (int it = 1; it <= cfg.max_iters; ++it) {
        const double next_momentum = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
        const double beta = cfg.accelerate ? (momentum - 1.0) / next_momentum : 0.0;
        point = beta != 0.0 ? Matrix(x + beta * (x - x_prev)) : x;

        kernels::gradient_step(point, obs.weight, obs.outcome, step, z);
        ThinSvd factors = svt.apply(z, tau);
        Matrix x_new = factors.reconstruct();
        double f_new = kernels::weighted_loss(x_new, obs.weight, obs.outcome) + lambda * factors.s.sum();

        if (cfg.accelerate && beta != 0.0 && f_new > f_x) {
            // Function-value restart: drop momentum and take a plain step.
            ++out.restarts;
            kernels::gradient_step(x, obs.weight, obs.outcome, step, z);
            factors = svt.apply(z, tau);
            x_new = factors.reconstruct();
            f_new = kernels::weighted_loss(x_new, obs.weight, obs.outcome) + lambda * factors.s.sum();
            momentum = 1.0;
        } else {
            momentum = next_momentum;
        }

        out.objective_trace.push_back(f_new);
        out.iterations = it;
        const double change = std::abs(f_x - f_new) / std::max(std::abs(f_new), std::numeric_limits<double>::min());
        x_prev = std::move(x);
        x = std::move(x_new);
        x_factors = std::move(factors);
        f_x = f_new;
        if (f_x <= f_best) {
            f_best = f_x;
            best = x;
            best_factors = x_factors;
        }
        if (change < cfg.tol) {
            out.converged = true;
            break;
        }
    }
    out.L = std::move(best);
    out.factors = std::move(best_factors);
    if (cfg.compute_kkt) out.kkt = kkt_certificate(out.factors, data, lambda, cfg.kkt_tol);
    return out;
}

double convex_objective(const Matrix& L, const ComparisonDataset& data, double lambda) {
    const DenseObservations obs = data.dense();
    Eigen::BDCSVD<Matrix> svd(L);
    return kernels::serial::weighted_loss(L, obs.weight, obs.outcome) + lambda * svd.singularValues().sum();
}

GapMatrix recover_gaps(const Matrix& L_hat, double clip_eps) {
    GapMatrix m{Matrix(L_hat.rows(), L_hat.cols())};
    for (Eigen::Index c = 0; c < L_hat.cols(); ++c) {
        for (Eigen::Index r = 0; r < L_hat.rows(); ++r) {
            const double v = L_hat(r, c);
            // NaN maps to the centre rather than propagating.
            const double u = std::isnan(v) ? 0.5 : std::clamp(v, clip_eps, 1.0 - clip_eps);
            m.values(r, c) = sigmoid_inv(u);
        }
    }
    return m;
}

ScoreMatrix average_scores(const GapMatrix& M_hat) {
    const Eigen::Index K = M_hat.pairs();
    // Recover d2 from K = d2 (d2 - 1) / 2.
    const int d2 = static_cast<int>(std::lround((1.0 + std::sqrt(1.0 + 8.0 * static_cast<double>(K))) / 2.0));
    if (static_cast<Eigen::Index>(d2) * (d2 - 1) / 2 != K) {
        throw std::invalid_argument("average_scores: column count " + std::to_string(K) + " is not a pair count");
    }
    ScoreMatrix theta{Matrix::Zero(M_hat.users(), d2), true};
    int k = 0;
    for (int j = 0; j < d2; ++j) {
        for (int j2 = j + 1; j2 < d2; ++j2, ++k) {
            theta.values.col(j) += M_hat.values.col(k);
            theta.values.col(j2) -= M_hat.values.col(k);
        }
    }
    theta.values /= static_cast<double>(d2);
    return theta;
}

EstimateBundle estimate_pipeline(const ComparisonDataset& data, const SolverConfig& cfg) {
    ConvexSolution sol = solve_convex(data, cfg);
    EstimateBundle b;
    b.L_hat = std::move(sol.L);
    b.lambda = sol.lambda;
    b.solver_iters = sol.iterations;
    b.converged = sol.converged;
    b.objective_trace = std::move(sol.objective_trace);
    b.kkt = sol.kkt;
    b.solution_rank = sol.factors.rank();

    const auto counts = data.observations_per_user();
    for (int i = 0; i < data.num_users(); ++i) {
        if (counts[static_cast<std::size_t>(i)] == 0) {
            b.empty_users.push_back(i);
            b.L_hat.row(i).setConstant(0.5);
        }
    }
    b.L_hat = b.L_hat.cwiseMax(cfg.clip_eps).cwiseMin(1.0 - cfg.clip_eps);
    b.M_hat = recover_gaps(b.L_hat, cfg.clip_eps);
    b.theta_hat = average_scores(b.M_hat);
    return b;
}

// ---------------------------------------------------------------------------

double factored_objective(const Matrix& X, const Matrix& Y, const DenseObservations& obs, double lambda) {
    const Matrix L = X * Y.transpose();
    return kernels::weighted_loss(L, obs.weight, obs.outcome) + 0.5 * lambda * (X.squaredNorm() + Y.squaredNorm());
}

void factored_gradient(const Matrix& X, const Matrix& Y, const DenseObservations& obs, double lambda, Matrix& grad_x,
                       Matrix& grad_y) {
    const Matrix R = obs.weight.cwiseProduct(X * Y.transpose() - obs.outcome);
    grad_x = R * Y + lambda * X;
    grad_y = R.transpose() * X + lambda * Y;
}

FactoredSolution solve_factored(const ComparisonDataset& data, const FactoredConfig& cfg) {
    const Eigen::Index limit = std::min<Eigen::Index>(data.num_users(), data.num_pairs());
    if (cfg.rank < 1 || cfg.rank > limit) {
        throw std::invalid_argument("solve_factored: rank must lie in [1, min(d1, K)]");
    }
    if (cfg.iters < 1) throw std::invalid_argument("solve_factored: iters must be >= 1");
    const DenseObservations obs = data.dense();
    FactoredSolution out;
    out.lambda = cfg.lambda ? *cfg.lambda : default_lambda(data, cfg.lambda_scale_sq);

    const Matrix init = obs.weight.cwiseProduct(obs.outcome);
    const ThinSvd spectral = top_svd(init, cfg.rank);
    const Vector root = spectral.s.cwiseSqrt();
    Matrix X = spectral.U * root.asDiagonal();
    Matrix Y = spectral.V * root.asDiagonal();
    if (spectral.s(0) <= 0.0 && !cfg.step) throw std::runtime_error("solve_factored: zero spectral initialisation");
    out.step = cfg.step ? *cfg.step : 0.2 / spectral.s(0);

    const double f0 = factored_objective(X, Y, obs, out.lambda);
    Matrix gx, gy;
    double best_grad = std::numeric_limits<double>::infinity();
    for (int it = 0; it <= cfg.iters; ++it) {
        factored_gradient(X, Y, obs, out.lambda, gx, gy);
        const double gnorm = std::sqrt(gx.squaredNorm() + gy.squaredNorm());
        const double f = factored_objective(X, Y, obs, out.lambda);
        out.objective_trace.push_back(f);
        if (!std::isfinite(f) || f > 10.0 * std::max(f0, std::numeric_limits<double>::min())) {
            std::ostringstream msg;
            msg << "solve_factored: diverged at iteration " << it << " (objective " << f << ", initial " << f0
                << ", step " << out.step << "); try a smaller step";
            throw std::runtime_error(msg.str());
        }
        if (gnorm < best_grad) {
            best_grad = gnorm;
            out.X = X;
            out.Y = Y;
            out.best_iter = it;
        }
        if (it == cfg.iters) break;
        X -= out.step * gx;
        Y -= out.step * gy;
    }
    out.gradient_norm = best_grad;
    out.L = out.X * out.Y.transpose();
    return out;
}

}  // namespace prefrank
