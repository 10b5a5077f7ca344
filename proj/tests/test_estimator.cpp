#include <doctest.h>

#include <cmath>

#include "prefrank/estimator.hpp"
#include "support.hpp"

using namespace prefrank;
using testing::full_dataset;
using testing::make_instance;
using testing::subgradient_oracle;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double scale = 1.0) {
    Rng rng = make_rng(seed, 23);
    std::normal_distribution<double> n(0.0, scale);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

/// Rank-2 probability matrix: 0.5 plus a rank-1 perturbation.
Matrix rank2_probabilities(Eigen::Index d1, Eigen::Index K, std::uint64_t seed) {
    Rng rng = make_rng(seed, 29);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Vector a(d1), b(K);
    for (Eigen::Index i = 0; i < d1; ++i) a(i) = u(rng);
    for (Eigen::Index k = 0; k < K; ++k) b(k) = u(rng);
    return Matrix::Constant(d1, K, 0.5) + 0.2 * a * b.transpose();
}

}  // namespace

TEST_SUITE("estimator") {
    TEST_CASE("solver config validation") {
        SolverConfig c;
        CHECK_NOTHROW(c.validate());
        c.lambda = 0.0;
        CHECK_THROWS(c.validate());
        c = {};
        c.clip_eps = 0.5;
        CHECK_THROWS(c.validate());
        c = {};
        c.tol = 0;
        CHECK_THROWS(c.validate());
        c = {};
        c.max_iters = 0;
        CHECK_THROWS(c.validate());
    }

    TEST_CASE("default lambda") {
        const auto inst = make_instance(6, 0.8, 1);
        CHECK(default_lambda(inst.data) == doctest::Approx(std::sqrt(0.5 * (15 + 15) / 0.8)).epsilon(1e-14));
        SolverConfig c;
        c.lambda = 2.5;
        CHECK(resolve_lambda(inst.data, c) == 2.5);
    }

    TEST_CASE("recover gaps clips and inverts") {
        Matrix L(1, 4);
        L << 0.5, 1.2, -0.3, sigmoid(2.0);
        const GapMatrix m = recover_gaps(L, 1e-6);
        CHECK(m.values(0, 0) == 0.0);
        CHECK(m.values(0, 1) == sigmoid_inv(1 - 1e-6));
        CHECK(m.values(0, 2) == sigmoid_inv(1e-6));
        CHECK(m.values(0, 3) == doctest::Approx(2.0).epsilon(1e-14));
        const Matrix M = random_matrix(5, 6, 2, 4.0).cwiseMax(-10).cwiseMin(10);
        CHECK((recover_gaps(M.unaryExpr([](double x) { return sigmoid(x); }), 1e-6).values - M).cwiseAbs().maxCoeff() <=
              1e-9);
        L(0, 0) = std::nan("");
        CHECK(recover_gaps(L, 1e-6).values(0, 0) == 0.0);
    }

    TEST_CASE("average scores inverts the gap map on centred rows") {
        ScoreMatrix t{Matrix(1, 3), true};
        t.values << 1, -1, 0;
        CHECK((average_scores(build_gap_matrix(t)).values - t.values).norm() <= 1e-15);
        CHECK(average_scores(GapMatrix{Matrix::Zero(4, 10)}).values.isZero(0));
        Matrix th = random_matrix(7, 9, 3);
        th = th.colwise() - th.rowwise().mean();
        const ScoreMatrix back = average_scores(build_gap_matrix(ScoreMatrix{th, true}));
        CHECK((back.values - th).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK(back.values.rowwise().sum().cwiseAbs().maxCoeff() <= 1e-9);
        CHECK_THROWS(average_scores(GapMatrix{Matrix::Zero(2, 4)}));
    }

    TEST_CASE("solver matches a subgradient oracle on a tiny instance") {
        const std::vector<Comparison> es{{0, 0, 1.0}, {0, 2, 0.0}, {1, 1, 1.0}, {1, 2, 1.0}};
        const ComparisonDataset d(2, PairSpace(3), es, {0.8, 0.5});
        SolverConfig c;
        c.lambda = 0.2;
        c.tol = 1e-15;
        c.max_iters = 200000;
        const ConvexSolution sol = solve_convex(d, c);
        const Matrix oracle = subgradient_oracle(d, 0.2, 1000000, 1e-4);
        CHECK((sol.L - oracle).norm() <= 1e-4);
        CHECK(convex_objective(sol.L, d, 0.2) <= convex_objective(oracle, d, 0.2) + 1e-12);
    }

    TEST_CASE("large lambda gives the zero matrix") {
        const auto inst = make_instance(7, 0.6, 4);
        const DenseObservations o = inst.data.dense();
        const double op = o.weight.cwiseProduct(o.outcome).jacobiSvd().singularValues()(0);
        SolverConfig c;
        c.lambda = op * 1.0001;
        const ConvexSolution sol = solve_convex(inst.data, c);
        CHECK(sol.L.norm() <= 1e-12);
        CHECK(sol.factors.rank() == 0);
    }

    TEST_CASE("tiny lambda recovers a fully observed low-rank matrix") {
        const Matrix Lstar = rank2_probabilities(15, 15, 5);
        const ComparisonDataset d = full_dataset(Lstar, 1.0);
        SolverConfig c;
        c.lambda = 1e-6 * std::sqrt(30.0);
        const ConvexSolution sol = solve_convex(d, c);
        CHECK((sol.L - Lstar).norm() / Lstar.norm() <= 1e-3);
    }

    TEST_CASE("KKT certificate holds on random instances") {
        for (int r = 0; r < 6; ++r) {
            SyntheticConfig cfg;
            cfg.d2 = 4 + 2 * r;
            cfg.p_blocks = {{0.5, 0.9}, {0.5, 0.3 + 0.05 * r}};
            Rng tr = make_rng(100 + static_cast<std::uint64_t>(r), kStreamTheta);
            const ScoreMatrix t = generate_theta(cfg, tr);
            Rng sr = make_rng(100 + static_cast<std::uint64_t>(r), kStreamSample);
            const auto d = sample_comparisons(t, assign_probabilities(cfg.p_blocks, cfg.users()), sr);
            SolverConfig c;
            c.compute_kkt = true;
            c.tol = 1e-12;
            c.max_iters = 20000;
            if (r % 2) c.lambda = 0.3 * default_lambda(d);
            const ConvexSolution sol = solve_convex(d, c);
            REQUIRE(sol.kkt);
            INFO("instance " << r << " perp " << sol.kkt->perp_op_norm << " tangent " << sol.kkt->tangent_residual);
            CHECK(sol.kkt->satisfied);
            CHECK(sol.kkt->perp_op_norm <= sol.lambda * 1.01);
        }
    }

    TEST_CASE("plain proximal gradient decreases the objective") {
        const auto inst = make_instance(8, 0.5, 6);
        SolverConfig c;
        c.accelerate = false;
        c.max_iters = 300;
        const ConvexSolution sol = solve_convex(inst.data, c);
        for (std::size_t t = 1; t < sol.objective_trace.size(); ++t) {
            REQUIRE(sol.objective_trace[t] <= sol.objective_trace[t - 1] * (1 + 1e-14));
        }
    }

    TEST_CASE("factored gradient matches central differences") {
        const auto inst = make_instance(6, 0.7, 7);
        const DenseObservations o = inst.data.dense();
        const double lambda = 0.8;
        for (int pt = 0; pt < 10; ++pt) {
            const Matrix X = random_matrix(15, 2, 200 + static_cast<std::uint64_t>(pt), 0.5);
            const Matrix Y = random_matrix(15, 2, 300 + static_cast<std::uint64_t>(pt), 0.5);
            Matrix gx, gy;
            factored_gradient(X, Y, o, lambda, gx, gy);
            Matrix fx(X.rows(), X.cols()), fy(Y.rows(), Y.cols());
            const double h = 1e-6;
            for (Eigen::Index i = 0; i < X.size(); ++i) {
                Matrix a = X, b = X;
                a.data()[i] += h;
                b.data()[i] -= h;
                fx.data()[i] = (factored_objective(a, Y, o, lambda) - factored_objective(b, Y, o, lambda)) / (2 * h);
            }
            for (Eigen::Index i = 0; i < Y.size(); ++i) {
                Matrix a = Y, b = Y;
                a.data()[i] += h;
                b.data()[i] -= h;
                fy.data()[i] = (factored_objective(X, a, o, lambda) - factored_objective(X, b, o, lambda)) / (2 * h);
            }
            const double rel = std::sqrt((fx - gx).squaredNorm() + (fy - gy).squaredNorm()) /
                               std::sqrt(gx.squaredNorm() + gy.squaredNorm());
            CHECK(rel <= 1e-5);
        }
    }

    TEST_CASE("factored solver recovers a noiseless low-rank matrix") {
        const Matrix Lstar = rank2_probabilities(15, 15, 8);
        const ComparisonDataset d = full_dataset(Lstar, 1.0);
        FactoredConfig fc;
        fc.rank = 2;
        fc.lambda = 1e-6;
        fc.iters = 5000;
        const FactoredSolution sol = solve_factored(d, fc);
        CHECK((sol.L - Lstar).norm() / Lstar.norm() <= 1e-2);
        CHECK((sol.X * sol.Y.transpose() - sol.L).norm() <= 1e-12);
    }

    TEST_CASE("factored and convex solutions agree") {
        const auto inst = make_instance(10, 0.8, 9);
        SolverConfig c;
        c.tol = 1e-12;
        c.max_iters = 20000;
        const ConvexSolution convex = solve_convex(inst.data, c);
        REQUIRE(convex.factors.rank() >= 1);
        FactoredConfig fc;
        fc.rank = static_cast<int>(convex.factors.rank());
        fc.iters = 20000;
        const FactoredSolution fact = solve_factored(inst.data, fc);
        CHECK(fact.lambda == doctest::Approx(convex.lambda));
        CHECK((fact.L - convex.L).norm() <= 0.05 * convex.L.norm());
    }

    TEST_CASE("factored solver rejects bad settings") {
        const auto inst = make_instance(5, 0.8, 10);
        FactoredConfig fc;
        fc.rank = 0;
        CHECK_THROWS(solve_factored(inst.data, fc));
        fc.rank = 100;
        CHECK_THROWS(solve_factored(inst.data, fc));
    }

    TEST_CASE("pipeline recovers noiseless scores") {
        const auto inst = make_instance(5, 1.0, 11, 0, true);
        SolverConfig c;
        c.lambda = 1e-4;
        c.tol = 1e-12;
        c.max_iters = 20000;
        const EstimateBundle b = estimate_pipeline(inst.data, c);
        CHECK((b.theta_hat.values - inst.theta.values).cwiseAbs().maxCoeff() <= 0.05);
    }

    TEST_CASE("pipeline invariants and determinism") {
        const auto inst = make_instance(12, 0.6, 12);
        const SolverConfig c;
        const EstimateBundle a = estimate_pipeline(inst.data, c);
        const EstimateBundle b = estimate_pipeline(inst.data, c);
        CHECK(a.L_hat == b.L_hat);
        CHECK(a.theta_hat.values == b.theta_hat.values);
        CHECK(a.L_hat.minCoeff() >= c.clip_eps);
        CHECK(a.L_hat.maxCoeff() <= 1 - c.clip_eps);
        CHECK((a.M_hat.values - a.L_hat.unaryExpr([](double u) { return sigmoid_inv(u); })).cwiseAbs().maxCoeff() ==
              0.0);
        CHECK(a.theta_hat.values.rowwise().sum().cwiseAbs().maxCoeff() <= 1e-9);
        CHECK(a.converged);
        CHECK(a.lambda == doctest::Approx(default_lambda(inst.data)));
    }

    TEST_CASE("flat truth stays flat") {
        ScoreMatrix t{Matrix::Zero(190, 20), true};
        Rng rng = make_rng(13, kStreamSample);
        const auto d = sample_comparisons(t, std::vector<double>(190, 0.8), rng);
        const EstimateBundle b = estimate_pipeline(d, SolverConfig{});
        CHECK(b.theta_hat.values.cwiseAbs().maxCoeff() <= 0.5);
    }

    TEST_CASE("users without observations are flagged and neutral") {
        const std::vector<Comparison> es{{0, 0, 1.0}, {0, 1, 0.0}, {2, 2, 1.0}, {2, 0, 1.0}};
        const ComparisonDataset d(3, PairSpace(3), es, {0.8, 0.8, 0.8});
        const EstimateBundle b = estimate_pipeline(d, SolverConfig{});
        CHECK(b.empty_users == std::vector<int>{1});
        CHECK((b.L_hat.row(1).array() == 0.5).all());
        CHECK(b.M_hat.values.row(1).isZero(0));
        CHECK(b.theta_hat.values.row(1).isZero(0));
    }
}
