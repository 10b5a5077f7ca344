#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "prefrank/inference.hpp"
#include "support.hpp"

using namespace prefrank;
using testing::make_instance;

namespace {

std::vector<int> iota(int n) {
    std::vector<int> v(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) v[static_cast<std::size_t>(j)] = j;
    return v;
}

DebiasedEstimates run(const ComparisonDataset& data, bool split, std::uint64_t seed) {
    DebiasConfig dc;
    dc.split = split;
    Rng rng = make_rng(seed, kStreamSplit);
    return debias_pipeline(data, dc, rng);
}

/// Default generator at d2 = 10 with aggregated means spread 0.4 apart.
ScoreMatrix spread_scores(std::uint64_t seed) {
    const auto inst = make_instance(10, 0.8, seed);
    Vector means(10);
    for (int j = 0; j < 10; ++j) means(j) = -0.4 * j;
    return testing::with_item_means(inst.theta, means);
}

}  // namespace

TEST_SUITE("montecarlo") {
    TEST_CASE("aggregated test size under a true null") {
        int rejections = 0;
        constexpr int reps = 500;
        for (int r = 0; r < reps; ++r) {
            const auto seed = static_cast<std::uint64_t>(1000 + r);
            auto inst = make_instance(20, 0.8, seed);
            Matrix th = inst.theta.values;
            th.col(1) = th.col(0);
            th = th.colwise() - th.rowwise().mean();
            const ComparisonDataset data = testing::sample(ScoreMatrix{th, true}, 0.8, seed);
            const DebiasedEstimates est = run(data, false, seed);
            rejections += agg_gap_test(est.M_nr, est.full.M_hat, data, 0, 0.05).p_value < 0.05;
        }
        const double rate = static_cast<double>(rejections) / reps;
        INFO("rejection rate " << rate);
        CHECK(rate >= 0.02);
        CHECK(rate <= 0.09);
    }

    TEST_CASE("individual interval coverage") {
        int covered = 0;
        constexpr int reps = 300;
        for (int r = 0; r < reps; ++r) {
            const auto seed = static_cast<std::uint64_t>(2000 + r);
            const auto inst = make_instance(20, 0.8, seed);
            const DebiasedEstimates est = run(inst.data, true, seed);
            const Projection& sub = est.subspace_projection();
            const IndivVariance w = indiv_variance(sub.U, sub.V, est.full.M_hat, inst.data, 0, 0);
            const GapTest t = indiv_gap_test(est.split->M_proj, w, 0, 0, 0.05);
            const double truth = inst.M_star.values(0, 0);
            covered += t.lo <= truth && truth <= t.hi;
        }
        const double rate = static_cast<double>(covered) / reps;
        INFO("coverage " << rate);
        CHECK(rate >= 0.90);
    }

    TEST_CASE("placement test rejects the last item for K = 1") {
        int rejections = 0;
        constexpr int reps = 100;
        for (int r = 0; r < reps; ++r) {
            const auto seed = static_cast<std::uint64_t>(3000 + r);
            const ComparisonDataset data = testing::sample(spread_scores(seed), 0.8, seed);
            const DebiasedEstimates est = run(data, false, seed);
            rejections += top_k_placement_test(est, data, 9, 1, BootstrapConfig{500, 0.05, seed}).reject;
        }
        INFO("rejections " << rejections);
        CHECK(rejections >= 90);
    }

    TEST_CASE("screening keeps the true top three") {
        int kept = 0;
        constexpr int reps = 100;
        for (int r = 0; r < reps; ++r) {
            const auto seed = static_cast<std::uint64_t>(4000 + r);
            const auto inst = make_instance(20, 0.8, seed);
            const DebiasedEstimates est = run(inst.data, false, seed);
            const ScreeningResult s = sure_screen_top_k(est, inst.data, 3, BootstrapConfig{500, 0.05, seed});
            const std::vector<int> truth = top_k_select(scope_scores(inst.theta, -1), 3);
            kept += std::includes(s.selected.begin(), s.selected.end(), truth.begin(), truth.end());
        }
        INFO("kept " << kept);
        CHECK(kept >= 90);
    }
}
