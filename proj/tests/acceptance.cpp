#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "prefrank/debias.hpp"
#include "prefrank/estimator.hpp"
#include "prefrank/harness.hpp"
#include "prefrank/inference.hpp"
#include "prefrank/svd.hpp"
#include "support.hpp"

using namespace prefrank;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void check(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << "[fail] ";
        }
        detail << what << "; ";
    }
};

std::string num(double v) {
    std::ostringstream s;
    s.precision(4);
    s << v;
    return s.str();
}

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
    Rng rng = make_rng(seed, 41);
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

GridPoint point(int d2, std::vector<ProbabilityBlock> blocks) { return GridPoint{d2, 0, std::move(blocks)}; }

// ---------------------------------------------------------------------------

void round_trips(Outcome& o) {
    double gap_err = 0.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        Matrix th = random_matrix(5 + static_cast<Eigen::Index>(s), 2 + static_cast<Eigen::Index>(s), s);
        th = th.colwise() - th.rowwise().mean();
        const ScoreMatrix back = average_scores(build_gap_matrix(ScoreMatrix{th, true}));
        gap_err = std::max(gap_err, (back.values - th).cwiseAbs().maxCoeff());
    }
    o.check(gap_err <= 1e-10, "gap/average max error " + num(gap_err));

    double sig_err = 0.0, worst_x = 0.0;
    for (int t = -3000; t <= 3000; ++t) {
        const double x = t * 0.01;
        const double e = std::abs(sigmoid_inv(sigmoid(x)) - x);
        if (e > sig_err) {
            sig_err = e;
            worst_x = x;
        }
    }
    o.check(sig_err <= 1e-9, "sigmoid round trip on [-30,30] max error " + num(sig_err) + " at x=" + num(worst_x));

    bool bij = true;
    for (int d2 = 2; d2 <= 60 && bij; ++d2) {
        const PairSpace sp(d2);
        int k = 0;
        for (int j = 0; j < d2; ++j) {
            for (int j2 = j + 1; j2 < d2; ++j2, ++k) bij = bij && sp.index(j, j2) == k && sp.pair(k) == std::pair{j, j2};
        }
        bij = bij && k == sp.num_pairs();
    }
    o.check(bij, "pair index bijection d2=2..60");
}

void solver_certification(Outcome& o) {
    int ok = 0;
    for (int r = 0; r < 20; ++r) {
        SyntheticConfig cfg;
        cfg.d2 = 3 + r % 10;
        cfg.p_blocks = {{0.4, 0.9}, {0.6, 0.25 + 0.03 * r}};
        Rng tr = make_rng(500 + static_cast<std::uint64_t>(r), kStreamTheta);
        const ScoreMatrix t = generate_theta(cfg, tr);
        Rng sr = make_rng(500 + static_cast<std::uint64_t>(r), kStreamSample);
        const auto d = sample_comparisons(t, assign_probabilities(cfg.p_blocks, cfg.users()), sr);
        SolverConfig c;
        c.compute_kkt = true;
        c.kkt_tol = 1e-2;
        c.tol = 1e-12;
        c.max_iters = 20000;
        if (r % 3 == 1) c.lambda = 0.3 * default_lambda(d);
        const ConvexSolution sol = solve_convex(d, c);
        ok += sol.kkt && sol.kkt->satisfied;
    }
    o.check(ok == 20, "KKT satisfied on " + std::to_string(ok) + "/20 instances");

    const std::vector<Comparison> es{{0, 0, 1.0}, {0, 2, 0.0}, {1, 1, 1.0}, {1, 2, 1.0}};
    const ComparisonDataset d(2, PairSpace(3), es, {0.8, 0.5});
    SolverConfig c;
    c.lambda = 0.2;
    c.tol = 1e-15;
    c.max_iters = 200000;
    const ConvexSolution sol = solve_convex(d, c);
    const double diff = (sol.L - testing::subgradient_oracle(d, 0.2, 1000000, 1e-4)).norm();
    o.check(diff <= 1e-4, "subgradient oracle distance " + num(diff));
}

void gradient_check(Outcome& o) {
    const auto inst = testing::make_instance(6, 0.7, 7);
    const DenseObservations obs = inst.data.dense();
    double worst = 0.0;
    for (std::uint64_t pt = 0; pt < 10; ++pt) {
        const Matrix X = 0.5 * random_matrix(15, 2, 100 + pt);
        const Matrix Y = 0.5 * random_matrix(15, 2, 200 + pt);
        Matrix gx, gy;
        factored_gradient(X, Y, obs, 0.8, gx, gy);
        const double h = 1e-6;
        double num2 = 0.0;
        auto fd = [&](Matrix A, Matrix B, bool first, Eigen::Index i) {
            Matrix& m = first ? A : B;
            const double x0 = m.data()[i];
            m.data()[i] = x0 + h;
            const double fp = factored_objective(A, B, obs, 0.8);
            m.data()[i] = x0 - h;
            const double fm = factored_objective(A, B, obs, 0.8);
            return (fp - fm) / (2 * h);
        };
        for (Eigen::Index i = 0; i < X.size(); ++i) num2 += std::pow(fd(X, Y, true, i) - gx.data()[i], 2);
        for (Eigen::Index i = 0; i < Y.size(); ++i) num2 += std::pow(fd(X, Y, false, i) - gy.data()[i], 2);
        worst = std::max(worst, std::sqrt(num2 / (gx.squaredNorm() + gy.squaredNorm())));
    }
    o.check(worst <= 1e-5, "max relative gradient error " + num(worst));
}

void newton_step(Outcome& o) {
    const auto inst = testing::make_instance(8, 0.7, 3);
    const Matrix M = random_matrix(28, 28, 4);
    const GapMatrix nr = nr_debias(GapMatrix{M}, inst.data);
    double worst = 0.0;
    int n = 0;
    for (const auto& e : inst.data.entries()) {
        const double m = M(e.user, e.pair);
        const double s = 1.0 / (1.0 + std::exp(-m));
        const double ref = m + (e.y - s) / (0.7 * s * (1.0 - s));
        worst = std::max(worst, std::abs(nr.values(e.user, e.pair) - ref) / std::max(1.0, std::abs(ref)));
        if (++n == 100) break;
    }
    o.check(n == 100 && worst <= 1e-12, "newton step max error " + num(worst) + " over " + std::to_string(n));

    const auto clean = testing::make_instance(8, 0.6, 5, 0, true);
    const double fixed = (nr_debias(clean.M_star, clean.data).values - clean.M_star.values).cwiseAbs().maxCoeff();
    o.check(fixed <= 1e-12, "zero-residual fixed point deviation " + num(fixed));
}

void eckart_young(Outcome& o) {
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 5; ++s) {
        const Matrix A = random_matrix(30, 50, 60 + s);
        const Eigen::JacobiSVD<Matrix> svd(A);
        const Vector sv = svd.singularValues();
        for (int q = 1; q <= 10; q += 3) {
            const double resid = (A - rank_q_project(A, q).M).squaredNorm();
            const double tail = sv.tail(sv.size() - q).squaredNorm();
            worst = std::max(worst, std::abs(resid - tail) / std::max(1.0, tail));
        }
    }
    o.check(worst <= 1e-8, "residual vs tail energy max relative gap " + num(worst));
}

void convergence(Outcome& o) {
    ExperimentSpec s;
    s.kind = ExperimentKind::convergence;
    const std::vector<ProbabilityBlock> pattern{{1.0 / 3.0, 0.8}, {2.0 / 3.0, 0.4}};
    s.grid = {point(20, pattern), point(40, pattern)};
    s.reps = 10;
    s.seed = 2024;
    const ExperimentResult r = run_convergence(s);
    o.check(r.failures.empty(), std::to_string(r.failures.size()) + " failed reps");
    const auto& a = r.convergence.at(0);
    const auto& b = r.convergence.at(1);
    o.check(b.frob < a.frob, "frobenius " + num(a.frob) + " -> " + num(b.frob));
    o.check(b.entrywise < a.entrywise, "entrywise " + num(a.entrywise) + " -> " + num(b.entrywise));
}

void normality(Outcome& o) {
    for (const ExperimentKind kind : {ExperimentKind::normality_agg, ExperimentKind::normality_indiv}) {
        ExperimentSpec s;
        s.kind = kind;
        s.grid = {point(20, {{1.0, 0.8}})};
        s.reps = 500;
        s.seed = 7;
        const ExperimentResult r = run_normality(s);
        const NormalitySummary& n = r.normality.at(0);
        const std::string tag = kind_name(kind) + " ";
        o.check(r.failures.empty() && n.has_summary, tag + std::to_string(n.z.size()) + " values");
        o.check(std::abs(n.mean) <= 0.1, tag + "mean " + num(n.mean));
        o.check(std::abs(n.variance - 1.0) <= 0.25, tag + "variance " + num(n.variance));
        o.check(n.ks <= 0.08, tag + "KS " + num(n.ks));
    }
}

void ranking(Outcome& o, bool smoke) {
    ExperimentSpec s;
    s.kind = ExperimentKind::ranking_ci;
    s.individual = false;
    s.seed = 99;
    if (smoke) {
        s.grid = {point(20, {{1.0, 0.8}})};
        s.reps = 25;
        s.bootstrap = {200, 0.05, 5};
    } else {
        s.grid = {point(20, {{1.0, 0.8}}), point(30, {{1.0, 0.8}}), point(40, {{1.0, 0.8}})};
        s.reps = 100;
        s.bootstrap = {500, 0.05, 5};
    }
    const auto start = std::chrono::steady_clock::now();
    const ExperimentResult r = run_ranking_ci(s);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    o.check(r.failures.empty(), std::to_string(r.failures.size()) + " failed reps");
    const RankingSummary& first = r.ranking.at(0);
    o.check(first.agg_coverage >= (smoke ? 0.85 : 0.90), "d2=20 coverage " + num(first.agg_coverage));
    if (smoke) {
        o.check(secs < 900.0, "runtime " + num(secs) + " s");
        return;
    }
    o.check(first.agg_ratio >= 0.35 && first.agg_ratio <= 0.70, "d2=20 length/d2 " + num(first.agg_ratio));
    bool decreasing = true;
    std::string ratios;
    for (std::size_t g = 0; g < r.ranking.size(); ++g) {
        ratios += (g ? " -> " : "") + num(r.ranking[g].agg_ratio);
        if (g > 0) decreasing = decreasing && r.ranking[g].agg_ratio < r.ranking[g - 1].agg_ratio;
    }
    o.check(decreasing, "length/d2 " + ratios);
}

void split_vs_full(Outcome& o) {
    ExperimentSpec s;
    s.kind = ExperimentKind::split_compare;
    s.grid = {point(20, {{1.0, 0.8}})};
    s.reps = 20;
    s.seed = 31;
    const ExperimentResult r = run_split_compare(s);
    const SplitSummary& x = r.split.at(0);
    o.check(r.failures.empty(), std::to_string(r.failures.size()) + " failed reps");
    const double rel = std::abs(x.frob_split - x.frob_full) / x.frob_full;
    o.check(rel <= 0.5, "frobenius split " + num(x.frob_split) + " full " + num(x.frob_full) + " relative " + num(rel));
}

void top_k(Outcome& o) {
    constexpr int d2 = 10, K = 3, reps = 200;
    constexpr double alpha = 0.05;
    // Aggregated scores: three leaders, then a drop of 3.
    const std::vector<int> leaders{4, 7, 1};
    Vector means(d2);
    int rest = 0;
    for (int j = 0; j < d2; ++j) {
        const auto it = std::find(leaders.begin(), leaders.end(), j);
        means(j) = it != leaders.end() ? 2.0 - 0.25 * static_cast<double>(it - leaders.begin())
                                       : -1.5 - 0.25 * rest++;
    }
    int recovered = 0, rejections = 0, kept = 0;
    for (int r = 0; r < reps; ++r) {
        const auto seed = static_cast<std::uint64_t>(7000 + r);
        const auto inst = testing::make_instance(d2, 0.8, seed);
        const ScoreMatrix theta = testing::with_item_means(inst.theta, means);
        const ComparisonDataset data = testing::sample(theta, 0.8, seed);
        DebiasConfig dc;
        dc.split = false;
        Rng rng = make_rng(seed, kStreamSplit);
        const DebiasedEstimates est = debias_pipeline(data, dc, rng);
        const std::vector<int> truth = top_k_select(scope_scores(theta, -1), K);
        if (r < 20) recovered += top_k_select(scope_scores(est.full.theta_hat, -1), K) == truth;
        const BootstrapConfig bc{500, alpha, seed};
        rejections += top_k_placement_test(est, data, leaders.back(), K, bc).reject;
        const ScreeningResult sc = sure_screen_top_k(est, data, K, bc);
        kept += std::includes(sc.selected.begin(), sc.selected.end(), truth.begin(), truth.end());
    }
    o.check(recovered >= 19, "top-K recovered in " + std::to_string(recovered) + "/20");
    const double size = static_cast<double>(rejections) / reps;
    o.check(size <= alpha + 0.05, "placement size " + num(size));
    const double cov = static_cast<double>(kept) / reps;
    o.check(cov >= 1 - alpha - 0.05, "screening coverage " + num(cov));
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

void determinism(Outcome& o, const std::string& cli) {
    if (cli.empty() || !fs::exists(cli)) {
        o.check(false, "CLI binary not found (pass --cli)");
        return;
    }
    const fs::path root = fs::temp_directory_path() / "prefrank_acceptance_determinism";
    fs::remove_all(root);
    fs::create_directories(root);
    const std::vector<std::string> kinds{"convergence", "normality-agg",  "normality-indiv",
                                         "ranking-ci",  "split-compare", "real-data-workflow"};
    for (const auto& kind : kinds) {
        const fs::path cfg = root / (kind + ".json");
        std::ofstream(cfg) << R"({"kind": ")" << kind
                           << R"(", "grid": [{"d2": 7, "p": 0.7}, {"d2": 8, "d1": 30, "p": 0.6}],
                                "reps": 4, "bootstrap": {"B": 200, "alpha": 0.05, "seed": 3}, "seed": 11})";
        std::vector<std::string> outputs;
        for (const int threads : {1, 2, 4}) {
            const fs::path out = root / (kind + "_t" + std::to_string(threads));
            const std::string cmd = "\"" + cli + "\" --config \"" + cfg.string() + "\" --out \"" + out.string() +
                                    "\" --threads " + std::to_string(threads) + " experiment > /dev/null 2>&1";
            if (std::system(cmd.c_str()) != 0) {
                o.check(false, kind + " exited with an error at " + std::to_string(threads) + " threads");
                return;
            }
            std::vector<fs::path> csvs;
            for (const auto& e : fs::directory_iterator(out)) {
                if (e.path().extension() == ".csv") csvs.push_back(e.path());
            }
            std::sort(csvs.begin(), csvs.end());
            std::string all;
            for (const auto& p : csvs) all += p.filename().string() + "\n" + slurp(p);
            outputs.push_back(all);
        }
        const bool same = !outputs[0].empty() && outputs[0] == outputs[1] && outputs[0] == outputs[2];
        o.check(same, kind + (same ? " identical" : " differs") + " across 1/2/4 threads");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance suite"};
    std::vector<int> selected;
    std::string profile = "full";
    std::string cli;
    app.add_option("--criterion", selected, "Criteria to run (default: all)")->check(CLI::Range(1, 11));
    app.add_option("--profile", profile, "Ranking-CI profile")->check(CLI::IsMember({"full", "smoke"}));
    app.add_option("--cli", cli, "Path to the prefrank executable");
    CLI11_PARSE(app, argc, argv);

    const bool smoke = profile == "smoke";
    const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
        {"round-trip identities", round_trips},
        {"solver certification", solver_certification},
        {"factored gradient check", gradient_check},
        {"newton step", newton_step},
        {"eckart-young", eckart_young},
        {"convergence", convergence},
        {"normality", normality},
        {smoke ? "ranking CI (smoke)" : "ranking CI", [smoke](Outcome& o) { ranking(o, smoke); }},
        {"split vs full", split_vs_full},
        {"top-K", top_k},
        {"determinism", [&cli](Outcome& o) { determinism(o, cli); }},
    };
    if (selected.empty()) {
        for (int c = 1; c <= 11; ++c) selected.push_back(c);
    }
    bool all = true;
    for (const int c : selected) {
        Outcome o;
        const auto start = std::chrono::steady_clock::now();
        try {
            criteria[static_cast<std::size_t>(c - 1)].second(o);
        } catch (const std::exception& e) {
            o.check(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c << " (" << criteria[static_cast<std::size_t>(c - 1)].first
                  << ", " << num(secs) << " s): " << o.detail.str() << std::endl;
        all = all && o.pass;
    }
    return all ? 0 : 1;
}
