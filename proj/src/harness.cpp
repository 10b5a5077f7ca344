#include "prefrank/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "prefrank/debias.hpp"
#include "prefrank/kernels.hpp"
#include "prefrank/svd.hpp"

namespace prefrank {

using nlohmann::json;

std::string kind_name(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::convergence: return "convergence";
        case ExperimentKind::normality_agg: return "normality-agg";
        case ExperimentKind::normality_indiv: return "normality-indiv";
        case ExperimentKind::ranking_ci: return "ranking-ci";
        case ExperimentKind::split_compare: return "split-compare";
        case ExperimentKind::real_data_workflow: return "real-data-workflow";
    }
    return "unknown";
}

ExperimentKind parse_kind(const std::string& name) {
    for (auto k : {ExperimentKind::convergence, ExperimentKind::normality_agg, ExperimentKind::normality_indiv,
                   ExperimentKind::ranking_ci, ExperimentKind::split_compare, ExperimentKind::real_data_workflow}) {
        if (kind_name(k) == name) return k;
    }
    throw std::invalid_argument("unknown experiment kind '" + name +
                                "' (convergence, normality-agg, normality-indiv, ranking-ci, split-compare, "
                                "real-data-workflow)");
}

std::string GridPoint::pattern() const {
    std::ostringstream out;
    for (std::size_t b = 0; b < p_blocks.size(); ++b) {
        if (b) out << ' ';
        out << format_double(p_blocks[b].fraction) << '@' << format_double(p_blocks[b].p);
    }
    return out.str();
}

void ExperimentSpec::validate() const {
    if (reps < 1) throw std::invalid_argument("spec: reps must be >= 1");
    if (grid.empty()) throw std::invalid_argument("spec: grid must not be empty");
    for (const GridPoint& g : grid) {
        SyntheticConfig cfg;
        cfg.d2 = g.d2;
        cfg.d1 = g.d1;
        cfg.p_blocks = g.p_blocks;
        cfg.sup_norm = sup_norm;
        cfg.series_terms = series_terms;
        cfg.validate();
        if (item_a < 0 || item_b < 0 || item_a >= g.d2 || item_b >= g.d2 || item_a == item_b) {
            throw std::invalid_argument("spec: pair items must be distinct ids in [1, d2]");
        }
        if (user < 0 || user >= g.users()) throw std::invalid_argument("spec: user outside [1, d1]");
        for (int j : targets) {
            if (j < 0 || j >= g.d2) throw std::invalid_argument("spec: target item outside [1, d2]");
        }
    }
    if (targets.empty()) throw std::invalid_argument("spec: targets must not be empty");
    bootstrap.validate();
    solver.validate();
    if (rank && *rank < 1) throw std::invalid_argument("spec: rank must be >= 1");
    if (subspace_half != 1 && subspace_half != 2) throw std::invalid_argument("spec: subspace_half must be 1 or 2");
    if (!(sample_p > 0.0 && sample_p <= 1.0)) throw std::invalid_argument("spec: sample_p outside (0, 1]");
}

// ---------------------------------------------------------------------------
// JSON

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.count(it.key())) throw std::invalid_argument("spec: unknown key '" + it.key() + "' in " + where);
    }
}

std::vector<ProbabilityBlock> parse_blocks(const json& g) {
    if (g.contains("p") && g.contains("p_blocks")) {
        throw std::invalid_argument("spec: grid entry has both 'p' and 'p_blocks'");
    }
    if (g.contains("p")) return {{1.0, g.at("p").get<double>()}};
    if (!g.contains("p_blocks")) return {{1.0, 0.8}};
    std::vector<ProbabilityBlock> out;
    for (const json& b : g.at("p_blocks")) {
        reject_unknown(b, {"fraction", "p"}, "p_blocks");
        out.push_back({b.value("fraction", 1.0), b.at("p").get<double>()});
    }
    return out;
}

}  // namespace

ExperimentSpec parse_spec(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("spec: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument("spec: top level must be an object");
    reject_unknown(j,
                   {"kind", "grid", "reps", "bootstrap", "solver", "output_dir", "seed", "sup_norm", "series_terms",
                    "noiseless", "pair", "user", "targets", "individual", "rank", "subspace_half", "scores_csv",
                    "cut_points", "sample_p"},
                   "spec");
    ExperimentSpec s;
    try {
        if (j.contains("kind")) s.kind = parse_kind(j.at("kind").get<std::string>());
        if (j.contains("grid")) {
            s.grid.clear();
            for (const json& g : j.at("grid")) {
                reject_unknown(g, {"d2", "d1", "p", "p_blocks"}, "grid");
                GridPoint gp;
                gp.d2 = g.at("d2").get<int>();
                gp.d1 = g.value("d1", 0);
                gp.p_blocks = parse_blocks(g);
                s.grid.push_back(gp);
            }
        }
        s.reps = j.value("reps", s.reps);
        if (j.contains("bootstrap")) {
            const json& b = j.at("bootstrap");
            reject_unknown(b, {"B", "alpha", "seed"}, "bootstrap");
            s.bootstrap.B = b.value("B", s.bootstrap.B);
            s.bootstrap.alpha = b.value("alpha", s.bootstrap.alpha);
            s.bootstrap.seed = b.value("seed", s.bootstrap.seed);
        }
        if (j.contains("solver")) {
            const json& c = j.at("solver");
            reject_unknown(c, {"lambda", "lambda_scale_sq", "max_iters", "tol", "clip_eps", "accelerate"}, "solver");
            if (c.contains("lambda") && !c.at("lambda").is_null()) s.solver.lambda = c.at("lambda").get<double>();
            s.solver.lambda_scale_sq = c.value("lambda_scale_sq", s.solver.lambda_scale_sq);
            s.solver.max_iters = c.value("max_iters", s.solver.max_iters);
            s.solver.tol = c.value("tol", s.solver.tol);
            s.solver.clip_eps = c.value("clip_eps", s.solver.clip_eps);
            s.solver.accelerate = c.value("accelerate", s.solver.accelerate);
        }
        if (j.contains("output_dir")) s.output_dir = j.at("output_dir").get<std::string>();
        s.seed = j.value("seed", s.seed);
        s.sup_norm = j.value("sup_norm", s.sup_norm);
        s.series_terms = j.value("series_terms", s.series_terms);
        s.noiseless = j.value("noiseless", s.noiseless);
        if (j.contains("pair")) {
            const auto pr = j.at("pair").get<std::vector<int>>();
            if (pr.size() != 2) throw std::invalid_argument("spec: 'pair' needs two item ids");
            s.item_a = pr[0] - 1;
            s.item_b = pr[1] - 1;
        }
        if (j.contains("user")) s.user = j.at("user").get<int>() - 1;
        if (j.contains("targets")) {
            s.targets.clear();
            for (int t : j.at("targets").get<std::vector<int>>()) s.targets.push_back(t - 1);
        }
        s.individual = j.value("individual", s.individual);
        if (j.contains("rank") && !j.at("rank").is_null()) s.rank = j.at("rank").get<int>();
        s.subspace_half = j.value("subspace_half", s.subspace_half);
        if (j.contains("scores_csv")) s.scores_csv = j.at("scores_csv").get<std::string>();
        if (j.contains("cut_points")) s.cut_points = j.at("cut_points").get<std::vector<double>>();
        s.sample_p = j.value("sample_p", s.sample_p);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("spec: ") + e.what());
    }
    s.validate();
    return s;
}

ExperimentSpec load_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open spec file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_spec(buf.str());
}

namespace {

json spec_to_json(const ExperimentSpec& s) {
    json grid = json::array();
    for (const GridPoint& g : s.grid) {
        json blocks = json::array();
        for (const auto& b : g.p_blocks) blocks.push_back({{"fraction", b.fraction}, {"p", b.p}});
        grid.push_back({{"d2", g.d2}, {"d1", g.users()}, {"p_blocks", blocks}});
    }
    std::vector<int> targets;
    for (int t : s.targets) targets.push_back(t + 1);
    json solver = {{"lambda", s.solver.lambda ? json(*s.solver.lambda) : json(nullptr)},
                   {"lambda_scale_sq", s.solver.lambda_scale_sq},
                   {"max_iters", s.solver.max_iters},
                   {"tol", s.solver.tol},
                   {"clip_eps", s.solver.clip_eps},
                   {"accelerate", s.solver.accelerate}};
    return {{"kind", kind_name(s.kind)},
            {"grid", grid},
            {"reps", s.reps},
            {"bootstrap", {{"B", s.bootstrap.B}, {"alpha", s.bootstrap.alpha}, {"seed", s.bootstrap.seed}}},
            {"solver", solver},
            {"output_dir", s.output_dir.string()},
            {"seed", s.seed},
            {"sup_norm", s.sup_norm},
            {"series_terms", s.series_terms},
            {"noiseless", s.noiseless},
            {"pair", {s.item_a + 1, s.item_b + 1}},
            {"user", s.user + 1},
            {"targets", targets},
            {"individual", s.individual},
            {"rank", s.rank ? json(*s.rank) : json(nullptr)},
            {"subspace_half", s.subspace_half},
            {"scores_csv", s.scores_csv.string()},
            {"cut_points", s.cut_points},
            {"sample_p", s.sample_p}};
}

}  // namespace

std::string spec_json(const ExperimentSpec& spec) { return spec_to_json(spec).dump(2) + "\n"; }

std::uint64_t rep_seed(std::uint64_t seed, std::size_t g, int rep) {
    return derive_seed(derive_seed(seed, kStreamRep, g), kStreamRep, static_cast<std::uint64_t>(rep));
}

std::string Table::csv() const {
    std::ostringstream out;
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t c = 0; c < cells.size(); ++c) out << (c ? "," : "") << cells[c];
        out << "\n";
    };
    line(header);
    for (const auto& r : rows) line(r);
    return out.str();
}

// ---------------------------------------------------------------------------
// Replicate plumbing

namespace {

std::string fmt(double v) { return format_double(v); }
std::string fmt(int v) { return std::to_string(v); }

struct Replicate {
    ScoreMatrix theta;
    GapMatrix M_star;
    ComparisonDataset data;
    std::uint64_t seed = 0;
};

Replicate make_replicate(const ExperimentSpec& spec, const GridPoint& gp, std::uint64_t seed) {
    SyntheticConfig cfg;
    cfg.d2 = gp.d2;
    cfg.d1 = gp.d1;
    cfg.p_blocks = gp.p_blocks;
    cfg.sup_norm = spec.sup_norm;
    cfg.series_terms = spec.series_terms;
    cfg.seed = seed;
    Replicate r;
    r.seed = seed;
    Rng theta_rng = make_rng(seed, kStreamTheta);
    r.theta = generate_theta(cfg, theta_rng);
    r.M_star = build_gap_matrix(r.theta);
    Rng sample_rng = make_rng(seed, kStreamSample);
    SampleOptions opts;
    opts.noiseless = spec.noiseless;
    r.data = sample_comparisons(r.theta, assign_probabilities(gp.p_blocks, gp.users()), sample_rng, opts);
    return r;
}

DebiasConfig debias_config(const ExperimentSpec& spec, bool split) {
    DebiasConfig dc;
    dc.solver = spec.solver;
    dc.rank = spec.rank;
    dc.split = split;
    dc.subspace_half = spec.subspace_half;
    return dc;
}

BootstrapConfig boot_for(const ExperimentSpec& spec, std::uint64_t seed) {
    BootstrapConfig b = spec.bootstrap;
    b.seed = derive_seed(spec.bootstrap.seed, kStreamBoot, seed);
    return b;
}

/// Run f(task) for every task, distributing over OpenMP threads. f must not throw.
template <class F>
void for_each_task(int tasks, F&& f) {
#pragma omp parallel for schedule(dynamic, 1)
    for (int t = 0; t < tasks; ++t) f(t);
}

std::vector<int> all_items(int d2) {
    std::vector<int> v(static_cast<std::size_t>(d2));
    for (int j = 0; j < d2; ++j) v[static_cast<std::size_t>(j)] = j;
    return v;
}

template <class Outcome>
void collect_failures(const ExperimentSpec& spec, const std::vector<Outcome>& outs, ExperimentResult& res) {
    for (std::size_t t = 0; t < outs.size(); ++t) {
        if (!outs[t].error.empty()) {
            const std::size_t g = t / static_cast<std::size_t>(spec.reps);
            const int rep = static_cast<int>(t % static_cast<std::size_t>(spec.reps));
            res.failures.push_back("grid " + std::to_string(g + 1) + " rep " + std::to_string(rep + 1) + ": " +
                                   outs[t].error);
        }
    }
}

}  // namespace

// ---------------------------------------------------------------------------

ExperimentResult run_convergence(const ExperimentSpec& spec) {
    spec.validate();
    struct Out {
        double frob = 0, entry = 0, agg = 0;
        std::string error;
    };
    const int n = static_cast<int>(spec.grid.size()) * spec.reps;
    std::vector<Out> outs(static_cast<std::size_t>(n));
    for_each_task(n, [&](int t) {
        const std::size_t g = static_cast<std::size_t>(t / spec.reps);
        const int rep = t % spec.reps;
        Out& o = outs[static_cast<std::size_t>(t)];
        try {
            const Replicate r = make_replicate(spec, spec.grid[g], rep_seed(spec.seed, g, rep));
            const EstimateBundle b = estimate_pipeline(r.data, spec.solver);
            const Matrix diff = b.theta_hat.values - r.theta.values;
            const double d1 = static_cast<double>(diff.rows()), d2 = static_cast<double>(diff.cols());
            o.frob = diff.norm() / std::sqrt(d1 * d2);
            o.entry = diff.cwiseAbs().maxCoeff() / r.theta.values.cwiseAbs().maxCoeff();
            o.agg = diff.colwise().sum().norm() / r.theta.values.colwise().sum().norm();
        } catch (const std::exception& e) {
            o.error = e.what();
        }
    });

    ExperimentResult res;
    res.kind = ExperimentKind::convergence;
    Table reps{{"d2", "d1", "pattern", "rep", "frob", "entrywise", "aggregate", "status"}, {}};
    Table summary{{"d2", "d1", "pattern", "ok_reps", "frob", "entrywise", "aggregate"}, {}};
    for (std::size_t g = 0; g < spec.grid.size(); ++g) {
        const GridPoint& gp = spec.grid[g];
        ConvergenceSummary s;
        s.point = gp;
        for (int rep = 0; rep < spec.reps; ++rep) {
            const Out& o = outs[g * static_cast<std::size_t>(spec.reps) + static_cast<std::size_t>(rep)];
            const bool ok = o.error.empty();
            reps.rows.push_back({fmt(gp.d2), fmt(gp.users()), gp.pattern(), fmt(rep + 1), ok ? fmt(o.frob) : "",
                                 ok ? fmt(o.entry) : "", ok ? fmt(o.agg) : "", ok ? "ok" : "failed"});
            if (!ok) continue;
            ++s.ok_reps;
            s.frob += o.frob;
            s.entrywise += o.entry;
            s.aggregate += o.agg;
        }
        if (s.ok_reps > 0) {
            s.frob /= s.ok_reps;
            s.entrywise /= s.ok_reps;
            s.aggregate /= s.ok_reps;
        }
        summary.rows.push_back({fmt(gp.d2), fmt(gp.users()), gp.pattern(), fmt(s.ok_reps), fmt(s.frob),
                                fmt(s.entrywise), fmt(s.aggregate)});
        res.convergence.push_back(s);
    }
    res.tables["convergence_reps.csv"] = std::move(reps);
    res.tables["convergence_summary.csv"] = std::move(summary);
    collect_failures(spec, outs, res);
    return res;
}

ExperimentResult run_normality(const ExperimentSpec& spec) {
    spec.validate();
    const bool indiv = spec.kind == ExperimentKind::normality_indiv;
    struct Out {
        double z = 0;
        std::string error;
    };
    const int n = static_cast<int>(spec.grid.size()) * spec.reps;
    std::vector<Out> outs(static_cast<std::size_t>(n));
    for_each_task(n, [&](int t) {
        const std::size_t g = static_cast<std::size_t>(t / spec.reps);
        const int rep = t % spec.reps;
        Out& o = outs[static_cast<std::size_t>(t)];
        try {
            const Replicate r = make_replicate(spec, spec.grid[g], rep_seed(spec.seed, g, rep));
            Rng split_rng = make_rng(r.seed, kStreamSplit);
            const DebiasedEstimates est = debias_pipeline(r.data, debias_config(spec, indiv), split_rng);
            const SignedPairIndex sp = signed_index(r.data.space(), spec.item_a, spec.item_b);
            if (indiv) {
                const Projection& sub = est.subspace_projection();
                const IndivVariance w = indiv_variance(sub.U, sub.V, est.full.M_hat, r.data, spec.user, sp.k);
                o.z = sp.sign * (est.split->M_proj(spec.user, sp.k) - r.M_star.values(spec.user, sp.k)) /
                      std::sqrt(w.w);
            } else {
                const GapTest test = agg_gap_test(est.M_nr, est.full.M_hat, r.data, sp.k, spec.bootstrap.alpha);
                const auto users = active_users(r.data);
                double truth = 0.0;
                for (int i : users) truth += r.M_star.values(i, sp.k);
                truth /= static_cast<double>(users.size());
                o.z = sp.sign * (test.point - truth) / std::sqrt(test.variance);
            }
        } catch (const std::exception& e) {
            o.error = e.what();
        }
    });

    ExperimentResult res;
    res.kind = spec.kind;
    Table values{{"d2", "d1", "pattern", "rep", "z", "status"}, {}};
    Table summary{{"d2", "d1", "pattern", "n", "mean", "variance", "ks"}, {}};
    for (std::size_t g = 0; g < spec.grid.size(); ++g) {
        const GridPoint& gp = spec.grid[g];
        NormalitySummary s;
        s.point = gp;
        for (int rep = 0; rep < spec.reps; ++rep) {
            const Out& o = outs[g * static_cast<std::size_t>(spec.reps) + static_cast<std::size_t>(rep)];
            const bool ok = o.error.empty();
            values.rows.push_back(
                {fmt(gp.d2), fmt(gp.users()), gp.pattern(), fmt(rep + 1), ok ? fmt(o.z) : "", ok ? "ok" : "failed"});
            if (ok) s.z.push_back(o.z);
        }
        // Two values are kept as raw output only.
        s.has_summary = s.z.size() >= 3;
        std::vector<std::string> row{fmt(gp.d2), fmt(gp.users()), gp.pattern(), fmt(static_cast<int>(s.z.size()))};
        if (s.has_summary) {
            const double m = static_cast<double>(s.z.size());
            for (double z : s.z) s.mean += z;
            s.mean /= m;
            for (double z : s.z) s.variance += (z - s.mean) * (z - s.mean);
            s.variance /= m - 1.0;
            s.ks = ks_distance_normal(s.z);
            row.insert(row.end(), {fmt(s.mean), fmt(s.variance), fmt(s.ks)});
        } else {
            row.insert(row.end(), {"", "", ""});
        }
        summary.rows.push_back(row);
        res.normality.push_back(std::move(s));
    }
    const std::string stem = indiv ? "normality_indiv" : "normality_agg";
    res.tables[stem + "_values.csv"] = std::move(values);
    res.tables[stem + "_summary.csv"] = std::move(summary);
    collect_failures(spec, outs, res);
    return res;
}

namespace {

bool all_pairs_cover(const RankIntervals& ri, const Vector& true_gap) {
    for (const PairInterval& p : ri.pairs) {
        const double g = p.c.sign * true_gap(p.c.k);
        if (g < p.lo || g > p.hi) return false;
    }
    return true;
}

}  // namespace

ExperimentResult run_ranking_ci(const ExperimentSpec& spec) {
    spec.validate();
    struct ScopeOut {
        std::vector<ItemInterval> ci;
        std::vector<ItemInterval> truth;
        double quantile = 0;
        bool simultaneous = false;
    };
    struct Out {
        ScopeOut agg, indiv;
        bool has_indiv = false;
        std::string error;
    };
    const int n = static_cast<int>(spec.grid.size()) * spec.reps;
    std::vector<Out> outs(static_cast<std::size_t>(n));
    for_each_task(n, [&](int t) {
        const std::size_t g = static_cast<std::size_t>(t / spec.reps);
        const int rep = t % spec.reps;
        Out& o = outs[static_cast<std::size_t>(t)];
        try {
            const Replicate r = make_replicate(spec, spec.grid[g], rep_seed(spec.seed, g, rep));
            Rng split_rng = make_rng(r.seed, kStreamSplit);
            const DebiasedEstimates est = debias_pipeline(r.data, debias_config(spec, spec.individual), split_rng);
            const std::vector<int> kset = all_items(spec.grid[g].d2);
            const BootstrapConfig boot = boot_for(spec, r.seed);

            const RankIntervals agg = agg_rank_intervals(est, r.data, spec.targets, kset, boot);
            const auto truth_agg = true_rank_intervals(scope_scores(r.theta, -1));
            o.agg.quantile = agg.quantile;
            o.agg.simultaneous = all_pairs_cover(agg, agg_points(r.M_star, r.data));
            for (const auto& it : agg.items) {
                o.agg.ci.push_back(it);
                o.agg.truth.push_back(truth_agg[static_cast<std::size_t>(it.item)]);
            }
            if (spec.individual) {
                const RankIntervals ind = indiv_rank_intervals(est, r.data, spec.user, spec.targets, kset, boot);
                const auto truth_ind = true_rank_intervals(scope_scores(r.theta, spec.user));
                o.indiv.quantile = ind.quantile;
                o.indiv.simultaneous = all_pairs_cover(ind, r.M_star.values.row(spec.user).transpose());
                for (const auto& it : ind.items) {
                    o.indiv.ci.push_back(it);
                    o.indiv.truth.push_back(truth_ind[static_cast<std::size_t>(it.item)]);
                }
                o.has_indiv = true;
            }
        } catch (const std::exception& e) {
            o.error = e.what();
        }
    });

    ExperimentResult res;
    res.kind = ExperimentKind::ranking_ci;
    Table reps{{"d2", "d1", "pattern", "rep", "scope", "item", "r_upper", "r_lower", "length", "true_upper",
                "true_lower", "covered", "simultaneous", "quantile", "status"},
               {}};
    Table summary{{"d2", "d1", "pattern", "ok_reps", "agg_length", "agg_length_ratio", "agg_coverage",
                   "agg_simultaneous", "indiv_length", "indiv_length_ratio", "indiv_coverage", "indiv_simultaneous"},
                  {}};
    for (std::size_t g = 0; g < spec.grid.size(); ++g) {
        const GridPoint& gp = spec.grid[g];
        RankingSummary s;
        s.point = gp;
        for (int rep = 0; rep < spec.reps; ++rep) {
            const Out& o = outs[g * static_cast<std::size_t>(spec.reps) + static_cast<std::size_t>(rep)];
            if (!o.error.empty()) {
                reps.rows.push_back({fmt(gp.d2), fmt(gp.users()), gp.pattern(), fmt(rep + 1), "", "", "", "", "", "",
                                     "", "", "", "", "failed"});
                continue;
            }
            ++s.ok_reps;
            auto emit = [&](const char* scope, const ScopeOut& so, double& length, double& coverage,
                            double& simult) {
                double len = 0, cov = 0;
                for (std::size_t m = 0; m < so.ci.size(); ++m) {
                    const bool c = covers(so.ci[m], so.truth[m]);
                    len += so.ci[m].length();
                    cov += c;
                    reps.rows.push_back({fmt(gp.d2), fmt(gp.users()), gp.pattern(), fmt(rep + 1), scope,
                                         fmt(so.ci[m].item + 1), fmt(so.ci[m].r_upper), fmt(so.ci[m].r_lower),
                                         fmt(so.ci[m].length()), fmt(so.truth[m].r_upper), fmt(so.truth[m].r_lower),
                                         c ? "1" : "0", so.simultaneous ? "1" : "0", fmt(so.quantile), "ok"});
                }
                const double cnt = static_cast<double>(so.ci.size());
                length += len / cnt;
                coverage += cov / cnt;
                simult += so.simultaneous;
            };
            emit("aggregated", o.agg, s.agg_length, s.agg_coverage, s.agg_simultaneous);
            if (o.has_indiv) {
                ++s.indiv_reps;
                emit("individual", o.indiv, s.indiv_length, s.indiv_coverage, s.indiv_simultaneous);
            }
        }
        const double d2 = gp.d2;
        if (s.ok_reps > 0) {
            s.agg_length /= s.ok_reps;
            s.agg_coverage /= s.ok_reps;
            s.agg_simultaneous /= s.ok_reps;
            s.agg_ratio = s.agg_length / d2;
        }
        if (s.indiv_reps > 0) {
            s.indiv_length /= s.indiv_reps;
            s.indiv_coverage /= s.indiv_reps;
            s.indiv_simultaneous /= s.indiv_reps;
            s.indiv_ratio = s.indiv_length / d2;
        }
        std::vector<std::string> row{fmt(gp.d2),          fmt(gp.users()),        gp.pattern(),
                                     fmt(s.ok_reps),      fmt(s.agg_length),      fmt(s.agg_ratio),
                                     fmt(s.agg_coverage), fmt(s.agg_simultaneous)};
        if (s.indiv_reps > 0) {
            row.insert(row.end(),
                       {fmt(s.indiv_length), fmt(s.indiv_ratio), fmt(s.indiv_coverage), fmt(s.indiv_simultaneous)});
        } else {
            row.insert(row.end(), {"", "", "", ""});
        }
        summary.rows.push_back(row);
        res.ranking.push_back(s);
    }
    res.tables["ranking_ci_reps.csv"] = std::move(reps);
    res.tables["ranking_ci_summary.csv"] = std::move(summary);
    collect_failures(spec, outs, res);
    return res;
}

ExperimentResult run_split_compare(const ExperimentSpec& spec) {
    spec.validate();
    struct Out {
        double fs = 0, os = 0, ff = 0, of = 0;
        std::string error;
    };
    const int n = static_cast<int>(spec.grid.size()) * spec.reps;
    std::vector<Out> outs(static_cast<std::size_t>(n));
    for_each_task(n, [&](int t) {
        const std::size_t g = static_cast<std::size_t>(t / spec.reps);
        const int rep = t % spec.reps;
        Out& o = outs[static_cast<std::size_t>(t)];
        try {
            const Replicate r = make_replicate(spec, spec.grid[g], rep_seed(spec.seed, g, rep));
            Rng split_rng = make_rng(r.seed, kStreamSplit);
            const DebiasedEstimates est = debias_pipeline(r.data, debias_config(spec, true), split_rng);
            const double scale = std::sqrt(static_cast<double>(r.M_star.users()) * static_cast<double>(r.M_star.pairs()));
            const Matrix e_split = est.split->M_proj - r.M_star.values;
            const Matrix e_full = project_full(est) - r.M_star.values;
            o.fs = e_split.norm() / scale;
            o.os = spectral_norm(e_split) / scale;
            o.ff = e_full.norm() / scale;
            o.of = spectral_norm(e_full) / scale;
        } catch (const std::exception& e) {
            o.error = e.what();
        }
    });

    ExperimentResult res;
    res.kind = ExperimentKind::split_compare;
    Table reps{{"d2", "d1", "pattern", "rep", "frob_split", "op_split", "frob_full", "op_full", "status"}, {}};
    Table summary{{"d2", "d1", "pattern", "ok_reps", "frob_split", "op_split", "frob_full", "op_full"}, {}};
    for (std::size_t g = 0; g < spec.grid.size(); ++g) {
        const GridPoint& gp = spec.grid[g];
        SplitSummary s;
        s.point = gp;
        for (int rep = 0; rep < spec.reps; ++rep) {
            const Out& o = outs[g * static_cast<std::size_t>(spec.reps) + static_cast<std::size_t>(rep)];
            const bool ok = o.error.empty();
            reps.rows.push_back({fmt(gp.d2), fmt(gp.users()), gp.pattern(), fmt(rep + 1), ok ? fmt(o.fs) : "",
                                 ok ? fmt(o.os) : "", ok ? fmt(o.ff) : "", ok ? fmt(o.of) : "",
                                 ok ? "ok" : "failed"});
            if (!ok) continue;
            ++s.ok_reps;
            s.frob_split += o.fs;
            s.op_split += o.os;
            s.frob_full += o.ff;
            s.op_full += o.of;
        }
        if (s.ok_reps > 0) {
            s.frob_split /= s.ok_reps;
            s.op_split /= s.ok_reps;
            s.frob_full /= s.ok_reps;
            s.op_full /= s.ok_reps;
        }
        summary.rows.push_back({fmt(gp.d2), fmt(gp.users()), gp.pattern(), fmt(s.ok_reps), fmt(s.frob_split),
                                fmt(s.op_split), fmt(s.frob_full), fmt(s.op_full)});
        res.split.push_back(s);
    }
    res.tables["split_compare_reps.csv"] = std::move(reps);
    res.tables["split_compare_summary.csv"] = std::move(summary);
    collect_failures(spec, outs, res);
    return res;
}

Matrix generate_watch_ratios(int d1, int d2, std::uint64_t seed) {
    if (d1 < 1 || d2 < 2) throw std::invalid_argument("generate_watch_ratios: need d1 >= 1 and d2 >= 2");
    Rng rng = make_rng(seed, kStreamTheta, 0x77);
    std::normal_distribution<double> normal(0.0, 1.0);
    constexpr int rank = 3;
    Matrix u(d1, rank), v(d2, rank);
    Vector item(d2);
    for (int j = 0; j < d2; ++j) item(j) = 0.6 * normal(rng);
    for (int j = 0; j < d2; ++j) {
        for (int r = 0; r < rank; ++r) v(j, r) = 0.5 * normal(rng);
    }
    for (int i = 0; i < d1; ++i) {
        for (int r = 0; r < rank; ++r) u(i, r) = 0.5 * normal(rng);
    }
    Matrix out(d1, d2);
    for (int i = 0; i < d1; ++i) {
        for (int j = 0; j < d2; ++j) {
            const double eta = std::log(0.8) + item(j) + u.row(i).dot(v.row(j)) + 0.15 * normal(rng);
            out(i, j) = std::exp(eta);
        }
    }
    return out;
}

ExperimentResult run_real_workflow(const ExperimentSpec& spec) {
    spec.validate();
    const GridPoint& gp = spec.grid.front();
    const Matrix raw = spec.scores_csv.empty() ? generate_watch_ratios(gp.users(), gp.d2, spec.seed)
                                               : read_matrix_csv(spec.scores_csv);
    if (spec.user >= raw.rows()) throw std::invalid_argument("real-data workflow: user outside the score matrix");
    for (int j : spec.targets) {
        if (j >= raw.cols()) throw std::invalid_argument("real-data workflow: target item outside the score matrix");
    }
    const ScoreMatrix theta = discretize_scores(raw, spec.cut_points);
    const auto d1 = static_cast<int>(theta.users());
    const auto d2 = static_cast<int>(theta.items());

    Rng sample_rng = make_rng(spec.seed, kStreamSample);
    const ComparisonDataset data =
        sample_comparisons(theta, std::vector<double>(static_cast<std::size_t>(d1), spec.sample_p), sample_rng);
    Rng split_rng = make_rng(spec.seed, kStreamSplit);
    const DebiasedEstimates est = debias_pipeline(data, debias_config(spec, true), split_rng);
    const std::vector<int> items = all_items(d2);
    const BootstrapConfig boot = boot_for(spec, spec.seed);

    RealWorkflowReport rep;
    rep.user = spec.user;
    rep.agg = agg_rank_intervals(est, data, items, items, boot);
    rep.indiv = indiv_rank_intervals(est, data, spec.user, items, items, boot);
    rep.truth_agg = true_rank_intervals(scope_scores(theta, -1));
    rep.truth_indiv = true_rank_intervals(scope_scores(theta, spec.user));

    ExperimentResult res;
    res.kind = ExperimentKind::real_data_workflow;
    auto table = [&](const RankIntervals& ri, const std::vector<ItemInterval>& truth, int& covered) {
        Table t{{"item", "r_upper", "r_lower", "length", "true_upper", "true_lower", "covered"}, {}};
        for (const auto& it : ri.items) {
            const ItemInterval& tr = truth[static_cast<std::size_t>(it.item)];
            const bool c = covers(it, tr);
            covered += c;
            t.rows.push_back({fmt(it.item + 1), fmt(it.r_upper), fmt(it.r_lower), fmt(it.length()), fmt(tr.r_upper),
                              fmt(tr.r_lower), c ? "1" : "0"});
        }
        return t;
    };
    res.tables["aggregated_rank_intervals.csv"] = table(rep.agg, rep.truth_agg, rep.agg_covered);
    res.tables["individual_rank_intervals.csv"] = table(rep.indiv, rep.truth_indiv, rep.indiv_covered);

    std::vector<GapTest> tests;
    for (int k = 0; k < data.num_pairs(); ++k) {
        tests.push_back(agg_gap_test(est.M_nr, est.full.M_hat, data, k, boot.alpha));
    }
    res.documents["aggregated_inference.json"] = inference_report_json(data.space(), tests, rep.agg);
    res.documents["individual_inference.json"] =
        inference_report_json(data.space(), {}, rep.indiv);
    res.real = std::move(rep);
    return res;
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
    switch (spec.kind) {
        case ExperimentKind::convergence: return run_convergence(spec);
        case ExperimentKind::normality_agg:
        case ExperimentKind::normality_indiv: return run_normality(spec);
        case ExperimentKind::ranking_ci: return run_ranking_ci(spec);
        case ExperimentKind::split_compare: return run_split_compare(spec);
        case ExperimentKind::real_data_workflow: return run_real_workflow(spec);
    }
    throw std::logic_error("run_experiment: unhandled kind");
}

void write_experiment(const ExperimentSpec& spec, const ExperimentResult& result, double wall_seconds) {
    std::filesystem::create_directories(spec.output_dir);
    json files = json::array();
    for (const auto& [name, table] : result.tables) {
        write_file_atomic(spec.output_dir / name, table.csv());
        files.push_back(name);
    }
    for (const auto& [name, text] : result.documents) {
        write_file_atomic(spec.output_dir / name, text);
        files.push_back(name);
    }
    json manifest = {{"tool", "prefrank"},
                     {"version", kVersion},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)},
                     {"kind", kind_name(result.kind)},
                     {"spec", json::parse(spec_json(spec))},
                     {"seed", spec.seed},
                     {"bootstrap_seed", spec.bootstrap.seed},
                     {"threads", kernels::max_threads()},
                     {"wall_seconds", wall_seconds},
                     {"files", files},
                     {"failures", result.failures}};
    write_file_atomic(spec.output_dir / "manifest.json", manifest.dump(2) + "\n");
}

double estimate_runtime_seconds(const ExperimentSpec& spec) {
    spec.validate();
    // Calibrated on one core: a dense d1 x K SVD costs about 1.5e-9 d1 K min(d1, K) seconds.
    constexpr double svd_unit = 1.5e-9;
    constexpr double iters_per_solve = 8.0;
    double total = 0.0;
    auto one_rep = [&](double d1, double d2, bool split, bool boot, double targets) {
        const double K = d2 * (d2 - 1) / 2;
        const double svd = svd_unit * d1 * K * std::min(d1, K);
        double t = iters_per_solve * svd;
        if (split) t += 2 * iters_per_solve * svd + 2 * svd;
        t += svd;   // rank estimate
        if (boot) t += 2e-9 * spec.bootstrap.B * targets * (d2 - 1) * (d1 + K);
        return t;
    };
    const bool split = spec.kind == ExperimentKind::normality_indiv || spec.kind == ExperimentKind::split_compare ||
                       spec.kind == ExperimentKind::real_data_workflow ||
                       (spec.kind == ExperimentKind::ranking_ci && spec.individual);
    const bool boot = spec.kind == ExperimentKind::ranking_ci || spec.kind == ExperimentKind::real_data_workflow;
    if (spec.kind == ExperimentKind::real_data_workflow) {
        const GridPoint& gp = spec.grid.front();
        return one_rep(gp.users(), gp.d2, true, true, gp.d2);
    }
    for (const GridPoint& gp : spec.grid) {
        total += spec.reps * one_rep(gp.users(), gp.d2, split, boot, static_cast<double>(spec.targets.size()));
    }
    return total;
}

}  // namespace prefrank
