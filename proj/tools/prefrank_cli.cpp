#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "prefrank/debias.hpp"
#include "prefrank/estimator.hpp"
#include "prefrank/harness.hpp"
#include "prefrank/inference.hpp"
#include "prefrank/kernels.hpp"

namespace fs = std::filesystem;
using namespace prefrank;
using nlohmann::json;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    int threads = 0;
    bool dry_run = false;
};

/// Spec from --config (if any) with global overrides applied.
ExperimentSpec base_spec(const Globals& g) {
    ExperimentSpec spec = g.config.empty() ? ExperimentSpec{} : load_spec(g.config);
    if (g.seed) spec.seed = *g.seed;
    if (!g.out.empty()) spec.output_dir = g.out;
    return spec;
}

void write_json(const fs::path& path, const json& doc) { write_file_atomic(path, doc.dump(2) + "\n"); }

std::vector<int> to_zero_based(const std::vector<int>& ids, int limit, const char* what) {
    std::vector<int> out;
    for (int id : ids) {
        if (id < 1 || id > limit) {
            throw std::invalid_argument(std::string(what) + " id " + std::to_string(id) + " outside [1, " +
                                        std::to_string(limit) + "]");
        }
        out.push_back(id - 1);
    }
    return out;
}

DebiasConfig debias_config(const ExperimentSpec& spec, bool split, std::optional<int> rank) {
    DebiasConfig dc;
    dc.solver = spec.solver;
    dc.rank = rank ? rank : spec.rank;
    dc.split = split;
    dc.subspace_half = spec.subspace_half;
    return dc;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Heterogeneous preference learning from pairwise comparisons"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    Globals g;
    app.add_option("--config", g.config, "JSON spec file (experiment, solver and bootstrap settings)")
        ->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Master seed (overrides the config)");
    app.add_option("--out", g.out, "Output directory (overrides the config)");
    app.add_option("--threads", g.threads, "OpenMP threads (0 = runtime default)")->check(CLI::NonNegativeNumber);
    app.add_flag("--dry-run", g.dry_run, "Validate inputs and estimate runtime without computing");

    // simulate
    auto* sim = app.add_subcommand("simulate", "Generate a synthetic score matrix and sampled comparisons");
    int sim_d2 = 20, sim_d1 = 0;
    double sim_p = 0.8;
    bool sim_noiseless = false;
    sim->add_option("--d2", sim_d2, "Number of items")->check(CLI::Range(2, 100000));
    sim->add_option("--d1", sim_d1, "Number of users (0 = d2 (d2 - 1) / 2)")->check(CLI::NonNegativeNumber);
    sim->add_option("--p", sim_p, "Sampling probability for every user")->check(CLI::Range(1e-9, 1.0));
    sim->add_flag("--noiseless", sim_noiseless, "Store sigma(M) instead of Bernoulli outcomes");

    // ingest
    auto* ing = app.add_subcommand("ingest", "Validate a comparisons CSV and write its normalised form");
    std::string ing_input;
    int ing_items = 0, ing_users = 0;
    ing->add_option("input", ing_input, "Comparisons CSV (user,item_a,item_b,winner[,p])")
        ->required()
        ->check(CLI::ExistingFile);
    ing->add_option("--items", ing_items, "Number of items (default: largest id)");
    ing->add_option("--users", ing_users, "Number of users (default: largest id)");

    // shared dataset options
    std::string input;
    int items = 0, users = 0;
    auto add_input = [&](CLI::App* sub) {
        sub->add_option("input", input, "Comparisons CSV")->required()->check(CLI::ExistingFile);
        sub->add_option("--items", items, "Number of items (default: largest id)");
        sub->add_option("--users", users, "Number of users (default: largest id)");
    };
    std::optional<double> lambda;
    auto add_lambda = [&](CLI::App* sub) { sub->add_option("--lambda", lambda, "Regularisation weight override"); };

    auto* est = app.add_subcommand("estimate", "Fit the low-rank model and write M_hat and Theta_hat");
    add_input(est);
    add_lambda(est);

    auto* deb = app.add_subcommand("debias", "Newton-Raphson debiasing, optionally with split and projection");
    add_input(deb);
    add_lambda(deb);
    bool deb_no_split = false;
    std::optional<int> deb_rank;
    deb->add_flag("--no-split", deb_no_split, "Full-sample debiasing only");
    deb->add_option("--rank", deb_rank, "Projection rank (default: 10% rule)")->check(CLI::PositiveNumber);

    auto* inf = app.add_subcommand("infer", "z-test for one gap, aggregated or for one user");
    add_input(inf);
    add_lambda(inf);
    std::vector<int> inf_pair;
    int inf_user = 0;
    double inf_alpha = 0.05, inf_h0 = 0.0;
    inf->add_option("--pair", inf_pair, "Two item ids")->expected(2)->required();
    inf->add_option("--user", inf_user, "User id for the individual gap (0 = aggregated)");
    inf->add_option("--alpha", inf_alpha, "Level")->check(CLI::Range(1e-9, 0.999));
    inf->add_option("--h0", inf_h0, "Null value of Theta_a - Theta_b");

    auto* rci = app.add_subcommand("rank-ci", "Bootstrap rank confidence intervals");
    add_input(rci);
    add_lambda(rci);
    std::vector<int> rci_targets;
    int rci_user = 0;
    std::optional<int> rci_B;
    std::optional<double> rci_alpha;
    rci->add_option("--targets", rci_targets, "Item ids (default: all)");
    rci->add_option("--user", rci_user, "User id (0 = aggregated)");
    rci->add_option("--B", rci_B, "Bootstrap replicates")->check(CLI::Range(100, 1000000));
    rci->add_option("--alpha", rci_alpha, "Level")->check(CLI::Range(1e-9, 0.999));

    auto* exp = app.add_subcommand("experiment", "Run a simulation study described by --config");
    std::string exp_kind;
    exp->add_option("kind", exp_kind,
                    "convergence | normality-agg | normality-indiv | ranking-ci | split-compare | real-data-workflow");

    CLI11_PARSE(app, argc, argv);

    try {
        if (g.threads > 0) kernels::set_num_threads(g.threads);
        ExperimentSpec spec = base_spec(g);
        if (lambda) spec.solver.lambda = *lambda;
        spec.solver.validate();
        const fs::path out = spec.output_dir;

        auto load = [&] {
            ComparisonDataset data = ingest_comparisons(input, items, users);
            std::cerr << "loaded " << data.size() << " comparisons, " << data.num_users() << " users, "
                      << data.num_items() << " items\n";
            return data;
        };

        if (*sim) {
            SyntheticConfig cfg;
            cfg.d2 = sim_d2;
            cfg.d1 = sim_d1;
            cfg.p_blocks = {{1.0, sim_p}};
            cfg.sup_norm = spec.sup_norm;
            cfg.series_terms = spec.series_terms;
            cfg.seed = spec.seed;
            cfg.validate();
            if (g.dry_run) {
                std::cout << "simulate: " << cfg.users() << " users x " << cfg.d2 << " items, valid\n";
                return 0;
            }
            Rng theta_rng = make_rng(spec.seed, kStreamTheta);
            const ScoreMatrix theta = generate_theta(cfg, theta_rng);
            Rng sample_rng = make_rng(spec.seed, kStreamSample);
            SampleOptions opts;
            opts.noiseless = sim_noiseless;
            const ComparisonDataset data =
                sample_comparisons(theta, assign_probabilities(cfg.p_blocks, cfg.users()), sample_rng, opts);
            fs::create_directories(out);
            write_matrix_csv(out / "theta.csv", theta.values);
            write_comparisons(out / "comparisons.csv", data);
            std::cout << "wrote " << data.size() << " comparisons to " << (out / "comparisons.csv").string() << "\n";
            return 0;
        }

        if (*ing) {
            const ComparisonDataset data = ingest_comparisons(ing_input, ing_items, ing_users);
            const auto per_user = data.observations_per_user();
            int empty = 0;
            for (int c : per_user) empty += c == 0;
            std::cout << "comparisons " << data.size() << "\nusers " << data.num_users() << "\nitems "
                      << data.num_items() << "\nusers_without_data " << empty << "\nmean_p "
                      << format_double(data.mean_inclusion_prob()) << "\n";
            if (g.dry_run) return 0;
            fs::create_directories(out);
            write_comparisons(out / "comparisons.csv", data);
            return 0;
        }

        if (*est) {
            const ComparisonDataset data = load();
            if (g.dry_run) {
                std::cout << "lambda " << format_double(resolve_lambda(data, spec.solver)) << "\n";
                return 0;
            }
            const EstimateBundle b = estimate_pipeline(data, spec.solver);
            fs::create_directories(out);
            write_matrix_csv(out / "M_hat.csv", b.M_hat.values);
            write_matrix_csv(out / "theta_hat.csv", b.theta_hat.values);
            write_json(out / "estimate.json", {{"lambda", b.lambda},
                                               {"iterations", b.solver_iters},
                                               {"converged", b.converged},
                                               {"rank", b.solution_rank},
                                               {"users_without_data", b.empty_users.size()},
                                               {"objective_trace", b.objective_trace}});
            std::cout << "lambda " << format_double(b.lambda) << " iterations " << b.solver_iters << " rank "
                      << b.solution_rank << (b.converged ? "" : " (not converged)") << "\n";
            return 0;
        }

        if (*deb) {
            const ComparisonDataset data = load();
            if (g.dry_run) return 0;
            Rng split_rng = make_rng(spec.seed, kStreamSplit);
            const DebiasedEstimates d = debias_pipeline(data, debias_config(spec, !deb_no_split, deb_rank), split_rng);
            fs::create_directories(out);
            write_matrix_csv(out / "M_hat.csv", d.full.M_hat.values);
            write_matrix_csv(out / "M_nr.csv", d.M_nr.values);
            json meta = {{"lambda", d.full.lambda}, {"rank", d.q}, {"split", d.split.has_value()}};
            if (d.split) write_matrix_csv(out / "M_proj.csv", d.split->M_proj);
            write_json(out / "debias.json", meta);
            std::cout << "rank " << d.q << "\n";
            return 0;
        }

        if (*inf) {
            const ComparisonDataset data = load();
            const auto pair = to_zero_based(inf_pair, data.num_items(), "item");
            if (pair[0] == pair[1]) throw std::invalid_argument("--pair needs two distinct items");
            if (inf_user < 0 || inf_user > data.num_users()) throw std::invalid_argument("--user outside range");
            if (g.dry_run) return 0;
            const SignedPairIndex sp = signed_index(data.space(), pair[0], pair[1]);
            Rng split_rng = make_rng(spec.seed, kStreamSplit);
            const DebiasedEstimates d = debias_pipeline(data, debias_config(spec, inf_user > 0, std::nullopt), split_rng);
            GapTest t;
            // Tests are stated on the M scale (smaller id first).
            const double h0 = sp.sign * inf_h0;
            if (inf_user == 0) {
                t = agg_gap_test(d.M_nr, d.full.M_hat, data, sp.k, inf_alpha, h0);
            } else {
                const int i = inf_user - 1;
                const Projection& sub = d.subspace_projection();
                const IndivVariance w = indiv_variance(sub.U, sub.V, d.full.M_hat, data, i, sp.k);
                t = indiv_gap_test(d.split->M_proj, w, i, sp.k, inf_alpha, h0);
            }
            const std::string report = inference_report_json(data.space(), {t});
            fs::create_directories(out);
            write_file_atomic(out / "inference.json", report);
            std::cout << report;
            return 0;
        }

        if (*rci) {
            const ComparisonDataset data = load();
            BootstrapConfig boot = spec.bootstrap;
            boot.B = rci_B.value_or(g.config.empty() ? 2000 : boot.B);
            if (rci_alpha) boot.alpha = *rci_alpha;
            boot.seed = derive_seed(boot.seed, kStreamBoot, spec.seed);
            boot.validate();
            std::vector<int> kset(static_cast<std::size_t>(data.num_items()));
            for (int j = 0; j < data.num_items(); ++j) kset[static_cast<std::size_t>(j)] = j;
            const std::vector<int> J = rci_targets.empty() ? kset : to_zero_based(rci_targets, data.num_items(), "item");
            if (rci_user < 0 || rci_user > data.num_users()) throw std::invalid_argument("--user outside range");
            if (g.dry_run) return 0;
            Rng split_rng = make_rng(spec.seed, kStreamSplit);
            const DebiasedEstimates d = debias_pipeline(data, debias_config(spec, rci_user > 0, std::nullopt), split_rng);
            const RankIntervals ri = rci_user == 0 ? agg_rank_intervals(d, data, J, kset, boot)
                                                   : indiv_rank_intervals(d, data, rci_user - 1, J, kset, boot);
            fs::create_directories(out);
            write_file_atomic(out / "rank_intervals.csv", rank_intervals_csv(ri));
            write_file_atomic(out / "rank_intervals.json", inference_report_json(data.space(), {}, ri));
            std::cout << rank_intervals_csv(ri);
            return 0;
        }

        if (*exp) {
            if (g.config.empty() && exp_kind.empty()) throw std::invalid_argument("experiment needs a kind or --config");
            if (!exp_kind.empty()) spec.kind = parse_kind(exp_kind);
            spec.validate();
            const double eta = estimate_runtime_seconds(spec);
            std::cerr << kind_name(spec.kind) << ": " << spec.grid.size() << " grid points x " << spec.reps
                      << " reps, estimated " << format_double(eta / kernels::max_threads()) << " s on "
                      << kernels::max_threads() << " thread(s)\n";
            if (g.dry_run) {
                std::cout << spec_json(spec);
                return 0;
            }
            const auto t0 = std::chrono::steady_clock::now();
            const ExperimentResult res = run_experiment(spec);
            const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            write_experiment(spec, res, wall);
            for (const auto& f : res.failures) std::cerr << "failed: " << f << "\n";
            for (const auto& [name, table] : res.tables) {
                if (name.find("summary") != std::string::npos) std::cout << name << "\n" << table.csv();
            }
            std::cerr << "wrote " << spec.output_dir.string() << " in " << format_double(wall) << " s\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
