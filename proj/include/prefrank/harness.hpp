#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "prefrank/dataio.hpp"
#include "prefrank/estimator.hpp"
#include "prefrank/inference.hpp"

namespace prefrank {

enum class ExperimentKind { convergence, normality_agg, normality_indiv, ranking_ci, split_compare, real_data_workflow };

std::string kind_name(ExperimentKind kind);
ExperimentKind parse_kind(const std::string& name);

struct GridPoint {
    int d2 = 20;
    int d1 = 0;   ///< 0 means d2 (d2 - 1) / 2
    std::vector<ProbabilityBlock> p_blocks{{1.0, 0.8}};

    int users() const { return d1 > 0 ? d1 : d2 * (d2 - 1) / 2; }
    std::string pattern() const;
};

/// Experiment description; read from and echoed to JSON (see README for the
/// key list). Item and user ids here are 0-based; the JSON form is 1-based.
struct ExperimentSpec {
    ExperimentKind kind = ExperimentKind::convergence;
    std::vector<GridPoint> grid{GridPoint{}};
    int reps = 1;
    BootstrapConfig bootstrap{500, 0.05, 1};
    SolverConfig solver;
    std::filesystem::path output_dir = "out";
    std::uint64_t seed = 1;

    double sup_norm = 1.5;
    int series_terms = 100;
    bool noiseless = false;

    int item_a = 0;                 ///< gap (item_a, item_b) for the normality runs
    int item_b = 1;
    int user = 0;                   ///< user for individual quantities
    std::vector<int> targets{0};    ///< J for ranking-ci; K_set is all items
    bool individual = true;         ///< ranking-ci: also run the individual scope
    std::optional<int> rank;        ///< projection rank override
    int subspace_half = 1;

    std::filesystem::path scores_csv;      ///< real-data workflow input (d1 x d2 raw scores)
    std::vector<double> cut_points = watch_ratio_cut_points();
    double sample_p = 0.5;

    void validate() const;
};

ExperimentSpec parse_spec(const std::string& json_text);
ExperimentSpec load_spec(const std::filesystem::path& path);
std::string spec_json(const ExperimentSpec& spec);

/// Seed of replicate `rep` at grid point `g`.
std::uint64_t rep_seed(std::uint64_t seed, std::size_t g, int rep);

/// CSV table with a header row.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::string csv() const;
};

struct ConvergenceSummary {
    GridPoint point;
    int ok_reps = 0;
    double frob = 0.0;
    double entrywise = 0.0;
    double aggregate = 0.0;
};

struct NormalitySummary {
    GridPoint point;
    std::vector<double> z;
    bool has_summary = false;
    double mean = 0.0;
    double variance = 0.0;
    double ks = 0.0;
};

struct RankingSummary {
    GridPoint point;
    int ok_reps = 0;
    double agg_length = 0.0;
    double agg_ratio = 0.0;
    double agg_coverage = 0.0;
    double agg_simultaneous = 0.0;
    int indiv_reps = 0;
    double indiv_length = 0.0;
    double indiv_ratio = 0.0;
    double indiv_coverage = 0.0;
    double indiv_simultaneous = 0.0;
};

struct SplitSummary {
    GridPoint point;
    int ok_reps = 0;
    double frob_split = 0.0;
    double op_split = 0.0;
    double frob_full = 0.0;
    double op_full = 0.0;
};

struct RealWorkflowReport {
    int user = 0;
    RankIntervals agg;
    RankIntervals indiv;
    std::vector<ItemInterval> truth_agg;
    std::vector<ItemInterval> truth_indiv;
    int agg_covered = 0;
    int indiv_covered = 0;
};

struct ExperimentResult {
    ExperimentKind kind = ExperimentKind::convergence;
    std::map<std::string, Table> tables;   ///< file name -> table
    std::map<std::string, std::string> documents;   ///< file name -> text (JSON reports)
    std::vector<std::string> failures;     ///< per-replicate errors (not fatal)
    std::vector<ConvergenceSummary> convergence;
    std::vector<NormalitySummary> normality;
    std::vector<RankingSummary> ranking;
    std::vector<SplitSummary> split;
    std::optional<RealWorkflowReport> real;
};

ExperimentResult run_convergence(const ExperimentSpec& spec);
ExperimentResult run_normality(const ExperimentSpec& spec);
ExperimentResult run_ranking_ci(const ExperimentSpec& spec);
ExperimentResult run_split_compare(const ExperimentSpec& spec);
ExperimentResult run_real_workflow(const ExperimentSpec& spec);
ExperimentResult run_experiment(const ExperimentSpec& spec);

/// Write every table plus manifest.json into spec.output_dir (atomically).
void write_experiment(const ExperimentSpec& spec, const ExperimentResult& result, double wall_seconds);

/// Rough single-thread runtime estimate in seconds, no computation.
double estimate_runtime_seconds(const ExperimentSpec& spec);

/// Synthetic watch-ratio matrix for the real-data workflow: log-normal ratios
/// driven by a rank-3 user-item factor model, so baskets show both shared
/// and individual structure.
Matrix generate_watch_ratios(int d1, int d2, std::uint64_t seed);

inline constexpr const char* kVersion = "0.1.0";

}  // namespace prefrank
