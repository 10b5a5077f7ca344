#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "prefrank/pairspace.hpp"
#include "prefrank/rng.hpp"
#include "prefrank/types.hpp"

namespace prefrank {

struct Comparison {
    int user = 0;
    int pair = 0;
    /// 1 when the lex-smaller item of the pair was preferred. Datasets built
    /// with OutcomeKind::expected carry a probability instead.
    double y = 0.0;
};

enum class OutcomeKind {
    binary,
    /// y holds P(y = 1); used for noiseless solver checks.
    expected,
};

/// Dense view of a dataset: weight = delta / p (zero off the sample),
/// outcome = y (zero off the sample).
struct DenseObservations {
    Matrix weight;
    Matrix outcome;
};

/// Observed comparisons S with per-user sampling probabilities.
///
/// Entries are kept sorted by (user, pair); each (user, pair) appears at most
/// once. A half-sample produced by split_sample keeps the design p and records
/// sampling_fraction = 0.5, so inclusion_prob(i) = p_i / 2.
class ComparisonDataset {
public:
    ComparisonDataset() = default;
    ComparisonDataset(int num_users, PairSpace space, std::vector<Comparison> entries,
                      std::vector<double> p, OutcomeKind kind = OutcomeKind::binary,
                      double sampling_fraction = 1.0);

    int num_users() const { return num_users_; }
    const PairSpace& space() const { return space_; }
    int num_items() const { return space_.num_items(); }
    int num_pairs() const { return space_.num_pairs(); }
    const std::vector<Comparison>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    const std::vector<double>& p() const { return p_; }
    double sampling_fraction() const { return sampling_fraction_; }
    OutcomeKind outcome_kind() const { return kind_; }
    double inclusion_prob(int user) const { return sampling_fraction_ * p_[static_cast<std::size_t>(user)]; }
    /// Mean inclusion probability over users.
    double mean_inclusion_prob() const;

    std::vector<int> observations_per_user() const;
    DenseObservations dense() const;

private:
    int num_users_ = 0;
    PairSpace space_;
    std::vector<Comparison> entries_;
    std::vector<double> p_;
    OutcomeKind kind_ = OutcomeKind::binary;
    double sampling_fraction_ = 1.0;
};

// ---------------------------------------------------------------------------
// Gap matrices

/// M[i, L(j,j2)] = Theta[i,j] - Theta[i,j2] for all j < j2.
GapMatrix build_gap_matrix(const ScoreMatrix& theta);

/// Subtract each row's mean.
void demean_rows(Matrix& m);

// ---------------------------------------------------------------------------
// Synthetic data

/// Users are assigned probabilities block by block in order; a block covers
/// round(fraction * d1) users and the last block takes whatever remains.
struct ProbabilityBlock {
    double fraction = 1.0;
    double p = 1.0;
};

struct SyntheticConfig {
    int d2 = 20;
    /// 0 means d2 * (d2 - 1) / 2.
    int d1 = 0;
    std::vector<ProbabilityBlock> p_blocks{{1.0, 0.8}};
    double sup_norm = 1.5;
    int series_terms = 100;
    std::uint64_t seed = 1;

    int users() const { return d1 > 0 ? d1 : d2 * (d2 - 1) / 2; }
    void validate() const;
};

std::vector<double> assign_probabilities(const std::vector<ProbabilityBlock>& blocks, int num_users);

/// Theta[i,j] = alpha_i' beta_j + h_i(zeta_j), h_i(z) = sum_m |W_im| / m^2 sin(m z),
/// truncated at cfg.series_terms; rows demeaned, then one global rescale to
/// max |Theta| = cfg.sup_norm.
ScoreMatrix generate_theta(const SyntheticConfig& cfg, Rng& rng);

/// Same draws as generate_theta but without demeaning or rescaling.
Matrix generate_theta_raw(const SyntheticConfig& cfg, Rng& rng);

struct SampleOptions {
    /// Store sigma(M) instead of a Bernoulli draw.
    bool noiseless = false;
};

/// Each (i,k) is included independently with probability p_i; included
/// entries get y ~ Bernoulli(sigma(M[i,k])).
ComparisonDataset sample_comparisons(const ScoreMatrix& theta, const std::vector<double>& p, Rng& rng,
                                     SampleOptions options = {});

// ---------------------------------------------------------------------------
// Files

/// Parse a comparisons CSV with header `user,item_a,item_b,winner[,p]`
/// (1-based ids). When num_items <= 0 it is taken from the largest item id.
/// Users missing a p column get p_i = 2|S_i| / (d2(d2-1)), clamped to
/// [1/(d2(d2-1)), 1].
ComparisonDataset ingest_comparisons(const std::filesystem::path& path, int num_items = 0, int num_users = 0);

/// Write a dataset in the same format, always including the p column.
void write_comparisons(const std::filesystem::path& path, const ComparisonDataset& data);

/// Basket score = number of cut points strictly below the value (so a value
/// equal to a cut point lands in the lower basket), then rows demeaned.
ScoreMatrix discretize_scores(const Matrix& raw, const std::vector<double>& cut_points);

/// Same mapping without demeaning.
Matrix basket_scores(const Matrix& raw, const std::vector<double>& cut_points);

/// Watch-ratio baskets [0,0.1],(0.1,0.2],...,(0.9,1],(1,1.2],(1.2,1.5],(1.5,2],(2,inf).
std::vector<double> watch_ratio_cut_points();

/// Headerless numeric CSV, one matrix row per line.
Matrix read_matrix_csv(const std::filesystem::path& path);
void write_matrix_csv(const std::filesystem::path& path, const Matrix& m);

/// Write via a temporary sibling file and rename it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

std::string format_double(double v);

}  // namespace prefrank
