#include "prefrank/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string_view>

namespace prefrank {

namespace {

void check_probability(double p, const std::string& what) {
    if (!(p > 0.0 && p <= 1.0)) {
        throw std::invalid_argument(what + ": probability " + std::to_string(p) + " outside (0,1]");
    }
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            break;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return out;
}

bool parse_int(std::string_view s, long& out) {
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && ptr == end;
}

bool parse_double(std::string_view s, double& out) {
    // std::from_chars for double is available in libstdc++ 11.
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && ptr == end;
}

}  // namespace

// ---------------------------------------------------------------------------

ComparisonDataset::ComparisonDataset(int num_users, PairSpace space, std::vector<Comparison> entries,
                                     std::vector<double> p, OutcomeKind kind, double sampling_fraction)
    : num_users_(num_users),
      space_(space),
      entries_(std::move(entries)),
      p_(std::move(p)),
      kind_(kind),
      sampling_fraction_(sampling_fraction) {
    if (num_users < 1) {
        throw std::invalid_argument("ComparisonDataset: need at least one user");
    }
    if (static_cast<int>(p_.size()) != num_users) {
        throw std::invalid_argument("ComparisonDataset: p has " + std::to_string(p_.size()) +
                                    " entries for " + std::to_string(num_users) + " users");
    }
    if (!(sampling_fraction > 0.0 && sampling_fraction <= 1.0)) {
        throw std::invalid_argument("ComparisonDataset: sampling fraction outside (0,1]");
    }
    for (double pi : p_) check_probability(pi, "ComparisonDataset");
    for (const auto& e : entries_) {
        if (e.user < 0 || e.user >= num_users_ || e.pair < 0 || e.pair >= space_.num_pairs()) {
            throw std::out_of_range("ComparisonDataset: entry (" + std::to_string(e.user) + "," +
                                    std::to_string(e.pair) + ") out of range");
        }
        if (kind_ == OutcomeKind::binary) {
            if (e.y != 0.0 && e.y != 1.0) {
                throw std::invalid_argument("ComparisonDataset: binary outcome expected, got " +
                                            std::to_string(e.y));
            }
        } else if (!(e.y >= 0.0 && e.y <= 1.0)) {
            throw std::invalid_argument("ComparisonDataset: outcome probability outside [0,1]");
        }
    }
    std::sort(entries_.begin(), entries_.end(), [](const Comparison& a, const Comparison& b) {
        return a.user != b.user ? a.user < b.user : a.pair < b.pair;
    });
    for (std::size_t n = 1; n < entries_.size(); ++n) {
        if (entries_[n].user == entries_[n - 1].user && entries_[n].pair == entries_[n - 1].pair) {
            const auto [j, j2] = space_.pair(entries_[n].pair);
            throw std::invalid_argument("ComparisonDataset: duplicate observation for user " +
                                        std::to_string(entries_[n].user + 1) + ", items (" +
                                        std::to_string(j + 1) + "," + std::to_string(j2 + 1) + ")");
        }
    }
}

double ComparisonDataset::mean_inclusion_prob() const {
    double s = 0.0;
    for (double pi : p_) s += pi;
    return sampling_fraction_ * s / static_cast<double>(p_.size());
}

std::vector<int> ComparisonDataset::observations_per_user() const {
    std::vector<int> counts(static_cast<std::size_t>(num_users_), 0);
    for (const auto& e : entries_) ++counts[static_cast<std::size_t>(e.user)];
    return counts;
}

DenseObservations ComparisonDataset::dense() const {
    DenseObservations d{Matrix::Zero(num_users_, num_pairs()), Matrix::Zero(num_users_, num_pairs())};
    for (const auto& e : entries_) {
        d.weight(e.user, e.pair) = 1.0 / inclusion_prob(e.user);
        d.outcome(e.user, e.pair) = e.y;
    }
    return d;
}

// ---------------------------------------------------------------------------

GapMatrix build_gap_matrix(const ScoreMatrix& theta) {
    const int d2 = static_cast<int>(theta.items());
    const PairSpace space(d2);
    GapMatrix m{Matrix(theta.users(), space.num_pairs())};
    int k = 0;
    for (int j = 0; j < d2; ++j) {
        for (int j2 = j + 1; j2 < d2; ++j2, ++k) {
            m.values.col(k) = theta.values.col(j) - theta.values.col(j2);
        }
    }
    return m;
}

void demean_rows(Matrix& m) {
    if (m.cols() == 0) return;
    const Vector means = m.rowwise().mean();
    m.colwise() -= means;
}

// ---------------------------------------------------------------------------

void SyntheticConfig::validate() const {
    if (d2 < 2) throw std::invalid_argument("SyntheticConfig: d2 must be >= 2");
    if (d1 < 0) throw std::invalid_argument("SyntheticConfig: d1 must be >= 0");
    if (!(sup_norm > 0.0)) throw std::invalid_argument("SyntheticConfig: sup_norm must be > 0");
    if (series_terms < 1) throw std::invalid_argument("SyntheticConfig: series_terms must be >= 1");
    if (p_blocks.empty()) throw std::invalid_argument("SyntheticConfig: no probability blocks");
    for (const auto& b : p_blocks) {
        check_probability(b.p, "SyntheticConfig");
        if (!(b.fraction >= 0.0 && b.fraction <= 1.0)) {
            throw std::invalid_argument("SyntheticConfig: block fraction outside [0,1]");
        }
    }
}

std::vector<double> assign_probabilities(const std::vector<ProbabilityBlock>& blocks, int num_users) {
    if (blocks.empty()) throw std::invalid_argument("assign_probabilities: no blocks");
    std::vector<double> p;
    p.reserve(static_cast<std::size_t>(num_users));
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        check_probability(blocks[b].p, "assign_probabilities");
        const int remaining = num_users - static_cast<int>(p.size());
        int count = b + 1 == blocks.size()
                        ? remaining
                        : static_cast<int>(std::lround(blocks[b].fraction * num_users));
        count = std::clamp(count, 0, remaining);
        p.insert(p.end(), static_cast<std::size_t>(count), blocks[b].p);
    }
    return p;
}

Matrix generate_theta_raw(const SyntheticConfig& cfg, Rng& rng) {
    cfg.validate();
    const int d1 = cfg.users();
    const int d2 = cfg.d2;
    const int terms = cfg.series_terms;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    Vector a(d1), b1(d2), b2(d2), zeta(d2);
    for (int i = 0; i < d1; ++i) a(i) = unif(rng);
    for (int j = 0; j < d2; ++j) b1(j) = unif(rng);
    for (int j = 0; j < d2; ++j) b2(j) = unif(rng);
    for (int j = 0; j < d2; ++j) zeta(j) = normal(rng);

    // basis(m, j) = sin((m+1) zeta_j) / (m+1)^2
    Matrix basis(terms, d2);
    for (int j = 0; j < d2; ++j) {
        for (int m = 0; m < terms; ++m) {
            const double mm = m + 1.0;
            basis(m, j) = std::sin(mm * zeta(j)) / (mm * mm);
        }
    }
    Matrix w(d1, terms);
    for (int i = 0; i < d1; ++i) {
        for (int m = 0; m < terms; ++m) w(i, m) = std::abs(normal(rng));
    }
    Matrix theta = w * basis;
    for (int i = 0; i < d1; ++i) {
        for (int j = 0; j < d2; ++j) theta(i, j) += b1(j) + a(i) * b2(j);
    }
    return theta;
}

ScoreMatrix generate_theta(const SyntheticConfig& cfg, Rng& rng) {
    Matrix theta = generate_theta_raw(cfg, rng);
    demean_rows(theta);
    const double peak = theta.cwiseAbs().maxCoeff();
    if (peak > 0.0) theta *= cfg.sup_norm / peak;
    return {std::move(theta), true};
}

ComparisonDataset sample_comparisons(const ScoreMatrix& theta, const std::vector<double>& p, Rng& rng,
                                     SampleOptions options) {
    const int d1 = static_cast<int>(theta.users());
    if (static_cast<int>(p.size()) != d1) {
        throw std::invalid_argument("sample_comparisons: p size does not match users");
    }
    const PairSpace space(static_cast<int>(theta.items()));
    const GapMatrix gaps = build_gap_matrix(theta);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<Comparison> entries;
    for (int i = 0; i < d1; ++i) {
        check_probability(p[static_cast<std::size_t>(i)], "sample_comparisons");
        for (int k = 0; k < space.num_pairs(); ++k) {
            const bool included = unif(rng) < p[static_cast<std::size_t>(i)];
            // Draw the outcome uniform regardless so the stream layout is
            // independent of the inclusion pattern.
            const double u = unif(rng);
            if (!included) continue;
            const double prob = sigmoid(gaps.values(i, k));
            entries.push_back({i, k, options.noiseless ? prob : (u < prob ? 1.0 : 0.0)});
        }
    }
    return ComparisonDataset(d1, space, std::move(entries), p,
                             options.noiseless ? OutcomeKind::expected : OutcomeKind::binary);
}

// ---------------------------------------------------------------------------

ComparisonDataset ingest_comparisons(const std::filesystem::path& path, int num_items, int num_users) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open comparisons file " + path.string());

    struct Row {
        long user, a, b, winner;
        double p;
        bool has_p;
        long line;
    };
    std::vector<Row> rows;
    std::string line;
    long line_no = 0;
    bool header_seen = false;
    std::size_t columns = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view view = trim(line);
        if (view.empty()) continue;
        const auto fields = split_commas(view);
        if (!header_seen) {
            header_seen = true;
            if (fields.size() < 4 || fields[0] != "user" || fields[1] != "item_a" || fields[2] != "item_b" ||
                fields[3] != "winner" || (fields.size() == 5 && fields[4] != "p") || fields.size() > 5) {
                throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                         ": expected header user,item_a,item_b,winner[,p]");
            }
            columns = fields.size();
            continue;
        }
        if (fields.size() != columns) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected " +
                                     std::to_string(columns) + " fields, got " + std::to_string(fields.size()));
        }
        Row r{};
        r.line = line_no;
        if (!parse_int(fields[0], r.user) || !parse_int(fields[1], r.a) || !parse_int(fields[2], r.b) ||
            !parse_int(fields[3], r.winner)) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": malformed row '" +
                                     std::string(view) + "'");
        }
        if (columns == 5) {
            if (!parse_double(fields[4], r.p)) {
                throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                         ": malformed probability '" + std::string(fields[4]) + "'");
            }
            r.has_p = true;
        }
        if (r.user < 1 || r.a < 1 || r.b < 1) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": ids are 1-based");
        }
        if (r.a == r.b) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": self-comparison");
        }
        if (r.winner != r.a && r.winner != r.b) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": winner " +
                                     std::to_string(r.winner) + " is not one of the compared items");
        }
        rows.push_back(r);
    }
    if (rows.empty()) throw std::runtime_error(path.string() + ": no observations");

    long max_item = 0, max_user = 0;
    for (const auto& r : rows) {
        max_item = std::max({max_item, r.a, r.b});
        max_user = std::max(max_user, r.user);
    }
    const int d2 = num_items > 0 ? num_items : static_cast<int>(max_item);
    const int d1 = num_users > 0 ? num_users : static_cast<int>(max_user);
    if (max_item > d2) throw std::runtime_error(path.string() + ": item id exceeds item count");
    if (max_user > d1) throw std::runtime_error(path.string() + ": user id exceeds user count");
    const PairSpace space(d2);

    std::vector<Comparison> entries;
    entries.reserve(rows.size());
    std::vector<double> p_given(static_cast<std::size_t>(d1), -1.0);
    std::map<std::pair<int, int>, long> seen;
    for (const auto& r : rows) {
        const int user = static_cast<int>(r.user - 1);
        const auto si = signed_index(space, static_cast<int>(r.a - 1), static_cast<int>(r.b - 1));
        const auto [it, fresh] = seen.emplace(std::make_pair(user, si.k), r.line);
        if (!fresh) {
            throw std::runtime_error(path.string() + ":" + std::to_string(r.line) +
                                     ": duplicate observation (first seen on line " +
                                     std::to_string(it->second) + ")");
        }
        const long smaller = std::min(r.a, r.b);
        entries.push_back({user, si.k, r.winner == smaller ? 1.0 : 0.0});
        if (r.has_p) {
            double& slot = p_given[static_cast<std::size_t>(user)];
            if (slot >= 0.0 && slot != r.p) {
                throw std::runtime_error(path.string() + ":" + std::to_string(r.line) +
                                         ": inconsistent p for user " + std::to_string(r.user));
            }
            check_probability(r.p, path.string() + ":" + std::to_string(r.line));
            slot = r.p;
        }
    }

    std::vector<int> counts(static_cast<std::size_t>(d1), 0);
    for (const auto& e : entries) ++counts[static_cast<std::size_t>(e.user)];
    const double total_ordered = static_cast<double>(d2) * (d2 - 1);
    std::vector<double> p(static_cast<std::size_t>(d1));
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p_given[i] > 0.0) {
            p[i] = p_given[i];
        } else {
            p[i] = std::clamp(2.0 * counts[i] / total_ordered, 1.0 / total_ordered, 1.0);
        }
    }
    return ComparisonDataset(d1, space, std::move(entries), std::move(p));
}

void write_comparisons(const std::filesystem::path& path, const ComparisonDataset& data) {
    std::ostringstream out;
    out << "user,item_a,item_b,winner,p\n";
    for (const auto& e : data.entries()) {
        const auto [j, j2] = data.space().pair(e.pair);
        const int winner = e.y >= 0.5 ? j : j2;
        out << e.user + 1 << ',' << j + 1 << ',' << j2 + 1 << ',' << winner + 1 << ','
            << format_double(data.p()[static_cast<std::size_t>(e.user)]) << '\n';
    }
    write_file_atomic(path, out.str());
}

// ---------------------------------------------------------------------------

std::vector<double> watch_ratio_cut_points() {
    return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.2, 1.5, 2.0};
}

Matrix basket_scores(const Matrix& raw, const std::vector<double>& cut_points) {
    for (std::size_t c = 1; c < cut_points.size(); ++c) {
        if (!(cut_points[c] > cut_points[c - 1])) {
            throw std::invalid_argument("discretize_scores: cut points must be strictly ascending");
        }
    }
    Matrix scores(raw.rows(), raw.cols());
    for (Eigen::Index i = 0; i < raw.rows(); ++i) {
        for (Eigen::Index j = 0; j < raw.cols(); ++j) {
            const double v = raw(i, j);
            if (!std::isfinite(v)) {
                throw std::invalid_argument("discretize_scores: non-finite value at row " + std::to_string(i + 1) +
                                            ", column " + std::to_string(j + 1));
            }
            const auto it = std::lower_bound(cut_points.begin(), cut_points.end(), v);
            scores(i, j) = static_cast<double>(it - cut_points.begin());
        }
    }
    return scores;
}

ScoreMatrix discretize_scores(const Matrix& raw, const std::vector<double>& cut_points) {
    Matrix scores = basket_scores(raw, cut_points);
    demean_rows(scores);
    return {std::move(scores), true};
}

// ---------------------------------------------------------------------------

Matrix read_matrix_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open matrix file " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view view = trim(line);
        if (view.empty()) continue;
        std::vector<double> row;
        for (auto field : split_commas(view)) {
            double v = 0.0;
            if (!parse_double(field, v)) {
                throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": malformed value '" +
                                         std::string(field) + "'");
            }
            row.push_back(v);
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": ragged row");
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error(path.string() + ": empty matrix");
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    return m;
}

std::string format_double(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return ec == std::errc() ? std::string(buf, ptr) : std::to_string(v);
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
    std::string out;
    out.reserve(static_cast<std::size_t>(m.size()) * 20);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j > 0) out += ',';
            out += format_double(m(i, j));
        }
        out += '\n';
    }
    write_file_atomic(path, out);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << contents;
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace prefrank
