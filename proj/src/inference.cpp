#include "prefrank/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "prefrank/kernels.hpp"
#include "prefrank/pairspace.hpp"

namespace prefrank {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double u) {
    if (!(u > 0.0 && u < 1.0)) throw std::domain_error("normal_quantile: argument outside (0, 1)");
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double low = 0.02425;
    double x;
    if (u < low) {
        const double q = std::sqrt(-2.0 * std::log(u));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (u <= 1.0 - low) {
        const double q = u - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-u));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // Halley refinement; the upper tail is handled through the complement.
    const double e = u < 0.5 ? 0.5 * std::erfc(-x / std::numbers::sqrt2) - u
                             : (1.0 - u) - 0.5 * std::erfc(x / std::numbers::sqrt2);
    const double g = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    return x - g / (1.0 + 0.5 * x * g);
}

double ks_distance_normal(std::vector<double> xs) {
    if (xs.empty()) throw std::invalid_argument("ks_distance_normal: empty sample");
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double dist = 0.0;
    for (std::size_t m = 0; m < xs.size(); ++m) {
        const double f = normal_cdf(xs[m]);
        dist = std::max({dist, static_cast<double>(m + 1) / n - f, f - static_cast<double>(m) / n});
    }
    return dist;
}

void BootstrapConfig::validate() const {
    if (B < 100) throw std::invalid_argument("BootstrapConfig: B must be >= 100");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("BootstrapConfig: alpha outside (0, 1)");
}

std::vector<int> active_users(const ComparisonDataset& data) {
    const auto counts = data.observations_per_user();
    std::vector<int> out;
    for (int i = 0; i < data.num_users(); ++i) {
        if (counts[static_cast<std::size_t>(i)] > 0) out.push_back(i);
    }
    return out;
}

namespace {

void check_shape(const GapMatrix& m, const ComparisonDataset& data, const char* who) {
    if (m.users() != data.num_users() || m.pairs() != data.num_pairs()) {
        throw std::invalid_argument(std::string(who) + ": matrix shape does not match the dataset");
    }
}

void check_pair(const ComparisonDataset& data, int k, const char* who) {
    if (k < 0 || k >= data.num_pairs()) {
        throw std::out_of_range(std::string(who) + ": pair index " + std::to_string(k) + " out of range");
    }
}

Vector inclusion_vector(const ComparisonDataset& data) {
    Vector p(data.num_users());
    for (int i = 0; i < data.num_users(); ++i) p(i) = data.inclusion_prob(i);
    return p;
}

double active_count(const ComparisonDataset& data) {
    const double n = static_cast<double>(active_users(data).size());
    if (n == 0.0) throw std::invalid_argument("inference: dataset has no observations");
    return n;
}

}  // namespace

Matrix inverse_fisher_matrix(const GapMatrix& M_hat, const ComparisonDataset& data) {
    check_shape(M_hat, data, "inverse_fisher_matrix");
    Matrix f;
    kernels::inverse_fisher(M_hat.values, inclusion_vector(data), f);
    const auto counts = data.observations_per_user();
    for (int i = 0; i < data.num_users(); ++i) {
        if (counts[static_cast<std::size_t>(i)] == 0) f.row(i).setZero();
    }
    return f;
}

double agg_variance(const GapMatrix& M_hat, const ComparisonDataset& data, int k) {
    check_shape(M_hat, data, "agg_variance");
    check_pair(data, k, "agg_variance");
    const double n = active_count(data);
    const auto counts = data.observations_per_user();
    double s = 0.0;
    for (int i = 0; i < data.num_users(); ++i) {
        if (counts[static_cast<std::size_t>(i)] == 0) continue;
        s += 1.0 / (data.inclusion_prob(i) * sigmoid_deriv(M_hat.values(i, k)));
    }
    return s / (n * n);
}

Vector agg_variances(const GapMatrix& M_hat, const ComparisonDataset& data) {
    const double n = active_count(data);
    const Matrix f = inverse_fisher_matrix(M_hat, data);
    return f.colwise().sum().transpose() / (n * n);
}

Vector agg_points(const GapMatrix& M_nr, const ComparisonDataset& data) {
    check_shape(M_nr, data, "agg_points");
    const auto users = active_users(data);
    if (users.empty()) throw std::invalid_argument("agg_points: dataset has no observations");
    Vector s = Vector::Zero(M_nr.pairs());
    for (int i : users) s += M_nr.values.row(i).transpose();
    return s / static_cast<double>(users.size());
}

GapTest z_test(double point, double variance, double alpha, double h0) {
    if (!(variance > 0.0)) throw std::invalid_argument("z_test: variance must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("z_test: alpha outside (0, 1)");
    GapTest t;
    t.point = point;
    t.variance = variance;
    t.h0 = h0;
    t.alpha = alpha;
    const double sd = std::sqrt(variance);
    t.z = (point - h0) / sd;
    t.p_value = std::erfc(std::abs(t.z) / std::numbers::sqrt2);
    const double half = normal_quantile(1.0 - 0.5 * alpha) * sd;
    t.lo = point - half;
    t.hi = point + half;
    return t;
}

GapTest agg_gap_test(const GapMatrix& M_nr, const GapMatrix& M_hat, const ComparisonDataset& data, int k,
                     double alpha, double h0) {
    check_pair(data, k, "agg_gap_test");
    const double point = agg_points(M_nr, data)(k);
    GapTest t = z_test(point, agg_variance(M_hat, data, k), alpha, h0);
    t.k = k;
    return t;
}

// ---------------------------------------------------------------------------

IndivVariance indiv_variance(const Matrix& U, const Matrix& V, const GapMatrix& M_hat, const ComparisonDataset& data,
                             int i, int k) {
    check_shape(M_hat, data, "indiv_variance");
    check_pair(data, k, "indiv_variance");
    if (i < 0 || i >= data.num_users()) throw std::out_of_range("indiv_variance: user out of range");
    if (U.rows() != data.num_users() || V.rows() != data.num_pairs() || U.cols() != V.cols()) {
        throw std::invalid_argument("indiv_variance: subspace shapes do not match");
    }
    const Matrix f = inverse_fisher_matrix(M_hat, data);
    const Vector vk = V * V.row(k).transpose();
    const Vector ui = U * U.row(i).transpose();
    IndivVariance w;
    w.w1 = f.row(i).dot(vk.cwiseAbs2());
    w.w2 = f.col(k).dot(ui.cwiseAbs2());
    w.w = w.w1 + w.w2;
    return w;
}

Vector indiv_variances(const Matrix& U, const Matrix& V, const GapMatrix& M_hat, const ComparisonDataset& data,
                       int i) {
    check_shape(M_hat, data, "indiv_variances");
    if (i < 0 || i >= data.num_users()) throw std::out_of_range("indiv_variances: user out of range");
    const Matrix f = inverse_fisher_matrix(M_hat, data);
    const Matrix g = (V * V.transpose()).cwiseAbs2();            // K x K
    const Vector ui2 = (U * U.row(i).transpose()).cwiseAbs2();   // d1
    const Vector w1 = g * f.row(i).transpose();
    const Vector w2 = f.transpose() * ui2;
    return w1 + w2;
}

GapTest indiv_gap_test(const Matrix& M_proj, const IndivVariance& w, int i, int k, double alpha, double h0) {
    if (i < 0 || i >= M_proj.rows() || k < 0 || k >= M_proj.cols()) {
        throw std::out_of_range("indiv_gap_test: (user, pair) out of range");
    }
    GapTest t = z_test(M_proj(i, k), w.w, alpha, h0);
    t.user = i;
    t.k = k;
    return t;
}

// ---------------------------------------------------------------------------

std::vector<Comparand> comparands(const PairSpace& space, const std::vector<int>& J, const std::vector<int>& K_set) {
    for (int j : J) {
        if (std::find(K_set.begin(), K_set.end(), j) == K_set.end()) {
            throw std::invalid_argument("comparands: target item " + std::to_string(j) + " is not in K_set");
        }
    }
    std::vector<Comparand> out;
    for (int j : J) {
        for (int j2 : K_set) {
            if (j2 == j) continue;
            const SignedPairIndex s = signed_index(space, j, j2);
            out.push_back({j, j2, s.k, s.sign});
        }
    }
    return out;
}

double upper_quantile(std::vector<double> values, double alpha) {
    if (values.empty()) throw std::invalid_argument("upper_quantile: no values");
    const double n = static_cast<double>(values.size());
    auto rank = static_cast<std::size_t>(std::ceil((1.0 - alpha) * n - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, values.size());
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(rank - 1), values.end());
    return values[rank - 1];
}

namespace {

/// Rows of xi / (n sqrt(v_k)) (one per pair index), users along columns.
Matrix agg_score_rows(const GapMatrix& M_hat, const ComparisonDataset& data, const std::vector<int>& ks,
                      const std::vector<double>& row_sign) {
    const double n = active_count(data);
    const GapMatrix inc_base = nr_debias(M_hat, data);
    const Matrix xi = inc_base.values - M_hat.values;
    const Vector v = agg_variances(M_hat, data);
    Matrix a(static_cast<Eigen::Index>(ks.size()), data.num_users());
    for (std::size_t t = 0; t < ks.size(); ++t) {
        const int k = ks[t];
        a.row(static_cast<Eigen::Index>(t)) = (row_sign[t] / (n * std::sqrt(v(k)))) * xi.col(k).transpose();
    }
    return a;
}

std::vector<int> distinct_pairs(const std::vector<Comparand>& cs) {
    std::vector<int> ks;
    std::vector<char> seen;
    for (const auto& c : cs) {
        if (static_cast<std::size_t>(c.k) >= seen.size()) seen.resize(static_cast<std::size_t>(c.k) + 1, 0);
        if (!seen[static_cast<std::size_t>(c.k)]) {
            seen[static_cast<std::size_t>(c.k)] = 1;
            ks.push_back(c.k);
        }
    }
    return ks;
}

}  // namespace

double bootstrap_agg_quantile(const GapMatrix& M_hat, const ComparisonDataset& data, const std::vector<int>& J,
                              const std::vector<int>& K_set, const BootstrapConfig& cfg) {
    cfg.validate();
    const std::vector<int> ks = distinct_pairs(comparands(data.space(), J, K_set));
    if (ks.empty()) return 0.0;
    const Matrix a = agg_score_rows(M_hat, data, ks, std::vector<double>(ks.size(), 1.0));
    return upper_quantile(kernels::bootstrap_maxima(a, cfg.B, cfg.seed, kernels::MaxKind::absolute), cfg.alpha);
}

double bootstrap_agg_quantile_one_sided(const GapMatrix& M_hat, const ComparisonDataset& data,
                                        const std::vector<int>& J, const std::vector<int>& K_set,
                                        const BootstrapConfig& cfg) {
    cfg.validate();
    const auto cs = comparands(data.space(), J, K_set);
    if (cs.empty()) return 0.0;
    std::vector<int> ks;
    std::vector<double> sign;
    for (const auto& c : cs) {
        ks.push_back(c.k);
        sign.push_back(-static_cast<double>(c.sign));
    }
    const Matrix a = agg_score_rows(M_hat, data, ks, sign);
    return upper_quantile(kernels::bootstrap_maxima(a, cfg.B, cfg.seed, kernels::MaxKind::signed_), cfg.alpha);
}

double bootstrap_indiv_quantile(const DebiasedEstimates& est, const ComparisonDataset& data, int i,
                                const std::vector<int>& J, const std::vector<int>& K_set, const BootstrapConfig& cfg) {
    cfg.validate();
    if (!est.split) {
        throw std::logic_error("bootstrap_indiv_quantile: run the cross-fitted (split) pipeline first");
    }
    if (i < 0 || i >= data.num_users()) throw std::out_of_range("bootstrap_indiv_quantile: user out of range");
    const SplitFit& sf = *est.split;
    const std::vector<int> ks = distinct_pairs(comparands(data.space(), J, K_set));
    if (ks.empty()) return 0.0;

    // r1 = delta^1 / p (y^1 - sigma(M^2)) / sigma'(M^2): half of the cross-fit
    // increment, whose weight is 2 / p.
    const double scale1 = sf.s1.sampling_fraction() / data.sampling_fraction();
    const double scale2 = sf.s2.sampling_fraction() / data.sampling_fraction();
    const Matrix r1 = scale1 * (sf.M_nr_2.values - sf.fit2.M_hat.values);
    const Matrix r2 = scale2 * (sf.M_nr_1.values - sf.fit1.M_hat.values);
    const Matrix& U1 = sf.proj1.U;
    const Matrix& V1 = sf.proj1.V;
    const Matrix& U2 = sf.proj2.U;
    const Matrix& V2 = sf.proj2.V;

    const Projection& sub = est.subspace_projection();
    const Vector w = indiv_variances(sub.U, sub.V, est.full.M_hat, data, i);
    const Vector a1 = U1 * U1.row(i).transpose();   // U^1_i' . U^1_i
    const Vector a2 = U2 * U2.row(i).transpose();

    const Eigen::Index K = data.num_pairs();
    const Eigen::Index d1 = data.num_users();
    Matrix coeffs(static_cast<Eigen::Index>(ks.size()), K + d1);
    for (std::size_t t = 0; t < ks.size(); ++t) {
        const int k = ks[t];
        const auto row = static_cast<Eigen::Index>(t);
        if (!(w(k) > 0.0)) throw std::runtime_error("bootstrap_indiv_quantile: non-positive variance");
        const double norm = 1.0 / std::sqrt(w(k));
        // Pair multipliers: entries of S^1 use half 2's V, entries of S^2 use half 1's V.
        const Vector g2 = V2 * V2.row(k).transpose();
        const Vector g1 = V1 * V1.row(k).transpose();
        coeffs.row(row).head(K) = norm * (r1.row(i).transpose().cwiseProduct(g2) + r2.row(i).transpose().cwiseProduct(g1)).transpose();
        // User multipliers.
        coeffs.row(row).tail(d1) = norm * (a2.cwiseProduct(r1.col(k)) + a1.cwiseProduct(r2.col(k))).transpose();
    }
    return upper_quantile(kernels::bootstrap_maxima(coeffs, cfg.B, cfg.seed, kernels::MaxKind::absolute), cfg.alpha);
}

// ---------------------------------------------------------------------------

RankIntervals rank_intervals(const PairSpace& space, const Vector& points, const Vector& variances, double quantile,
                             const std::vector<int>& J, const std::vector<int>& K_set) {
    if (!(quantile >= 0.0)) throw std::invalid_argument("rank_intervals: quantile must be >= 0");
    if (points.size() != space.num_pairs() || variances.size() != space.num_pairs()) {
        throw std::invalid_argument("rank_intervals: one point and variance per pair required");
    }
    RankIntervals ri;
    ri.J = J;
    ri.K_set = K_set;
    ri.quantile = quantile;
    const int kset = static_cast<int>(K_set.size());
    for (int j : J) {
        ItemInterval item{j, 1, kset};
        for (const Comparand& c : comparands(space, {j}, K_set)) {
            PairInterval pi;
            pi.c = c;
            pi.gap = c.sign * points(c.k);
            pi.sd = std::sqrt(variances(c.k));
            pi.lo = pi.gap - quantile * pi.sd;
            pi.hi = pi.gap + quantile * pi.sd;
            if (pi.hi < 0.0) ++item.r_upper;
            if (pi.lo > 0.0) --item.r_lower;
            ri.pairs.push_back(pi);
        }
        ri.items.push_back(item);
    }
    return ri;
}

RankIntervals agg_rank_intervals(const DebiasedEstimates& est, const ComparisonDataset& data,
                                 const std::vector<int>& J, const std::vector<int>& K_set, const BootstrapConfig& cfg) {
    const double g = bootstrap_agg_quantile(est.full.M_hat, data, J, K_set, cfg);
    RankIntervals ri = rank_intervals(data.space(), agg_points(est.M_nr, data), agg_variances(est.full.M_hat, data), g,
                                      J, K_set);
    ri.scope = "aggregated";
    ri.alpha = cfg.alpha;
    ri.B = cfg.B;
    ri.seed = cfg.seed;
    return ri;
}

RankIntervals indiv_rank_intervals(const DebiasedEstimates& est, const ComparisonDataset& data, int i,
                                   const std::vector<int>& J, const std::vector<int>& K_set,
                                   const BootstrapConfig& cfg) {
    const double g = bootstrap_indiv_quantile(est, data, i, J, K_set, cfg);
    const Projection& sub = est.subspace_projection();
    const Vector w = indiv_variances(sub.U, sub.V, est.full.M_hat, data, i);
    RankIntervals ri =
        rank_intervals(data.space(), est.split->M_proj.row(i).transpose(), w, g, J, K_set);
    ri.scope = "individual";
    ri.user = i;
    ri.alpha = cfg.alpha;
    ri.B = cfg.B;
    ri.seed = cfg.seed;
    return ri;
}

std::vector<ItemInterval> true_rank_intervals(const Vector& scores) {
    const auto n = static_cast<int>(scores.size());
    std::vector<ItemInterval> out;
    for (int j = 0; j < n; ++j) {
        int better = 0, tied = 0;
        for (int j2 = 0; j2 < n; ++j2) {
            if (scores(j2) > scores(j)) ++better;
            else if (scores(j2) == scores(j)) ++tied;
        }
        out.push_back({j, better + 1, better + tied});
    }
    return out;
}

bool covers(const ItemInterval& ci, const ItemInterval& truth) {
    return ci.r_upper <= truth.r_lower && truth.r_upper <= ci.r_lower;
}

// ---------------------------------------------------------------------------

std::vector<int> top_k_select(const Vector& scores, int K) {
    const auto n = static_cast<int>(scores.size());
    if (K < 1 || K > n) throw std::invalid_argument("top_k_select: K outside [1, d2]");
    std::vector<int> ids(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) ids[static_cast<std::size_t>(j)] = j;
    std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) { return scores(a) > scores(b); });
    ids.resize(static_cast<std::size_t>(K));
    std::sort(ids.begin(), ids.end());
    return ids;
}

Vector scope_scores(const ScoreMatrix& theta, int user) {
    if (user >= 0) {
        if (user >= theta.users()) throw std::out_of_range("scope_scores: user out of range");
        return theta.values.row(user).transpose();
    }
    return theta.values.colwise().mean().transpose();
}

OneSidedRanks one_sided_upper_ranks(const PairSpace& space, const Vector& points, const Vector& variances,
                                    double quantile, const std::vector<int>& J, const std::vector<int>& K_set) {
    OneSidedRanks out;
    out.quantile = quantile;
    for (int j : J) {
        int r = 1;
        for (const Comparand& c : comparands(space, {j}, K_set)) {
            const double lo = -c.sign * points(c.k) - quantile * std::sqrt(variances(c.k));
            if (lo > 0.0) ++r;
        }
        out.items.push_back(j);
        out.r_tilde_upper.push_back(r);
    }
    return out;
}

namespace {

std::vector<int> all_items(int d2) {
    std::vector<int> v(static_cast<std::size_t>(d2));
    for (int j = 0; j < d2; ++j) v[static_cast<std::size_t>(j)] = j;
    return v;
}

}  // namespace

PlacementTest top_k_placement_test(const DebiasedEstimates& est, const ComparisonDataset& data, int item, int K,
                                   const BootstrapConfig& cfg) {
    if (!data.space().contains(item)) throw std::out_of_range("top_k_placement_test: item out of range");
    if (K < 1 || K > data.num_items()) throw std::invalid_argument("top_k_placement_test: K outside [1, d2]");
    const std::vector<int> kset = all_items(data.num_items());
    PlacementTest t;
    t.item = item;
    t.K = K;
    t.quantile = bootstrap_agg_quantile_one_sided(est.full.M_hat, data, {item}, kset, cfg);
    const OneSidedRanks r = one_sided_upper_ranks(data.space(), agg_points(est.M_nr, data),
                                                  agg_variances(est.full.M_hat, data), t.quantile, {item}, kset);
    t.r_tilde_upper = r.r_tilde_upper.front();
    t.reject = t.r_tilde_upper > K;
    return t;
}

ScreeningResult sure_screen_top_k(const DebiasedEstimates& est, const ComparisonDataset& data, int K,
                                  const BootstrapConfig& cfg) {
    if (K < 1 || K > data.num_items()) throw std::invalid_argument("sure_screen_top_k: K outside [1, d2]");
    const std::vector<int> items = all_items(data.num_items());
    ScreeningResult s;
    s.quantile = bootstrap_agg_quantile_one_sided(est.full.M_hat, data, items, items, cfg);
    const OneSidedRanks r = one_sided_upper_ranks(data.space(), agg_points(est.M_nr, data),
                                                  agg_variances(est.full.M_hat, data), s.quantile, items, items);
    s.r_tilde_upper = r.r_tilde_upper;
    for (std::size_t n = 0; n < items.size(); ++n) {
        if (r.r_tilde_upper[n] <= K) s.selected.push_back(items[n]);
    }
    return s;
}

// ---------------------------------------------------------------------------

std::string inference_report_json(const PairSpace& space, const std::vector<GapTest>& tests,
                                  const std::optional<RankIntervals>& ranks) {
    using nlohmann::json;
    json targets = json::array();
    for (const GapTest& t : tests) {
        const auto [a, b] = space.pair(t.k);
        targets.push_back({{"scope", t.user < 0 ? "aggregated" : "individual"},
                           {"user", t.user < 0 ? json(nullptr) : json(t.user + 1)},
                           {"pair", t.k + 1},
                           {"items", {a + 1, b + 1}},
                           {"point", t.point},
                           {"variance", t.variance},
                           {"h0", t.h0},
                           {"ci", {t.lo, t.hi}},
                           {"alpha", t.alpha},
                           {"z", t.z},
                           {"p_value", t.p_value}});
    }
    json doc = {{"targets", targets}};
    if (ranks) {
        doc["bootstrap"] = {{"boot_quantile", ranks->quantile},
                            {"B", ranks->B},
                            {"alpha", ranks->alpha},
                            {"seed", ranks->seed}};
        json items = json::array();
        for (const auto& it : ranks->items) {
            items.push_back({{"item", it.item + 1}, {"r_upper", it.r_upper}, {"r_lower", it.r_lower}});
        }
        doc["rank_intervals"] = {{"scope", ranks->scope},
                                 {"user", ranks->user < 0 ? json(nullptr) : json(ranks->user + 1)},
                                 {"items", items}};
    }
    return doc.dump(2) + "\n";
}

std::string rank_intervals_csv(const RankIntervals& ri, const std::vector<ItemInterval>* truth) {
    std::ostringstream out;
    out << "item,r_upper,r_lower" << (truth ? ",true_rank" : "") << "\n";
    for (const auto& it : ri.items) {
        out << it.item + 1 << ',' << it.r_upper << ',' << it.r_lower;
        if (truth) {
            const ItemInterval& tr = truth->at(static_cast<std::size_t>(it.item));
            out << ',' << tr.r_upper;
            if (tr.r_lower != tr.r_upper) out << '-' << tr.r_lower;
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace prefrank
