#include "prefrank/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "prefrank/pairspace.hpp"
#include "prefrank/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace prefrank::kernels {

namespace {

inline double column_loss(const Matrix& x, const Matrix& weight, const Matrix& outcome, Eigen::Index c) {
    double s = 0.0;
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double w = weight(r, c);
        if (w != 0.0) {
            const double d = outcome(r, c) - x(r, c);
            s += w * d * d;
        }
    }
    return s;
}

inline void column_step(const Matrix& x, const Matrix& weight, const Matrix& outcome, double step, Matrix& out,
                        Eigen::Index c) {
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        out(r, c) = x(r, c) - step * weight(r, c) * (x(r, c) - outcome(r, c));
    }
}

inline void column_debias(const Matrix& m, const Matrix& weight, const Matrix& outcome, Matrix& out,
                          Eigen::Index c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const double w = weight(r, c);
        const double v = m(r, c);
        if (w == 0.0) {
            out(r, c) = v;
        } else {
            const double s = sigmoid(v);
            out(r, c) = v + w * (outcome(r, c) - s) / (s * (1.0 - s));
        }
    }
}

inline void column_fisher(const Matrix& m, const Vector& p, Matrix& out, Eigen::Index c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const double s = sigmoid(m(r, c));
        out(r, c) = 1.0 / (p(r) * s * (1.0 - s));
    }
}

inline double replicate_max(const Matrix& coeffs, std::uint64_t seed, int b, MaxKind kind, Vector& z, Vector& az) {
    Rng rng = make_rng(seed, kStreamBoot, static_cast<std::uint64_t>(b));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index n = 0; n < z.size(); ++n) z(n) = normal(rng);
    az.noalias() = coeffs * z;
    if (az.size() == 0) return 0.0;
    return kind == MaxKind::absolute ? az.cwiseAbs().maxCoeff() : az.maxCoeff();
}

void check_shapes(const Matrix& a, const Matrix& b, const Matrix& c) {
    if (a.rows() != b.rows() || a.cols() != b.cols() || a.rows() != c.rows() || a.cols() != c.cols()) {
        throw std::invalid_argument("kernel: matrix shapes differ");
    }
}

}  // namespace

// ---------------------------------------------------------------------------

namespace serial {

double weighted_loss(const Matrix& x, const Matrix& weight, const Matrix& outcome) {
    check_shapes(x, weight, outcome);
    double total = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) total += column_loss(x, weight, outcome, c);
    return 0.5 * total;
}

void gradient_step(const Matrix& x, const Matrix& weight, const Matrix& outcome, double step, Matrix& out) {
    check_shapes(x, weight, outcome);
    out.resize(x.rows(), x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) column_step(x, weight, outcome, step, out, c);
}

void newton_debias(const Matrix& m, const Matrix& weight, const Matrix& outcome, Matrix& out) {
    check_shapes(m, weight, outcome);
    out.resize(m.rows(), m.cols());
    for (Eigen::Index c = 0; c < m.cols(); ++c) column_debias(m, weight, outcome, out, c);
}

void inverse_fisher(const Matrix& m, const Vector& p, Matrix& out) {
    out.resize(m.rows(), m.cols());
    for (Eigen::Index c = 0; c < m.cols(); ++c) column_fisher(m, p, out, c);
}

std::vector<double> bootstrap_maxima(const Matrix& coeffs, int replicates, std::uint64_t seed, MaxKind kind) {
    std::vector<double> out(static_cast<std::size_t>(std::max(replicates, 0)));
    Vector z(coeffs.cols()), az(coeffs.rows());
    for (int b = 0; b < replicates; ++b) out[static_cast<std::size_t>(b)] = replicate_max(coeffs, seed, b, kind, z, az);
    return out;
}

}  // namespace serial

// ---------------------------------------------------------------------------

namespace parallel {

double weighted_loss(const Matrix& x, const Matrix& weight, const Matrix& outcome) {
    check_shapes(x, weight, outcome);
    const Eigen::Index cols = x.cols();
    std::vector<double> partial(static_cast<std::size_t>(cols));
#pragma omp parallel for schedule(static)
    for (Eigen::Index c = 0; c < cols; ++c) partial[static_cast<std::size_t>(c)] = column_loss(x, weight, outcome, c);
    double total = 0.0;
    for (double v : partial) total += v;
    return 0.5 * total;
}

void gradient_step(const Matrix& x, const Matrix& weight, const Matrix& outcome, double step, Matrix& out) {
    check_shapes(x, weight, outcome);
    out.resize(x.rows(), x.cols());
    const Eigen::Index cols = x.cols();
#pragma omp parallel for schedule(static)
    for (Eigen::Index c = 0; c < cols; ++c) column_step(x, weight, outcome, step, out, c);
}

void newton_debias(const Matrix& m, const Matrix& weight, const Matrix& outcome, Matrix& out) {
    check_shapes(m, weight, outcome);
    out.resize(m.rows(), m.cols());
    const Eigen::Index cols = m.cols();
#pragma omp parallel for schedule(static)
    for (Eigen::Index c = 0; c < cols; ++c) column_debias(m, weight, outcome, out, c);
}

void inverse_fisher(const Matrix& m, const Vector& p, Matrix& out) {
    out.resize(m.rows(), m.cols());
    const Eigen::Index cols = m.cols();
#pragma omp parallel for schedule(static)
    for (Eigen::Index c = 0; c < cols; ++c) column_fisher(m, p, out, c);
}

std::vector<double> bootstrap_maxima(const Matrix& coeffs, int replicates, std::uint64_t seed, MaxKind kind) {
    std::vector<double> out(static_cast<std::size_t>(std::max(replicates, 0)));
#pragma omp parallel
    {
        Vector z(coeffs.cols()), az(coeffs.rows());
#pragma omp for schedule(static)
        for (int b = 0; b < replicates; ++b) {
            out[static_cast<std::size_t>(b)] = replicate_max(coeffs, seed, b, kind, z, az);
        }
    }
    return out;
}

}  // namespace parallel

void set_num_threads(int threads) {
#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#else
    (void)threads;
#endif
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace prefrank::kernels
