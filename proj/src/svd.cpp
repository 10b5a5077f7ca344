#include "prefrank/svd.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace prefrank {

namespace {

Matrix orthonormalize(const Matrix& y) {
    Eigen::HouseholderQR<Matrix> qr(y);
    return qr.householderQ() * Matrix::Identity(y.rows(), y.cols());
}

Matrix random_block(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = normal(rng);
    }
    return m;
}

Matrix pad_block(const Matrix& start, Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    Matrix block(rows, cols);
    const Eigen::Index keep = std::min<Eigen::Index>(start.rows() == rows ? start.cols() : 0, cols);
    if (keep > 0) block.leftCols(keep) = start.leftCols(keep);
    if (cols > keep) block.rightCols(cols - keep) = random_block(rng, rows, cols - keep);
    return block;
}

Eigen::Index count_above(const Vector& s, double threshold) {
    Eigen::Index c = 0;
    while (c < s.size() && s(c) > threshold) ++c;
    return c;
}

/// Per-column weights for the convergence residual; columns with zero weight
/// are not checked.
using ColumnWeights = std::function<Vector(const Vector& s)>;

struct SubspaceRun {
    ThinSvd svd;
    Matrix block_v;
    int sweeps = 0;
    bool converged = false;
};

/// Block subspace iteration with Rayleigh-Ritz extraction. `grow` may ask for
/// a wider block after each extraction (returns the new width, or the current
/// width to keep going).
SubspaceRun iterate(const Matrix& a, Matrix start, const ColumnWeights& weights,
                    const std::function<Eigen::Index(const Vector&, Eigen::Index)>& grow,
                    const SubspaceOptions& options, Rng& rng) {
    const Eigen::Index limit = std::min(a.rows(), a.cols());
    SubspaceRun run;
    Matrix v = orthonormalize(start);
    bool have = false;
    for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
        Matrix y = a * v;
        if (have) {
            const Vector w = weights(run.svd.s);
            double res2 = 0.0;
            for (Eigen::Index c = 0; c < w.size(); ++c) {
                if (w(c) == 0.0) continue;
                const double r = (y.col(c) - run.svd.U.col(c) * run.svd.s(c)).norm();
                res2 += w(c) * w(c) * r * r;
            }
            const double scale = std::max(run.svd.s.size() > 0 ? run.svd.s(0) : 0.0,
                                          std::numeric_limits<double>::min());
            if (std::sqrt(res2) <= options.tol * scale) {
                run.converged = true;
                run.sweeps = sweep;
                return run;
            }
        }
        const Matrix q = orthonormalize(y);
        const Matrix wt = a.transpose() * q;  // = B', B = Q' A
        Eigen::JacobiSVD<Matrix> small(wt, Eigen::ComputeThinU | Eigen::ComputeThinV);
        run.svd.U = q * small.matrixV();
        run.svd.s = small.singularValues();
        run.svd.V = small.matrixU();
        run.block_v = run.svd.V;
        v = run.svd.V;
        have = true;

        const Eigen::Index width = grow(run.svd.s, v.cols());
        if (width > v.cols()) {
            if (width >= limit) return run;  // caller falls back to dense
            v = orthonormalize(pad_block(v, v.rows(), width, rng));
            have = false;
        }
    }
    run.sweeps = options.max_sweeps;
    return run;
}

}  // namespace

void normalize_signs(ThinSvd& svd) {
    for (Eigen::Index c = 0; c < svd.U.cols(); ++c) {
        const double peak = svd.U.col(c).cwiseAbs().maxCoeff();
        for (Eigen::Index r = 0; r < svd.U.rows(); ++r) {
            const double x = svd.U(r, c);
            if (std::abs(x) > 1e-12 * peak) {
                if (x < 0) {
                    svd.U.col(c) *= -1.0;
                    svd.V.col(c) *= -1.0;
                }
                break;
            }
        }
    }
}

ThinSvd truncate_svd(const ThinSvd& svd, Eigen::Index n) {
    return {svd.U.leftCols(n), svd.s.head(n), svd.V.leftCols(n)};
}

ThinSvd dense_svd(const Matrix& a) {
    Eigen::BDCSVD<Matrix> solver(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    ThinSvd out{solver.matrixU(), solver.singularValues(), solver.matrixV()};
    normalize_signs(out);
    return out;
}

ThinSvd top_svd(const Matrix& a, Eigen::Index q, const SubspaceOptions& options) {
    const Eigen::Index limit = std::min(a.rows(), a.cols());
    if (q < 1 || q > limit) throw std::invalid_argument("top_svd: rank outside [1, min(rows, cols)]");
    const Eigen::Index width = std::min(q + options.oversample, limit);
    if (limit <= options.dense_cutoff || width >= limit) return truncate_svd(dense_svd(a), q);

    Rng rng = make_rng(0x70705eedULL, kStreamSvd, static_cast<std::uint64_t>(q));
    const auto weights = [q](const Vector& s) {
        Vector w = Vector::Zero(s.size());
        w.head(std::min<Eigen::Index>(q, s.size())).setOnes();
        return w;
    };
    const auto keep = [](const Vector&, Eigen::Index w) { return w; };
    SubspaceRun run = iterate(a, random_block(rng, a.cols(), width), weights, keep, options, rng);
    if (!run.converged) return truncate_svd(dense_svd(a), q);
    ThinSvd out = truncate_svd(run.svd, q);
    normalize_signs(out);
    return out;
}

double spectral_norm(const Matrix& a, const SubspaceOptions& options) {
    if (a.size() == 0) return 0.0;
    return top_svd(a, 1, options).s(0);
}

namespace {

constexpr Eigen::Index kGuard = 3;

ThinSvd triplets_above(const Matrix& a, double threshold, Matrix start, const SubspaceOptions& options,
                       Rng& rng, Matrix* block_out, int* sweeps_out, const ColumnWeights& weights) {
    const Eigen::Index limit = std::min(a.rows(), a.cols());
    auto dense_path = [&]() {
        ThinSvd full = dense_svd(a);
        if (block_out) block_out->resize(0, 0);
        if (sweeps_out) *sweeps_out = 0;
        return truncate_svd(full, count_above(full.s, threshold));
    };
    if (limit <= options.dense_cutoff || start.cols() + kGuard >= limit) return dense_path();

    const auto grow = [threshold, limit](const Vector& s, Eigen::Index width) {
        const Eigen::Index c = count_above(s, threshold);
        if (c + kGuard <= width) return width;
        return std::min(std::max(2 * width, c + kGuard + 4), limit);
    };
    SubspaceRun run = iterate(a, std::move(start), weights, grow, options, rng);
    if (!run.converged || count_above(run.svd.s, threshold) + kGuard > run.svd.s.size()) return dense_path();
    if (block_out) *block_out = run.block_v;
    if (sweeps_out) *sweeps_out = run.sweeps;
    ThinSvd out = truncate_svd(run.svd, count_above(run.svd.s, threshold));
    normalize_signs(out);
    return out;
}

}  // namespace

ThinSvd singular_triplets_above(const Matrix& a, double threshold, const SubspaceOptions& options) {
    Rng rng = make_rng(0xab0fe5eedULL, kStreamSvd);
    const Eigen::Index width = std::min<Eigen::Index>(options.oversample + kGuard, std::min(a.rows(), a.cols()));
    const auto weights = [threshold](const Vector& s) {
        Vector w = Vector::Zero(s.size());
        const Eigen::Index c = std::max<Eigen::Index>(1, count_above(s, threshold));
        w.head(std::min(c, s.size())).setOnes();
        return w;
    };
    return triplets_above(a, threshold, random_block(rng, a.cols(), width), options, rng, nullptr, nullptr,
                          weights);
}

SingularValueThresholder::SingularValueThresholder(SubspaceOptions options, std::uint64_t seed)
    : options_(options), rng_(make_rng(seed, kStreamSvd)) {}

ThinSvd SingularValueThresholder::apply(const Matrix& z, double tau) {
    if (z.rows() + z.cols() <= options_.dense_dbar) {
        ThinSvd full = dense_svd(z);
        last_sweeps_ = 0;
        ThinSvd out = truncate_svd(full, count_above(full.s, tau));
        out.s.array() -= tau;
        return out;
    }
    const Eigen::Index width = std::max<Eigen::Index>(warm_v_.cols(), options_.oversample + kGuard);
    Matrix start = pad_block(warm_v_, z.cols(), std::min(width, std::min(z.rows(), z.cols())), rng_);
    // The prox output only depends on sigma - tau, so residuals are weighted
    // by the shrinkage factor of each column.
    const auto weights = [tau](const Vector& s) {
        Vector w = Vector::Zero(s.size());
        for (Eigen::Index c = 0; c < s.size(); ++c) {
            if (s(c) > tau) w(c) = (s(c) - tau) / s(c);
        }
        if (s.size() > 0 && w(0) == 0.0) w(0) = 1.0;
        return w;
    };
    Matrix block;
    int sweeps = 0;
    ThinSvd out = triplets_above(z, tau, std::move(start), options_, rng_, &block, &sweeps, weights);
    last_sweeps_ = sweeps;
    if (block.size() > 0) warm_v_ = std::move(block);
    out.s.array() -= tau;
    return out;
}

}  // namespace prefrank
