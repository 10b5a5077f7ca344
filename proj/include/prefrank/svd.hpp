#pragma once

#include <cstdint>

#include "prefrank/rng.hpp"
#include "prefrank/types.hpp"

namespace prefrank {

/// A ~= U diag(s) V', U and V with orthonormal columns, s descending.
struct ThinSvd {
    Matrix U;
    Vector s;
    Matrix V;

    Eigen::Index rank() const { return s.size(); }
    Matrix reconstruct() const { return U * s.asDiagonal() * V.transpose(); }
};

/// Flip singular-vector pairs so the first nonzero coordinate of each left
/// vector is positive.
void normalize_signs(ThinSvd& svd);

/// Full thin SVD (Eigen BDCSVD), sign-normalised.
ThinSvd dense_svd(const Matrix& a);

/// Leading n triplets of an existing decomposition.
ThinSvd truncate_svd(const ThinSvd& svd, Eigen::Index n);

struct SubspaceOptions {
    /// Matrices with min(rows, cols) at or below this go to the dense path.
    Eigen::Index dense_cutoff = 64;
    /// The thresholder uses the dense SVD whenever rows + cols is at or below this.
    Eigen::Index dense_dbar = 2000;
    int max_sweeps = 200;
    /// Convergence: ||A V - U S||_F on the wanted columns <= tol * s_1.
    double tol = 1e-11;
    int oversample = 8;
};

/// Leading q singular triplets (sign-normalised).
ThinSvd top_svd(const Matrix& a, Eigen::Index q, const SubspaceOptions& options = {});

/// Largest singular value.
double spectral_norm(const Matrix& a, const SubspaceOptions& options = {});

/// Every singular value strictly above `threshold`, with vectors. Uses a
/// block that grows until it contains guard values below the threshold.
ThinSvd singular_triplets_above(const Matrix& a, double threshold, const SubspaceOptions& options = {});

/// Prox of tau * ||.||_* with a warm-started subspace between calls; the
/// returned s is already shrunk (sigma - tau > 0 only).
class SingularValueThresholder {
public:
    explicit SingularValueThresholder(SubspaceOptions options = {}, std::uint64_t seed = 0x5eedULL);

    ThinSvd apply(const Matrix& z, double tau);

    /// Subspace sweeps spent by the last apply() (0 on the dense path).
    int last_sweeps() const { return last_sweeps_; }

private:
    SubspaceOptions options_;
    Rng rng_;
    Matrix warm_v_;
    int last_sweeps_ = 0;
};

}  // namespace prefrank
