#pragma once

#include <cmath>
#include <cstdint>
#include <utility>

namespace prefrank {

/// Index of an unordered item pair in lexicographic order:
/// (0,1),(0,2),...,(0,d2-1),(1,2),...,(d2-2,d2-1).
///
/// The library API is 0-based throughout. Files and the CLI use 1-based
/// item ids and pair indices; conversion happens at those boundaries.
class PairSpace {
public:
    PairSpace() = default;
    explicit PairSpace(int num_items);

    int num_items() const { return d2_; }
    int num_pairs() const { return num_pairs_; }

    /// Position of (j, j2), j < j2, in the enumeration.
    int index(int j, int j2) const;
    /// Inverse of index(); closed form via the triangular-number inequality.
    std::pair<int, int> pair(int k) const;

    bool contains(int j) const { return j >= 0 && j < d2_; }

private:
    int d2_ = 0;
    int num_pairs_ = 0;
};

/// Order-insensitive pair index with the orientation of the query.
/// sign = +1 when the query was (j, j2) with j < j2, -1 otherwise; the gap
/// Theta[j] - Theta[j2] equals sign * M[k].
struct SignedPairIndex {
    int k = 0;
    int sign = 1;
};

SignedPairIndex signed_index(const PairSpace& space, int j, int j2);

inline double sigmoid(double x) {
    if (x >= 0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// Logit. Throws std::domain_error outside (0, 1).
double sigmoid_inv(double u);

/// e^{-|x|} / (1 + e^{-|x|})^2, exactly even in x.
inline double sigmoid_deriv(double x) {
    const double e = std::exp(-std::abs(x));
    const double d = 1.0 + e;
    return e / (d * d);
}

}  // namespace prefrank
