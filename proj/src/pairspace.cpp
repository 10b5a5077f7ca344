#include "prefrank/pairspace.hpp"

#include <stdexcept>
#include <string>

namespace prefrank {

PairSpace::PairSpace(int num_items) : d2_(num_items) {
    if (num_items < 2) {
        throw std::invalid_argument("PairSpace needs at least 2 items, got " +
                                    std::to_string(num_items));
    }
    num_pairs_ = num_items * (num_items - 1) / 2;
}

int PairSpace::index(int j, int j2) const {
    if (!contains(j) || !contains(j2)) {
        throw std::out_of_range("item id out of range for pair (" + std::to_string(j) + "," +
                                std::to_string(j2) + ")");
    }
    if (j >= j2) {
        throw std::invalid_argument("pair index requires j < j2, got (" + std::to_string(j) +
                                    "," + std::to_string(j2) + ")");
    }
    // Pairs before row j: sum_{r<j} (d2 - 1 - r) = j*(2*d2 - j - 1)/2.
    return j * (2 * d2_ - j - 1) / 2 + (j2 - j - 1);
}

std::pair<int, int> PairSpace::pair(int k) const {
    if (k < 0 || k >= num_pairs_) {
        throw std::out_of_range("pair index " + std::to_string(k) + " outside [0," +
                                std::to_string(num_pairs_) + ")");
    }
    // Count pairs from the end: k' = K-1-k lies in the reversed triangle, whose
    // row r (counted from the bottom) holds r+1 pairs.
    const long long rev = static_cast<long long>(num_pairs_) - 1 - k;
    long long r = static_cast<long long>((std::sqrt(8.0 * static_cast<double>(rev) + 1.0) - 1.0) / 2.0);
    while ((r + 1) * (r + 2) / 2 <= rev) ++r;
    while (r * (r + 1) / 2 > rev) --r;
    const int j = d2_ - 2 - static_cast<int>(r);
    const int j2 = k - j * (2 * d2_ - j - 1) / 2 + j + 1;
    return {j, j2};
}

SignedPairIndex signed_index(const PairSpace& space, int j, int j2) {
    if (j == j2) {
        throw std::invalid_argument("signed_index: self-pair (" + std::to_string(j) + "," +
                                    std::to_string(j2) + ")");
    }
    if (j < j2) {
        return {space.index(j, j2), 1};
    }
    return {space.index(j2, j), -1};
}

double sigmoid_inv(double u) {
    if (!(u > 0.0 && u < 1.0)) {
        throw std::domain_error("sigmoid_inv: argument " + std::to_string(u) + " outside (0,1)");
    }
    return std::log(u) - std::log1p(-u);
}

}  // namespace prefrank
