#pragma once

#include <Eigen/Dense>

namespace prefrank {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// d1 x d2 user-item scores. `identified` records that every row was
/// centred (Theta * 1 = 0).
struct ScoreMatrix {
    Matrix values;
    bool identified = false;

    Eigen::Index users() const { return values.rows(); }
    Eigen::Index items() const { return values.cols(); }
};

/// d1 x K score gaps over item pairs in lexicographic order.
struct GapMatrix {
    Matrix values;

    Eigen::Index users() const { return values.rows(); }
    Eigen::Index pairs() const { return values.cols(); }
};

}  // namespace prefrank
