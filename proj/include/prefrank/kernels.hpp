#pragma once

#include <cstdint>
#include <vector>

#include "prefrank/types.hpp"

// Entrywise and replicate-parallel kernels. Every kernel exists twice with
// the same signature: `serial` is the reference implementation kept for
// testing, `parallel` distributes columns (or bootstrap replicates) over
// OpenMP threads. Reductions are accumulated per column and then summed in
// column order, so both versions return bitwise-identical results for any
// thread count.

namespace prefrank::kernels {

/// Which side of the bootstrap statistic to maximise.
enum class MaxKind {
    absolute,  ///< max_t |(A z)_t|
    signed_,   ///< max_t (A z)_t
};

namespace serial {

/// 0.5 * sum weight .* (outcome - x)^2
double weighted_loss(const Matrix& x, const Matrix& weight, const Matrix& outcome);

/// Gradient step point: x - step * weight .* (x - outcome).
void gradient_step(const Matrix& x, const Matrix& weight, const Matrix& outcome, double step, Matrix& out);

/// Newton update: m + weight .* (outcome - sigma(m)) / sigma'(m), zero weight
/// leaves the entry unchanged.
void newton_debias(const Matrix& m, const Matrix& weight, const Matrix& outcome, Matrix& out);

/// Per-entry inverse Fisher information 1 / (p_i sigma'(m_ik)).
void inverse_fisher(const Matrix& m, const Vector& p, Matrix& out);

/// Bootstrap replicate maxima: for b in [0, B), z_b ~ N(0, I) drawn from the
/// substream (seed, b); value_b = max over rows of coeffs * z_b.
std::vector<double> bootstrap_maxima(const Matrix& coeffs, int replicates, std::uint64_t seed, MaxKind kind);

}  // namespace serial

namespace parallel {

double weighted_loss(const Matrix& x, const Matrix& weight, const Matrix& outcome);
void gradient_step(const Matrix& x, const Matrix& weight, const Matrix& outcome, double step, Matrix& out);
void newton_debias(const Matrix& m, const Matrix& weight, const Matrix& outcome, Matrix& out);
void inverse_fisher(const Matrix& m, const Vector& p, Matrix& out);
std::vector<double> bootstrap_maxima(const Matrix& coeffs, int replicates, std::uint64_t seed, MaxKind kind);

}  // namespace parallel

using parallel::bootstrap_maxima;
using parallel::gradient_step;
using parallel::inverse_fisher;
using parallel::newton_debias;
using parallel::weighted_loss;

/// Thread count for OpenMP regions (no-op without OpenMP).
void set_num_threads(int threads);
int max_threads();

}  // namespace prefrank::kernels
