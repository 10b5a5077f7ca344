#include <benchmark/benchmark.h>

#include <map>
#include <random>

#include "prefrank/kernels.hpp"
#include "prefrank/rng.hpp"

using namespace prefrank;

namespace {

struct Inputs {
    Matrix m, weight, outcome, coeffs;
    Vector p;
};

const Inputs& inputs(int n) {
    static std::map<int, Inputs> cache;
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    Rng rng = make_rng(static_cast<std::uint64_t>(n), 1);
    std::normal_distribution<double> g(0.0, 1.0);
    std::bernoulli_distribution obs(0.5);
    Inputs in;
    in.m = Matrix::NullaryExpr(n, n, [&] { return g(rng); });
    in.weight = Matrix::NullaryExpr(n, n, [&] { return obs(rng) ? 1.25 : 0.0; });
    in.outcome = Matrix::NullaryExpr(n, n, [&] { return obs(rng) ? 1.0 : 0.0; });
    in.coeffs = Matrix::NullaryExpr(n, n / 4, [&] { return g(rng); });
    in.p = Vector::Constant(n, 0.8);
    return cache.emplace(n, std::move(in)).first->second;
}

template <bool Par>
void newton(benchmark::State& st) {
    const Inputs& in = inputs(static_cast<int>(st.range(0)));
    Matrix out;
    for (auto _ : st) {
        if constexpr (Par) kernels::parallel::newton_debias(in.m, in.weight, in.outcome, out);
        else kernels::serial::newton_debias(in.m, in.weight, in.outcome, out);
        benchmark::DoNotOptimize(out.data());
    }
}

template <bool Par>
void gradient(benchmark::State& st) {
    const Inputs& in = inputs(static_cast<int>(st.range(0)));
    Matrix out;
    for (auto _ : st) {
        if constexpr (Par) kernels::parallel::gradient_step(in.m, in.weight, in.outcome, 0.8, out);
        else kernels::serial::gradient_step(in.m, in.weight, in.outcome, 0.8, out);
        benchmark::DoNotOptimize(out.data());
    }
}

template <bool Par>
void loss(benchmark::State& st) {
    const Inputs& in = inputs(static_cast<int>(st.range(0)));
    for (auto _ : st) {
        double v = Par ? kernels::parallel::weighted_loss(in.m, in.weight, in.outcome)
                       : kernels::serial::weighted_loss(in.m, in.weight, in.outcome);
        benchmark::DoNotOptimize(v);
    }
}

template <bool Par>
void fisher(benchmark::State& st) {
    const Inputs& in = inputs(static_cast<int>(st.range(0)));
    Matrix out;
    for (auto _ : st) {
        if constexpr (Par) kernels::parallel::inverse_fisher(in.m, in.p, out);
        else kernels::serial::inverse_fisher(in.m, in.p, out);
        benchmark::DoNotOptimize(out.data());
    }
}

template <bool Par>
void bootstrap(benchmark::State& st) {
    const Inputs& in = inputs(static_cast<int>(st.range(0)));
    for (auto _ : st) {
        auto v = Par ? kernels::parallel::bootstrap_maxima(in.coeffs.transpose(), 500, 7, kernels::MaxKind::absolute)
                     : kernels::serial::bootstrap_maxima(in.coeffs.transpose(), 500, 7, kernels::MaxKind::absolute);
        benchmark::DoNotOptimize(v.data());
    }
}

}  // namespace

BENCHMARK(newton<false>)->Name("newton_debias/serial")->Arg(190)->Arg(780);
BENCHMARK(newton<true>)->Name("newton_debias/parallel")->Arg(190)->Arg(780);
BENCHMARK(gradient<false>)->Name("gradient_step/serial")->Arg(190)->Arg(780);
BENCHMARK(gradient<true>)->Name("gradient_step/parallel")->Arg(190)->Arg(780);
BENCHMARK(loss<false>)->Name("weighted_loss/serial")->Arg(190)->Arg(780);
BENCHMARK(loss<true>)->Name("weighted_loss/parallel")->Arg(190)->Arg(780);
BENCHMARK(fisher<false>)->Name("inverse_fisher/serial")->Arg(190)->Arg(780);
BENCHMARK(fisher<true>)->Name("inverse_fisher/parallel")->Arg(190)->Arg(780);
BENCHMARK(bootstrap<false>)->Name("bootstrap_maxima/serial")->Arg(190)->Arg(780);
BENCHMARK(bootstrap<true>)->Name("bootstrap_maxima/parallel")->Arg(190)->Arg(780);

BENCHMARK_MAIN();
