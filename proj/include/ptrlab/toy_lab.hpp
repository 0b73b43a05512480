#pragma once

#include "ptrlab/rng.hpp"

#include <cstdint>
#include <string>

namespace ptrlab {

/// Gradient of E = 1/2 (relu(a x) - t)^2 with respect to a. Zero when the
/// neuron is inactive (a x <= 0).
double toy_gradient(double a, double x, double t);
double toy_loss(double a, double x, double t);

/// A scalar distribution with a known variance.
struct Sampler {
    enum class Kind { Constant, Uniform };

    Kind kind = Kind::Constant;
    double lo = 0.0; // constant value for Kind::Constant
    double hi = 0.0;

    static Sampler constant(double value) { return {Kind::Constant, value, value}; }
    static Sampler uniform(double lo, double hi) { return {Kind::Uniform, lo, hi}; }

    /// "const:V" or "uniform:LO:HI".
    static Sampler parse(const std::string& text);
    std::string describe() const;

    double draw(Rng& rng) const;
    double mean() const;
    double variance() const;
};

struct VarianceResult {
    double empirical_var = 0.0;
    double predicted_var = 0.0; // x^2 (Var f_o + Var t)
    std::size_t n_samples = 0;
    double relative_gap = 0.0;  // |emp - pred| / pred, or |emp - pred| when pred == 0
};

/// Empirical variance of the toy gradient over n independent (f_o, t) pairs
/// with f_o > 0 enforced by construction (a = f_o / x). The two samplers use
/// separate streams of `seed`, so equal seeds reuse the same f_o draws.
VarianceResult variance_experiment(const Sampler& f_o, const Sampler& t, std::size_t n, std::uint64_t seed,
                                   double x = 1.0);

struct FnpVsPtr {
    VarianceResult fnp; // t = 0
    VarianceResult ptr; // t ~ Uniform[0, 2m)
    double gap() const { return ptr.empirical_var - fnp.empirical_var; }
};

FnpVsPtr fnp_vs_ptr_variance(const Sampler& f_o, double m, std::size_t n, std::uint64_t seed);

} // namespace ptrlab
