#include "ptrlab/toy_lab.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace ptrlab {

double toy_gradient(double a, double x, double t)
{
    const double pre = a * x;
    if (!(pre > 0.0))
        return 0.0;
    return (pre - t) * x;
}

double toy_loss(double a, double x, double t)
{
    const double out = std::max(a * x, 0.0) - t;
    return 0.5 * out * out;
}

Sampler Sampler::parse(const std::string& text)
{
    std::vector<std::string> parts;
    std::stringstream in(text);
    std::string part;
    while (std::getline(in, part, ':'))
        parts.push_back(part);
    auto number = [&](const std::string& s) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != s.size() || s.empty() || !std::isfinite(v))
            throw std::invalid_argument("sampler '" + text + "': '" + s + "' is not a number");
        return v;
    };
    if (parts.size() == 2 && parts[0] == "const")
        return constant(number(parts[1]));
    if (parts.size() == 3 && parts[0] == "uniform") {
        const double lo = number(parts[1]), hi = number(parts[2]);
        if (!(lo < hi))
            throw std::invalid_argument("sampler '" + text + "': need lo < hi");
        return uniform(lo, hi);
    }
    throw std::invalid_argument("sampler '" + text + "': expected const:V or uniform:LO:HI");
}

std::string Sampler::describe() const
{
    std::ostringstream out;
    out.precision(17);
    if (kind == Kind::Constant)
        out << "const:" << lo;
    else
        out << "uniform:" << lo << ':' << hi;
    return out.str();
}

double Sampler::draw(Rng& rng) const
{
    return kind == Kind::Constant ? lo : lo + (hi - lo) * uniform01(rng);
}

double Sampler::mean() const
{
    return 0.5 * (lo + hi);
}

double Sampler::variance() const
{
    const double width = hi - lo;
    return kind == Kind::Constant ? 0.0 : width * width / 12.0;
}

VarianceResult variance_experiment(const Sampler& f_o, const Sampler& t, std::size_t n, std::uint64_t seed, double x)
{
    if (n < 2)
        throw std::invalid_argument("variance_experiment: need at least two samples");
    if (!(x > 0.0))
        throw std::invalid_argument("variance_experiment: x must be positive to keep the neuron active");
    Rng feature_rng = make_rng(seed, Stream::Init);
    Rng target_rng = make_rng(seed, Stream::Targets);

    // Welford accumulation; constant inputs give exactly zero variance.
    double mean = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double out = f_o.draw(feature_rng);
        const double target = t.draw(target_rng);
        const double g = toy_gradient(out / x, x, target);
        const double delta = g - mean;
        mean += delta / static_cast<double>(i + 1);
        m2 += delta * (g - mean);
    }

    VarianceResult r;
    r.n_samples = n;
    r.empirical_var = m2 / static_cast<double>(n - 1);
    r.predicted_var = x * x * (f_o.variance() + t.variance());
    const double diff = std::abs(r.empirical_var - r.predicted_var);
    r.relative_gap = r.predicted_var > 0.0 ? diff / r.predicted_var : diff;
    return r;
}

FnpVsPtr fnp_vs_ptr_variance(const Sampler& f_o, double m, std::size_t n, std::uint64_t seed)
{
    if (m < 0.0)
        throw std::invalid_argument("fnp_vs_ptr_variance: m must be non-negative");
    const Sampler targets = m > 0.0 ? Sampler::uniform(0.0, 2.0 * m) : Sampler::constant(0.0);
    return {variance_experiment(f_o, Sampler::constant(0.0), n, seed),
            variance_experiment(f_o, targets, n, seed)};
}

} // namespace ptrlab
