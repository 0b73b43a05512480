#include "ptrlab/errors.hpp"
#include "ptrlab/pseudo_task.hpp"

#include "test_helpers.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace ptrlab;

namespace {

PtrConfig config_with(RegressionKind kind, double ratio = 3.0)
{
    PtrConfig c;
    c.ratio = ratio;
    c.loss_kind = kind;
    return c;
}

double mean(const std::vector<double>& v)
{
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

} // namespace

TEST(PseudoTargets, ZeroMeanGivesZeros)
{
    Rng rng(1);
    const Tensor t = generate_pseudo_targets(4, 5, 0.0, rng);
    EXPECT_EQ(t, Tensor({4, 5}, 0.0));
}

TEST(PseudoTargets, MomentsOfUniform)
{
    Rng rng(2);
    const double m = 1.5;
    const Tensor t = generate_pseudo_targets(1000, 1000, m, rng);
    double sum = 0.0, sq = 0.0, lo = 1e9, hi = -1e9;
    for (double v : t.values()) {
        sum += v;
        sq += v * v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double n = static_cast<double>(t.size());
    const double mu = sum / n;
    const double var = sq / n - mu * mu;
    EXPECT_NEAR(mu, m, 0.01 * m);
    EXPECT_NEAR(var, m * m / 3.0, 0.01 * m * m / 3.0);
    EXPECT_GE(lo, 0.0);
    EXPECT_LT(hi, 2 * m);
}

TEST(PseudoTargets, Deterministic)
{
    Rng a = make_rng(9, Stream::Targets), b = make_rng(9, Stream::Targets);
    EXPECT_EQ(generate_pseudo_targets(3, 7, 1.0, a), generate_pseudo_targets(3, 7, 1.0, b));
}

TEST(RegressionLoss, ZeroWhenRepEqualsTargets)
{
    const Tensor rep = test::random_tensor({3, 4}, 1);
    for (auto kind : {RegressionKind::L2, RegressionKind::SmoothL1}) {
        const RegressionLoss r = regression_loss(rep, rep, kind);
        for (double l : r.loss)
            EXPECT_EQ(l, 0.0);
        for (double g : r.grad_rep.values())
            EXPECT_EQ(g, 0.0);
    }
}

TEST(RegressionLoss, Examples)
{
    const Tensor rep({1, 2}, {1.0, 2.0});
    const Tensor zeros({1, 2}, 0.0);
    const RegressionLoss l2 = regression_loss(rep, zeros, RegressionKind::L2);
    EXPECT_DOUBLE_EQ(l2.loss[0], 2.5);
    EXPECT_DOUBLE_EQ(l2.grad_rep[0], 1.0);
    EXPECT_DOUBLE_EQ(l2.grad_rep[1], 2.0);

    // 0.5 + (2 - 0.5) with delta = 1; |d| = 1 sits on the linear branch.
    const RegressionLoss sml1 = regression_loss(rep, zeros, RegressionKind::SmoothL1);
    EXPECT_DOUBLE_EQ(sml1.loss[0], 2.0);
    const RegressionLoss sml1b = regression_loss(Tensor({1, 2}, {0.5, 2.0}), zeros, RegressionKind::SmoothL1);
    EXPECT_DOUBLE_EQ(sml1b.loss[0], 0.125 + 1.5);
    EXPECT_DOUBLE_EQ(sml1b.grad_rep[0], 0.5);
    EXPECT_DOUBLE_EQ(sml1b.grad_rep[1], 1.0);
}

TEST(RegressionLoss, FeatureNormEqualsL2WithZeroTargets)
{
    const Tensor rep = test::random_tensor({6, 5}, 3);
    const RegressionLoss fnp = regression_loss(rep, Tensor{}, RegressionKind::FeatureNorm);
    const RegressionLoss l2 = regression_loss(rep, Tensor({6, 5}, 0.0), RegressionKind::L2);
    EXPECT_EQ(fnp.loss, l2.loss);
    EXPECT_EQ(fnp.grad_rep, l2.grad_rep);
}

TEST(RegressionLoss, SmoothL1GradientBounded)
{
    const Tensor rep = test::random_tensor({20, 10}, 4, 50.0);
    const Tensor t = test::random_tensor({20, 10}, 5, 50.0);
    const RegressionLoss r = regression_loss(rep, t, RegressionKind::SmoothL1);
    for (double g : r.grad_rep.values())
        EXPECT_LE(std::abs(g), 1.0);
}

TEST(RegressionLoss, NamesRoundTrip)
{
    for (auto kind : {RegressionKind::L2, RegressionKind::SmoothL1, RegressionKind::FeatureNorm})
        EXPECT_EQ(regression_kind_from_string(to_string(kind)), kind);
    EXPECT_THROW(regression_kind_from_string("L3"), ConfigError);
}

TEST(GradCeAtRep, Examples)
{
    const Tensor g({2, 3}, {0.1, -0.4, 0.3, 0.0, 0.0, 0.0});
    EXPECT_EQ(grad_ce_at_rep(Tensor({3, 3}, 0.0), g), Tensor({2, 3}, 0.0));

    Tensor identity({3, 3}, 0.0);
    for (std::size_t i = 0; i < 3; ++i)
        identity.at(i, i) = 1.0;
    EXPECT_EQ(grad_ce_at_rep(identity, g), g);
}

TEST(GradCeAtRep, MatchesFiniteDifferences)
{
    // Oracle: d/d rep of CE(W rep + b, y) by central differences.
    const Tensor w = test::random_tensor({4, 5}, 6);
    const Tensor rep = test::random_tensor({3, 5}, 7);
    const std::vector<std::size_t> labels{0, 3, 1};
    auto logits_of = [&](const Tensor& r) {
        Tensor z({r.dim(0), 4}, 0.0);
        for (std::size_t b = 0; b < r.dim(0); ++b)
            for (std::size_t c = 0; c < 4; ++c)
                for (std::size_t k = 0; k < 5; ++k)
                    z.at(b, c) += w.at(c, k) * r.at(b, k);
        return z;
    };
    const Tensor analytic = grad_ce_at_rep(w, softmax_cross_entropy(logits_of(rep), labels).grad_logits);
    const double eps = 1e-6;
    for (std::size_t i = 0; i < rep.size(); ++i) {
        Tensor plus = rep, minus = rep;
        plus[i] += eps;
        minus[i] -= eps;
        const std::size_t b = i / 5;
        const double numeric = (softmax_cross_entropy(logits_of(plus), labels).loss[b]
                                - softmax_cross_entropy(logits_of(minus), labels).loss[b])
                               / (2 * eps);
        EXPECT_NEAR(analytic[i], numeric, 1e-6);
    }
}

TEST(Balance, Examples)
{
    // Per-instance norms: CE rows have norm 3, PtR rows norm 1.
    const Tensor ce({2, 2}, {3.0, 0.0, 0.0, -3.0});
    const Tensor ptr({2, 2}, {0.6, 0.8, -1.0, 0.0});
    const BalanceRecord r = balance(ce, ptr, config_with(RegressionKind::L2), true);
    EXPECT_DOUBLE_EQ(r.g_ce_mean, 3.0);
    EXPECT_DOUBLE_EQ(r.g_ptr_mean, 1.0);
    EXPECT_DOUBLE_EQ(r.w, 1.0);
    EXPECT_TRUE(r.gated_on);

    const BalanceRecord s = balance(Tensor({1, 1}, 1.0), Tensor({1, 1}, 2.0), config_with(RegressionKind::L2, 5.0), true);
    EXPECT_DOUBLE_EQ(s.w, 0.1);
}

TEST(Balance, ZeroPseudoGradientGuard)
{
    const BalanceRecord r = balance(Tensor({2, 3}, 1.0), Tensor({2, 3}, 0.0), config_with(RegressionKind::L2), true);
    EXPECT_EQ(r.w, 0.0);
    EXPECT_FALSE(r.gated_on);
}

TEST(Balance, GateClosedGivesZeroWeight)
{
    const BalanceRecord r = balance(Tensor({2, 3}, 1.0), Tensor({2, 3}, 1.0), config_with(RegressionKind::L2), false);
    EXPECT_EQ(r.w, 0.0);
    EXPECT_FALSE(r.gated_on);
}

TEST(Balance, RatioIdentityAndInvariances)
{
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const Tensor ce = test::random_tensor({8, 6}, seed);
        const Tensor ptr = test::random_tensor({8, 6}, seed + 1000, 3.0);
        const double ratio = 0.5 + static_cast<double>(seed % 7);
        const BalanceRecord r = balance(ce, ptr, config_with(RegressionKind::L2, ratio), true);
        // Mean weighted PtR norm equals mean CE norm over R.
        std::vector<double> weighted;
        for (double g : r.per_instance_g_ptr)
            weighted.push_back(r.w * g);
        EXPECT_NEAR(mean(weighted), mean(r.per_instance_g_ce) / ratio, 1e-12 * mean(r.per_instance_g_ce));

        // Rescaling the pseudo gradient rescales w inversely.
        Tensor scaled = ptr;
        for (double& v : scaled.values())
            v *= 4.0;
        EXPECT_NEAR(balance(ce, scaled, config_with(RegressionKind::L2, ratio), true).w, r.w / 4.0, 1e-12 * r.w);

        // Permuting instances does not change w.
        Tensor ce_p(ce.shape()), ptr_p(ptr.shape());
        for (std::size_t b = 0; b < 8; ++b)
            for (std::size_t k = 0; k < 6; ++k) {
                ce_p.at(b, k) = ce.at(7 - b, k);
                ptr_p.at(b, k) = ptr.at(7 - b, k);
            }
        EXPECT_NEAR(balance(ce_p, ptr_p, config_with(RegressionKind::L2, ratio), true).w, r.w, 1e-12 * r.w);
    }
}

TEST(Gate, OpensOnPreviousEpochAndLatches)
{
    Gate gate(1.0);
    EXPECT_FALSE(gate.observe(std::nullopt));
    EXPECT_FALSE(gate.observe(1.0));
    EXPECT_TRUE(gate.observe(0.9));
    EXPECT_TRUE(gate.observe(5.0));
    EXPECT_TRUE(gate.is_open());
}

TEST(PtrConfig, Validation)
{
    PtrConfig c;
    EXPECT_NO_THROW(c.validate());
    c.ratio = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.target_mean = -1.0;
    EXPECT_THROW(c.validate(), ConfigError);
}
