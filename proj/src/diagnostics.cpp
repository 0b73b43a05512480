#include "ptrlab/diagnostics.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ptrlab {
namespace {

constexpr double kRowSumTolerance = 1e-9;

void check_probs(const Tensor& probs, std::span<const std::size_t> labels)
{
    if (probs.rank() != 2 || probs.dim(0) != labels.size())
        throw std::invalid_argument("probabilities " + shape_to_string(probs.shape()) + " do not match "
                                    + std::to_string(labels.size()) + " labels");
}

} // namespace

ConfusionMass confusion_mass(const Tensor& probs, std::span<const std::size_t> labels)
{
    check_probs(probs, labels);
    const std::size_t classes = probs.dim(1);
    ConfusionMass c{Tensor({classes, classes}), labels.size()};
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto row = probs.row(i);
        double sum = 0.0;
        for (double p : row) {
            if (p < 0.0)
                throw std::invalid_argument("sample " + std::to_string(i) + ": negative probability");
            sum += p;
        }
        if (std::abs(sum - 1.0) > kRowSumTolerance)
            throw std::invalid_argument("sample " + std::to_string(i) + ": probabilities sum to "
                                        + std::to_string(sum));
        if (labels[i] >= classes)
            throw std::out_of_range("sample " + std::to_string(i) + ": label out of range");
        for (std::size_t k = 0; k < classes; ++k)
            c.matrix.at(labels[i], k) += row[k];
    }
    return c;
}

double diag_mass(const ConfusionMass& c)
{
    double s = 0.0;
    for (std::size_t k = 0; k < c.matrix.dim(0); ++k)
        s += c.matrix.at(k, k);
    return s;
}

double offdiag_mass(const ConfusionMass& c)
{
    double total = 0.0;
    for (double v : c.matrix.values())
        total += v;
    return total - diag_mass(c);
}

double entropy_bits(std::span<const double> row)
{
    double h = 0.0;
    for (double p : row)
        if (p > 0.0)
            h -= p * std::log2(p);
    return h;
}

double mean_entropy_bits(const Tensor& probs)
{
    if (probs.rank() != 2 || probs.dim(0) == 0)
        return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < probs.dim(0); ++i)
        total += entropy_bits(probs.row(i));
    return total / static_cast<double>(probs.dim(0));
}

std::size_t argmax(std::span<const double> row)
{
    std::size_t best = 0;
    for (std::size_t k = 1; k < row.size(); ++k)
        if (row[k] > row[best])
            best = k;
    return best;
}

double accuracy(const Tensor& probs, std::span<const std::size_t> labels)
{
    check_probs(probs, labels);
    if (labels.empty())
        return 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        correct += argmax(probs.row(i)) == labels[i] ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

RectificationReport rectification(const Tensor& probs_a, const Tensor& probs_b, std::span<const std::size_t> labels)
{
    check_probs(probs_a, labels);
    check_probs(probs_b, labels);
    if (probs_a.shape() != probs_b.shape())
        throw std::invalid_argument("rectification: probability shapes differ");
    RectificationReport r;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool a_ok = argmax(probs_a.row(i)) == labels[i];
        const bool b_ok = argmax(probs_b.row(i)) == labels[i];
        if (a_ok && !b_ok)
            r.true_rectified.push_back(i);
        else if (!a_ok && b_ok)
            r.false_rectified.push_back(i);
        else if (a_ok)
            r.both_correct.push_back(i);
        else
            r.both_wrong.push_back(i);
    }
    return r;
}

DiagnosticsReport diagnose(const Tensor& probs, std::span<const std::size_t> labels, const Tensor* baseline_probs)
{
    const ConfusionMass c = confusion_mass(probs, labels);
    DiagnosticsReport report;
    report.s = diag_mass(c);
    report.s_prime = offdiag_mass(c);
    report.mean_entropy_bits = mean_entropy_bits(probs);
    report.accuracy = accuracy(probs, labels);
    report.n_samples = labels.size();
    if (baseline_probs != nullptr)
        report.rectification = rectification(probs, *baseline_probs, labels);
    return report;
}

nlohmann::json to_json(const DiagnosticsReport& report)
{
    nlohmann::json j{
        {"S", report.s},
        {"S_prime", report.s_prime},
        {"mean_entropy_bits", report.mean_entropy_bits},
        {"accuracy", report.accuracy},
        {"n_samples", report.n_samples},
    };
    if (report.rectification) {
        const auto& r = *report.rectification;
        j["rectification"] = {
            {"counts",
             {{"true_rectified", r.true_rectified.size()},
              {"false_rectified", r.false_rectified.size()},
              {"both_correct", r.both_correct.size()},
              {"both_wrong", r.both_wrong.size()}}},
            {"true_rectified", r.true_rectified},
            {"false_rectified", r.false_rectified},
            {"both_correct", r.both_correct},
            {"both_wrong", r.both_wrong},
        };
    }
    return j;
}

std::string confusion_mass_csv(const ConfusionMass& c)
{
    std::ostringstream out;
    out.precision(17);
    for (std::size_t r = 0; r < c.matrix.dim(0); ++r) {
        for (std::size_t k = 0; k < c.matrix.dim(1); ++k)
            out << (k > 0 ? "," : "") << c.matrix.at(r, k);
        out << '\n';
    }
    return out.str();
}

} // namespace ptrlab
