#pragma once

// Shared helpers for the test suites: central finite-difference gradient
// checking and a chi-square tail probability.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "transnar/nn.hpp"
#include "transnar/rng.hpp"
#include "transnar/tasks.hpp"

namespace testutil {

struct GoldenSample {
    transnar::tasks::AlgorithmId algorithm;
    transnar::tasks::FieldList inputs;
    std::string prompt;
    std::string target;
};

inline std::vector<GoldenSample> load_golden(const std::string& path) {
    using transnar::tasks::Array;
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open golden fixture: " + path);
    const nlohmann::json j = nlohmann::json::parse(f);
    std::vector<GoldenSample> out;
    for (const auto& s : j.at("samples")) {
        GoldenSample g;
        g.algorithm = transnar::tasks::algorithm_from_name(s.at("algorithm").get<std::string>());
        const auto& spec = transnar::tasks::task_spec(g.algorithm);
        size_t fi = 0;
        for (const auto& field : s.at("inputs")) {
            const auto& fs = spec.inputs.at(fi++);
            Array a;
            a.dtype = fs.dtype;
            a.rank = fs.rank;
            const auto& v = field.at(1);
            if (fs.rank == 0) {
                a.shape = {};
                a.data = {v.get<double>()};
            } else if (fs.rank == 1) {
                a.shape = {static_cast<long>(v.size())};
                for (const auto& x : v) a.data.push_back(x.get<double>());
            } else {
                a.shape = {static_cast<long>(v.size()), static_cast<long>(v.size())};
                for (const auto& row : v)
                    for (const auto& x : row) a.data.push_back(x.get<double>());
            }
            g.inputs.emplace_back(field.at(0).get<std::string>(), std::move(a));
        }
        g.prompt = s.at("prompt").get<std::string>();
        g.target = s.at("target").get<std::string>();
        out.push_back(std::move(g));
    }
    return out;
}

struct GradCheckReport {
    double max_rel = 0.0;
    long checked = 0;
    std::string worst;
};

/// Central-difference check of analytic gradients computed in precision T
/// against finite differences evaluated on a float64 twin of the same
/// parameters. `params` (precision T) and `dparams` (double) must pair up
/// index-for-index with identical shapes and values.
///
/// compute_grads: zero T grads, forward+backward the T model, return loss.
/// compute_loss_double: forward the double twin, return loss.
///
/// Relative error uses max(|analytic|, |fd|, floor) in the denominator, where
/// floor = floor_frac * RMS of the analytic gradient, so near-zero components
/// are judged against the gradient's own scale.
template <typename T>
GradCheckReport grad_check(std::vector<transnar::Param<T>*> params,
                           std::vector<transnar::Param<double>*> dparams,
                           const std::function<double()>& compute_grads,
                           const std::function<double()>& compute_loss_double, long num_coords, double h,
                           double floor_frac, uint64_t seed) {
    if (params.size() != dparams.size()) throw std::logic_error("grad_check: param set mismatch");
    compute_grads();
    std::vector<transnar::Tensor<T>> saved;
    saved.reserve(params.size());
    double sq = 0.0;
    long n = 0;
    for (auto* p : params) {
        saved.push_back(p->grad);
        for (long j = 0; j < p->grad.numel(); ++j) {
            const double g = static_cast<double>(p->grad.at(j));
            sq += g * g;
            ++n;
        }
    }
    const double rms = std::sqrt(sq / std::max<long>(1, n));
    const double floor = floor_frac * (rms > 0 ? rms : 1.0);

    transnar::Rng rng(seed);
    GradCheckReport rep;
    for (long c = 0; c < num_coords; ++c) {
        // sample a coordinate weighted by parameter size
        long pick = rng.randint(0, n - 1);
        size_t pi = 0;
        while (pick >= params[pi]->value.numel()) {
            pick -= params[pi]->value.numel();
            ++pi;
        }
        transnar::Param<double>& p = *dparams[pi];
        const double orig = p.value.at(pick);
        const double hh = h * (1.0 + std::abs(orig));
        p.value.at(pick) = orig + hh;
        const double lp = compute_loss_double();
        p.value.at(pick) = orig - hh;
        const double lm = compute_loss_double();
        p.value.at(pick) = orig;
        const double fd = (lp - lm) / (2.0 * hh);
        const double an = static_cast<double>(saved[pi].at(pick));
        const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), floor});
        if (rel > rep.max_rel) {
            rep.max_rel = rel;
            char buf[256];
            std::snprintf(buf, sizeof(buf), "%s[%ld] analytic=%.8g fd=%.8g", params[pi]->name.c_str(), pick,
                          an, fd);
            rep.worst = buf;
        }
        ++rep.checked;
    }
    return rep;
}

/// Regularized upper incomplete gamma Q(a, x); series + continued fraction.
inline double igamc(double a, double x) {
    if (x < 0 || a <= 0) return 1.0;
    if (x == 0) return 1.0;
    const double lg = std::lgamma(a);
    if (x < a + 1.0) {
        // lower series, then complement
        double sum = 1.0 / a, term = sum;
        for (int k = 1; k < 500; ++k) {
            term *= x / (a + k);
            sum += term;
            if (std::abs(term) < std::abs(sum) * 1e-15) break;
        }
        const double p = sum * std::exp(-x + a * std::log(x) - lg);
        return 1.0 - p;
    }
    // continued fraction (Lentz)
    double b = x + 1.0 - a, c = 1e308, d = 1.0 / b, f = d;
    for (int k = 1; k < 500; ++k) {
        const double an = -k * (k - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < 1e-300) d = 1e-300;
        c = b + an / c;
        if (std::abs(c) < 1e-300) c = 1e-300;
        d = 1.0 / d;
        const double delta = d * c;
        f *= delta;
        if (std::abs(delta - 1.0) < 1e-15) break;
    }
    return f * std::exp(-x + a * std::log(x) - lg);
}

/// P-value for a chi-square statistic with df degrees of freedom.
inline double chi2_pvalue(double stat, double df) { return igamc(df / 2.0, stat / 2.0); }

}  // namespace testutil
