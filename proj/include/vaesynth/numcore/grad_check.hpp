#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <type_traits>

#include "vaesynth/errors.hpp"
#include "vaesynth/numcore/param_set.hpp"
#include "vaesynth/numcore/tape.hpp"

namespace vaesynth::numcore {

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_parameter;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t elements_checked = 0;
    double tolerance = 0.0;

    bool passed() const noexcept { return max_rel_error < tolerance; }
};

/// Builds a scalar-valued graph on the given tape from the given parameters.
using GraphFn = std::function<Tape<double>::Var(Tape<double>&, ParamSet<double>&)>;

/// Relative error with an absolute floor so vanishing gradients compare on absolute terms.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central-difference check of every parameter element. Verification (64-bit) mode only.
inline GradCheckReport grad_check(const GraphFn& graph, ParamSet<double>& params, double tol,
                                  double step = 1e-5) {
    GradCheckReport report;
    report.tolerance = tol;

    params.zero_grad();
    {
        Tape<double> tape;
        const auto root = graph(tape, params);
        if (tape.value(root).numel() != 1) {
            throw ShapeError("grad_check: graph output must be scalar, got " +
                             shape_str(tape.value(root).shape()));
        }
        tape.backward(root);
    }

    const auto eval = [&]() {
        Tape<double> tape;
        return tape.value(graph(tape, params)).item();
    };

    for (auto& p : params) {
        auto w = p.value.data();
        const auto g = p.value.grad();
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double orig = w[i];
            w[i] = orig + step;
            const double plus = eval();
            w[i] = orig - step;
            const double minus = eval();
            w[i] = orig;
            const double numeric = (plus - minus) / (2.0 * step);
            const double err = relative_error(g[i], numeric);
            ++report.elements_checked;
            if (err > report.max_rel_error) {
                report.max_rel_error = err;
                report.worst_parameter = p.name;
                report.worst_index = i;
                report.worst_analytic = g[i];
                report.worst_numeric = numeric;
            }
        }
    }
    return report;
}

}  // namespace vaesynth::numcore
