#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "kae/tape.hpp"
#include "kae/tensor.hpp"

namespace kae {

struct GradCheckReport {
    // Worst elementwise discrepancy between analytic and central-difference
    // gradients, measured as |a - fd| / max(1, |a|, |fd|).
    double max_err = 0.0;
    std::size_t checked = 0;
};

// Compares tape gradients of a scalar-valued builder against central
// differences.  `build` receives a fresh tape plus one Var per input and must
// return a scalar Var; it is re-invoked for every perturbed evaluation.
template <typename BuildFn>
GradCheckReport check_gradients(std::vector<Tensor> inputs, BuildFn&& build, double step = 1e-6) {
    auto eval = [&](const std::vector<Tensor>& xs) {
        Tape tape;
        std::vector<Var> vars;
        vars.reserve(xs.size());
        for (const auto& x : xs) vars.push_back(constant(tape, x));
        Var loss = build(tape, vars);
        return tape.value(loss.id)[0];
    };

    std::vector<Tensor> analytic;
    {
        Tape tape;
        std::vector<Var> vars;
        vars.reserve(inputs.size());
        for (const auto& x : inputs) vars.push_back(constant(tape, x));
        Var loss = build(tape, vars);
        tape.backward(loss.id);
        for (const Var& v : vars) {
            const Tensor& g = tape.grad(v.id);
            analytic.push_back(g.empty() ? Tensor::zeros(tape.value(v.id).shape()) : g);
        }
    }

    GradCheckReport report;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (std::size_t e = 0; e < inputs[i].numel(); ++e) {
            const double saved = inputs[i][e];
            inputs[i][e] = saved + step;
            const double fp = eval(inputs);
            inputs[i][e] = saved - step;
            const double fm = eval(inputs);
            inputs[i][e] = saved;
            const double fd = (fp - fm) / (2.0 * step);
            const double a = analytic[i][e];
            const double denom = std::max({1.0, std::abs(a), std::abs(fd)});
            report.max_err = std::max(report.max_err, std::abs(a - fd) / denom);
            ++report.checked;
        }
    }
    return report;
}

}  // namespace kae
