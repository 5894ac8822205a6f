#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "t2ue/core/graph.hpp"
#include "t2ue/core/ops.hpp"

namespace t2ue {

struct GradCheckResult {
    double max_rel_err = 0.0;
    int arg = -1;        // input index of the worst coordinate
    int64_t coord = -1;  // flat offset within that input
};

/// Central-difference gradient check in double precision.
///
/// `make_loss` rebuilds the scalar function from fresh leaf variables; it is
/// called once for the analytic pass and twice per coordinate for the
/// numerical one. Relative error uses max(|analytic|, |numeric|, 1e-8) as the
/// denominator.
inline GradCheckResult grad_check(
    const std::function<Var<double>(Graph<double>&, const std::vector<Var<double>>&)>& make_loss,
    const std::vector<Tensor<double>>& point, double step) {
    if (!(step > 0.0)) throw std::invalid_argument("grad_check: step must be positive");

    auto eval = [&](const std::vector<Tensor<double>>& p, bool with_grad,
                    std::vector<Tensor<double>>* grads) -> double {
        Graph<double> g;
        std::vector<Var<double>> vars;
        vars.reserve(p.size());
        for (const auto& t : p) vars.push_back(g.leaf(t, with_grad));
        Var<double> loss = make_loss(g, vars);
        if (loss.value().size() != 1) throw std::invalid_argument("grad_check: loss must be scalar");
        if (with_grad) {
            g.backward(loss);
            grads->clear();
            for (const auto& v : vars) grads->push_back(g.grad(v.id()));
        }
        return loss.value()[0];
    };

    std::vector<Tensor<double>> analytic;
    double f0 = eval(point, true, &analytic);
    if (!std::isfinite(f0)) throw std::runtime_error("grad_check: non-finite loss at base point");

    GradCheckResult res;
    std::vector<Tensor<double>> p = point;
    for (size_t a = 0; a < p.size(); ++a) {
        for (int64_t i = 0; i < p[a].size(); ++i) {
            double orig = p[a][i];
            p[a][i] = orig + step;
            double fp = eval(p, false, nullptr);
            p[a][i] = orig - step;
            double fm = eval(p, false, nullptr);
            p[a][i] = orig;
            double num = (fp - fm) / (2.0 * step);
            double ana = analytic[a][i];
            if (!std::isfinite(num) || !std::isfinite(ana))
                throw std::runtime_error("grad_check: non-finite gradient at arg " + std::to_string(a) +
                                         " coord " + std::to_string(i));
            double denom = std::max({std::fabs(ana), std::fabs(num), 1e-8});
            double rel = std::fabs(ana - num) / denom;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.arg = static_cast<int>(a);
                res.coord = i;
            }
        }
    }
    return res;
}

}  // namespace t2ue
