#include "taugen/nn/gradcheck.hpp"

#include <cmath>

#include "taugen/errors.hpp"

namespace taugen::nn {

namespace {

double eval_scalar(const std::function<Var(Workspace&)>& build, ParamStore& ps) {
    Workspace w;
    Var out = build(w);
    if (out->value.numel() != 1) throw CheckError("grad_check target must be scalar");
    const double v = out->value.v[0];
    if (!std::isfinite(v)) throw CheckError("grad_check target is non-finite");
    return v;
}

}  // namespace

GradCheckReport grad_check(const std::function<Var(Workspace&)>& build, ParamStore& ps,
                           double step, const std::vector<Coord>& coords) {
    if (!(step > 0.0)) throw ParameterError("grad_check step must be > 0");

    Workspace w;
    Var loss = build(w);
    if (loss->value.numel() != 1) throw CheckError("grad_check target must be scalar");
    if (!std::isfinite(loss->value.v[0])) throw CheckError("grad_check target is non-finite");
    backward(loss);
    const GradMap analytic = w.grads();

    std::vector<Coord> all;
    const std::vector<Coord>* use = &coords;
    if (coords.empty()) {
        for (const auto& [name, g] : analytic)
            for (int64_t i = 0; i < g.numel(); ++i) all.push_back({name, i});
        use = &all;
    }

    GradCheckReport report;
    for (const Coord& c : *use) {
        auto it = analytic.find(c.name);
        if (it == analytic.end()) throw LookupError("grad_check: unknown parameter " + c.name);
        if (c.index < 0 || c.index >= it->second.numel())
            throw ParameterError("grad_check: coord index out of range for " + c.name);
        const double a = it->second.v[size_t(c.index)];

        double& slot = ps.mutable_value(c.name).v[size_t(c.index)];
        const double saved = slot;
        slot = saved + step;
        const double fp = eval_scalar(build, ps);
        slot = saved - step;
        const double fm = eval_scalar(build, ps);
        slot = saved;

        const double numeric = (fp - fm) / (2.0 * step);
        const double err =
            std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
        if (err > report.max_rel_err) {
            report.max_rel_err = err;
            report.worst = c;
        }
        ++report.coords_checked;
    }
    return report;
}

}  // namespace taugen::nn
