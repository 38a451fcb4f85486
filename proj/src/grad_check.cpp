#include "moce/grad_check.hpp"

#include <cmath>

namespace moce {

GradCheckReport finite_diff_check(const std::function<double()>& loss,
                                  const std::vector<NamedParam>& params,
                                  const std::vector<const DenseMatrix*>& analytic,
                                  double eps) {
    if (!(eps > 0.0) || eps > 1e-2)
        throw ValidationError("finite_diff_check: eps must lie in (0, 1e-2]");
    if (params.size() != analytic.size())
        throw DimensionError("finite_diff_check: params and analytic gradients disagree");

    GradCheckReport report;
    for (std::size_t p = 0; p < params.size(); ++p) {
        DenseMatrix& theta = *params[p].value;
        const DenseMatrix& grad = *analytic[p];
        if (!theta.same_shape(grad))
            throw DimensionError("finite_diff_check: gradient shape mismatch for " + params[p].name);

        GradCheckRow row;
        row.name = params[p].name;
        for (std::size_t i = 0; i < theta.data.size(); ++i) {
            const double original = theta.data[i];
            theta.data[i] = original + eps;
            const double f_plus = loss();
            theta.data[i] = original - eps;
            const double f_minus = loss();
            theta.data[i] = original;
            if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
                throw NumericError("finite_diff_check: non-finite loss probing " + params[p].name);

            const double numeric = (f_plus - f_minus) / (2.0 * eps);
            const double a = grad.data[i];
            const double abs_err = std::fabs(a - numeric);
            const double rel = abs_err / std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            if (rel > row.max_rel_error) {
                row.max_rel_error = rel;
                row.max_abs_error = abs_err;
                row.worst_analytic = a;
                row.worst_numeric = numeric;
            }
        }
        report.max_rel_error = std::max(report.max_rel_error, row.max_rel_error);
        report.rows.push_back(std::move(row));
    }
    return report;
}

} // namespace moce
