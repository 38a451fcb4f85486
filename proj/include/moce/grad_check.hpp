#pragma once

#include <functional>
#include <string>
#include <vector>

#include "moce/matrix.hpp"

namespace moce {

struct NamedParam {
    std::string name;
    DenseMatrix* value;
};

struct GradCheckRow {
    std::string name;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::vector<GradCheckRow> rows;
};

/// Central-difference check: perturbs every entry of every parameter by
/// +/- eps, evaluates `loss`, and compares (f+ - f-)/(2 eps) against the
/// provided analytic gradients. Relative error is |a-n| / max(|a|,|n|,1e-8).
/// Parameters are restored after probing. eps must lie in (0, 1e-2].
GradCheckReport finite_diff_check(const std::function<double()>& loss,
                                  const std::vector<NamedParam>& params,
                                  const std::vector<const DenseMatrix*>& analytic,
                                  double eps);

} // namespace moce
