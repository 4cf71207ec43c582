#pragma once

#include "dmrac/core_math.hpp"

namespace dmrac {

/// Gaussian bank Phi_i = exp(-||x - c_i||^2 / (2 w_i^2)), one center per row.
/// With `bias_feature` a constant 1 is appended as the last element.
Vector rbf_features(const Matrix& centers, const Vector& widths, const Vector& x, bool bias_feature = false);

}  // namespace dmrac
