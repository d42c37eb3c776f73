#pragma once

namespace fable {

/// Standard normal CDF.
double normal_cdf(double x);

/// Standard normal quantile; throws InvalidAlpha outside (0, 1).
double normal_quantile(double prob);

}  // namespace fable
