#pragma once

namespace matchlearn {

/// Standard normal CDF.
double normal_cdf(double x);
/// Upper tail 1 - Phi(x), accurate far into the tail.
double normal_sf(double x);
/// Phi^{-1}(p) for p in (0,1); absolute error below 1e-12 across the range.
double normal_quantile(double p);

}  // namespace matchlearn
