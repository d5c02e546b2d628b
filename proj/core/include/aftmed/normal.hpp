#pragma once

namespace aftmed {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double norm_pdf(double z);
double norm_logpdf(double z);
double norm_cdf(double z);
double norm_sf(double z);

// Stable in both tails; usable where norm_sf underflows (z beyond ~38).
double norm_logsf(double z);
double norm_logcdf(double z);

// Inverse CDF, p in (0, 1).
double norm_quantile(double p);

}  // namespace aftmed
