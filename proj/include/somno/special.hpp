#pragma once

namespace somno::special {

/// Smallest p-value reported; exact zeros are clamped to this.
inline constexpr double kMinPValue = 1e-300;

/// Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1],
/// evaluated with a modified-Lentz continued fraction.
double incomplete_beta(double a, double b, double x);

/// Upper tail P(F > f) of the F distribution with (d1, d2) degrees of freedom.
double f_upper_tail(double f, double d1, double d2);

/// Two-sided P(|T| > |t|) of Student's t with `df` degrees of freedom.
double t_two_sided(double t, double df);

}  // namespace somno::special
