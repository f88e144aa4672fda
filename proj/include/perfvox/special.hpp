#pragma once

namespace perfvox {

// ln Gamma(x) for x > 0 (Lanczos, g = 7, with reflection below 0.5).
double ln_gamma(double x);

// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
double reg_inc_beta(double a, double b, double x);

// Upper tail P(F > f) of the F distribution with (d1, d2) degrees of freedom.
double f_sf(double f, double d1, double d2);
double f_cdf(double f, double d1, double d2);

// Student t CDF and two-sided tail probability P(|T| >= |t|).
double t_cdf(double t, double df);
double t_two_sided_p(double t, double df);

double normal_cdf(double z);

}  // namespace perfvox
