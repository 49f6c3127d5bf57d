#pragma once

#include <cstddef>
#include <span>

namespace embrel {

double mean_of(std::span<const double> x);

/// Sample variance with divisor n-1. This divisor convention is used
/// everywhere in the library (Cronbach's alpha, z-scoring, t tests); the
/// choice cancels wherever a ratio of variances is taken.
double sample_variance(std::span<const double> x);
double sample_variance(std::span<const double> x, double mean);

/// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double regularized_incomplete_beta(double a, double b, double x);

/// Two-sided p-value for a Student-t statistic with df degrees of freedom.
/// p(0) = 1 and p decreases monotonically in |t|.
double student_t_two_sided_p(double t, double df);

/// Two-sided normal tail probability, used for Wald flags.
double normal_two_sided_p(double z);

/// Linear-interpolation quantile (the type-7 convention) on a sorted span.
double quantile_type7(std::span<const double> sorted, double p);

}  // namespace embrel
