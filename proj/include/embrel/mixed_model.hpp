#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "embrel/matrix.hpp"

namespace embrel {

enum class ColumnKind { Intercept, Continuous, Dummy };

struct ColumnInfo {
    std::string name;
    ColumnKind kind = ColumnKind::Continuous;
    /// Factor group for leave-one-out ΔR²: all dummies of a categorical
    /// predictor share one group id; a continuous column's group is its own
    /// name.
    std::string factor;
};

/// Design for the crossed-random-intercept regression. X carries a leading
/// intercept column; each row belongs to one algorithm group and one corpus
/// group.
struct RegressionDataset {
    std::vector<double> y;
    Matrix x;  // n x p
    std::vector<ColumnInfo> columns;
    std::vector<int> algorithm_group;  // 0-based level codes, size n
    std::vector<int> corpus_group;
    std::vector<std::string> algorithm_levels;
    std::vector<std::string> corpus_levels;

    std::size_t n() const { return y.size(); }
    std::size_t p() const { return x.cols(); }
    void validate() const;  // throws on inconsistent shapes or bad codes
};

struct StandardizeInfo {
    double y_mean = 0.0, y_sd = 1.0;
    std::vector<double> col_means;  // NaN for untouched columns
    std::vector<double> col_sds;
    std::vector<std::string> dropped_constant;
};

/// Z-scores the outcome and every continuous predictor (mean 0, sd 1 with
/// the n-1 divisor); intercept and dummy columns pass through. Constant
/// continuous columns are dropped with a warning recorded in info.
RegressionDataset standardize(const RegressionDataset& data, StandardizeInfo* info = nullptr);

struct LmmFit {
    std::vector<double> beta;              // aligned with dataset columns; 0 for dropped
    std::vector<double> se;                // NaN for dropped
    std::vector<std::string> beta_names;
    double sigma2_algorithm = 0.0;  // variance of the algorithm intercepts
    double sigma2_corpus = 0.0;     // variance of the corpus intercepts
    double sigma2_residual = 0.0;
    double loglik = 0.0;
    bool converged = false;
    double r2_fixed = 0.0, r2_algorithm = 0.0, r2_corpus = 0.0, r2_total = 0.0;
    std::vector<std::string> warnings;
    std::vector<std::string> dropped_columns;  // exactly-collinear columns
};

struct LmmOptions {
    double simplex_tol = 1e-6;  // convergence: simplex diameter in log-ratio space
    int max_iter = 500;
    /// Exactly-collinear columns are dropped with a warning by default;
    /// set to true to fail instead (the error names the columns).
    bool fail_on_collinear = false;
};

/// Maximum-likelihood fit of
///   y = X beta + u[algorithm] + v[corpus] + eps,
/// profiling the likelihood over the two variance ratios and maximizing
/// with a Nelder-Mead search in log-ratio space seeded from a coarse grid.
/// A factor with fewer than 2 levels gets its component fixed at 0 with a
/// warning. Requires n > p + q_a + q_c.
LmmFit fit_lmm(const RegressionDataset& data, const LmmOptions& options = {});

struct R2Parts {
    double fixed = 0.0, algorithm = 0.0, corpus = 0.0, total = 0.0;
};

/// Variance-partitioning R²: with v = var(X beta) + s2_a + s2_c + s2_e,
/// the shares are var(X beta)/v, s2_a/v, s2_c/v and their sum.
R2Parts r2_decomposition(const LmmFit& fit, const RegressionDataset& data);

/// Refits without every column of the named factor and returns
/// r2_fixed(full) - r2_fixed(reduced).
double delta_r2(const RegressionDataset& data, std::string_view factor,
                const LmmOptions& options = {});

}  // namespace embrel
