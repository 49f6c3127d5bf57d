#include "embrel/reliability.hpp"

#include <cmath>
#include <limits>

#include "embrel/errors.hpp"
#include "embrel/stats_util.hpp"

namespace embrel {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_shape(const RatingsMatrix& m) {
    if (m.values.rows() < 2 || m.values.cols() < 2)
        throw Error("ratings matrix needs at least 2 rows and 2 columns");
    for (std::size_t i = 0; i < m.values.rows(); ++i)
        for (double v : m.values.row(i))
            if (!std::isfinite(v)) throw Error("ratings matrix has a non-finite cell");
}

double mean_abs_value(const Matrix& m) {
    double s = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (double v : m.row(i)) s += std::abs(v);
    return s / static_cast<double>(m.rows() * m.cols());
}

ReliabilityScore make_score(Estimator est, double numerator, double denominator,
                            double scale, std::size_t n, std::size_t r) {
    ReliabilityScore out;
    out.estimator = est;
    out.n_rows = n;
    out.n_cols = r;
    // Scale-relative degeneracy: tiny bias scores must not flag spuriously.
    if (std::abs(denominator) <= 1e-12 * scale) {
        out.degenerate = true;
        out.value = kNaN;
        out.band = Band::Undefined;
        return out;
    }
    out.value = numerator / denominator;
    out.band = band_of(out.value, est);
    return out;
}

}  // namespace

std::string_view estimator_name(Estimator e) {
    switch (e) {
        case Estimator::Icc21: return "icc21";
        case Estimator::Icc31: return "icc31";
        case Estimator::Alpha: return "alpha";
    }
    return "?";
}

std::string_view band_name(Band b) {
    switch (b) {
        case Band::Poor: return "poor";
        case Band::Moderate: return "moderate";
        case Band::Good: return "good";
        case Band::Excellent: return "excellent";
        case Band::Acceptable: return "acceptable";
        case Band::Unacceptable: return "unacceptable";
        case Band::Undefined: return "undefined";
    }
    return "?";
}

AnovaTable two_way_anova(const RatingsMatrix& m) {
    require_shape(m);
    const Matrix& x = m.values;
    const std::size_t n = x.rows();
    const std::size_t r = x.cols();

    double grand = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (double v : x.row(i)) grand += v;
    grand /= static_cast<double>(n * r);

    std::vector<double> row_mean(n, 0.0), col_mean(r, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < r; ++j) {
            row_mean[i] += x(i, j);
            col_mean[j] += x(i, j);
        }
    for (double& v : row_mean) v /= static_cast<double>(r);
    for (double& v : col_mean) v /= static_cast<double>(n);

    AnovaTable t;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = row_mean[i] - grand;
        t.ss_rows += d * d;
    }
    t.ss_rows *= static_cast<double>(r);
    for (std::size_t j = 0; j < r; ++j) {
        const double d = col_mean[j] - grand;
        t.ss_cols += d * d;
    }
    t.ss_cols *= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < r; ++j) {
            const double resid = x(i, j) - row_mean[i] - col_mean[j] + grand;
            t.ss_error += resid * resid;
            const double dev = x(i, j) - grand;
            t.ss_total += dev * dev;
        }

    t.df_rows = n - 1;
    t.df_cols = r - 1;
    t.df_error = (n - 1) * (r - 1);
    t.ms_rows = t.ss_rows / static_cast<double>(t.df_rows);
    t.ms_cols = t.ss_cols / static_cast<double>(t.df_cols);
    t.ms_error = t.ss_error / static_cast<double>(t.df_error);
    return t;
}

ReliabilityScore icc21(const RatingsMatrix& m) {
    const AnovaTable t = two_way_anova(m);
    const auto n = static_cast<double>(m.values.rows());
    const auto r = static_cast<double>(m.values.cols());
    const double num = t.ms_rows - t.ms_error;
    const double den =
        t.ms_rows + (r - 1.0) * t.ms_error + (r / n) * (t.ms_cols - t.ms_error);
    return make_score(Estimator::Icc21, num, den, mean_abs_value(m.values),
                      m.values.rows(), m.values.cols());
}

ReliabilityScore icc31(const RatingsMatrix& m) {
    const AnovaTable t = two_way_anova(m);
    const auto r = static_cast<double>(m.values.cols());
    const double num = t.ms_rows - t.ms_error;
    const double den = t.ms_rows + (r - 1.0) * t.ms_error;
    return make_score(Estimator::Icc31, num, den, mean_abs_value(m.values),
                      m.values.rows(), m.values.cols());
}

ReliabilityScore cronbach_alpha(const RatingsMatrix& m) {
    require_shape(m);
    const Matrix& x = m.values;
    const std::size_t n = x.rows();
    const std::size_t r = x.cols();

    double sum_item_var = 0.0;
    std::vector<double> col(n);
    for (std::size_t j = 0; j < r; ++j) {
        for (std::size_t i = 0; i < n; ++i) col[i] = x(i, j);
        sum_item_var += sample_variance(col);
    }
    std::vector<double> row_sums(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < r; ++j) row_sums[i] += x(i, j);
    const double total_var = sample_variance(row_sums);

    const auto rr = static_cast<double>(r);
    return make_score(Estimator::Alpha, rr / (rr - 1.0) * (total_var - sum_item_var),
                      total_var, mean_abs_value(x), n, r);
}

Band band_of(double value, Estimator estimator) {
    if (!std::isfinite(value)) return Band::Undefined;
    if (estimator == Estimator::Alpha)
        return value >= 0.7 ? Band::Acceptable : Band::Unacceptable;
    if (value < 0.5) return Band::Poor;
    if (value < 0.75) return Band::Moderate;
    if (value < 0.9) return Band::Good;
    return Band::Excellent;
}

namespace {

std::vector<std::string> pair_labels(const std::vector<BasePair>& pairs) {
    std::vector<std::string> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(p.label());
    return out;
}

std::vector<std::string> rule_labels(const std::vector<ScoringRule>& rules) {
    std::vector<std::string> out;
    out.reserve(rules.size());
    for (const auto& r : rules) out.emplace_back(rule_name(r.kind));
    return out;
}

void zscore_columns_inplace(Matrix& x) {
    std::vector<double> col(x.rows());
    for (std::size_t j = 0; j < x.cols(); ++j) {
        for (std::size_t i = 0; i < x.rows(); ++i) col[i] = x(i, j);
        const double mu = mean_of(col);
        const double sd = std::sqrt(sample_variance(col, mu));
        for (std::size_t i = 0; i < x.rows(); ++i)
            x(i, j) = sd > 0.0 ? (x(i, j) - mu) / sd : x(i, j) - mu;
    }
}

}  // namespace

RetestMatrices build_retest_matrices(const BiasTensor& b) {
    RetestMatrices out;
    const std::size_t g = b.n_pairs();
    const std::size_t t = b.n_targets();
    const std::size_t k = b.n_models();

    for (std::size_t s = 0; s < b.n_rules(); ++s) {
        const RuleKind rule = b.rules()[s].kind;
        if (k < 2) {
            out.skipped.push_back({"rule", std::string(rule_name(rule)),
                                   "fewer than 2 models", rule});
            continue;
        }
        if (g >= 2) {
            for (std::size_t ti = 0; ti < t; ++ti) {
                RatingsMatrix m;
                m.values = Matrix(g, k);
                for (std::size_t gi = 0; gi < g; ++gi)
                    for (std::size_t ki = 0; ki < k; ++ki)
                        m.values(gi, ki) = b.at(s, gi, ti, ki);
                m.row_labels = pair_labels(b.pairs());
                m.col_labels = b.models();
                m.orientation = "rows=base pairs, cols=seed models";
                out.per_target.push_back({rule, b.targets()[ti], std::move(m)});
            }
        } else {
            out.skipped.push_back({"target_family", std::string(rule_name(rule)),
                                   "fewer than 2 base pairs", rule});
        }
        if (t >= 2) {
            for (std::size_t gi = 0; gi < g; ++gi) {
                RatingsMatrix m;
                m.values = Matrix(t, k);
                for (std::size_t ti = 0; ti < t; ++ti)
                    for (std::size_t ki = 0; ki < k; ++ki)
                        m.values(ti, ki) = b.at(s, gi, ti, ki);
                m.row_labels = b.targets();
                m.col_labels = b.models();
                m.orientation = "rows=target words, cols=seed models";
                out.per_pair.push_back({rule, b.pairs()[gi].label(), std::move(m)});
            }
        } else {
            out.skipped.push_back({"pair_family", std::string(rule_name(rule)),
                                   "fewer than 2 target words", rule});
        }
    }
    return out;
}

InterraterMatrices build_interrater_matrices(const MeanBiasCube& cube, bool zscore_columns) {
    InterraterMatrices out;
    const std::size_t s = cube.n_rules();
    const std::size_t g = cube.n_pairs();
    const std::size_t t = cube.n_targets();
    if (s < 2) {
        out.skipped.push_back({"all", "", "fewer than 2 scoring rules", std::nullopt});
        return out;
    }

    const auto rules = rule_labels(cube.rules());
    if (g >= 2) {
        for (std::size_t ti = 0; ti < t; ++ti) {
            RatingsMatrix m;
            m.values = Matrix(g, s);
            for (std::size_t gi = 0; gi < g; ++gi)
                for (std::size_t si = 0; si < s; ++si) m.values(gi, si) = cube.at(si, gi, ti);
            if (zscore_columns) zscore_columns_inplace(m.values);
            m.row_labels = pair_labels(cube.pairs());
            m.col_labels = rules;
            m.orientation = "rows=base pairs, cols=scoring rules";
            out.per_target.push_back({cube.targets()[ti], std::move(m)});
        }
    } else {
        out.skipped.push_back({"target_family", "", "fewer than 2 base pairs", std::nullopt});
    }
    if (t >= 2) {
        for (std::size_t gi = 0; gi < g; ++gi) {
            RatingsMatrix m;
            m.values = Matrix(t, s);
            for (std::size_t ti = 0; ti < t; ++ti)
                for (std::size_t si = 0; si < s; ++si) m.values(ti, si) = cube.at(si, gi, ti);
            if (zscore_columns) zscore_columns_inplace(m.values);
            m.row_labels = cube.targets();
            m.col_labels = rules;
            m.orientation = "rows=target words, cols=scoring rules";
            out.per_pair.push_back({cube.pairs()[gi].label(), std::move(m)});
        }
    } else {
        out.skipped.push_back({"pair_family", "", "fewer than 2 target words", std::nullopt});
    }
    return out;
}

InternalMatrices build_internal_matrices(const MeanBiasCube& cube,
                                         const std::vector<Query>& queries) {
    InternalMatrices out;
    const std::size_t g = cube.n_pairs();
    const std::size_t t = cube.n_targets();

    for (std::size_t s = 0; s < cube.n_rules(); ++s) {
        const RuleKind rule = cube.rules()[s].kind;
        for (const auto& query : queries) {
            std::vector<std::size_t> cols;
            std::vector<std::string> present, absent;
            for (const auto& word : query.words) {
                bool found = false;
                for (std::size_t ti = 0; ti < t; ++ti)
                    if (cube.targets()[ti] == word) {
                        cols.push_back(ti);
                        present.push_back(word);
                        found = true;
                        break;
                    }
                if (!found) absent.push_back(word);
            }
            if (g < 2 || cols.size() < 2) {
                out.skipped.push_back({"query", query.name,
                                       g < 2 ? "fewer than 2 base pairs"
                                             : "fewer than 2 query words in vocabulary",
                                       rule});
                continue;
            }
            RatingsMatrix m;
            m.values = Matrix(g, cols.size());
            for (std::size_t gi = 0; gi < g; ++gi)
                for (std::size_t ci = 0; ci < cols.size(); ++ci)
                    m.values(gi, ci) = cube.at(s, gi, cols[ci]);
            m.row_labels = pair_labels(cube.pairs());
            m.col_labels = present;
            m.orientation = "rows=base pairs, cols=query words";
            out.queries.push_back({rule, query.name, std::move(m), std::move(absent)});
        }

        if (t >= 2 && g >= 2) {
            RatingsMatrix m;
            m.values = Matrix(t, g);
            for (std::size_t ti = 0; ti < t; ++ti)
                for (std::size_t gi = 0; gi < g; ++gi) m.values(ti, gi) = cube.at(s, gi, ti);
            m.row_labels = cube.targets();
            m.col_labels = pair_labels(cube.pairs());
            m.orientation = "rows=target words, cols=base pairs";
            out.pair_ensemble.push_back({rule, std::move(m)});
        } else {
            out.skipped.push_back({"basepair_ensemble", std::string(rule_name(rule)),
                                   t < 2 ? "fewer than 2 target words"
                                         : "fewer than 2 base pairs",
                                   rule});
        }
    }
    return out;
}

}  // namespace embrel
