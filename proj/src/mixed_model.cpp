#include "embrel/mixed_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "embrel/errors.hpp"
#include "embrel/stats_util.hpp"

namespace embrel {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kLogLambdaMin = -23.0;  // lambda ~ 1e-10: component effectively zero
constexpr double kLogLambdaMax = 18.5;   // lambda ~ 1e8

int group_count(const std::vector<int>& codes) {
    int q = 0;
    for (int c : codes) q = std::max(q, c + 1);
    return q;
}

// Sufficient statistics: every profile evaluation works from these, so a
// single pass over the data supports the whole 2-D ratio search.
struct Sufficient {
    std::size_t n = 0;
    std::vector<std::size_t> active;  // surviving column indices
    Matrix xtx;                       // over active columns
    std::vector<double> xty;
    double yty = 0.0;
    bool use_a = false, use_c = false;
    std::size_t qa = 0, qc = 0, q = 0;
    std::vector<double> z_counts;  // diag of ZtZ (group sizes), a-levels then c-levels
    Matrix nac;                    // qa x qc cross counts
    Matrix ztx;                    // q x p_active
    std::vector<double> zty;
};

struct ProfilePoint {
    double objective = std::numeric_limits<double>::infinity();
    double rhr = 0.0;
    double logdet_h = 0.0;
    std::vector<double> beta;
    Matrix xhx_chol;
    bool ok = false;
};

ProfilePoint evaluate_profile(const Sufficient& s, double lambda_a, double lambda_c) {
    ProfilePoint out;
    const std::size_t p = s.active.size();
    const std::size_t q = s.q;

    double logdet_s = 0.0;
    Matrix t_cols;                 // q x p, S^{-1} ZtX
    std::vector<double> t_y;       // S^{-1} Zty
    if (q > 0) {
        Matrix smat(q, q);
        for (std::size_t i = 0; i < q; ++i) smat(i, i) = s.z_counts[i];
        for (std::size_t i = 0; i < s.qa; ++i) smat(i, i) += 1.0 / lambda_a;
        for (std::size_t j = 0; j < s.qc; ++j) smat(s.qa + j, s.qa + j) += 1.0 / lambda_c;
        for (std::size_t i = 0; i < s.qa; ++i)
            for (std::size_t j = 0; j < s.qc; ++j) {
                smat(i, s.qa + j) = s.nac(i, j);
                smat(s.qa + j, i) = s.nac(i, j);
            }
        Matrix lower;
        if (!cholesky(smat, lower)) return out;
        for (std::size_t i = 0; i < q; ++i) logdet_s += 2.0 * std::log(lower(i, i));

        t_y = cholesky_solve(lower, s.zty);
        t_cols = Matrix(q, p);
        std::vector<double> rhs(q);
        for (std::size_t j = 0; j < p; ++j) {
            for (std::size_t i = 0; i < q; ++i) rhs[i] = s.ztx(i, j);
            const auto col = cholesky_solve(lower, rhs);
            for (std::size_t i = 0; i < q; ++i) t_cols(i, j) = col[i];
        }
    }

    Matrix xhx = s.xtx;
    std::vector<double> xhy = s.xty;
    double yhy = s.yty;
    if (q > 0) {
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < p; ++j) {
                double acc = 0.0;
                for (std::size_t kk = 0; kk < q; ++kk) acc += s.ztx(kk, i) * t_cols(kk, j);
                xhx(i, j) -= acc;
            }
        for (std::size_t i = 0; i < p; ++i) {
            double acc = 0.0;
            for (std::size_t kk = 0; kk < q; ++kk) acc += s.ztx(kk, i) * t_y[kk];
            xhy[i] -= acc;
        }
        double acc = 0.0;
        for (std::size_t kk = 0; kk < q; ++kk) acc += s.zty[kk] * t_y[kk];
        yhy -= acc;
    }

    if (!cholesky(xhx, out.xhx_chol)) return out;
    out.beta = cholesky_solve(out.xhx_chol, xhy);

    double fit_part = 0.0;
    for (std::size_t i = 0; i < p; ++i) fit_part += out.beta[i] * xhy[i];
    out.rhr = std::max(yhy - fit_part, 0.0);

    out.logdet_h = logdet_s;
    if (s.use_a) out.logdet_h += static_cast<double>(s.qa) * std::log(lambda_a);
    if (s.use_c) out.logdet_h += static_cast<double>(s.qc) * std::log(lambda_c);

    out.objective = static_cast<double>(s.n) * std::log(std::max(out.rhr, 1e-300)) +
                    out.logdet_h;
    out.ok = true;
    return out;
}

// Minimal Nelder-Mead for the 1-D/2-D log-ratio search.
struct SimplexResult {
    std::vector<double> x;
    double value = 0.0;
    bool converged = false;
};

SimplexResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                          std::vector<double> x0, double step, double tol, int max_iter) {
    const std::size_t dim = x0.size();
    std::vector<std::vector<double>> pts(dim + 1, x0);
    for (std::size_t i = 0; i < dim; ++i) pts[i + 1][i] += step;
    std::vector<double> vals(dim + 1);
    for (std::size_t i = 0; i <= dim; ++i) vals[i] = f(pts[i]);

    SimplexResult out;
    for (int iter = 0; iter < max_iter; ++iter) {
        std::vector<std::size_t> order(dim + 1);
        std::iota(order.begin(), order.end(), 0u);
        std::sort(order.begin(), order.end(),
                  [&vals](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });

        double diameter = 0.0;
        for (std::size_t i = 1; i <= dim; ++i)
            for (std::size_t dd = 0; dd < dim; ++dd)
                diameter = std::max(diameter,
                                    std::abs(pts[order[i]][dd] - pts[order[0]][dd]));
        if (diameter < tol) {
            out.converged = true;
            out.x = pts[order[0]];
            out.value = vals[order[0]];
            return out;
        }

        const std::size_t best = order[0], worst = order[dim];
        std::vector<double> centroid(dim, 0.0);
        for (std::size_t i = 0; i < dim; ++i)
            for (std::size_t dd = 0; dd < dim; ++dd) centroid[dd] += pts[order[i]][dd];
        for (double& c : centroid) c /= static_cast<double>(dim);

        auto blend = [&](double coef) {
            std::vector<double> x(dim);
            for (std::size_t dd = 0; dd < dim; ++dd)
                x[dd] = centroid[dd] + coef * (centroid[dd] - pts[worst][dd]);
            return x;
        };

        const auto reflected = blend(1.0);
        const double fr = f(reflected);
        if (fr < vals[best]) {
            const auto expanded = blend(2.0);
            const double fe = f(expanded);
            if (fe < fr) {
                pts[worst] = expanded;
                vals[worst] = fe;
            } else {
                pts[worst] = reflected;
                vals[worst] = fr;
            }
        } else if (fr < vals[order[dim - 1]]) {
            pts[worst] = reflected;
            vals[worst] = fr;
        } else {
            const auto contracted = blend(-0.5);
            const double fc = f(contracted);
            if (fc < vals[worst]) {
                pts[worst] = contracted;
                vals[worst] = fc;
            } else {
                for (std::size_t i = 0; i <= dim; ++i) {
                    if (i == best) continue;
                    for (std::size_t dd = 0; dd < dim; ++dd)
                        pts[i][dd] = pts[best][dd] + 0.5 * (pts[i][dd] - pts[best][dd]);
                    vals[i] = f(pts[i]);
                }
            }
        }
    }
    const auto best_it = std::min_element(vals.begin(), vals.end());
    out.x = pts[static_cast<std::size_t>(best_it - vals.begin())];
    out.value = *best_it;
    out.converged = false;
    return out;
}

}  // namespace

void RegressionDataset::validate() const {
    const std::size_t nn = y.size();
    if (nn == 0) throw Error("regression dataset is empty");
    if (x.rows() != nn) throw Error("regression dataset: X row count != y length");
    if (columns.size() != x.cols()) throw Error("regression dataset: column metadata mismatch");
    if (algorithm_group.size() != nn || corpus_group.size() != nn)
        throw Error("regression dataset: group code length mismatch");
    if (columns.empty() || columns.front().kind != ColumnKind::Intercept)
        throw Error("regression dataset needs a leading intercept column");
    for (double v : y)
        if (!std::isfinite(v)) throw Error("regression dataset: non-finite outcome");
    for (std::size_t i = 0; i < nn; ++i) {
        if (algorithm_group[i] < 0 || corpus_group[i] < 0)
            throw Error("regression dataset: negative group code");
        for (double v : x.row(i))
            if (!std::isfinite(v)) throw Error("regression dataset: non-finite design cell");
    }
}

RegressionDataset standardize(const RegressionDataset& data, StandardizeInfo* info) {
    data.validate();
    RegressionDataset out;
    out.algorithm_group = data.algorithm_group;
    out.corpus_group = data.corpus_group;
    out.algorithm_levels = data.algorithm_levels;
    out.corpus_levels = data.corpus_levels;

    StandardizeInfo local;
    local.col_means.assign(data.p(), kNaN);
    local.col_sds.assign(data.p(), kNaN);

    const double y_mean = mean_of(data.y);
    const double y_sd = std::sqrt(sample_variance(data.y, y_mean));
    if (y_sd == 0.0) throw Error("standardize: outcome is constant");
    local.y_mean = y_mean;
    local.y_sd = y_sd;
    out.y.resize(data.n());
    for (std::size_t i = 0; i < data.n(); ++i) out.y[i] = (data.y[i] - y_mean) / y_sd;

    std::vector<std::size_t> keep;
    std::vector<double> col(data.n());
    for (std::size_t j = 0; j < data.p(); ++j) {
        if (data.columns[j].kind != ColumnKind::Continuous) {
            keep.push_back(j);
            continue;
        }
        for (std::size_t i = 0; i < data.n(); ++i) col[i] = data.x(i, j);
        const double mu = mean_of(col);
        const double sd = std::sqrt(sample_variance(col, mu));
        if (sd == 0.0) {
            local.dropped_constant.push_back(data.columns[j].name);
            continue;
        }
        local.col_means[j] = mu;
        local.col_sds[j] = sd;
        keep.push_back(j);
    }

    out.x = Matrix(data.n(), keep.size());
    for (std::size_t jj = 0; jj < keep.size(); ++jj) {
        const std::size_t j = keep[jj];
        out.columns.push_back(data.columns[j]);
        const bool scaled = std::isfinite(local.col_means[j]);
        for (std::size_t i = 0; i < data.n(); ++i)
            out.x(i, jj) = scaled ? (data.x(i, j) - local.col_means[j]) / local.col_sds[j]
                                  : data.x(i, j);
    }
    if (info) *info = std::move(local);
    return out;
}

LmmFit fit_lmm(const RegressionDataset& data, const LmmOptions& options) {
    data.validate();
    const std::size_t n = data.n();
    const std::size_t p_all = data.p();
    const int qa = group_count(data.algorithm_group);
    const int qc = group_count(data.corpus_group);

    LmmFit fit;
    fit.beta.assign(p_all, 0.0);
    fit.se.assign(p_all, kNaN);
    for (const auto& c : data.columns) fit.beta_names.push_back(c.name);

    const bool use_a = qa >= 2;
    const bool use_c = qc >= 2;
    if (!use_a)
        fit.warnings.push_back("algorithm factor has fewer than 2 levels; its variance is fixed at 0");
    if (!use_c)
        fit.warnings.push_back("corpus factor has fewer than 2 levels; its variance is fixed at 0");
    if ((use_a && qa < 4) || (use_c && qc < 4))
        fit.warnings.push_back(
            "variance components over fewer than 4 levels are noisy; interpret with care");
    if (n <= p_all + static_cast<std::size_t>(qa) + static_cast<std::size_t>(qc))
        throw Error("fit_lmm needs n > p + q_algorithm + q_corpus");

    // Full-data cross products.
    Matrix xtx_full(p_all, p_all);
    std::vector<double> xty_full(p_all, 0.0);
    double yty = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = data.x.row(i);
        for (std::size_t a = 0; a < p_all; ++a) {
            xty_full[a] += row[a] * data.y[i];
            for (std::size_t b = a; b < p_all; ++b) xtx_full(a, b) += row[a] * row[b];
        }
        yty += data.y[i] * data.y[i];
    }
    for (std::size_t a = 0; a < p_all; ++a)
        for (std::size_t b = 0; b < a; ++b) xtx_full(a, b) = xtx_full(b, a);

    // Exactly-collinear columns: greedy pivoted elimination on XtX.
    std::vector<std::size_t> active;
    for (std::size_t j = 0; j < p_all; ++j) active.push_back(j);
    for (;;) {
        Matrix sub(active.size(), active.size());
        for (std::size_t a = 0; a < active.size(); ++a)
            for (std::size_t b = 0; b < active.size(); ++b)
                sub(a, b) = xtx_full(active[a], active[b]);
        // Relative pivot test inside a hand-rolled Cholesky pass.
        bool dropped = false;
        Matrix lower(active.size(), active.size());
        for (std::size_t j = 0; j < active.size() && !dropped; ++j) {
            double d = sub(j, j);
            for (std::size_t kk = 0; kk < j; ++kk) d -= lower(j, kk) * lower(j, kk);
            const double ref = std::max(sub(j, j), 1e-300);
            if (d <= 1e-10 * ref) {
                fit.dropped_columns.push_back(data.columns[active[j]].name);
                active.erase(active.begin() + static_cast<std::ptrdiff_t>(j));
                dropped = true;
                break;
            }
            lower(j, j) = std::sqrt(d);
            for (std::size_t i = j + 1; i < active.size(); ++i) {
                double s = sub(i, j);
                for (std::size_t kk = 0; kk < j; ++kk) s -= lower(i, kk) * lower(j, kk);
                lower(i, j) = s / lower(j, j);
            }
        }
        if (!dropped) break;
        if (active.empty()) throw Error("fit_lmm: design matrix has no usable columns");
    }
    if (!fit.dropped_columns.empty()) {
        std::string names;
        for (const auto& s : fit.dropped_columns) names += (names.empty() ? "" : ", ") + s;
        if (options.fail_on_collinear)
            throw Error("fit_lmm: collinear columns: " + names);
        fit.warnings.push_back("dropped exactly-collinear columns: " + names);
    }

    Sufficient suff;
    suff.n = n;
    suff.active = active;
    suff.use_a = use_a;
    suff.use_c = use_c;
    suff.qa = use_a ? static_cast<std::size_t>(qa) : 0;
    suff.qc = use_c ? static_cast<std::size_t>(qc) : 0;
    suff.q = suff.qa + suff.qc;
    suff.yty = yty;
    const std::size_t p = active.size();
    suff.xtx = Matrix(p, p);
    suff.xty.resize(p);
    for (std::size_t a = 0; a < p; ++a) {
        suff.xty[a] = xty_full[active[a]];
        for (std::size_t b = 0; b < p; ++b) suff.xtx(a, b) = xtx_full(active[a], active[b]);
    }
    suff.z_counts.assign(suff.q, 0.0);
    suff.nac = Matrix(suff.qa, suff.qc);
    suff.ztx = Matrix(suff.q, p);
    suff.zty.assign(suff.q, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = data.x.row(i);
        const auto ga = static_cast<std::size_t>(data.algorithm_group[i]);
        const auto gc = static_cast<std::size_t>(data.corpus_group[i]);
        if (use_a) {
            suff.z_counts[ga] += 1.0;
            suff.zty[ga] += data.y[i];
            for (std::size_t a = 0; a < p; ++a) suff.ztx(ga, a) += row[active[a]];
        }
        if (use_c) {
            const std::size_t ci = suff.qa + gc;
            suff.z_counts[ci] += 1.0;
            suff.zty[ci] += data.y[i];
            for (std::size_t a = 0; a < p; ++a) suff.ztx(ci, a) += row[active[a]];
        }
        if (use_a && use_c) suff.nac(ga, gc) += 1.0;
    }

    // Profile objective over the active log-ratios.
    std::vector<int> dims;  // 0 -> lambda_a, 1 -> lambda_c
    if (use_a) dims.push_back(0);
    if (use_c) dims.push_back(1);

    auto lambdas_from = [&](const std::vector<double>& theta) {
        double la = 1e-300, lc = 1e-300;  // inactive components: effectively zero
        std::size_t at = 0;
        for (int dd : dims) {
            const double clamped = std::clamp(theta[at++], kLogLambdaMin, kLogLambdaMax);
            if (dd == 0)
                la = std::exp(clamped);
            else
                lc = std::exp(clamped);
        }
        return std::pair<double, double>(la, lc);
    };
    auto objective = [&](const std::vector<double>& theta) {
        const auto [la, lc] = lambdas_from(theta);
        return evaluate_profile(suff, la, lc).objective;
    };

    std::vector<double> best_theta(dims.size(), 0.0);
    bool converged = true;
    if (!dims.empty()) {
        static const double kGrid[] = {1e-8, 1e-4, 1e-2, 0.1, 0.3, 1.0, 3.0, 10.0, 100.0};
        double best_val = std::numeric_limits<double>::infinity();
        std::vector<double> theta(dims.size(), 0.0);
        const std::size_t grid_n = sizeof(kGrid) / sizeof(kGrid[0]);
        const std::size_t total = dims.size() == 1 ? grid_n : grid_n * grid_n;
        for (std::size_t g = 0; g < total; ++g) {
            theta[0] = std::log(kGrid[g % grid_n]);
            if (dims.size() == 2) theta[1] = std::log(kGrid[g / grid_n]);
            const double val = objective(theta);
            if (val < best_val) {
                best_val = val;
                best_theta = theta;
            }
        }
        const auto result =
            nelder_mead(objective, best_theta, 0.5, options.simplex_tol, options.max_iter);
        best_theta = result.x;
        converged = result.converged;
    }
    fit.converged = converged;
    if (!converged)
        fit.warnings.push_back("ratio search hit the iteration cap; best point returned");

    const auto [la, lc] = lambdas_from(best_theta);
    const ProfilePoint opt = evaluate_profile(suff, la, lc);
    if (!opt.ok) throw Error("fit_lmm: profile evaluation failed at the optimum");

    const double sigma2_eps = opt.rhr / static_cast<double>(n);
    fit.sigma2_residual = sigma2_eps;
    fit.sigma2_algorithm = use_a ? la * sigma2_eps : 0.0;
    fit.sigma2_corpus = use_c ? lc * sigma2_eps : 0.0;
    // Components at the lower clamp are numerically zero.
    if (fit.sigma2_algorithm < 1e-12 * sigma2_eps) fit.sigma2_algorithm = std::max(0.0, fit.sigma2_algorithm);
    if (fit.sigma2_corpus < 1e-12 * sigma2_eps) fit.sigma2_corpus = std::max(0.0, fit.sigma2_corpus);
    fit.loglik = -0.5 * (static_cast<double>(n) *
                             std::log(2.0 * M_PI * std::max(sigma2_eps, 1e-300)) +
                         static_cast<double>(n) + opt.logdet_h);

    // Wald standard errors from the GLS information matrix.
    const std::size_t p_act = active.size();
    std::vector<double> unit(p_act, 0.0);
    for (std::size_t j = 0; j < p_act; ++j) {
        fit.beta[active[j]] = opt.beta[j];
        unit.assign(p_act, 0.0);
        unit[j] = 1.0;
        const auto col = cholesky_solve(opt.xhx_chol, unit);
        fit.se[active[j]] = std::sqrt(std::max(col[j], 0.0) * sigma2_eps);
    }

    const R2Parts parts = r2_decomposition(fit, data);
    fit.r2_fixed = parts.fixed;
    fit.r2_algorithm = parts.algorithm;
    fit.r2_corpus = parts.corpus;
    fit.r2_total = parts.total;
    return fit;
}

R2Parts r2_decomposition(const LmmFit& fit, const RegressionDataset& data) {
    const std::size_t n = data.n();
    std::vector<double> fitted(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = data.x.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < data.p(); ++j) s += row[j] * fit.beta[j];
        fitted[i] = s;
    }
    const double var_fit = sample_variance(fitted);
    const double v_total =
        var_fit + fit.sigma2_algorithm + fit.sigma2_corpus + fit.sigma2_residual;
    R2Parts parts;
    if (v_total > 0.0) {
        parts.fixed = var_fit / v_total;
        parts.algorithm = fit.sigma2_algorithm / v_total;
        parts.corpus = fit.sigma2_corpus / v_total;
        parts.total = parts.fixed + parts.algorithm + parts.corpus;
    }
    return parts;
}

double delta_r2(const RegressionDataset& data, std::string_view factor,
                const LmmOptions& options) {
    std::vector<std::size_t> keep;
    bool found = false;
    for (std::size_t j = 0; j < data.p(); ++j) {
        if (data.columns[j].factor == factor && data.columns[j].kind != ColumnKind::Intercept) {
            found = true;
            continue;
        }
        keep.push_back(j);
    }
    if (!found) throw Error("delta_r2: unknown factor '" + std::string(factor) + "'");
    if (keep.empty()) throw Error("delta_r2: dropping the factor leaves no columns");

    RegressionDataset reduced;
    reduced.y = data.y;
    reduced.algorithm_group = data.algorithm_group;
    reduced.corpus_group = data.corpus_group;
    reduced.algorithm_levels = data.algorithm_levels;
    reduced.corpus_levels = data.corpus_levels;
    reduced.x = Matrix(data.n(), keep.size());
    for (std::size_t jj = 0; jj < keep.size(); ++jj) {
        reduced.columns.push_back(data.columns[keep[jj]]);
        for (std::size_t i = 0; i < data.n(); ++i) reduced.x(i, jj) = data.x(i, keep[jj]);
    }

    const LmmFit full = fit_lmm(data, options);
    const LmmFit part = fit_lmm(reduced, options);
    return full.r2_fixed - part.r2_fixed;
}

}  // namespace embrel
