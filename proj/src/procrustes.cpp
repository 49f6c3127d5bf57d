#include "embrel/procrustes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "embrel/errors.hpp"
#include "embrel/parallel.hpp"

namespace embrel {

SvdResult jacobi_svd(const Matrix& a) {
    if (a.rows() != a.cols()) throw Error("jacobi_svd expects a square matrix");
    const std::size_t d = a.rows();
    constexpr double kOffDiagTol = 1e-12;
    constexpr int kMaxSweeps = 100;

    // Column-major working copies keep the rotations cache-friendly.
    std::vector<double> work(d * d), vmat(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) work[j * d + i] = a(i, j);
    for (std::size_t j = 0; j < d; ++j) vmat[j * d + j] = 1.0;

    SvdResult out;
    for (out.sweeps = 0; out.sweeps < kMaxSweeps; ++out.sweeps) {
        double worst = 0.0;
        for (std::size_t p = 0; p + 1 < d; ++p) {
            for (std::size_t q = p + 1; q < d; ++q) {
                double* cp = work.data() + p * d;
                double* cq = work.data() + q * d;
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (std::size_t i = 0; i < d; ++i) {
                    app += cp[i] * cp[i];
                    aqq += cq[i] * cq[i];
                    apq += cp[i] * cq[i];
                }
                if (app == 0.0 || aqq == 0.0 || apq == 0.0) continue;
                const double off = std::abs(apq) / std::sqrt(app * aqq);
                worst = std::max(worst, off);
                if (off <= kOffDiagTol) continue;

                const double zeta = (aqq - app) / (2.0 * apq);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                double* vp = vmat.data() + p * d;
                double* vq = vmat.data() + q * d;
                for (std::size_t i = 0; i < d; ++i) {
                    const double wp = cp[i], wq = cq[i];
                    cp[i] = c * wp - s * wq;
                    cq[i] = s * wp + c * wq;
                    const double xp = vp[i], xq = vq[i];
                    vp[i] = c * xp - s * xq;
                    vq[i] = s * xp + c * xq;
                }
            }
        }
        if (worst <= kOffDiagTol) {
            out.converged = true;
            break;
        }
    }

    std::vector<double> sigma(d);
    for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double v = work[j * d + i];
            s += v * v;
        }
        sigma[j] = std::sqrt(s);
    }

    std::vector<std::size_t> perm(d);
    std::iota(perm.begin(), perm.end(), 0u);
    std::stable_sort(perm.begin(), perm.end(),
                     [&sigma](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

    out.u = Matrix(d, d);
    out.v = Matrix(d, d);
    out.singular_values.resize(d);
    const double sig_max = sigma[perm[0]];
    const double rank_tol = sig_max * 1e-13;
    std::vector<std::size_t> deficient;
    for (std::size_t jj = 0; jj < d; ++jj) {
        const std::size_t j = perm[jj];
        out.singular_values[jj] = sigma[j];
        for (std::size_t i = 0; i < d; ++i) out.v(i, jj) = vmat[j * d + i];
        if (sigma[j] > rank_tol) {
            for (std::size_t i = 0; i < d; ++i) out.u(i, jj) = work[j * d + i] / sigma[j];
        } else {
            deficient.push_back(jj);
        }
    }

    // Complete U orthonormally for rank-deficient inputs: for each missing
    // column, Gram-Schmidt the canonical basis vector with the largest
    // residual against the columns built so far.
    for (std::size_t slot : deficient) {
        std::vector<double> best;
        double best_norm = -1.0;
        for (std::size_t cand = 0; cand < d; ++cand) {
            std::vector<double> vec(d, 0.0);
            vec[cand] = 1.0;
            for (std::size_t jj = 0; jj < d; ++jj) {
                if (std::find(deficient.begin(), deficient.end(), jj) != deficient.end() &&
                    jj >= slot)
                    continue;  // only project on columns already in place
                double proj = 0.0;
                for (std::size_t i = 0; i < d; ++i) proj += out.u(i, jj) * vec[i];
                for (std::size_t i = 0; i < d; ++i) vec[i] -= proj * out.u(i, jj);
            }
            double nrm = 0.0;
            for (double v : vec) nrm += v * v;
            nrm = std::sqrt(nrm);
            if (nrm > best_norm) {
                best_norm = nrm;
                best = std::move(vec);
            }
        }
        for (std::size_t i = 0; i < d; ++i) out.u(i, slot) = best[i] / best_norm;
    }
    return out;
}

OrthogonalMap procrustes(const Matrix& w_ref, const Matrix& w_other) {
    if (w_ref.rows() != w_other.rows() || w_ref.cols() != w_other.cols())
        throw Error("procrustes: matrices must share shape");
    if (w_ref.rows() == 0 || w_ref.cols() == 0) throw Error("procrustes: empty input");

    OrthogonalMap map;
    const std::size_t d = w_ref.cols();
    if (w_ref.rows() < d) {
        map.flagged = true;
        map.flag_reason = "fewer rows than dimensions";
    }

    const Matrix cross = mul_at_b(w_other, w_ref);  // d x d
    const SvdResult svd = jacobi_svd(cross);
    if (!svd.singular_values.empty() &&
        svd.singular_values.back() <= svd.singular_values.front() * 1e-12) {
        map.flagged = true;
        map.flag_reason = map.flag_reason.empty()
                              ? "rank-deficient cross-covariance"
                              : map.flag_reason + "; rank-deficient cross-covariance";
    }

    map.q = Matrix(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            double s = 0.0;
            for (std::size_t kk = 0; kk < d; ++kk) s += svd.u(i, kk) * svd.v(j, kk);
            map.q(i, j) = s;
        }

    double obj = 0.0;
    std::vector<double> mapped(d);
    for (std::size_t r = 0; r < w_ref.rows(); ++r) {
        const auto other = w_other.row(r);
        for (std::size_t j = 0; j < d; ++j) {
            double s = 0.0;
            for (std::size_t kk = 0; kk < d; ++kk) s += other[kk] * map.q(kk, j);
            mapped[j] = s;
        }
        const auto ref = w_ref.row(r);
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = ref[j] - mapped[j];
            obj += diff * diff;
        }
    }
    map.objective = std::sqrt(obj);
    return map;
}

StabilityReport embedding_stability(const EmbeddingEnsemble& ensemble,
                                    std::size_t pair_budget, unsigned threads) {
    const std::size_t k = ensemble.model_count();
    if (k < 2) throw Error("embedding_stability needs at least 2 models");
    const std::size_t v = ensemble.vocab().size();
    const std::size_t d = ensemble.dim();

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i + 1; j < k; ++j) pairs.emplace_back(i, j);
    if (pair_budget > 0 && pair_budget < pairs.size()) pairs.resize(pair_budget);

    StabilityReport report;
    report.words = ensemble.vocab();
    report.total_pairs = pairs.size();
    report.flagged.assign(v, 0);

    std::vector<double> sums(v, 0.0);
    std::vector<int> counts(v, 0);

    // Pairs are aligned in parallel batches; accumulation stays in pair
    // order so the per-word mean is bitwise reproducible.
    constexpr std::size_t kBatch = 16;
    std::vector<std::vector<double>> cosines(kBatch);
    std::vector<std::vector<std::uint8_t>> flags(kBatch);
    for (std::size_t batch = 0; batch < pairs.size(); batch += kBatch) {
        const std::size_t batch_end = std::min(pairs.size(), batch + kBatch);
        parallel_for(
            batch_end - batch,
            [&](std::size_t off) {
                const auto [mi, mj] = pairs[batch + off];
                const Matrix& wi = ensemble.model(mi).vectors();
                const Matrix& wj = ensemble.model(mj).vectors();
                const OrthogonalMap map = procrustes(wi, wj);

                auto& cos_vec = cosines[off];
                auto& flag_vec = flags[off];
                cos_vec.assign(v, std::numeric_limits<double>::quiet_NaN());
                flag_vec.assign(v, 0);
                std::vector<double> rotated(d);
                for (std::size_t w = 0; w < v; ++w) {
                    const auto row_i = wi.row(w);
                    const auto row_j = wj.row(w);
                    const double ni = l2_norm(row_i);
                    for (std::size_t c = 0; c < d; ++c) {
                        double s = 0.0;
                        for (std::size_t kk = 0; kk < d; ++kk) s += row_j[kk] * map.q(kk, c);
                        rotated[c] = s;
                    }
                    const double nj = l2_norm(rotated);
                    if (ni == 0.0 || nj == 0.0) {
                        flag_vec[w] = 1;
                        continue;
                    }
                    cos_vec[w] = dot(row_i, rotated) / (ni * nj);
                }
            },
            threads);
        for (std::size_t off = 0; off < batch_end - batch; ++off) {
            for (std::size_t w = 0; w < v; ++w) {
                if (flags[off][w]) {
                    report.flagged[w] = 1;
                    continue;
                }
                sums[w] += cosines[off][w];
                counts[w] += 1;
            }
        }
    }

    report.es.resize(v);
    report.pairs_used.resize(v);
    for (std::size_t w = 0; w < v; ++w) {
        report.pairs_used[w] = counts[w];
        report.es[w] = counts[w] > 0 ? sums[w] / static_cast<double>(counts[w])
                                     : std::numeric_limits<double>::quiet_NaN();
        if (counts[w] == 0) report.flagged[w] = 1;
    }
    return report;
}

}  // namespace embrel
