#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "embrel/embedding.hpp"
#include "embrel/matrix.hpp"

namespace embrel {

struct SvdResult {
    Matrix u;                              // left singular vectors, columns
    Matrix v;                              // right singular vectors, columns
    std::vector<double> singular_values;   // descending
    int sweeps = 0;
    bool converged = false;
};

/// SVD of a square matrix by one-sided Jacobi iteration: right rotations
/// orthogonalize the columns until the relative off-diagonal mass falls
/// below 1e-12, capped at 100 sweeps. Rank-deficient inputs still produce
/// fully orthogonal U and V (missing columns are completed orthonormally).
SvdResult jacobi_svd(const Matrix& a);

/// Orthogonal map fitted between two row-vector embedding matrices.
/// det(Q) may be -1; the Frobenius objective does not constrain it.
struct OrthogonalMap {
    Matrix q;  // d x d, applied on the right: W_other * q
    std::string source_label;
    std::string target_label;
    double objective = 0.0;  // |W_ref - W_other * q|_F
    bool flagged = false;
    std::string flag_reason;
};

/// Solves min over orthogonal Q of |W_ref - W_other Q|_F with vectors as
/// rows: Q = U V^T from the SVD of W_other^T W_ref. Flags (but still
/// solves) V < d inputs and rank-deficient cross-covariances.
OrthogonalMap procrustes(const Matrix& w_ref, const Matrix& w_other);

/// Per-word embedding stability: the mean over aligned model pairs of
/// cos(w_i, w_j Q_ij), with Q_ij fitted from model j onto model i.
struct StabilityReport {
    std::vector<std::string> words;
    std::vector<double> es;            // NaN when no usable pair remained
    std::vector<int> pairs_used;
    std::vector<std::uint8_t> flagged; // a zero-norm vector was met somewhere
    std::size_t total_pairs = 0;
};

/// pair_budget = 0 uses all k(k-1)/2 unordered pairs; otherwise the first
/// pair_budget pairs in lexicographic (i, j) order. Pairs run concurrently;
/// the per-word mean accumulates in fixed pair order.
StabilityReport embedding_stability(const EmbeddingEnsemble& ensemble,
                                    std::size_t pair_budget = 0, unsigned threads = 0);

}  // namespace embrel
