#pragma once

#include <optional>
#include <string>
#include <vector>

#include "embrel/matrix.hpp"
#include "embrel/scoring.hpp"

namespace embrel {

/// An objects-by-raters matrix fed to the reliability estimators.
/// Rows are the measured objects, columns the raters/items.
struct RatingsMatrix {
    Matrix values;
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    std::string orientation;  // human-readable note, e.g. "rows=base pairs, cols=seeds"
};

/// Two-way ANOVA (no replication) mean squares and sums of squares.
struct AnovaTable {
    double ms_rows = 0, ms_cols = 0, ms_error = 0;
    std::size_t df_rows = 0, df_cols = 0, df_error = 0;
    double ss_rows = 0, ss_cols = 0, ss_error = 0, ss_total = 0;
};

AnovaTable two_way_anova(const RatingsMatrix& m);

enum class Estimator { Icc21, Icc31, Alpha };
enum class Band { Poor, Moderate, Good, Excellent, Acceptable, Unacceptable, Undefined };

std::string_view estimator_name(Estimator e);
std::string_view band_name(Band b);

/// Reliability estimate plus its qualitative band. Values can be negative
/// (worse-than-chance consistency) and are never clamped. A degenerate
/// matrix (zero denominator relative to the matrix scale) yields
/// degenerate = true with an undefined value.
struct ReliabilityScore {
    double value = 0.0;
    Estimator estimator = Estimator::Icc21;
    Band band = Band::Undefined;
    bool degenerate = false;
    std::size_t n_rows = 0;
    std::size_t n_cols = 0;
};

/// Two-way random-effects, absolute-agreement, single-rater ICC:
/// (MS_R - MS_E) / (MS_R + (r-1) MS_E + (r/n)(MS_C - MS_E)).
ReliabilityScore icc21(const RatingsMatrix& m);

/// Two-way mixed-effects, consistency, single-rater ICC:
/// (MS_R - MS_E) / (MS_R + (r-1) MS_E).
ReliabilityScore icc31(const RatingsMatrix& m);

/// Cronbach's alpha with items as columns:
/// r/(r-1) * (1 - sum(col variances) / var(row sums)),
/// all variances with the n-1 divisor (the convention cancels in the ratio).
ReliabilityScore cronbach_alpha(const RatingsMatrix& m);

/// ICC: <0.5 poor, [0.5,0.75) moderate, [0.75,0.9) good, >=0.9 excellent.
/// Alpha: >=0.7 acceptable, else unacceptable.
Band band_of(double value, Estimator estimator);

/// A unit that could not be built (dimension below 2, no data, ...).
struct SkippedUnit {
    std::string unit_type;
    std::string unit;
    std::string reason;
    std::optional<RuleKind> rule;
};

/// Test-retest matrices sliced from B: per target the pairs-by-seeds matrix,
/// per base pair the targets-by-seeds matrix, one family per scoring rule.
struct RetestMatrices {
    struct Entry {
        RuleKind rule;
        std::string unit;
        RatingsMatrix matrix;
    };
    std::vector<Entry> per_target;
    std::vector<Entry> per_pair;
    std::vector<SkippedUnit> skipped;
};
RetestMatrices build_retest_matrices(const BiasTensor& b);

/// Inter-rater matrices sliced (and transposed) from B': per target the
/// pairs-by-rules matrix, per base pair the targets-by-rules matrix.
/// zscore_columns optionally z-scores each column first; the rules have
/// incommensurate scales and this flag lets users probe that confound.
struct InterraterMatrices {
    struct Entry {
        std::string unit;
        RatingsMatrix matrix;
    };
    std::vector<Entry> per_target;
    std::vector<Entry> per_pair;
    std::vector<SkippedUnit> skipped;
};
InterraterMatrices build_interrater_matrices(const MeanBiasCube& cube,
                                             bool zscore_columns = false);

/// Internal-consistency matrices from B': per (rule, query) the
/// pairs-by-query-words matrix, and per rule one targets-by-pairs matrix for
/// the ensemble of base pairs.
struct InternalMatrices {
    struct QueryEntry {
        RuleKind rule;
        std::string query;
        RatingsMatrix matrix;
        std::vector<std::string> missing_words;
    };
    struct EnsembleEntry {
        RuleKind rule;
        RatingsMatrix matrix;
    };
    std::vector<QueryEntry> queries;
    std::vector<EnsembleEntry> pair_ensemble;
    std::vector<SkippedUnit> skipped;
};
InternalMatrices build_internal_matrices(const MeanBiasCube& cube,
                                         const std::vector<Query>& queries);

}  // namespace embrel
