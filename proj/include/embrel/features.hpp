#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "embrel/embedding.hpp"
#include "embrel/procrustes.hpp"

namespace embrel {

/// Max cosine similarity of a word to any other vocabulary word (self
/// excluded). nullopt when the word's vector (or every other vector) has
/// zero norm.
std::optional<double> nn_similarity(const EmbeddingModel& model, std::string_view word);

/// Bulk variant over the whole vocabulary.
std::vector<std::optional<double>> nn_similarity_all(const EmbeddingModel& model,
                                                     unsigned threads = 0);

/// Word-level predictors for the reliability regression. Absent external
/// values stay absent; nothing is imputed.
struct FeatureRow {
    std::optional<double> log_freq;    // ln(corpus count)
    std::optional<double> log2_freq;   // (ln count)^2
    std::optional<double> log_senses;  // ln(sense count)
    std::optional<std::string> pos;
    std::optional<double> nn_sim;      // averaged over models
    std::optional<double> l2_norm;     // averaged over models
    std::optional<double> es;
};

struct FeatureTable {
    std::vector<std::string> words;  // aligned-vocab order
    std::vector<FeatureRow> rows;
    std::map<std::string, std::string> provenance;  // column -> source note

    std::optional<std::size_t> find(std::string_view word) const;
};

/// Builds the table over the ensemble's aligned vocabulary. The counts,
/// senses and PoS inputs are "word<TAB>value" TSV files; absent paths or
/// uncovered words leave the corresponding cells absent. count <= 0 marks
/// the word absent for both frequency features.
FeatureTable build_feature_table(const EmbeddingEnsemble& ensemble,
                                 const std::optional<std::filesystem::path>& counts_tsv,
                                 const std::optional<std::filesystem::path>& senses_tsv,
                                 const std::optional<std::filesystem::path>& pos_tsv,
                                 const StabilityReport* stability = nullptr,
                                 unsigned threads = 0);

struct PearsonResult {
    double r = 0.0;
    double t_stat = 0.0;
    double p_two_sided = 1.0;
    std::size_t n = 0;
    bool defined = false;  // false when either input is constant
};

/// Product-moment correlation with a t-based two-sided p-value (n-2 df).
PearsonResult pearson_r(std::span<const double> x, std::span<const double> y);

struct PairedTResult {
    double t_stat = 0.0;
    std::size_t df = 0;
    double p_two_sided = 1.0;
    bool defined = false;  // false when the differences have zero variance
};

/// Paired t test on d = x - y with n-1 degrees of freedom.
PairedTResult paired_t_test(std::span<const double> x, std::span<const double> y);

enum class Aggregation { Median, Mean };

/// Aggregates each unit's scores (median by default), then runs a paired t
/// test across matched (first, second) unit label rows. Units missing from
/// the score map are skipped; at least 2 usable matches are required.
PairedTResult matched_pairs_ttest(
    const std::map<std::string, std::vector<double>>& scores_by_unit,
    const std::vector<std::pair<std::string, std::string>>& matched,
    Aggregation aggregation = Aggregation::Median, std::size_t* pairs_used = nullptr);

}  // namespace embrel
