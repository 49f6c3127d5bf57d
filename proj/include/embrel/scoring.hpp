#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "embrel/embedding.hpp"
#include "embrel/wordlists.hpp"

namespace embrel {

enum class RuleKind { Dbwa, Ripa, Nbm };

std::string_view rule_name(RuleKind kind);
RuleKind rule_from_name(std::string_view name);

/// One scoring rule instance. k_neighbors is only meaningful for NBM.
struct ScoringRule {
    RuleKind kind = RuleKind::Dbwa;
    int k_neighbors = 100;
};

/// Neighborhood policy for NBM. The target word itself is always excluded
/// from its neighbor pool; the pair words m and f are included unless
/// exclude_pair_words is set. excluded_tokens removes sentinel tokens such
/// as "<unk>" from every pool.
struct NbmPolicy {
    bool exclude_pair_words = false;
    std::vector<std::string> excluded_tokens;
};

/// cos(w,m) - cos(w,f). Throws MissingWordError / DegenerateVectorError.
double score_dbwa(const EmbeddingModel& model, std::string_view word, const BasePair& pair);

/// w · (m-f)/|m-f| on raw (un-normalized) vectors. Throws
/// MissingWordError / DegeneratePairError.
double score_ripa(const EmbeddingModel& model, std::string_view word, const BasePair& pair);

/// Signed fraction of the word's k cosine nearest neighbors whose DB/WA
/// score is positive minus those negative; neighbors scoring exactly zero
/// count for neither side. Ties at the k-th rank break by ascending vocab
/// index.
double score_nbm(const EmbeddingModel& model, std::string_view word, const BasePair& pair,
                 int k_neighbors = 100, const NbmPolicy& policy = {});

/// Bulk NBM over many targets and pairs on one model. Shares one neighbor
/// scan across all pairs; this is the blocked, parallel path the full-vocab
/// case needs. Result is indexed [pair][target].
std::vector<std::vector<double>> nbm_scores_bulk(const EmbeddingModel& model,
                                                 const std::vector<BasePair>& pairs,
                                                 std::span<const std::uint32_t> target_rows,
                                                 int k_neighbors, const NbmPolicy& policy = {},
                                                 unsigned threads = 0);

/// A unit dropped from one of B's axes, with the reason.
struct AxisDrop {
    std::string axis;    // "target" | "pair"
    std::string label;
    std::string reason;
};

/// The 4-D bias score array over (rule s, base pair g, target t, model k).
class BiasTensor {
public:
    BiasTensor() = default;
    BiasTensor(std::vector<ScoringRule> rules, std::vector<BasePair> pairs,
               std::vector<std::string> targets, std::vector<std::string> models);

    std::size_t n_rules() const { return rules_.size(); }
    std::size_t n_pairs() const { return pairs_.size(); }
    std::size_t n_targets() const { return targets_.size(); }
    std::size_t n_models() const { return models_.size(); }

    double at(std::size_t s, std::size_t g, std::size_t t, std::size_t k) const {
        return scores_[index(s, g, t, k)];
    }
    double& at(std::size_t s, std::size_t g, std::size_t t, std::size_t k) {
        return scores_[index(s, g, t, k)];
    }

    const std::vector<ScoringRule>& rules() const { return rules_; }
    const std::vector<BasePair>& pairs() const { return pairs_; }
    const std::vector<std::string>& targets() const { return targets_; }
    const std::vector<std::string>& models() const { return models_; }

    std::vector<AxisDrop> missing;

private:
    std::size_t index(std::size_t s, std::size_t g, std::size_t t, std::size_t k) const {
        return ((s * pairs_.size() + g) * targets_.size() + t) * models_.size() + k;
    }
    std::vector<ScoringRule> rules_;
    std::vector<BasePair> pairs_;
    std::vector<std::string> targets_;
    std::vector<std::string> models_;
    std::vector<double> scores_;
};

/// B averaged over the model axis: shape (rule, pair, target).
class MeanBiasCube {
public:
    MeanBiasCube() = default;
    MeanBiasCube(std::vector<ScoringRule> rules, std::vector<BasePair> pairs,
                 std::vector<std::string> targets);

    std::size_t n_rules() const { return rules_.size(); }
    std::size_t n_pairs() const { return pairs_.size(); }
    std::size_t n_targets() const { return targets_.size(); }

    double at(std::size_t s, std::size_t g, std::size_t t) const {
        return scores_[(s * pairs_.size() + g) * targets_.size() + t];
    }
    double& at(std::size_t s, std::size_t g, std::size_t t) {
        return scores_[(s * pairs_.size() + g) * targets_.size() + t];
    }

    const std::vector<ScoringRule>& rules() const { return rules_; }
    const std::vector<BasePair>& pairs() const { return pairs_; }
    const std::vector<std::string>& targets() const { return targets_; }

    std::size_t rule_index(RuleKind kind) const;   // throws on unknown
    std::size_t target_index(std::string_view word) const;
    std::size_t pair_index(std::string_view label) const;

private:
    std::vector<ScoringRule> rules_;
    std::vector<BasePair> pairs_;
    std::vector<std::string> targets_;
    std::vector<double> scores_;
};

/// Scores every in-vocabulary (rule, pair, target, model) combination.
/// Targets missing from the aligned vocabulary are dropped from the t axis
/// and pairs with a missing side from the g axis; drops land in
/// BiasTensor::missing. Errors if every target or every pair is dropped.
BiasTensor compute_bias_tensor(const EmbeddingEnsemble& ensemble,
                               const std::vector<ScoringRule>& rules,
                               const std::vector<BasePair>& pairs, const TargetList& targets,
                               const NbmPolicy& policy = {}, unsigned threads = 0);

/// Arithmetic mean along the model axis, summed in ascending model order.
MeanBiasCube average_over_models(const BiasTensor& b);

/// Mean over base pairs of one target's scores per model: the per-seed
/// series behind the pair-averaged view of a target word. The raw
/// pairs-by-seeds slice stays available through the reliability builders.
std::vector<double> pair_averaged_series(const BiasTensor& b, RuleKind rule,
                                         std::string_view word);

/// Mean over base pairs of one target's scores.
double aggregate_target(const MeanBiasCube& cube, RuleKind rule, std::string_view word);
/// Mean over targets of one pair's scores.
double aggregate_pair(const MeanBiasCube& cube, RuleKind rule, const BasePair& pair);
/// Pair-mean per query word, then mean over the query's words.
double aggregate_query(const MeanBiasCube& cube, RuleKind rule, const Query& query);

}  // namespace embrel
