#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "embrel/matrix.hpp"

namespace embrel {

enum class TextFormat { Auto, W2vText, GloveText };

/// Collected while parsing: duplicate tokens are kept-first and reported
/// here rather than failing the whole file.
struct ParseLog {
    std::size_t duplicates_dropped = 0;
    std::vector<std::string> messages;
};

/// One embedding model: an ordered vocabulary and a V×d matrix whose row i
/// is the vector of token i. Immutable after construction and safe to share
/// across threads.
class EmbeddingModel {
public:
    EmbeddingModel() = default;

    /// Validates: V >= 1, d >= 1, all entries finite, tokens unique.
    EmbeddingModel(std::vector<std::string> vocab, Matrix vectors, std::string label);

    const std::vector<std::string>& vocab() const { return vocab_; }
    const Matrix& vectors() const { return vectors_; }
    std::size_t size() const { return vocab_.size(); }
    std::size_t dim() const { return vectors_.cols(); }
    const std::string& label() const { return label_; }

    std::optional<std::size_t> find(std::string_view token) const;

    /// Throws MissingWordError if the token is absent.
    std::size_t index_of(std::string_view token) const;

    std::span<const double> row(std::size_t i) const { return vectors_.row(i); }
    std::span<const double> vector_of(std::string_view token) const {
        return vectors_.row(index_of(token));
    }

    /// Rows whose L2 norm was exactly zero when unit_normalize ran.
    const std::vector<std::uint32_t>& zero_norm_rows() const { return zero_norm_rows_; }

    friend EmbeddingModel unit_normalize(const EmbeddingModel& model);

private:
    std::vector<std::string> vocab_;
    Matrix vectors_;
    std::string label_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<std::uint32_t> zero_norm_rows_;
};

/// Parses a text embedding file.
///
/// w2v_text has a header line "V d"; glove_text starts directly with rows.
/// In Auto mode a first line of exactly two integer tokens is taken as a
/// header. Rows are "token v1 ... vd". Tokens are matched byte-exactly; no
/// case folding happens here. Values are parsed as 64-bit floats regardless
/// of the precision printed in the file.
EmbeddingModel parse_embedding_text(const std::filesystem::path& path,
                                    TextFormat format = TextFormat::Auto,
                                    ParseLog* log = nullptr);

/// Serializes a model back to text. Auto resolves to w2v_text.
void write_embedding_text(const EmbeddingModel& model, const std::filesystem::path& path,
                          TextFormat format = TextFormat::W2vText);

/// Returns a copy with each row divided by its L2 norm. Zero-norm rows are
/// left unchanged and recorded in zero_norm_rows(). Idempotent.
EmbeddingModel unit_normalize(const EmbeddingModel& model);

/// k same-vocabulary models trained with different random seeds, aligned to
/// one shared vocabulary (the intersection, in the first model's order).
class EmbeddingEnsemble {
public:
    EmbeddingEnsemble() = default;
    EmbeddingEnsemble(std::vector<EmbeddingModel> models, std::string algorithm_label,
                      std::string corpus_label, std::vector<std::string> seed_labels,
                      std::vector<std::size_t> dropped_per_model);

    const std::vector<EmbeddingModel>& models() const { return models_; }
    const EmbeddingModel& model(std::size_t k) const { return models_[k]; }
    std::size_t model_count() const { return models_.size(); }
    std::size_t dim() const { return models_.front().dim(); }
    const std::vector<std::string>& vocab() const { return models_.front().vocab(); }
    std::optional<std::size_t> find(std::string_view token) const {
        return models_.front().find(token);
    }

    const std::string& algorithm_label() const { return algorithm_label_; }
    const std::string& corpus_label() const { return corpus_label_; }
    const std::vector<std::string>& seed_labels() const { return seed_labels_; }
    const std::vector<std::size_t>& dropped_per_model() const { return dropped_per_model_; }

private:
    std::vector<EmbeddingModel> models_;
    std::string algorithm_label_;
    std::string corpus_label_;
    std::vector<std::string> seed_labels_;
    std::vector<std::size_t> dropped_per_model_;
};

/// Intersects the vocabularies (order taken from the first model), re-indexes
/// every member to the shared order, and records how many tokens each model
/// dropped. Requires >= 2 models of equal dimension and a nonempty
/// intersection.
EmbeddingEnsemble align_ensemble(std::vector<EmbeddingModel> models,
                                 std::string algorithm_label, std::string corpus_label,
                                 std::vector<std::string> seed_labels = {});

}  // namespace embrel
