#include "embrel/embedding.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "embrel/errors.hpp"

namespace embrel {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

bool parse_size(std::string_view s, std::size_t& out) {
    if (s.empty()) return false;
    std::size_t v = 0;
    for (char c : s) {
        if (c < '0' || c > '9') return false;
        v = v * 10 + static_cast<std::size_t>(c - '0');
    }
    out = v;
    return true;
}

bool parse_double(std::string_view s, double& out) {
    char buf[64];
    if (s.empty() || s.size() >= sizeof(buf)) return false;
    std::memcpy(buf, s.data(), s.size());
    buf[s.size()] = '\0';
    char* end = nullptr;
    out = std::strtod(buf, &end);
    return end == buf + s.size();
}

}  // namespace

EmbeddingModel::EmbeddingModel(std::vector<std::string> vocab, Matrix vectors,
                               std::string label)
    : vocab_(std::move(vocab)), vectors_(std::move(vectors)), label_(std::move(label)) {
    if (vocab_.empty()) throw Error("embedding model has empty vocabulary");
    if (vectors_.cols() < 1) throw Error("embedding model has dimension 0");
    if (vectors_.rows() != vocab_.size())
        throw Error("embedding model vocab/matrix row mismatch");
    index_.reserve(vocab_.size());
    for (std::size_t i = 0; i < vocab_.size(); ++i) {
        if (!index_.emplace(vocab_[i], i).second)
            throw Error("duplicate token in constructed model: '" + vocab_[i] + "'");
    }
    for (std::size_t i = 0; i < vectors_.rows(); ++i)
        for (double v : vectors_.row(i))
            if (!std::isfinite(v))
                throw Error("non-finite entry in vector of '" + vocab_[i] + "'");
}

std::optional<std::size_t> EmbeddingModel::find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::size_t EmbeddingModel::index_of(std::string_view token) const {
    auto idx = find(token);
    if (!idx) throw MissingWordError(std::string(token));
    return *idx;
}

EmbeddingModel parse_embedding_text(const std::filesystem::path& path, TextFormat format,
                                    ParseLog* log) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open embedding file: " + path.string());

    std::vector<std::string> lines;
    {
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            lines.push_back(std::move(line));
        }
    }
    // Trailing blank lines are tolerated; interior ones are skipped too.
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    if (lines.empty()) throw ParseError("empty embedding file: " + path.string());

    std::size_t declared_v = 0, declared_d = 0;
    std::size_t first_row = 0;
    bool has_header = false;
    if (format == TextFormat::W2vText || format == TextFormat::Auto) {
        const auto fields = split_fields(lines[0]);
        if (fields.size() == 2 && parse_size(fields[0], declared_v) &&
            parse_size(fields[1], declared_d)) {
            has_header = true;
            first_row = 1;
        } else if (format == TextFormat::W2vText) {
            throw ParseError("w2v_text header 'V d' expected", 1);
        }
    }

    std::vector<std::string> vocab;
    std::vector<double> values;
    std::size_t dim = has_header ? declared_d : 0;
    std::unordered_set<std::string_view> seen;
    std::size_t duplicates = 0;

    for (std::size_t li = first_row; li < lines.size(); ++li) {
        if (lines[li].empty()) continue;
        const auto fields = split_fields(lines[li]);
        if (fields.size() < 2) throw ParseError("row needs a token and at least one value", li + 1);
        const std::size_t row_dim = fields.size() - 1;
        if (dim == 0) {
            dim = row_dim;
        } else if (row_dim != dim) {
            throw ParseError("row dimension " + std::to_string(row_dim) + " != declared " +
                                 std::to_string(dim),
                             li + 1);
        }
        std::string token(fields[0]);
        if (seen.count(token)) {
            ++duplicates;
            if (log)
                log->messages.push_back("duplicate token '" + token + "' at line " +
                                        std::to_string(li + 1) + "; kept first occurrence");
            continue;
        }
        for (std::size_t f = 1; f < fields.size(); ++f) {
            double v = 0.0;
            if (!parse_double(fields[f], v))
                throw ParseError("cannot parse value '" + std::string(fields[f]) + "'", li + 1);
            if (!std::isfinite(v))
                throw ParseError("non-finite value '" + std::string(fields[f]) + "'", li + 1);
            values.push_back(v);
        }
        vocab.push_back(std::move(token));
        seen.insert(vocab.back());
    }
    if (log) log->duplicates_dropped = duplicates;

    if (vocab.empty()) throw ParseError("no vector rows in " + path.string());
    if (has_header && declared_v != vocab.size() + duplicates)
        throw ParseError("header declares " + std::to_string(declared_v) + " rows but file has " +
                         std::to_string(vocab.size() + duplicates));

    Matrix m(vocab.size(), dim);
    std::copy(values.begin(), values.end(), m.data());
    return EmbeddingModel(std::move(vocab), std::move(m), path.filename().string());
}

void write_embedding_text(const EmbeddingModel& model, const std::filesystem::path& path,
                          TextFormat format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open for writing: " + path.string());
    const bool header = format != TextFormat::GloveText;
    if (header) out << model.size() << ' ' << model.dim() << '\n';
    char buf[40];
    for (std::size_t i = 0; i < model.size(); ++i) {
        out << model.vocab()[i];
        for (double v : model.row(i)) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            out << ' ' << buf;
        }
        out << '\n';
    }
    if (!out) throw Error("write failed: " + path.string());
}

EmbeddingModel unit_normalize(const EmbeddingModel& model) {
    EmbeddingModel out = model;
    out.zero_norm_rows_.clear();
    for (std::size_t i = 0; i < out.vectors_.rows(); ++i) {
        auto row = out.vectors_.row(i);
        const double norm = l2_norm(row);
        if (norm == 0.0) {
            out.zero_norm_rows_.push_back(static_cast<std::uint32_t>(i));
            continue;
        }
        for (double& v : row) v /= norm;
    }
    return out;
}

EmbeddingEnsemble::EmbeddingEnsemble(std::vector<EmbeddingModel> models,
                                     std::string algorithm_label, std::string corpus_label,
                                     std::vector<std::string> seed_labels,
                                     std::vector<std::size_t> dropped_per_model)
    : models_(std::move(models)),
      algorithm_label_(std::move(algorithm_label)),
      corpus_label_(std::move(corpus_label)),
      seed_labels_(std::move(seed_labels)),
      dropped_per_model_(std::move(dropped_per_model)) {
    if (models_.size() < 2) throw Error("ensemble needs at least 2 models");
    const auto& ref = models_.front();
    for (const auto& m : models_) {
        if (m.dim() != ref.dim()) throw Error("ensemble models disagree on dimension");
        if (m.vocab() != ref.vocab()) throw Error("ensemble models disagree on vocabulary");
    }
    if (seed_labels_.size() != models_.size())
        throw Error("ensemble needs one seed label per model");
}

EmbeddingEnsemble align_ensemble(std::vector<EmbeddingModel> models,
                                 std::string algorithm_label, std::string corpus_label,
                                 std::vector<std::string> seed_labels) {
    if (models.size() < 2) throw Error("align_ensemble needs at least 2 models");
    const std::size_t d = models.front().dim();
    for (const auto& m : models)
        if (m.dim() != d) throw Error("align_ensemble: models have unequal dimensions");

    // Shared vocabulary: intersection, ordered by the first model.
    std::vector<std::string> shared;
    for (const auto& token : models.front().vocab()) {
        bool everywhere = true;
        for (std::size_t k = 1; k < models.size() && everywhere; ++k)
            everywhere = models[k].find(token).has_value();
        if (everywhere) shared.push_back(token);
    }
    if (shared.empty()) throw Error("empty aligned vocabulary");

    std::vector<std::size_t> dropped;
    std::vector<EmbeddingModel> aligned;
    dropped.reserve(models.size());
    aligned.reserve(models.size());
    for (const auto& m : models) {
        Matrix rows(shared.size(), d);
        for (std::size_t i = 0; i < shared.size(); ++i) {
            const auto src = m.row(m.index_of(shared[i]));
            std::copy(src.begin(), src.end(), rows.row(i).begin());
        }
        dropped.push_back(m.size() - shared.size());
        aligned.emplace_back(shared, std::move(rows), m.label());
    }

    if (seed_labels.empty()) {
        for (std::size_t k = 0; k < aligned.size(); ++k)
            seed_labels.push_back("seed" + std::to_string(k));
    }
    return EmbeddingEnsemble(std::move(aligned), std::move(algorithm_label),
                             std::move(corpus_label), std::move(seed_labels),
                             std::move(dropped));
}

}  // namespace embrel
