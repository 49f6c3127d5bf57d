#include "embrel/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <unordered_map>

#include "embrel/errors.hpp"
#include "embrel/parallel.hpp"
#include "embrel/stats_util.hpp"

namespace embrel {

namespace {

std::vector<double> model_norms(const EmbeddingModel& model) {
    std::vector<double> norms(model.size());
    for (std::size_t i = 0; i < model.size(); ++i) norms[i] = l2_norm(model.row(i));
    return norms;
}

std::optional<double> nn_sim_for_row(const EmbeddingModel& model,
                                     const std::vector<double>& norms, std::size_t w) {
    if (norms[w] == 0.0) return std::nullopt;
    double best = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t n = 0; n < model.size(); ++n) {
        if (n == w || norms[n] == 0.0) continue;
        const double sim = dot(model.row(w), model.row(n)) / (norms[w] * norms[n]);
        if (sim > best) best = sim;
        any = true;
    }
    if (!any) return std::nullopt;
    return best;
}

std::unordered_map<std::string, std::string> read_tsv_map(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open TSV table: " + path.string());
    std::unordered_map<std::string, std::string> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw ParseError("TSV row needs 'word<TAB>value'", line_no);
        out.emplace(line.substr(0, tab), line.substr(tab + 1));
    }
    return out;
}

std::optional<double> to_double(const std::string& s) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size() || !std::isfinite(v)) return std::nullopt;
        return v;
    } catch (...) {
        return std::nullopt;
    }
}

}  // namespace

std::optional<double> nn_similarity(const EmbeddingModel& model, std::string_view word) {
    if (model.size() < 2) throw Error("nn_similarity needs a vocabulary of at least 2");
    const std::size_t w = model.index_of(word);
    return nn_sim_for_row(model, model_norms(model), w);
}

std::vector<std::optional<double>> nn_similarity_all(const EmbeddingModel& model,
                                                     unsigned threads) {
    const auto norms = model_norms(model);
    std::vector<std::optional<double>> out(model.size());
    parallel_for_blocked(
        model.size(), 64,
        [&](std::size_t begin, std::size_t end) {
            for (std::size_t w = begin; w < end; ++w)
                out[w] = nn_sim_for_row(model, norms, w);
        },
        threads);
    return out;
}

std::optional<std::size_t> FeatureTable::find(std::string_view word) const {
    for (std::size_t i = 0; i < words.size(); ++i)
        if (words[i] == word) return i;
    return std::nullopt;
}

FeatureTable build_feature_table(const EmbeddingEnsemble& ensemble,
                                 const std::optional<std::filesystem::path>& counts_tsv,
                                 const std::optional<std::filesystem::path>& senses_tsv,
                                 const std::optional<std::filesystem::path>& pos_tsv,
                                 const StabilityReport* stability, unsigned threads) {
    FeatureTable table;
    table.words = ensemble.vocab();
    table.rows.resize(table.words.size());
    const std::size_t k = ensemble.model_count();

    // Per-model L2 norms and nearest-neighbor similarities, averaged over
    // the k models in ascending model order.
    std::vector<std::vector<double>> norms(k);
    std::vector<std::vector<std::optional<double>>> sims(k);
    for (std::size_t m = 0; m < k; ++m) {
        norms[m] = model_norms(ensemble.model(m));
        sims[m] = nn_similarity_all(ensemble.model(m), threads);
    }
    for (std::size_t w = 0; w < table.words.size(); ++w) {
        double norm_sum = 0.0;
        double sim_sum = 0.0;
        bool sim_ok = true;
        for (std::size_t m = 0; m < k; ++m) {
            norm_sum += norms[m][w];
            if (sims[m][w])
                sim_sum += *sims[m][w];
            else
                sim_ok = false;
        }
        table.rows[w].l2_norm = norm_sum / static_cast<double>(k);
        if (sim_ok) table.rows[w].nn_sim = sim_sum / static_cast<double>(k);
    }
    table.provenance["l2_norm"] = "mean over " + std::to_string(k) + " models";
    table.provenance["nn_sim"] = "mean over " + std::to_string(k) + " models";

    if (counts_tsv) {
        const auto counts = read_tsv_map(*counts_tsv);
        for (std::size_t w = 0; w < table.words.size(); ++w) {
            auto it = counts.find(table.words[w]);
            if (it == counts.end()) continue;
            const auto value = to_double(it->second);
            if (!value || *value <= 0.0) continue;  // count <= 0: absent
            const double lf = std::log(*value);
            table.rows[w].log_freq = lf;
            table.rows[w].log2_freq = lf * lf;
        }
        table.provenance["log_freq"] = counts_tsv->string();
    }
    if (senses_tsv) {
        const auto senses = read_tsv_map(*senses_tsv);
        for (std::size_t w = 0; w < table.words.size(); ++w) {
            auto it = senses.find(table.words[w]);
            if (it == senses.end()) continue;
            const auto value = to_double(it->second);
            if (!value || *value <= 0.0) continue;
            table.rows[w].log_senses = std::log(*value);
        }
        table.provenance["log_senses"] = senses_tsv->string();
    }
    if (pos_tsv) {
        const auto tags = read_tsv_map(*pos_tsv);
        for (std::size_t w = 0; w < table.words.size(); ++w) {
            auto it = tags.find(table.words[w]);
            if (it != tags.end() && !it->second.empty()) table.rows[w].pos = it->second;
        }
        table.provenance["pos"] = pos_tsv->string();
    }
    if (stability) {
        // The report is keyed by the same aligned vocabulary.
        for (std::size_t w = 0; w < table.words.size() && w < stability->es.size(); ++w)
            if (std::isfinite(stability->es[w])) table.rows[w].es = stability->es[w];
        table.provenance["es"] =
            "embedding stability over " + std::to_string(stability->total_pairs) + " model pairs";
    }
    return table;
}

PearsonResult pearson_r(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw Error("pearson_r: length mismatch");
    if (x.size() < 3) throw Error("pearson_r needs n >= 3");
    PearsonResult out;
    out.n = x.size();
    const double mx = mean_of(x);
    const double my = mean_of(y);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        out.defined = false;
        out.r = std::numeric_limits<double>::quiet_NaN();
        out.t_stat = std::numeric_limits<double>::quiet_NaN();
        out.p_two_sided = std::numeric_limits<double>::quiet_NaN();
        return out;
    }
    out.defined = true;
    out.r = sxy / std::sqrt(sxx * syy);
    if (out.r > 1.0) out.r = 1.0;
    if (out.r < -1.0) out.r = -1.0;
    const double df = static_cast<double>(out.n - 2);
    const double denom = 1.0 - out.r * out.r;
    out.t_stat = denom <= 0.0
                     ? std::copysign(std::numeric_limits<double>::infinity(), out.r)
                     : out.r * std::sqrt(df / denom);
    out.p_two_sided = student_t_two_sided_p(out.t_stat, df);
    return out;
}

PairedTResult paired_t_test(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw Error("paired_t_test: length mismatch");
    if (x.size() < 2) throw Error("paired_t_test needs n >= 2");
    std::vector<double> d(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i] - y[i];

    PairedTResult out;
    out.df = x.size() - 1;
    const double md = mean_of(d);
    const double sd = std::sqrt(sample_variance(d, md));
    if (sd == 0.0) {
        out.defined = false;
        out.t_stat = std::numeric_limits<double>::quiet_NaN();
        out.p_two_sided = std::numeric_limits<double>::quiet_NaN();
        return out;
    }
    out.defined = true;
    out.t_stat = md / (sd / std::sqrt(static_cast<double>(x.size())));
    out.p_two_sided = student_t_two_sided_p(out.t_stat, static_cast<double>(out.df));
    return out;
}

PairedTResult matched_pairs_ttest(
    const std::map<std::string, std::vector<double>>& scores_by_unit,
    const std::vector<std::pair<std::string, std::string>>& matched, Aggregation aggregation,
    std::size_t* pairs_used) {
    std::vector<double> first, second;
    for (const auto& [a, b] : matched) {
        const auto ia = scores_by_unit.find(a);
        const auto ib = scores_by_unit.find(b);
        if (ia == scores_by_unit.end() || ib == scores_by_unit.end()) continue;
        if (ia->second.empty() || ib->second.empty()) continue;
        auto aggregate = [aggregation](std::vector<double> v) {
            if (aggregation == Aggregation::Mean) return mean_of(v);
            std::sort(v.begin(), v.end());
            return quantile_type7(v, 0.5);
        };
        first.push_back(aggregate(ia->second));
        second.push_back(aggregate(ib->second));
    }
    if (pairs_used) *pairs_used = first.size();
    if (first.size() < 2) throw Error("matched_pairs_ttest needs at least 2 usable matches");
    return paired_t_test(first, second);
}

}  // namespace embrel
