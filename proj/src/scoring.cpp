#include "embrel/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

#include "embrel/errors.hpp"
#include "embrel/parallel.hpp"

namespace embrel {

std::string_view rule_name(RuleKind kind) {
    switch (kind) {
        case RuleKind::Dbwa: return "dbwa";
        case RuleKind::Ripa: return "ripa";
        case RuleKind::Nbm: return "nbm";
    }
    return "?";
}

RuleKind rule_from_name(std::string_view name) {
    if (name == "dbwa") return RuleKind::Dbwa;
    if (name == "ripa") return RuleKind::Ripa;
    if (name == "nbm") return RuleKind::Nbm;
    throw ConfigError("unknown scoring rule: '" + std::string(name) + "'");
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<double> row_norms(const Matrix& rows) {
    std::vector<double> norms(rows.rows());
    for (std::size_t i = 0; i < rows.rows(); ++i) norms[i] = l2_norm(rows.row(i));
    return norms;
}

// Canonical cosine kernel: dot / (norm(first) * norm(second)). Both the
// single-word operations and the bulk scans go through this exact
// arithmetic so their results agree bitwise.
inline double cosine_rows(const Matrix& rows, const std::vector<double>& norms,
                          std::size_t first, std::size_t second) {
    return dot(rows.row(first), rows.row(second)) / (norms[first] * norms[second]);
}

inline double dbwa_rows(const Matrix& rows, const std::vector<double>& norms, std::size_t w,
                        std::size_t m, std::size_t f) {
    return cosine_rows(rows, norms, w, m) - cosine_rows(rows, norms, w, f);
}

std::vector<double> pair_difference(const Matrix& rows, std::size_t m, std::size_t f) {
    std::vector<double> diff(rows.cols());
    const auto rm = rows.row(m);
    const auto rf = rows.row(f);
    for (std::size_t l = 0; l < diff.size(); ++l) diff[l] = rm[l] - rf[l];
    return diff;
}

inline double ripa_rows(const Matrix& rows, std::size_t w, std::span<const double> diff,
                        double diff_norm) {
    return dot(rows.row(w), diff) / diff_norm;
}

// Cosine similarities of one target row against every vocabulary row.
// Four independent accumulator chains hide the FP add latency; each chain
// is still a plain ascending dot product, so per-row results are identical
// to dot(target, row)/(norm(target)*norm(row)).
void similarity_row(const Matrix& rows, const std::vector<double>& norms,
                    std::size_t target, std::vector<double>& sims) {
    const std::size_t v = rows.rows();
    const std::size_t d = rows.cols();
    const double* base = rows.data();
    const double* wt = base + target * d;
    const double nw = norms[target];
    std::size_t n = 0;
    for (; n + 4 <= v; n += 4) {
        const double* r0 = base + (n + 0) * d;
        const double* r1 = base + (n + 1) * d;
        const double* r2 = base + (n + 2) * d;
        const double* r3 = base + (n + 3) * d;
        double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
        for (std::size_t l = 0; l < d; ++l) {
            const double w = wt[l];
            a0 += w * r0[l];
            a1 += w * r1[l];
            a2 += w * r2[l];
            a3 += w * r3[l];
        }
        sims[n + 0] = a0 / (nw * norms[n + 0]);
        sims[n + 1] = a1 / (nw * norms[n + 1]);
        sims[n + 2] = a2 / (nw * norms[n + 2]);
        sims[n + 3] = a3 / (nw * norms[n + 3]);
    }
    for (; n < v; ++n)
        sims[n] = dot({wt, d}, rows.row(n)) / (nw * norms[n]);
}

// Top-k_sel neighbor ids per target, by descending cosine with ties broken
// by ascending vocab index. banned rows (excluded tokens, zero-norm rows)
// and the target itself never appear.
std::vector<std::vector<std::uint32_t>> top_neighbors(
    const Matrix& rows, const std::vector<double>& norms,
    std::span<const std::uint32_t> targets, std::size_t k_sel,
    const std::vector<char>& banned, unsigned threads) {
    const std::size_t v = rows.rows();
    std::vector<std::vector<std::uint32_t>> out(targets.size());

    parallel_for_blocked(
        targets.size(), 8,
        [&](std::size_t begin, std::size_t end) {
            std::vector<double> sims(v);
            std::vector<std::uint32_t> order(v);
            for (std::size_t ti = begin; ti < end; ++ti) {
                const std::uint32_t t_row = targets[ti];
                similarity_row(rows, norms, t_row, sims);
                sims[t_row] = kNegInf;
                for (std::size_t n = 0; n < v; ++n)
                    if (banned[n] || norms[n] == 0.0) sims[n] = kNegInf;
                std::iota(order.begin(), order.end(), 0u);
                const auto cmp = [&sims](std::uint32_t a, std::uint32_t b) {
                    return sims[a] > sims[b] || (sims[a] == sims[b] && a < b);
                };
                const std::size_t kk = std::min(k_sel, v);
                std::nth_element(order.begin(), order.begin() + kk, order.end(), cmp);
                std::sort(order.begin(), order.begin() + kk, cmp);
                out[ti].assign(order.begin(), order.begin() + kk);
            }
        },
        threads);
    return out;
}

// DB/WA score of every vocabulary row against one pair. Zero-norm rows get
// NaN; they are never in a neighbor pool so the value is never read.
std::vector<double> dbwa_all_rows(const Matrix& rows, const std::vector<double>& norms,
                                  std::size_t m, std::size_t f, unsigned threads) {
    std::vector<double> scores(rows.rows());
    parallel_for_blocked(
        rows.rows(), 1024,
        [&](std::size_t begin, std::size_t end) {
            for (std::size_t n = begin; n < end; ++n)
                scores[n] = norms[n] == 0.0 ? std::numeric_limits<double>::quiet_NaN()
                                            : dbwa_rows(rows, norms, n, m, f);
        },
        threads);
    return scores;
}

std::vector<char> banned_rows(const EmbeddingModel& model,
                              const std::vector<double>& norms,
                              const std::vector<std::string>& excluded_tokens) {
    std::vector<char> banned(model.size(), 0);
    for (const auto& token : excluded_tokens)
        if (auto idx = model.find(token)) banned[*idx] = 1;
    for (std::size_t n = 0; n < norms.size(); ++n)
        if (norms[n] == 0.0) banned[n] = 1;
    return banned;
}

double nbm_from_neighbors(std::span<const std::uint32_t> neighbors,
                          const std::vector<double>& dbwa_vec, int k, bool exclude_pair,
                          std::uint32_t m_idx, std::uint32_t f_idx) {
    int pos = 0, neg = 0, taken = 0;
    for (std::uint32_t n : neighbors) {
        if (taken == k) break;
        if (exclude_pair && (n == m_idx || n == f_idx)) continue;
        ++taken;
        const double v = dbwa_vec[n];
        if (v > 0.0)
            ++pos;
        else if (v < 0.0)
            ++neg;
    }
    if (taken < k) throw Error("fewer than k eligible neighbors");
    return static_cast<double>(pos - neg) / static_cast<double>(k);
}

struct PairRows {
    std::uint32_t m;
    std::uint32_t f;
};

PairRows locate_pair(const EmbeddingModel& model, const BasePair& pair) {
    return {static_cast<std::uint32_t>(model.index_of(pair.male)),
            static_cast<std::uint32_t>(model.index_of(pair.female))};
}

}  // namespace

double score_dbwa(const EmbeddingModel& model, std::string_view word, const BasePair& pair) {
    const std::size_t w = model.index_of(word);
    const auto p = locate_pair(model, pair);
    const auto norms = row_norms(model.vectors());
    if (norms[w] == 0.0) throw DegenerateVectorError("zero-norm vector: '" + std::string(word) + "'");
    if (norms[p.m] == 0.0) throw DegenerateVectorError("zero-norm vector: '" + pair.male + "'");
    if (norms[p.f] == 0.0) throw DegenerateVectorError("zero-norm vector: '" + pair.female + "'");
    return dbwa_rows(model.vectors(), norms, w, p.m, p.f);
}

double score_ripa(const EmbeddingModel& model, std::string_view word, const BasePair& pair) {
    const std::size_t w = model.index_of(word);
    const auto p = locate_pair(model, pair);
    const auto diff = pair_difference(model.vectors(), p.m, p.f);
    const double dn = l2_norm(diff);
    if (dn == 0.0)
        throw DegeneratePairError("base pair '" + pair.label() + "' has identical vectors");
    return ripa_rows(model.vectors(), w, diff, dn);
}

double score_nbm(const EmbeddingModel& model, std::string_view word, const BasePair& pair,
                 int k_neighbors, const NbmPolicy& policy) {
    const std::size_t v = model.size();
    if (k_neighbors < 1) throw ConfigError("nbm k must be >= 1");
    if (static_cast<std::size_t>(k_neighbors) >= v)
        throw ConfigError("nbm k must be < vocabulary size");
    const std::size_t w = model.index_of(word);
    const auto p = locate_pair(model, pair);
    const auto norms = row_norms(model.vectors());
    if (norms[w] == 0.0)
        throw DegenerateVectorError("zero-norm vector: '" + std::string(word) + "'");
    if (norms[p.m] == 0.0) throw DegenerateVectorError("zero-norm vector: '" + pair.male + "'");
    if (norms[p.f] == 0.0) throw DegenerateVectorError("zero-norm vector: '" + pair.female + "'");

    const auto banned = banned_rows(model, norms, policy.excluded_tokens);
    const std::size_t pad = policy.exclude_pair_words ? 2 : 0;
    std::size_t pool = 0;
    for (std::size_t n = 0; n < v; ++n)
        if (!banned[n] && n != w) ++pool;
    if (pool < static_cast<std::size_t>(k_neighbors) + (policy.exclude_pair_words
                                                            ? ((banned[p.m] || p.m == w) ? 0 : 1) +
                                                                  ((banned[p.f] || p.f == w) ? 0 : 1)
                                                            : 0))
        throw Error("fewer than k eligible neighbors for '" + std::string(word) + "'");

    const std::uint32_t t_row = static_cast<std::uint32_t>(w);
    const auto neighbors = top_neighbors(model.vectors(), norms, {&t_row, 1},
                                         static_cast<std::size_t>(k_neighbors) + pad, banned, 1);
    const auto dbwa_vec = dbwa_all_rows(model.vectors(), norms, p.m, p.f, 1);
    return nbm_from_neighbors(neighbors[0], dbwa_vec, k_neighbors, policy.exclude_pair_words,
                              p.m, p.f);
}

std::vector<std::vector<double>> nbm_scores_bulk(const EmbeddingModel& model,
                                                 const std::vector<BasePair>& pairs,
                                                 std::span<const std::uint32_t> target_rows,
                                                 int k_neighbors, const NbmPolicy& policy,
                                                 unsigned threads) {
    const std::size_t v = model.size();
    if (k_neighbors < 1) throw ConfigError("nbm k must be >= 1");
    if (static_cast<std::size_t>(k_neighbors) >= v)
        throw ConfigError("nbm k must be < vocabulary size");
    const auto norms = row_norms(model.vectors());
    const auto banned = banned_rows(model, norms, policy.excluded_tokens);
    const std::size_t pad = policy.exclude_pair_words ? 2 : 0;
    const auto neighbors =
        top_neighbors(model.vectors(), norms, target_rows,
                      static_cast<std::size_t>(k_neighbors) + pad, banned, threads);

    std::vector<std::vector<double>> out(pairs.size());
    for (std::size_t g = 0; g < pairs.size(); ++g) {
        const auto p = locate_pair(model, pairs[g]);
        const auto dbwa_vec = dbwa_all_rows(model.vectors(), norms, p.m, p.f, threads);
        out[g].resize(target_rows.size());
        for (std::size_t ti = 0; ti < target_rows.size(); ++ti)
            out[g][ti] = nbm_from_neighbors(neighbors[ti], dbwa_vec, k_neighbors,
                                            policy.exclude_pair_words, p.m, p.f);
    }
    return out;
}

BiasTensor::BiasTensor(std::vector<ScoringRule> rules, std::vector<BasePair> pairs,
                       std::vector<std::string> targets, std::vector<std::string> models)
    : rules_(std::move(rules)),
      pairs_(std::move(pairs)),
      targets_(std::move(targets)),
      models_(std::move(models)),
      scores_(rules_.size() * pairs_.size() * targets_.size() * models_.size(), 0.0) {}

MeanBiasCube::MeanBiasCube(std::vector<ScoringRule> rules, std::vector<BasePair> pairs,
                           std::vector<std::string> targets)
    : rules_(std::move(rules)),
      pairs_(std::move(pairs)),
      targets_(std::move(targets)),
      scores_(rules_.size() * pairs_.size() * targets_.size(), 0.0) {}

std::size_t MeanBiasCube::rule_index(RuleKind kind) const {
    for (std::size_t s = 0; s < rules_.size(); ++s)
        if (rules_[s].kind == kind) return s;
    throw Error("rule not present in bias cube: " + std::string(rule_name(kind)));
}

std::size_t MeanBiasCube::target_index(std::string_view word) const {
    for (std::size_t t = 0; t < targets_.size(); ++t)
        if (targets_[t] == word) return t;
    throw Error("target not present in bias cube: '" + std::string(word) + "'");
}

std::size_t MeanBiasCube::pair_index(std::string_view label) const {
    for (std::size_t g = 0; g < pairs_.size(); ++g)
        if (pairs_[g].label() == label) return g;
    throw Error("base pair not present in bias cube: '" + std::string(label) + "'");
}

BiasTensor compute_bias_tensor(const EmbeddingEnsemble& ensemble,
                               const std::vector<ScoringRule>& rules,
                               const std::vector<BasePair>& pairs, const TargetList& targets,
                               const NbmPolicy& policy, unsigned threads) {
    if (rules.empty()) throw ConfigError("no scoring rules requested");
    if (pairs.empty()) throw ConfigError("no base pairs given");
    if (targets.words.empty()) throw ConfigError("target list '" + targets.name + "' is empty");

    const std::size_t n_models = ensemble.model_count();
    const std::size_t v = ensemble.vocab().size();
    bool need_nbm = false, need_ripa = false;
    int max_nbm_k = 0;
    for (const auto& rule : rules) {
        if (rule.kind == RuleKind::Nbm) {
            need_nbm = true;
            if (rule.k_neighbors < 1) throw ConfigError("nbm k must be >= 1");
            if (static_cast<std::size_t>(rule.k_neighbors) >= v)
                throw ConfigError("nbm k must be < aligned vocabulary size");
            max_nbm_k = std::max(max_nbm_k, rule.k_neighbors);
        }
        if (rule.kind == RuleKind::Ripa) need_ripa = true;
    }

    std::vector<std::vector<double>> norms(n_models);
    for (std::size_t k = 0; k < n_models; ++k)
        norms[k] = row_norms(ensemble.model(k).vectors());

    std::vector<AxisDrop> missing;

    // Pairs survive only if both sides are present with nonzero norm in
    // every model (and distinct vectors when RIPA is active).
    std::vector<BasePair> kept_pairs;
    std::vector<PairRows> pair_rows;
    for (const auto& pair : pairs) {
        const auto mi = ensemble.find(pair.male);
        const auto fi = ensemble.find(pair.female);
        if (!mi || !fi) {
            missing.push_back({"pair", pair.label(),
                               "token '" + (mi ? pair.female : pair.male) +
                                   "' not in aligned vocabulary"});
            continue;
        }
        std::string reason;
        for (std::size_t k = 0; k < n_models && reason.empty(); ++k) {
            if (norms[k][*mi] == 0.0 || norms[k][*fi] == 0.0)
                reason = "zero-norm pair vector in model " + ensemble.seed_labels()[k];
            else if (need_ripa) {
                const auto diff = pair_difference(ensemble.model(k).vectors(), *mi, *fi);
                if (l2_norm(diff) == 0.0)
                    reason = "identical pair vectors in model " + ensemble.seed_labels()[k];
            }
        }
        if (!reason.empty()) {
            missing.push_back({"pair", pair.label(), reason});
            continue;
        }
        kept_pairs.push_back(pair);
        pair_rows.push_back({static_cast<std::uint32_t>(*mi), static_cast<std::uint32_t>(*fi)});
    }
    if (kept_pairs.empty()) throw Error("all base pairs missing from the ensemble");

    std::vector<std::string> kept_targets;
    std::vector<std::uint32_t> target_rows;
    for (const auto& word : targets.words) {
        const auto idx = ensemble.find(word);
        if (!idx) {
            missing.push_back({"target", word, "not in aligned vocabulary"});
            continue;
        }
        std::string reason;
        for (std::size_t k = 0; k < n_models && reason.empty(); ++k)
            if (norms[k][*idx] == 0.0)
                reason = "zero-norm vector in model " + ensemble.seed_labels()[k];
        if (!reason.empty()) {
            missing.push_back({"target", word, reason});
            continue;
        }
        kept_targets.push_back(word);
        target_rows.push_back(static_cast<std::uint32_t>(*idx));
    }
    if (kept_targets.empty())
        throw Error("all target words of '" + targets.name + "' missing from the ensemble");

    BiasTensor b(rules, kept_pairs, kept_targets, ensemble.seed_labels());
    b.missing = std::move(missing);

    const std::size_t pad = policy.exclude_pair_words ? 2 : 0;
    for (std::size_t k = 0; k < n_models; ++k) {
        const auto& model = ensemble.model(k);
        const auto& rows = model.vectors();
        const auto& nrm = norms[k];

        std::vector<std::vector<std::uint32_t>> neighbors;
        if (need_nbm) {
            const auto banned = banned_rows(model, nrm, policy.excluded_tokens);
            std::size_t banned_count = 0;
            for (char c : banned) banned_count += static_cast<std::size_t>(c);
            if (v - banned_count < static_cast<std::size_t>(max_nbm_k) + 1 + pad)
                throw Error("fewer than k eligible neighbors in model " +
                            ensemble.seed_labels()[k]);
            neighbors = top_neighbors(rows, nrm, target_rows,
                                      static_cast<std::size_t>(max_nbm_k) + pad, banned, threads);
        }

        for (std::size_t g = 0; g < kept_pairs.size(); ++g) {
            const auto p = pair_rows[g];
            std::vector<double> dbwa_vec;
            if (need_nbm)
                dbwa_vec = dbwa_all_rows(rows, nrm, p.m, p.f, threads);

            std::vector<double> diff;
            double diff_norm = 0.0;
            if (need_ripa) {
                diff = pair_difference(rows, p.m, p.f);
                diff_norm = l2_norm(diff);
            }

            for (std::size_t s = 0; s < rules.size(); ++s) {
                const auto& rule = rules[s];
                parallel_for_blocked(
                    kept_targets.size(), 256,
                    [&](std::size_t begin, std::size_t end) {
                        for (std::size_t t = begin; t < end; ++t) {
                            const std::uint32_t row = target_rows[t];
                            double value = 0.0;
                            switch (rule.kind) {
                                case RuleKind::Dbwa:
                                    value = need_nbm ? dbwa_vec[row]
                                                     : dbwa_rows(rows, nrm, row, p.m, p.f);
                                    break;
                                case RuleKind::Ripa:
                                    value = ripa_rows(rows, row, diff, diff_norm);
                                    break;
                                case RuleKind::Nbm:
                                    value = nbm_from_neighbors(
                                        neighbors[t], dbwa_vec, rule.k_neighbors,
                                        policy.exclude_pair_words, p.m, p.f);
                                    break;
                            }
                            b.at(s, g, t, k) = value;
                        }
                    },
                    threads);
            }
        }
    }
    return b;
}

MeanBiasCube average_over_models(const BiasTensor& b) {
    if (b.n_models() < 1) throw Error("bias tensor has no model axis");
    MeanBiasCube cube(b.rules(), b.pairs(), b.targets());
    const double k = static_cast<double>(b.n_models());
    for (std::size_t s = 0; s < b.n_rules(); ++s)
        for (std::size_t g = 0; g < b.n_pairs(); ++g)
            for (std::size_t t = 0; t < b.n_targets(); ++t) {
                double sum = 0.0;
                for (std::size_t m = 0; m < b.n_models(); ++m) sum += b.at(s, g, t, m);
                cube.at(s, g, t) = sum / k;
            }
    return cube;
}

std::vector<double> pair_averaged_series(const BiasTensor& b, RuleKind rule,
                                         std::string_view word) {
    std::size_t s = b.n_rules();
    for (std::size_t i = 0; i < b.n_rules(); ++i)
        if (b.rules()[i].kind == rule) s = i;
    if (s == b.n_rules()) throw Error("rule not present in bias tensor");
    std::size_t t = b.n_targets();
    for (std::size_t i = 0; i < b.n_targets(); ++i)
        if (b.targets()[i] == word) t = i;
    if (t == b.n_targets()) throw Error("target not present in bias tensor");

    std::vector<double> series(b.n_models(), 0.0);
    for (std::size_t k = 0; k < b.n_models(); ++k) {
        double sum = 0.0;
        for (std::size_t g = 0; g < b.n_pairs(); ++g) sum += b.at(s, g, t, k);
        series[k] = sum / static_cast<double>(b.n_pairs());
    }
    return series;
}

double aggregate_target(const MeanBiasCube& cube, RuleKind rule, std::string_view word) {
    const std::size_t s = cube.rule_index(rule);
    const std::size_t t = cube.target_index(word);
    double sum = 0.0;
    for (std::size_t g = 0; g < cube.n_pairs(); ++g) sum += cube.at(s, g, t);
    return sum / static_cast<double>(cube.n_pairs());
}

double aggregate_pair(const MeanBiasCube& cube, RuleKind rule, const BasePair& pair) {
    const std::size_t s = cube.rule_index(rule);
    const std::size_t g = cube.pair_index(pair.label());
    double sum = 0.0;
    for (std::size_t t = 0; t < cube.n_targets(); ++t) sum += cube.at(s, g, t);
    return sum / static_cast<double>(cube.n_targets());
}

double aggregate_query(const MeanBiasCube& cube, RuleKind rule, const Query& query) {
    if (query.words.empty()) throw Error("query '" + query.name + "' is empty");
    double sum = 0.0;
    for (const auto& word : query.words) sum += aggregate_target(cube, rule, word);
    return sum / static_cast<double>(query.words.size());
}

}  // namespace embrel
