#include "embrel/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "embrel/errors.hpp"
#include "embrel/mixed_model.hpp"
#include "embrel/parallel.hpp"
#include "embrel/procrustes.hpp"
#include "embrel/reliability.hpp"
#include "embrel/stats_util.hpp"

namespace embrel {

namespace fs = std::filesystem;

std::string format_number(double v) {
    if (!std::isfinite(v)) return "";
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

std::string fnv1a64_hex(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

DistributionSummary summarize_distribution(std::vector<double> scores,
                                           std::size_t degenerate_excluded) {
    DistributionSummary s;
    s.degenerate_excluded = degenerate_excluded;
    scores.erase(std::remove_if(scores.begin(), scores.end(),
                                [](double v) { return !std::isfinite(v); }),
                 scores.end());
    if (scores.empty()) {
        s.reason = "no nondegenerate scores";
        return s;
    }
    std::sort(scores.begin(), scores.end());
    s.empty = false;
    s.n = scores.size();
    s.min = scores.front();
    s.max = scores.back();
    s.q1 = quantile_type7(scores, 0.25);
    s.median = quantile_type7(scores, 0.5);
    s.q3 = quantile_type7(scores, 0.75);
    const double iqr = s.q3 - s.q1;
    const double lo = s.q1 - 1.5 * iqr;
    const double hi = s.q3 + 1.5 * iqr;
    std::size_t below = 0;
    for (double v : scores) {
        if (v < lo || v > hi) ++s.iqr_outliers;
        if (v < 0.5) ++below;
    }
    s.frac_below_half = static_cast<double>(below) / static_cast<double>(s.n);
    return s;
}

namespace {

std::string read_file_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read: " + path.string());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

TextFormat format_from_string(const std::string& s) {
    if (s.empty() || s == "auto") return TextFormat::Auto;
    if (s == "w2v_text") return TextFormat::W2vText;
    if (s == "glove_text") return TextFormat::GloveText;
    throw ConfigError("unknown embedding format: '" + s + "'");
}

std::string format_to_string(TextFormat f) {
    switch (f) {
        case TextFormat::Auto: return "auto";
        case TextFormat::W2vText: return "w2v_text";
        case TextFormat::GloveText: return "glove_text";
    }
    return "auto";
}

// Minimal CSV assembly; labels in this domain contain no commas or quotes.
struct Csv {
    std::string body;
    void header(std::initializer_list<std::string_view> cols) { row_impl(cols); }
    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) body += ',';
            body += cells[i];
        }
        body += '\n';
    }

private:
    void row_impl(std::initializer_list<std::string_view> cols) {
        bool first = true;
        for (auto c : cols) {
            if (!first) body += ',';
            body += c;
            first = false;
        }
        body += '\n';
    }
};

std::string flag_cell(bool b) { return b ? "1" : "0"; }

struct SummaryCell {
    std::string analysis, algorithm, corpus, list, rule, unit_type;
    std::vector<double> values;
    std::size_t degenerate = 0;
};

SummaryCell& summary_cell(std::vector<SummaryCell>& cells, std::string analysis,
                          std::string algorithm, std::string corpus, std::string list,
                          std::string rule, std::string unit_type) {
    for (auto& c : cells)
        if (c.analysis == analysis && c.algorithm == algorithm && c.corpus == corpus &&
            c.list == list && c.rule == rule && c.unit_type == unit_type)
            return c;
    cells.push_back({std::move(analysis), std::move(algorithm), std::move(corpus),
                     std::move(list), std::move(rule), std::move(unit_type),
                     {},
                     0});
    return cells.back();
}

struct RegRow {
    std::size_t ensemble = 0;
    std::string rule;  // empty for the inter-rater model
    std::string target;
    double y = 0.0;
};

struct BuiltDataset {
    RegressionDataset data;
    std::size_t rows_dropped = 0;
    std::vector<std::string> factors;  // factor ids usable for delta-R2
    std::vector<std::pair<std::string, std::string>> reference_levels;  // factor -> level
};

BuiltDataset build_regression_dataset(const std::vector<RegRow>& rows,
                                      const std::vector<EmbeddingEnsemble>& ensembles,
                                      const std::vector<FeatureTable>& tables,
                                      bool with_rule_dummies) {
    BuiltDataset out;

    std::set<std::string> rule_set, pos_set, alg_set, corpus_set;
    struct Usable {
        const RegRow* row;
        const FeatureRow* feats;
    };
    std::vector<Usable> usable;
    for (const auto& row : rows) {
        const auto& table = tables[row.ensemble];
        const auto idx = table.find(row.target);
        if (!idx) {
            ++out.rows_dropped;
            continue;
        }
        const FeatureRow& f = table.rows[*idx];
        if (!f.log_freq || !f.log2_freq || !f.log_senses || !f.pos || !f.nn_sim ||
            !f.l2_norm || !f.es) {
            ++out.rows_dropped;
            continue;
        }
        usable.push_back({&row, &f});
        if (with_rule_dummies) rule_set.insert(row.rule);
        pos_set.insert(*f.pos);
        alg_set.insert(ensembles[row.ensemble].algorithm_label());
        corpus_set.insert(ensembles[row.ensemble].corpus_label());
    }
    if (usable.empty()) throw Error("regression dataset: no rows with complete features");

    const std::vector<std::string> rule_levels(rule_set.begin(), rule_set.end());
    const std::vector<std::string> pos_levels(pos_set.begin(), pos_set.end());
    out.data.algorithm_levels.assign(alg_set.begin(), alg_set.end());
    out.data.corpus_levels.assign(corpus_set.begin(), corpus_set.end());

    auto level_code = [](const std::vector<std::string>& levels, const std::string& v) {
        return static_cast<int>(std::find(levels.begin(), levels.end(), v) - levels.begin());
    };

    auto& cols = out.data.columns;
    cols.push_back({"intercept", ColumnKind::Intercept, "intercept"});
    if (rule_levels.size() > 1) out.reference_levels.emplace_back("rule", rule_levels[0]);
    for (std::size_t i = 1; i < rule_levels.size(); ++i)
        cols.push_back({"rule=" + rule_levels[i], ColumnKind::Dummy, "rule"});
    cols.push_back({"log_freq", ColumnKind::Continuous, "log_freq"});
    cols.push_back({"log2_freq", ColumnKind::Continuous, "log2_freq"});
    cols.push_back({"log_senses", ColumnKind::Continuous, "log_senses"});
    if (pos_levels.size() > 1) out.reference_levels.emplace_back("pos", pos_levels[0]);
    for (std::size_t i = 1; i < pos_levels.size(); ++i)
        cols.push_back({"pos=" + pos_levels[i], ColumnKind::Dummy, "pos"});
    cols.push_back({"nn_sim", ColumnKind::Continuous, "nn_sim"});
    cols.push_back({"l2_norm", ColumnKind::Continuous, "l2_norm"});
    cols.push_back({"es", ColumnKind::Continuous, "es"});

    out.data.x = Matrix(usable.size(), cols.size());
    out.data.y.resize(usable.size());
    out.data.algorithm_group.resize(usable.size());
    out.data.corpus_group.resize(usable.size());
    for (std::size_t i = 0; i < usable.size(); ++i) {
        const auto& [row, f] = usable[i];
        out.data.y[i] = row->y;
        out.data.algorithm_group[i] =
            level_code(out.data.algorithm_levels, ensembles[row->ensemble].algorithm_label());
        out.data.corpus_group[i] =
            level_code(out.data.corpus_levels, ensembles[row->ensemble].corpus_label());
        std::size_t c = 0;
        out.data.x(i, c++) = 1.0;
        for (std::size_t l = 1; l < rule_levels.size(); ++l)
            out.data.x(i, c++) = row->rule == rule_levels[l] ? 1.0 : 0.0;
        out.data.x(i, c++) = *f->log_freq;
        out.data.x(i, c++) = *f->log2_freq;
        out.data.x(i, c++) = *f->log_senses;
        for (std::size_t l = 1; l < pos_levels.size(); ++l)
            out.data.x(i, c++) = *f->pos == pos_levels[l] ? 1.0 : 0.0;
        out.data.x(i, c++) = *f->nn_sim;
        out.data.x(i, c++) = *f->l2_norm;
        out.data.x(i, c++) = *f->es;
    }

    if (rule_levels.size() > 1) out.factors.push_back("rule");
    out.factors.insert(out.factors.end(), {"log_freq", "log2_freq", "log_senses"});
    if (pos_levels.size() > 1) out.factors.push_back("pos");
    out.factors.insert(out.factors.end(), {"nn_sim", "l2_norm", "es"});
    return out;
}

void emit_regression_model(Csv& csv, nlohmann::json& info, const std::string& model_name,
                           const BuiltDataset& built, Aggregation /*unused*/) {
    StandardizeInfo std_info;
    const RegressionDataset standardized = standardize(built.data, &std_info);
    const LmmFit fit = fit_lmm(standardized);

    info["n_rows"] = standardized.n();
    info["rows_dropped_missing_features"] = built.rows_dropped;
    info["converged"] = fit.converged;
    info["loglik"] = fit.loglik;
    info["warnings"] = fit.warnings;
    info["dropped_columns"] = fit.dropped_columns;
    info["dropped_constant_columns"] = std_info.dropped_constant;
    info["sigma2_algorithm"] = fit.sigma2_algorithm;
    info["sigma2_corpus"] = fit.sigma2_corpus;
    info["sigma2_residual"] = fit.sigma2_residual;

    // Reference rows first for each categorical factor, then the estimates.
    for (const auto& [factor, level] : built.reference_levels)
        csv.row({model_name, factor + "=" + level, "", "", "", "", "reference"});

    for (std::size_t j = 0; j < standardized.p(); ++j) {
        const auto& col = standardized.columns[j];
        const double est = fit.beta[j];
        const double se = fit.se[j];
        std::string significant;
        if (std::isfinite(se) && se > 0.0)
            significant = normal_two_sided_p(est / se) < 0.05 ? "1" : "0";
        csv.row({model_name, col.name, format_number(est), format_number(se), significant, "",
                 col.kind == ColumnKind::Intercept ? "intercept" : ""});
    }

    for (const auto& factor : built.factors) {
        bool present = false;
        for (const auto& col : standardized.columns)
            if (col.factor == factor) present = true;
        if (!present) continue;  // dropped as constant during standardization
        const double delta = delta_r2(standardized, factor);
        csv.row({model_name, factor, "", "", "", format_number(delta), "factor"});
    }

    csv.row({model_name, "r2_fixed", format_number(fit.r2_fixed), "", "", "", "variance_share"});
    csv.row({model_name, "r2_algorithm", format_number(fit.r2_algorithm), "", "", "",
             "variance_share"});
    csv.row({model_name, "r2_corpus", format_number(fit.r2_corpus), "", "", "",
             "variance_share"});
    csv.row({model_name, "r2_total", format_number(fit.r2_total), "", "", "", "variance_share"});
}

}  // namespace

RunConfig config_from_json(const nlohmann::json& doc) {
    RunConfig c;
    c.raw = doc;
    try {
        if (!doc.contains("ensembles") || !doc["ensembles"].is_array())
            throw ConfigError("config needs an 'ensembles' array");
        for (const auto& e : doc["ensembles"]) {
            EnsembleSpec spec;
            spec.algorithm = e.value("algorithm", "unknown");
            spec.corpus = e.value("corpus", "unknown");
            spec.format = format_from_string(e.value("format", "auto"));
            for (const auto& f : e.at("files")) spec.files.push_back(f.get<std::string>());
            c.ensembles.push_back(std::move(spec));
        }
        if (doc.contains("rules")) {
            const auto& r = doc["rules"];
            const int k = r.value("nbm_k", 100);
            if (r.contains("use")) {
                c.rules.clear();
                for (const auto& name : r["use"])
                    c.rules.push_back({rule_from_name(name.get<std::string>()), k});
            } else {
                for (auto& rule : c.rules) rule.k_neighbors = k;
            }
            c.nbm_policy.exclude_pair_words = r.value("nbm_exclude_pair_words", false);
            if (r.contains("nbm_exclusions"))
                for (const auto& t : r["nbm_exclusions"])
                    c.nbm_policy.excluded_tokens.push_back(t.get<std::string>());
        }
        c.basepairs_path = doc.value("basepairs", "");
        if (doc.contains("targets"))
            for (const auto& t : doc["targets"]) c.target_lists.push_back(t.get<std::string>());
        if (doc.contains("queries"))
            for (const auto& q : doc["queries"]) c.query_paths.push_back(q.get<std::string>());
        if (doc.contains("features")) {
            const auto& f = doc["features"];
            if (f.contains("counts")) c.counts_path = f["counts"].get<std::string>();
            if (f.contains("senses")) c.senses_path = f["senses"].get<std::string>();
            if (f.contains("pos")) c.pos_path = f["pos"].get<std::string>();
        }
        c.output_dir = doc.value("output_dir", c.output_dir);
        if (doc.contains("analyses")) {
            const auto& a = doc["analyses"];
            c.retest = a.value("retest", c.retest);
            c.interrater = a.value("interrater", c.interrater);
            c.internal = a.value("internal", c.internal);
            c.stability = a.value("stability", c.stability);
            c.features = a.value("features", c.features);
            c.regress = a.value("regress", c.regress);
        }
        if (doc.contains("stability"))
            c.stability_pair_budget = doc["stability"].value("pair_budget", 0);
        c.interrater_zscore = doc.value("interrater_zscore", false);
        const std::string agg = doc.value("singular_plural_aggregation", "median");
        if (agg == "median")
            c.singular_plural_aggregation = Aggregation::Median;
        else if (agg == "mean")
            c.singular_plural_aggregation = Aggregation::Mean;
        else
            throw ConfigError("singular_plural_aggregation must be 'median' or 'mean'");
        c.threads = doc.value("threads", 0u);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    return c;
}

RunConfig load_config(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config: " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    return config_from_json(doc);
}

nlohmann::json config_to_json(const RunConfig& c) {
    nlohmann::json doc;
    doc["ensembles"] = nlohmann::json::array();
    for (const auto& e : c.ensembles)
        doc["ensembles"].push_back({{"algorithm", e.algorithm},
                                    {"corpus", e.corpus},
                                    {"files", e.files},
                                    {"format", format_to_string(e.format)}});
    nlohmann::json rules;
    rules["use"] = nlohmann::json::array();
    int nbm_k = 100;
    for (const auto& r : c.rules) {
        rules["use"].push_back(std::string(rule_name(r.kind)));
        if (r.kind == RuleKind::Nbm) nbm_k = r.k_neighbors;
    }
    rules["nbm_k"] = nbm_k;
    rules["nbm_exclude_pair_words"] = c.nbm_policy.exclude_pair_words;
    rules["nbm_exclusions"] = c.nbm_policy.excluded_tokens;
    doc["rules"] = rules;
    doc["basepairs"] = c.basepairs_path;
    doc["targets"] = c.target_lists;
    doc["queries"] = c.query_paths;
    nlohmann::json feats;
    if (c.counts_path) feats["counts"] = *c.counts_path;
    if (c.senses_path) feats["senses"] = *c.senses_path;
    if (c.pos_path) feats["pos"] = *c.pos_path;
    doc["features"] = feats;
    doc["output_dir"] = c.output_dir;
    doc["analyses"] = {{"retest", c.retest},       {"interrater", c.interrater},
                       {"internal", c.internal},   {"stability", c.stability},
                       {"features", c.features},   {"regress", c.regress}};
    doc["stability"] = {{"pair_budget", c.stability_pair_budget}};
    doc["interrater_zscore"] = c.interrater_zscore;
    doc["singular_plural_aggregation"] =
        c.singular_plural_aggregation == Aggregation::Median ? "median" : "mean";
    doc["threads"] = c.threads;
    return doc;
}

ReportSet run(const RunConfig& config) {
    using Clock = std::chrono::steady_clock;
    ReportSet out;
    nlohmann::json& manifest = out.manifest;
    manifest["tool"] = {{"name", "embrel"}, {"version", "0.1.0"}};
    manifest["config"] = config.raw.is_null() ? config_to_json(config) : config.raw;
    manifest["config_normalized"] = config_to_json(config);
    nlohmann::json stages = nlohmann::json::object();
    nlohmann::json resource_sums = nlohmann::json::object();
    nlohmann::json drops = nlohmann::json::array();
    nlohmann::json skipped_units = nlohmann::json::array();
    nlohmann::json parse_warnings = nlohmann::json::array();
    nlohmann::json degenerate_counts = nlohmann::json::object();

    auto stage_clock = Clock::now();
    auto mark_stage = [&](const char* name) {
        const auto now = Clock::now();
        stages[name] =
            std::chrono::duration_cast<std::chrono::milliseconds>(now - stage_clock).count();
        stage_clock = now;
    };

    // ---- fail-fast validation: every referenced file must exist before any
    // work starts, so a bad config never leaves partial reports. ----
    if (config.ensembles.empty()) throw ConfigError("config has no ensembles");
    if (config.rules.empty()) throw ConfigError("config selects no scoring rules");
    const bool need_tensor =
        config.retest || config.interrater || config.internal || config.emit_scores ||
        config.regress;
    std::vector<fs::path> all_inputs;
    for (const auto& e : config.ensembles) {
        if (e.files.size() < 2)
            throw ConfigError("ensemble " + e.algorithm + "/" + e.corpus +
                              " needs at least 2 embedding files");
        for (const auto& f : e.files) {
            if (!fs::exists(f)) throw ConfigError("missing embedding file: " + f);
            all_inputs.emplace_back(f);
        }
    }
    const fs::path pairs_path = config.basepairs_path.empty()
                                    ? resources::base_pairs_file()
                                    : fs::path(config.basepairs_path);
    if (!fs::exists(pairs_path))
        throw ConfigError("missing base pairs file: " + pairs_path.string());
    all_inputs.push_back(pairs_path);
    if (need_tensor && config.target_lists.empty())
        throw ConfigError("no target lists configured");
    for (const auto& t : config.target_lists) {
        if (!fs::exists(t)) throw ConfigError("missing target list: " + t);
        all_inputs.emplace_back(t);
    }
    std::vector<fs::path> query_paths;
    if (config.internal) {
        if (config.query_paths.empty())
            for (const auto& q : resources::query_files()) query_paths.push_back(q);
        else
            for (const auto& q : config.query_paths) query_paths.emplace_back(q);
        for (const auto& q : query_paths) {
            if (!fs::exists(q)) throw ConfigError("missing query file: " + q.string());
            all_inputs.push_back(q);
        }
    }
    const bool need_features = config.features || config.regress;
    if (need_features) {
        for (const auto& p : {config.counts_path, config.senses_path, config.pos_path})
            if (p) {
                if (!fs::exists(*p)) throw ConfigError("missing feature table: " + *p);
                all_inputs.emplace_back(*p);
            }
        if (config.regress &&
            (!config.counts_path || !config.senses_path || !config.pos_path))
            throw ConfigError("regress needs counts, senses and pos tables");
    }
    for (const auto& p : all_inputs) resource_sums[p.string()] = fnv1a64_hex(read_file_bytes(p));
    mark_stage("validate");

    // ---- load ----
    const auto pairs = load_base_pairs(pairs_path);
    std::vector<TargetList> lists;
    for (const auto& t : config.target_lists) lists.push_back(load_target_list(t));
    std::vector<Query> queries;
    for (const auto& q : query_paths) queries.push_back(load_query(q));

    std::vector<EmbeddingEnsemble> ensembles;
    for (const auto& spec : config.ensembles) {
        std::vector<EmbeddingModel> models(spec.files.size());
        std::vector<ParseLog> logs(spec.files.size());
        parallel_for(
            spec.files.size(),
            [&](std::size_t i) {
                models[i] = parse_embedding_text(spec.files[i], spec.format, &logs[i]);
            },
            config.threads);
        std::vector<std::string> seed_labels;
        for (const auto& f : spec.files) seed_labels.push_back(fs::path(f).stem().string());
        for (const auto& log : logs)
            for (const auto& msg : log.messages) parse_warnings.push_back(msg);
        ensembles.push_back(align_ensemble(std::move(models), spec.algorithm, spec.corpus,
                                           std::move(seed_labels)));
        nlohmann::json align_info;
        align_info["algorithm"] = spec.algorithm;
        align_info["corpus"] = spec.corpus;
        align_info["aligned_vocab"] = ensembles.back().vocab().size();
        align_info["dropped_per_model"] = ensembles.back().dropped_per_model();
        manifest["ensembles"].push_back(align_info);
    }
    mark_stage("load");

    // ---- score + slice + estimate ----
    Csv retest_csv, interrater_csv, internal_csv, scores_csv, mean_scores_csv;
    retest_csv.header({"algorithm", "corpus", "list", "unit_type", "unit", "rule", "icc21",
                       "band", "n_rows", "n_cols", "degenerate"});
    interrater_csv.header({"algorithm", "corpus", "list", "unit_type", "unit", "icc31", "band",
                           "n_rows", "n_cols", "degenerate"});
    internal_csv.header(
        {"algorithm", "corpus", "scope", "name", "rule", "alpha", "band", "n_items",
         "degenerate"});
    scores_csv.header(
        {"algorithm", "corpus", "list", "target", "rule", "pair", "model", "score"});
    mean_scores_csv.header({"algorithm", "corpus", "list", "target", "rule", "pair", "score"});

    std::vector<SummaryCell> summary_cells;
    std::map<std::string, std::vector<double>> retest_pair_scores;  // for singular/plural
    std::vector<RegRow> retest_reg_rows, inter_reg_rows;
    std::size_t retest_degenerate = 0, interrater_degenerate = 0, internal_degenerate = 0;

    for (std::size_t ei = 0; ei < ensembles.size(); ++ei) {
        const auto& ensemble = ensembles[ei];
        const std::string& alg = ensemble.algorithm_label();
        const std::string& corpus = ensemble.corpus_label();

        for (const auto& list : lists) {
            if (!need_tensor) break;
            const BiasTensor b = compute_bias_tensor(ensemble, config.rules, pairs, list,
                                                     config.nbm_policy, config.threads);
            for (const auto& drop : b.missing)
                drops.push_back({{"algorithm", alg},
                                 {"corpus", corpus},
                                 {"list", list.name},
                                 {"axis", drop.axis},
                                 {"label", drop.label},
                                 {"reason", drop.reason}});
            const MeanBiasCube cube = average_over_models(b);

            if (config.emit_scores) {
                for (std::size_t t = 0; t < b.n_targets(); ++t)
                    for (std::size_t s = 0; s < b.n_rules(); ++s)
                        for (std::size_t g = 0; g < b.n_pairs(); ++g) {
                            for (std::size_t k = 0; k < b.n_models(); ++k)
                                scores_csv.row({alg, corpus, list.name, b.targets()[t],
                                                std::string(rule_name(b.rules()[s].kind)),
                                                b.pairs()[g].label(), b.models()[k],
                                                format_number(b.at(s, g, t, k))});
                            mean_scores_csv.row({alg, corpus, list.name, b.targets()[t],
                                                 std::string(rule_name(b.rules()[s].kind)),
                                                 b.pairs()[g].label(),
                                                 format_number(cube.at(s, g, t))});
                        }
            }

            // The regression stage consumes retest/interrater scores, so the
            // estimators also run when only `regress` is toggled; the CSVs
            // are still gated on their own toggles.
            if (config.retest || config.regress) {
                const RetestMatrices matrices = build_retest_matrices(b);
                if (config.retest)
                    for (const auto& skip : matrices.skipped)
                        skipped_units.push_back({{"analysis", "retest"},
                                                 {"unit_type", skip.unit_type},
                                                 {"unit", skip.unit},
                                                 {"reason", skip.reason}});
                auto emit = [&](const RetestMatrices::Entry& entry, const char* unit_type) {
                    const ReliabilityScore score = icc21(entry.matrix);
                    if (config.retest) {
                        retest_csv.row({alg, corpus, list.name, unit_type, entry.unit,
                                        std::string(rule_name(entry.rule)),
                                        format_number(score.value),
                                        std::string(band_name(score.band)),
                                        std::to_string(score.n_rows),
                                        std::to_string(score.n_cols),
                                        flag_cell(score.degenerate)});
                        auto& cell =
                            summary_cell(summary_cells, "retest", alg, corpus, list.name,
                                         std::string(rule_name(entry.rule)), unit_type);
                        if (score.degenerate) {
                            ++cell.degenerate;
                            ++retest_degenerate;
                        } else {
                            cell.values.push_back(score.value);
                        }
                    }
                    if (score.degenerate) return;
                    if (std::string_view(unit_type) == "basepair")
                        retest_pair_scores[entry.unit].push_back(score.value);
                    else if (config.regress)
                        retest_reg_rows.push_back(
                            {ei, std::string(rule_name(entry.rule)), entry.unit, score.value});
                };
                for (const auto& entry : matrices.per_target) emit(entry, "target");
                for (const auto& entry : matrices.per_pair) emit(entry, "basepair");
            }

            if (config.interrater || config.regress) {
                const InterraterMatrices matrices =
                    build_interrater_matrices(cube, config.interrater_zscore);
                if (config.interrater)
                    for (const auto& skip : matrices.skipped)
                        skipped_units.push_back({{"analysis", "interrater"},
                                                 {"unit_type", skip.unit_type},
                                                 {"unit", skip.unit},
                                                 {"reason", skip.reason}});
                auto emit = [&](const InterraterMatrices::Entry& entry, const char* unit_type) {
                    const ReliabilityScore score = icc31(entry.matrix);
                    if (config.interrater) {
                        interrater_csv.row({alg, corpus, list.name, unit_type, entry.unit,
                                            format_number(score.value),
                                            std::string(band_name(score.band)),
                                            std::to_string(score.n_rows),
                                            std::to_string(score.n_cols),
                                            flag_cell(score.degenerate)});
                        auto& cell = summary_cell(summary_cells, "interrater", alg, corpus,
                                                  list.name, "", unit_type);
                        if (score.degenerate) {
                            ++cell.degenerate;
                            ++interrater_degenerate;
                        } else {
                            cell.values.push_back(score.value);
                        }
                    }
                    if (score.degenerate) return;
                    if (std::string_view(unit_type) == "target" && config.regress)
                        inter_reg_rows.push_back({ei, "", entry.unit, score.value});
                };
                for (const auto& entry : matrices.per_target) emit(entry, "target");
                for (const auto& entry : matrices.per_pair) emit(entry, "basepair");
            }

            if (config.internal) {
                const InternalMatrices matrices = build_internal_matrices(cube, {});
                for (const auto& entry : matrices.pair_ensemble) {
                    const ReliabilityScore score = cronbach_alpha(entry.matrix);
                    internal_csv.row({alg, corpus, "basepair_ensemble", list.name,
                                      std::string(rule_name(entry.rule)),
                                      format_number(score.value),
                                      std::string(band_name(score.band)),
                                      std::to_string(score.n_cols), flag_cell(score.degenerate)});
                    auto& cell = summary_cell(summary_cells, "internal", alg, corpus, list.name,
                                              std::string(rule_name(entry.rule)),
                                              "basepair_ensemble");
                    if (score.degenerate) {
                        ++cell.degenerate;
                        ++internal_degenerate;
                    } else {
                        cell.values.push_back(score.value);
                    }
                }
                for (const auto& skip : matrices.skipped)
                    skipped_units.push_back({{"analysis", "internal"},
                                             {"unit_type", skip.unit_type},
                                             {"unit", skip.unit},
                                             {"reason", skip.reason}});
            }
        }

        if (config.internal) {
            for (const auto& query : queries) {
                TargetList as_list{query.name, query.words};
                BiasTensor bq;
                try {
                    bq = compute_bias_tensor(ensemble, config.rules, pairs, as_list,
                                             config.nbm_policy, config.threads);
                } catch (const Error& e) {
                    skipped_units.push_back({{"analysis", "internal"},
                                             {"unit_type", "query"},
                                             {"unit", query.name},
                                             {"reason", e.what()}});
                    continue;
                }
                const MeanBiasCube cube = average_over_models(bq);
                const InternalMatrices matrices = build_internal_matrices(cube, {query});
                for (const auto& entry : matrices.queries) {
                    const ReliabilityScore score = cronbach_alpha(entry.matrix);
                    internal_csv.row({alg, corpus, "query", entry.query,
                                      std::string(rule_name(entry.rule)),
                                      format_number(score.value),
                                      std::string(band_name(score.band)),
                                      std::to_string(score.n_cols), flag_cell(score.degenerate)});
                    auto& cell = summary_cell(summary_cells, "internal", alg, corpus,
                                              entry.query, std::string(rule_name(entry.rule)),
                                              "query");
                    if (score.degenerate) {
                        ++cell.degenerate;
                        ++internal_degenerate;
                    } else {
                        cell.values.push_back(score.value);
                    }
                    for (const auto& word : entry.missing_words)
                        drops.push_back({{"algorithm", alg},
                                         {"corpus", corpus},
                                         {"list", query.name},
                                         {"axis", "query_word"},
                                         {"label", word},
                                         {"reason", "not scored in the ensemble"}});
                }
                for (const auto& skip : matrices.skipped)
                    skipped_units.push_back({{"analysis", "internal"},
                                             {"unit_type", skip.unit_type},
                                             {"unit", skip.unit},
                                             {"reason", skip.reason}});
            }
        }
    }
    mark_stage("score_and_estimate");

    // ---- stability ----
    const bool need_stability = config.stability || need_features;
    std::vector<StabilityReport> stability_reports;
    if (need_stability) {
        for (std::size_t ei = 0; ei < ensembles.size(); ++ei) {
            stability_reports.push_back(embedding_stability(
                ensembles[ei], config.stability_pair_budget, config.threads));
        }
        if (config.stability) {
            for (std::size_t ei = 0; ei < ensembles.size(); ++ei) {
                Csv csv;
                csv.header({"word", "es", "pairs_used", "flagged"});
                const auto& report = stability_reports[ei];
                for (std::size_t w = 0; w < report.words.size(); ++w)
                    csv.row({report.words[w], format_number(report.es[w]),
                             std::to_string(report.pairs_used[w]),
                             flag_cell(report.flagged[w] != 0)});
                const std::string name =
                    ensembles.size() == 1
                        ? "stability.csv"
                        : "stability." + ensembles[ei].algorithm_label() + "." +
                              ensembles[ei].corpus_label() + ".csv";
                out.files[name] = std::move(csv.body);
            }
        }
    }
    mark_stage("stability");

    // ---- features ----
    std::vector<FeatureTable> feature_tables;
    if (need_features) {
        auto opt_path = [](const std::optional<std::string>& p) {
            return p ? std::optional<fs::path>(*p) : std::nullopt;
        };
        for (std::size_t ei = 0; ei < ensembles.size(); ++ei) {
            feature_tables.push_back(build_feature_table(
                ensembles[ei], opt_path(config.counts_path), opt_path(config.senses_path),
                opt_path(config.pos_path), &stability_reports[ei], config.threads));
        }
        if (config.features) {
            for (std::size_t ei = 0; ei < ensembles.size(); ++ei) {
                Csv csv;
                csv.header({"word", "log_freq", "log2_freq", "log_senses", "pos", "nn_sim",
                            "l2_norm", "es"});
                const auto& table = feature_tables[ei];
                auto cell = [](const std::optional<double>& v) {
                    return v ? format_number(*v) : "";
                };
                for (std::size_t w = 0; w < table.words.size(); ++w) {
                    const auto& r = table.rows[w];
                    csv.row({table.words[w], cell(r.log_freq), cell(r.log2_freq),
                             cell(r.log_senses), r.pos ? *r.pos : "", cell(r.nn_sim),
                             cell(r.l2_norm), cell(r.es)});
                }
                const std::string name =
                    ensembles.size() == 1
                        ? "features.csv"
                        : "features." + ensembles[ei].algorithm_label() + "." +
                              ensembles[ei].corpus_label() + ".csv";
                out.files[name] = std::move(csv.body);
            }
        }
    }
    mark_stage("features");

    // ---- regression ----
    if (config.regress) {
        Csv csv;
        csv.header({"model", "predictor", "estimate", "std_error", "significant", "delta_r2",
                    "note"});
        nlohmann::json reg_info = nlohmann::json::object();
        auto fit_model = [&](const char* name, const std::vector<RegRow>& rows,
                             bool with_rules) {
            if (rows.empty()) {
                reg_info[name] = {{"error", "no reliability scores to regress on"}};
                return;
            }
            // A degenerate outcome (e.g. every score exactly 1) must not
            // kill the rest of the run; record it and move on.
            try {
                const BuiltDataset built =
                    build_regression_dataset(rows, ensembles, feature_tables, with_rules);
                emit_regression_model(csv, reg_info[name], name, built,
                                      config.singular_plural_aggregation);
            } catch (const std::exception& e) {
                reg_info[name] = {{"error", e.what()}};
            }
        };
        fit_model("retest", retest_reg_rows, true);
        fit_model("interrater", inter_reg_rows, false);
        manifest["regression"] = reg_info;
        out.files["regression.csv"] = std::move(csv.body);
    }
    mark_stage("regress");

    // ---- summaries + singular/plural ----
    {
        Csv csv;
        csv.header({"analysis", "algorithm", "corpus", "list", "rule", "unit_type", "n", "min",
                    "q1", "median", "q3", "max", "iqr_outliers", "frac_below_0.5",
                    "degenerate_excluded"});
        for (const auto& cell : summary_cells) {
            const DistributionSummary s = summarize_distribution(cell.values, cell.degenerate);
            if (s.empty) {
                csv.row({cell.analysis, cell.algorithm, cell.corpus, cell.list, cell.rule,
                         cell.unit_type, "0", "", "", "", "", "", "", "",
                         std::to_string(s.degenerate_excluded)});
                continue;
            }
            csv.row({cell.analysis, cell.algorithm, cell.corpus, cell.list, cell.rule,
                     cell.unit_type, std::to_string(s.n), format_number(s.min),
                     format_number(s.q1), format_number(s.median), format_number(s.q3),
                     format_number(s.max), std::to_string(s.iqr_outliers),
                     format_number(s.frac_below_half), std::to_string(s.degenerate_excluded)});
        }
        out.files["summary.csv"] = std::move(csv.body);
    }

    if (config.retest) {
        nlohmann::json sp;
        try {
            const auto matched = resources::singular_plural_pairs();
            std::size_t used = 0;
            const PairedTResult result = matched_pairs_ttest(
                retest_pair_scores, matched, config.singular_plural_aggregation, &used);
            sp["pairs_used"] = used;
            sp["aggregation"] =
                config.singular_plural_aggregation == Aggregation::Median ? "median" : "mean";
            sp["t_stat"] = result.t_stat;
            sp["df"] = result.df;
            sp["p_two_sided"] = result.p_two_sided;
            sp["defined"] = result.defined;
        } catch (const std::exception& e) {
            sp["note"] = std::string("not computed: ") + e.what();
        }
        manifest["singular_plural_retest"] = sp;
    }

    if (config.retest) out.files["retest.csv"] = std::move(retest_csv.body);
    if (config.interrater) out.files["interrater.csv"] = std::move(interrater_csv.body);
    if (config.internal) out.files["internal.csv"] = std::move(internal_csv.body);
    if (config.emit_scores) {
        out.files["scores.csv"] = std::move(scores_csv.body);
        out.files["mean_scores.csv"] = std::move(mean_scores_csv.body);
    }
    mark_stage("emit");

    manifest["resources"] = resource_sums;
    manifest["stages_ms"] = stages;
    manifest["drops"] = drops;
    manifest["skipped_units"] = skipped_units;
    manifest["parse_warnings"] = parse_warnings;
    degenerate_counts["retest"] = retest_degenerate;
    degenerate_counts["interrater"] = interrater_degenerate;
    degenerate_counts["internal"] = internal_degenerate;
    manifest["degenerate_counts"] = degenerate_counts;
    manifest["generated_at_unix_ms"] =
        std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::system_clock::now().time_since_epoch())
            .count();
    nlohmann::json sums = nlohmann::json::object();
    for (const auto& [name, body] : out.files) sums[name] = fnv1a64_hex(body);
    manifest["report_checksums"] = sums;
    return out;
}

std::vector<fs::path> write_reports(const ReportSet& reports, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    std::vector<fs::path> written;
    for (const auto& [name, body] : reports.files) {
        const fs::path path = out_dir / name;
        std::ofstream file(path, std::ios::binary);
        if (!file) throw Error("cannot write report: " + path.string());
        file << body;
        written.push_back(path);
    }
    const fs::path manifest_path = out_dir / "manifest.json";
    std::ofstream manifest(manifest_path, std::ios::binary);
    if (!manifest) throw Error("cannot write manifest: " + manifest_path.string());
    manifest << reports.manifest.dump(2) << '\n';
    written.push_back(manifest_path);
    return written;
}

}  // namespace embrel
