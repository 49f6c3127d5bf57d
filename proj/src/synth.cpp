#include "embrel/synth.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "embrel/errors.hpp"

namespace embrel {

namespace {

Matrix random_orthogonal(std::size_t d, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix q(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) q(i, j) = gauss(rng);
    // Modified Gram-Schmidt on columns; regenerate on (vanishingly unlikely)
    // near-dependence.
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t prev = 0; prev < j; ++prev) {
            double proj = 0.0;
            for (std::size_t i = 0; i < d; ++i) proj += q(i, prev) * q(i, j);
            for (std::size_t i = 0; i < d; ++i) q(i, j) -= proj * q(i, prev);
        }
        double norm = 0.0;
        for (std::size_t i = 0; i < d; ++i) norm += q(i, j) * q(i, j);
        norm = std::sqrt(norm);
        if (norm < 1e-12) {
            for (std::size_t i = 0; i < d; ++i) q(i, j) = gauss(rng);
            --j;
            continue;
        }
        for (std::size_t i = 0; i < d; ++i) q(i, j) /= norm;
    }
    return q;
}

std::string filler_token(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "w%06zu", i);
    return buf;
}

}  // namespace

SynthResult synth_ensemble(const SynthSpec& spec) {
    if (spec.dim < 2) throw ConfigError("synth: dim must be >= 2");
    if (spec.vocab_size <= spec.dim) throw ConfigError("synth: vocab_size must exceed dim");
    if (spec.models < 2) throw ConfigError("synth: need at least 2 models");
    if (spec.base_pair_count < 1) throw ConfigError("synth: need at least 1 base pair");
    if (spec.vocab_size < 2 * spec.base_pair_count + 2)
        throw ConfigError("synth: vocab too small for the base pairs");
    if (spec.noise_sigma < 0.0) throw ConfigError("synth: noise_sigma must be >= 0");

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const std::size_t v = spec.vocab_size;
    const std::size_t d = spec.dim;

    std::vector<std::string> vocab;
    std::vector<BasePair> pairs;
    vocab.reserve(v);
    for (std::size_t i = 0; i < spec.base_pair_count; ++i) {
        vocab.push_back("m" + std::to_string(i));
        vocab.push_back("f" + std::to_string(i));
        pairs.push_back({"m" + std::to_string(i), "f" + std::to_string(i)});
    }
    const std::size_t fillers = v - vocab.size();
    for (std::size_t i = 0; i < fillers; ++i) vocab.push_back(filler_token(i));

    Matrix base(v, d);
    for (std::size_t i = 0; i < v; ++i)
        for (std::size_t j = 0; j < d; ++j) base(i, j) = gauss(rng);

    std::vector<double> direction(d);
    {
        double norm = 0.0;
        for (double& x : direction) {
            x = gauss(rng);
            norm += x * x;
        }
        norm = std::sqrt(norm);
        for (double& x : direction) x /= norm;
    }

    // Pair tokens sit at +/- gender_strength along the planted direction;
    // a leading slice of the fillers alternates sides.
    auto nudge = [&](std::size_t row, double sign) {
        for (std::size_t j = 0; j < d; ++j)
            base(row, j) += sign * spec.gender_strength * direction[j];
    };
    for (std::size_t i = 0; i < spec.base_pair_count; ++i) {
        nudge(2 * i, +1.0);
        nudge(2 * i + 1, -1.0);
    }
    const auto gendered_fillers = static_cast<std::size_t>(
        spec.gendered_fraction * static_cast<double>(fillers));
    for (std::size_t i = 0; i < gendered_fillers; ++i)
        nudge(2 * spec.base_pair_count + i, i % 2 == 0 ? +1.0 : -1.0);

    std::vector<EmbeddingModel> models;
    std::vector<std::string> seed_labels;
    for (std::size_t m = 0; m < spec.models; ++m) {
        Matrix w = base;
        if (spec.noise_sigma > 0.0)
            for (std::size_t i = 0; i < v; ++i)
                for (std::size_t j = 0; j < d; ++j)
                    w(i, j) += spec.noise_sigma * gauss(rng);
        if (spec.rotate) {
            const Matrix q = random_orthogonal(d, rng);
            w = matmul(w, q);
        }
        const std::string label =
            spec.algorithm_label + "-" + spec.corpus_label + "-seed" + std::to_string(m);
        models.emplace_back(vocab, std::move(w), label);
        seed_labels.push_back("seed" + std::to_string(m));
    }

    SynthResult out{align_ensemble(std::move(models), spec.algorithm_label, spec.corpus_label,
                                   std::move(seed_labels)),
                    std::move(pairs),
                    {}};
    out.recipe = {{"generator", "synth_ensemble"},
                  {"vocab_size", spec.vocab_size},
                  {"dim", spec.dim},
                  {"models", spec.models},
                  {"noise_sigma", spec.noise_sigma},
                  {"rotate", spec.rotate},
                  {"gender_strength", spec.gender_strength},
                  {"gendered_fraction", spec.gendered_fraction},
                  {"base_pair_count", spec.base_pair_count},
                  {"seed", spec.seed}};
    return out;
}

SynthFiles synth_write(const SynthSpec& spec, const std::filesystem::path& out_dir) {
    const SynthResult synth = synth_ensemble(spec);
    std::filesystem::create_directories(out_dir);

    SynthFiles files;
    files.recipe = synth.recipe;
    for (std::size_t m = 0; m < synth.ensemble.model_count(); ++m) {
        auto path = out_dir / ("model_seed" + std::to_string(m) + ".txt");
        write_embedding_text(synth.ensemble.model(m), path, TextFormat::W2vText);
        files.embedding_files.push_back(path);
    }

    files.base_pairs = out_dir / "base_pairs.tsv";
    {
        std::ofstream out(files.base_pairs, std::ios::binary);
        for (const auto& p : synth.pairs) out << p.male << '\t' << p.female << '\n';
    }

    // Target list: every gendered filler plus an equal slice of neutral ones.
    const auto& vocab = synth.ensemble.vocab();
    const std::size_t first_filler = 2 * spec.base_pair_count;
    const auto gendered = static_cast<std::size_t>(
        spec.gendered_fraction * static_cast<double>(vocab.size() - first_filler));
    const std::size_t take = std::min(vocab.size() - first_filler, 2 * std::max<std::size_t>(gendered, 8));
    files.targets = out_dir / "targets_synth.txt";
    {
        std::ofstream out(files.targets, std::ios::binary);
        for (std::size_t i = 0; i < take; ++i) out << vocab[first_filler + i] << '\n';
    }

    files.query = out_dir / "query_synth.txt";
    {
        std::ofstream out(files.query, std::ios::binary);
        for (std::size_t i = 0; i < std::min<std::size_t>(8, take); ++i)
            out << vocab[first_filler + i] << '\n';
    }

    // Companion word-level tables: a zipf-ish count, a small sense count and
    // a coarse PoS tag per token.
    std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ull);
    std::uniform_int_distribution<int> senses(1, 30);
    static const char* kTags[] = {"adj", "adp", "adv", "conj", "det", "noun",
                                  "num", "pron", "prt", "verb", "x"};
    std::uniform_int_distribution<int> tag(0, 10);
    files.counts = out_dir / "counts.tsv";
    files.senses = out_dir / "senses.tsv";
    files.pos = out_dir / "pos.tsv";
    {
        std::ofstream counts(files.counts, std::ios::binary);
        std::ofstream sense(files.senses, std::ios::binary);
        std::ofstream pos(files.pos, std::ios::binary);
        for (std::size_t i = 0; i < vocab.size(); ++i) {
            const auto count = static_cast<long long>(1000000.0 / static_cast<double>(i + 1));
            counts << vocab[i] << '\t' << std::max<long long>(count, 1) << '\n';
            sense << vocab[i] << '\t' << senses(rng) << '\n';
            pos << vocab[i] << '\t' << kTags[tag(rng)] << '\n';
        }
    }

    nlohmann::json config;
    config["ensembles"] = nlohmann::json::array();
    nlohmann::json ens;
    ens["algorithm"] = spec.algorithm_label;
    ens["corpus"] = spec.corpus_label;
    ens["format"] = "w2v_text";
    for (const auto& p : files.embedding_files) ens["files"].push_back(p.string());
    config["ensembles"].push_back(ens);
    config["rules"] = {{"use", {"dbwa", "ripa", "nbm"}},
                       {"nbm_k", std::min<std::size_t>(20, spec.vocab_size - 1)},
                       {"nbm_exclude_pair_words", false},
                       {"nbm_exclusions", nlohmann::json::array()}};
    config["basepairs"] = files.base_pairs.string();
    config["targets"] = {files.targets.string()};
    config["queries"] = {files.query.string()};
    config["features"] = {{"counts", files.counts.string()},
                          {"senses", files.senses.string()},
                          {"pos", files.pos.string()}};
    config["analyses"] = {{"retest", true},   {"interrater", true}, {"internal", true},
                          {"stability", true}, {"features", true},   {"regress", true}};
    config["output_dir"] = (out_dir / "reports").string();
    config["synth_recipe"] = synth.recipe;

    files.config = out_dir / "config.json";
    {
        std::ofstream out(files.config, std::ios::binary);
        out << config.dump(2) << '\n';
    }
    return files;
}

}  // namespace embrel
