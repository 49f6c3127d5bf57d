#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "embrel/embedding.hpp"
#include "embrel/wordlists.hpp"
#include "json.hpp"

namespace embrel {

/// Recipe for a synthetic seed ensemble: a shared Gaussian base matrix, a
/// planted unit gender direction added with coefficient +/- gender_strength
/// to the designated gendered tokens (always including the synthetic base
/// pairs m0../f0..), per-model Gaussian noise, and optionally a per-model
/// random rotation. Deterministic for a given seed within this build.
struct SynthSpec {
    std::size_t vocab_size = 300;
    std::size_t dim = 16;
    std::size_t models = 4;
    double noise_sigma = 0.05;
    bool rotate = false;
    double gender_strength = 1.0;
    std::uint64_t seed = 1;
    double gendered_fraction = 0.2;   // share of filler tokens nudged along the direction
    std::size_t base_pair_count = 4;  // m0..m{n-1} ~ f0..f{n-1}
    std::string algorithm_label = "synth";
    std::string corpus_label = "synthetic";
};

struct SynthResult {
    EmbeddingEnsemble ensemble;
    std::vector<BasePair> pairs;
    nlohmann::json recipe;  // generation parameters, recorded in the manifest
};

SynthResult synth_ensemble(const SynthSpec& spec);

/// Writes the ensemble as w2v_text files plus the companion resources a
/// full pipeline run needs: base pairs, a target list, a query, counts /
/// senses / PoS tables, and a ready-to-run config.json pointing at them.
struct SynthFiles {
    std::vector<std::filesystem::path> embedding_files;
    std::filesystem::path base_pairs;
    std::filesystem::path targets;
    std::filesystem::path query;
    std::filesystem::path counts;
    std::filesystem::path senses;
    std::filesystem::path pos;
    std::filesystem::path config;
    nlohmann::json recipe;
};
SynthFiles synth_write(const SynthSpec& spec, const std::filesystem::path& out_dir);

}  // namespace embrel
