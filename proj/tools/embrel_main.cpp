#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "embrel/errors.hpp"
#include "embrel/pipeline.hpp"
#include "embrel/synth.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string output_dir;
    unsigned threads = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("-c,--config", args.config_path, "run configuration (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("-o,--output-dir", args.output_dir, "override the config's output_dir");
    cmd->add_option("-t,--threads", args.threads, "worker threads (0 = hardware)");
}

int execute(const CommonArgs& args, const char* only_analysis) {
    embrel::RunConfig config = embrel::load_config(args.config_path);
    if (!args.output_dir.empty()) config.output_dir = args.output_dir;
    if (args.threads) config.threads = args.threads;

    if (only_analysis) {
        const std::string analysis = only_analysis;
        config.retest = analysis == "retest";
        config.interrater = analysis == "interrater";
        config.internal = analysis == "internal";
        config.stability = analysis == "stability";
        config.features = analysis == "features";
        config.regress = analysis == "regress";
        config.emit_scores = analysis == "score";
    }

    const embrel::ReportSet reports = embrel::run(config);
    const auto written = embrel::write_reports(reports, config.output_dir);
    for (const auto& path : written) std::cout << path.string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"embrel: reliability analysis for word-embedding gender-bias scores"};
    app.require_subcommand(1);

    CommonArgs run_args, score_args, retest_args, interrater_args, internal_args,
        stability_args, features_args, regress_args;

    add_common(app.add_subcommand("run", "full pipeline per the config's analysis toggles"),
               run_args);
    add_common(app.add_subcommand("score", "emit raw and model-averaged bias scores only"),
               score_args);
    add_common(app.add_subcommand("retest", "test-retest reliability only"), retest_args);
    add_common(app.add_subcommand("interrater", "inter-rater consistency only"),
               interrater_args);
    add_common(app.add_subcommand("internal", "internal consistency only"), internal_args);
    add_common(app.add_subcommand("stability", "embedding stability only"), stability_args);
    add_common(app.add_subcommand("features", "feature table only"), features_args);
    add_common(app.add_subcommand("regress", "reliability regression only"), regress_args);

    auto* synth = app.add_subcommand("synth", "generate a synthetic seed ensemble + config");
    embrel::SynthSpec spec;
    std::string synth_out = "synth_out";
    synth->add_option("-o,--out", synth_out, "output directory")->required();
    synth->add_option("--vocab-size", spec.vocab_size, "vocabulary size");
    synth->add_option("--dim", spec.dim, "embedding dimension");
    synth->add_option("--models", spec.models, "number of seed models");
    synth->add_option("--noise-sigma", spec.noise_sigma, "per-entry Gaussian noise sd");
    synth->add_flag("--rotate", spec.rotate, "randomly rotate each model");
    synth->add_option("--gender-strength", spec.gender_strength,
                      "planted direction coefficient");
    synth->add_option("--gendered-fraction", spec.gendered_fraction,
                      "share of filler tokens nudged along the direction");
    synth->add_option("--base-pairs", spec.base_pair_count, "synthetic base pair count");
    synth->add_option("--seed", spec.seed, "generator seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            const embrel::SynthFiles files = embrel::synth_write(spec, synth_out);
            for (const auto& path : files.embedding_files) std::cout << path.string() << '\n';
            std::cout << files.base_pairs.string() << '\n'
                      << files.targets.string() << '\n'
                      << files.query.string() << '\n'
                      << files.counts.string() << '\n'
                      << files.senses.string() << '\n'
                      << files.pos.string() << '\n'
                      << files.config.string() << '\n';
            return 0;
        }
        if (app.get_subcommand("run")->parsed()) return execute(run_args, nullptr);
        if (app.get_subcommand("score")->parsed()) return execute(score_args, "score");
        if (app.get_subcommand("retest")->parsed()) return execute(retest_args, "retest");
        if (app.get_subcommand("interrater")->parsed())
            return execute(interrater_args, "interrater");
        if (app.get_subcommand("internal")->parsed()) return execute(internal_args, "internal");
        if (app.get_subcommand("stability")->parsed())
            return execute(stability_args, "stability");
        if (app.get_subcommand("features")->parsed()) return execute(features_args, "features");
        if (app.get_subcommand("regress")->parsed()) return execute(regress_args, "regress");
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
