#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "embrel/embedding.hpp"
#include "embrel/features.hpp"
#include "embrel/scoring.hpp"
#include "json.hpp"

namespace embrel {

struct EnsembleSpec {
    std::string algorithm;
    std::string corpus;
    std::vector<std::string> files;
    TextFormat format = TextFormat::Auto;
};

/// Declarative run configuration; the JSON schema mirrors these fields.
struct RunConfig {
    std::vector<EnsembleSpec> ensembles;
    std::vector<ScoringRule> rules = {{RuleKind::Dbwa, 100},
                                      {RuleKind::Ripa, 100},
                                      {RuleKind::Nbm, 100}};
    NbmPolicy nbm_policy;
    std::string basepairs_path;              // empty: bundled 23 pairs
    std::vector<std::string> target_lists;   // paths
    std::vector<std::string> query_paths;    // empty: bundled six queries
    std::optional<std::string> counts_path;
    std::optional<std::string> senses_path;
    std::optional<std::string> pos_path;
    std::string output_dir = "reports";
    bool retest = true;
    bool interrater = true;
    bool internal = true;
    bool stability = true;
    bool features = false;
    bool regress = false;
    bool emit_scores = false;  // set by the `score` subcommand
    std::size_t stability_pair_budget = 0;  // 0: all pairs
    bool interrater_zscore = false;
    Aggregation singular_plural_aggregation = Aggregation::Median;
    unsigned threads = 0;
    nlohmann::json raw;  // original config document, echoed into the manifest
};

RunConfig config_from_json(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const RunConfig& config);

/// All report bodies are assembled in memory and written at the end, so a
/// failing stage leaves no partial reports behind.
struct ReportSet {
    std::map<std::string, std::string> files;  // file name -> CSV body
    nlohmann::json manifest;
};

/// Executes load -> align -> score -> slice -> estimate plus the enabled
/// optional stages, and assembles every report.
ReportSet run(const RunConfig& config);

/// Writes the report bodies plus manifest.json into out_dir.
std::vector<std::filesystem::path> write_reports(const ReportSet& reports,
                                                 const std::filesystem::path& out_dir);

struct DistributionSummary {
    bool empty = true;
    std::string reason;
    std::size_t n = 0;
    double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
    std::size_t iqr_outliers = 0;   // outside [q1 - 1.5 IQR, q3 + 1.5 IQR]
    double frac_below_half = 0.0;
    std::size_t degenerate_excluded = 0;
};

/// Five-number summary (type-7 quantiles) with the 1.5xIQR outlier count
/// and the fraction of scores below 0.5. Degenerate scores are excluded
/// upstream; their count is carried through for the report.
DistributionSummary summarize_distribution(std::vector<double> scores,
                                           std::size_t degenerate_excluded = 0);

/// Numbers in reports are printed with 10 significant digits.
std::string format_number(double v);

/// Checksum used in the manifest (FNV-1a, 64 bit, hex).
std::string fnv1a64_hex(std::string_view bytes);

}  // namespace embrel
