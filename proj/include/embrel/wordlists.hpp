#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace embrel {

/// A gendered word pair (m, f) defining one gender direction.
struct BasePair {
    std::string male;
    std::string female;
    std::string label() const { return male + "~" + female; }
    bool operator==(const BasePair&) const = default;
};

/// Named ordered list of target words to score.
struct TargetList {
    std::string name;
    std::vector<std::string> words;
};

/// A set of conceptually related target words whose scores are aggregated
/// into one concept-level bias (e.g. "arts").
struct Query {
    std::string name;
    std::vector<std::string> words;
};

/// Loads "male<TAB>female" pairs; '#' starts a comment line. Both sides are
/// lower-cased. A pair whose sides coincide after lower-casing is an error.
std::vector<BasePair> load_base_pairs(const std::filesystem::path& path);

/// Loads one token per line ('#' comments), lower-cased, deduplicated
/// keep-first. The list name is the file stem.
TargetList load_target_list(const std::filesystem::path& path);
Query load_query(const std::filesystem::path& path);

/// Bundled word lists. The directory defaults to the compiled-in data path
/// and can be overridden with the EMBREL_DATA_DIR environment variable.
namespace resources {

std::filesystem::path dir();
std::filesystem::path base_pairs_file();
std::vector<std::filesystem::path> query_files();
std::filesystem::path target_list_file(const std::string& name);  // occ16 | occ18 | adj
std::filesystem::path singular_plural_file();

/// Matched (singular pair label, plural pair label) rows used by the
/// singular-vs-plural reliability comparison.
std::vector<std::pair<std::string, std::string>> singular_plural_pairs();

}  // namespace resources

}  // namespace embrel
