#include "embrel/wordlists.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <unordered_set>

#include "embrel/errors.hpp"

#ifndef EMBREL_DATA_DIR
#define EMBREL_DATA_DIR "data"
#endif

namespace embrel {

namespace {

std::string lower_ascii(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::string strip(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open word list: " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

std::vector<std::string> load_tokens(const std::filesystem::path& path) {
    std::vector<std::string> words;
    std::unordered_set<std::string> seen;
    std::size_t line_no = 0;
    for (const auto& raw : read_lines(path)) {
        ++line_no;
        std::string token = strip(raw);
        if (token.empty() || token[0] == '#') continue;
        token = lower_ascii(token);
        if (seen.insert(token).second) words.push_back(std::move(token));
    }
    if (words.empty()) throw ParseError("no tokens in word list: " + path.string());
    return words;
}

}  // namespace

std::vector<BasePair> load_base_pairs(const std::filesystem::path& path) {
    std::vector<BasePair> pairs;
    std::size_t line_no = 0;
    for (const auto& raw : read_lines(path)) {
        ++line_no;
        std::string line = strip(raw);
        if (line.empty() || line[0] == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw ParseError("base pair row needs 'male<TAB>female'", line_no);
        BasePair p{lower_ascii(strip(line.substr(0, tab))),
                   lower_ascii(strip(line.substr(tab + 1)))};
        if (p.male.empty() || p.female.empty())
            throw ParseError("base pair has an empty side", line_no);
        if (p.male == p.female)
            throw ParseError("base pair sides coincide: '" + p.male + "'", line_no);
        pairs.push_back(std::move(p));
    }
    if (pairs.empty()) throw ParseError("no base pairs in " + path.string());
    return pairs;
}

TargetList load_target_list(const std::filesystem::path& path) {
    return TargetList{path.stem().string(), load_tokens(path)};
}

Query load_query(const std::filesystem::path& path) {
    return Query{path.stem().string(), load_tokens(path)};
}

namespace resources {

std::filesystem::path dir() {
    if (const char* env = std::getenv("EMBREL_DATA_DIR")) return env;
    return EMBREL_DATA_DIR;
}

std::filesystem::path base_pairs_file() { return dir() / "base_pairs.tsv"; }

std::vector<std::filesystem::path> query_files() {
    static const char* names[] = {"career", "family", "arts", "arts_2", "math", "science"};
    std::vector<std::filesystem::path> out;
    for (const char* n : names) out.push_back(dir() / "queries" / (std::string(n) + ".txt"));
    return out;
}

std::filesystem::path target_list_file(const std::string& name) {
    return dir() / "targets" / (name + ".txt");
}

std::filesystem::path singular_plural_file() { return dir() / "singular_plural.tsv"; }

std::vector<std::pair<std::string, std::string>> singular_plural_pairs() {
    std::vector<std::pair<std::string, std::string>> out;
    std::size_t line_no = 0;
    for (const auto& raw : read_lines(singular_plural_file())) {
        ++line_no;
        std::string line = strip(raw);
        if (line.empty() || line[0] == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw ParseError("singular/plural row needs two tab-separated labels", line_no);
        out.emplace_back(strip(line.substr(0, tab)), strip(line.substr(tab + 1)));
    }
    return out;
}

}  // namespace resources

}  // namespace embrel
