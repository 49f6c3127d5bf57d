#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace embrel {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed input file. Carries the 1-based line number when known.
struct ParseError : Error {
    ParseError(const std::string& msg, std::size_t line_no = 0)
        : Error(line_no ? msg + " (line " + std::to_string(line_no) + ")" : msg),
          line(line_no) {}
    std::size_t line = 0;
};

/// A token required by a scoring or feature operation is not in the vocabulary.
struct MissingWordError : Error {
    explicit MissingWordError(const std::string& token)
        : Error("word not in vocabulary: '" + token + "'"), word(token) {}
    std::string word;
};

/// A vector required to have nonzero norm is the zero vector.
struct DegenerateVectorError : Error {
    using Error::Error;
};

/// The base-pair difference vector is zero (m and f coincide).
struct DegeneratePairError : Error {
    using Error::Error;
};

/// Invalid run configuration or command-line input.
struct ConfigError : Error {
    using Error::Error;
};

}  // namespace embrel
