#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "embrel/matrix.hpp"

namespace test_util {

/// Unique scratch directory, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<unsigned> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("embrel_test_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path file(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::filesystem::path write_file(const std::filesystem::path& path,
                                        const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
    return path;
}

inline embrel::Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                                    double sd = 1.0) {
    std::normal_distribution<double> gauss(0.0, sd);
    embrel::Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) m(i, j) = gauss(rng);
    return m;
}

inline embrel::Matrix matrix_from(const std::vector<std::vector<double>>& rows) {
    embrel::Matrix m(rows.size(), rows.at(0).size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
    return m;
}

/// Gram-Schmidt random orthogonal matrix (test-side; independent of the
/// library's generator).
inline embrel::Matrix random_orthogonal(std::size_t d, std::mt19937_64& rng) {
    embrel::Matrix q = random_matrix(d, d, rng);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t prev = 0; prev < j; ++prev) {
            double proj = 0.0;
            for (std::size_t i = 0; i < d; ++i) proj += q(i, prev) * q(i, j);
            for (std::size_t i = 0; i < d; ++i) q(i, j) -= proj * q(i, prev);
        }
        double norm = 0.0;
        for (std::size_t i = 0; i < d; ++i) norm += q(i, j) * q(i, j);
        norm = std::sqrt(norm);
        for (std::size_t i = 0; i < d; ++i) q(i, j) /= norm;
    }
    return q;
}

}  // namespace test_util
