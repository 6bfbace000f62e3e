#pragma once

#include "cfr/data.hpp"
#include "cfr/random.hpp"

#include <filesystem>
#include <fstream>
#include <string>

namespace testing {

inline cfr::Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, cfr::Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    cfr::Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
    }
    return m;
}

// Random 0/1 vector with at least one unit in each group.
inline cfr::Vector two_group_treatment(Eigen::Index n, cfr::Rng& rng, double p = 0.5) {
    std::bernoulli_distribution coin(p);
    cfr::Vector t(n);
    for (Eigen::Index i = 0; i < n; ++i) t[i] = coin(rng) ? 1.0 : 0.0;
    t[0] = 1.0;
    t[n - 1] = 0.0;
    return t;
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("cfr_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream(path) << text;
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace testing
