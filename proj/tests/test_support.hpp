#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#ifndef ENSEMBLE_TEST_FIXTURES
#define ENSEMBLE_TEST_FIXTURES "tests/fixtures"
#endif

namespace testing {

inline std::filesystem::path fixture(const std::string& name) {
    return std::filesystem::path(ENSEMBLE_TEST_FIXTURES) / name;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& s) {
    std::ofstream f(p, std::ios::binary);
    f << s;
}

/// Fresh empty directory under the build tree's temp area.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("ensemble_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace testing
