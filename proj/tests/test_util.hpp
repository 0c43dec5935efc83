#pragma once

#include <filesystem>
#include <random>
#include <string>

namespace testutil {

// Unique scratch directory, removed on scope exit.
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path = std::filesystem::temp_directory_path() /
               ("chaosflow_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

inline std::filesystem::path preset(const std::string& name) {
    return std::filesystem::path(CHAOSFLOW_PRESET_DIR) / (name + ".json");
}

} // namespace testutil
