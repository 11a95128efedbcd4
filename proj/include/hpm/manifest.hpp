#pragma once

#include <json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace hpm::manifest {

inline constexpr std::string_view kToolVersion = "0.1.0";

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

struct FileDigest {
    std::string path;
    std::string sha256;
};

/// Record written next to every CLI output: enough to rerun the command and check that
/// the outputs come back byte-for-byte. Holds no timestamps, so it is itself reproducible.
struct RunManifest {
    std::string command;
    std::vector<std::string> argv;
    std::vector<FileDigest> inputs;
    nlohmann::json config = nlohmann::json::object();
    std::vector<FileDigest> outputs;  // paths relative to the output directory

    void add_input(const std::filesystem::path& p);
    void add_output(const std::filesystem::path& out_dir, const std::filesystem::path& p);
    nlohmann::json to_json() const;
    void write(const std::filesystem::path& path) const;
};

}  // namespace hpm::manifest
