#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fable {

struct ManifestOutput {
    std::string path;
    std::string sha256;
};

/// Record of one CLI run. `argv` (without the program name) is what replay
/// re-executes; the input and output digests let replay verify that it
/// reproduced the run.
struct RunManifest {
    std::string subcommand;
    std::vector<std::string> argv;
    std::string config_json = "{}";  ///< resolved options, serialized JSON object
    std::optional<int> k_hat;
    std::optional<double> tau_sq;
    std::optional<double> rho;
    std::optional<double> gamma_n;
    std::string version;
    std::optional<std::uint64_t> seed;
    std::string started_utc;
    std::string finished_utc;
    std::string input_path;
    std::string input_sha256;
    std::vector<ManifestOutput> outputs;
};

std::string sha256_hex(const std::filesystem::path& path);
std::string sha256_hex_bytes(std::string_view bytes);
std::string utc_timestamp();

void save_manifest(const std::filesystem::path& path, const RunManifest& manifest);
RunManifest load_manifest(const std::filesystem::path& path);

}  // namespace fable
