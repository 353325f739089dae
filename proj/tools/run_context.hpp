#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace qmr::cli {

inline constexpr const char* kToolVersion = "1.0.0";

/// Hex SHA-256 of a byte string.
std::string sha256_hex(const std::string& bytes);

/// runs/<YYYYmmdd-HHMMSS>_s<seed>
std::filesystem::path default_run_dir(std::uint64_t seed);

/// Output directory of one command. Every artifact written through it is
/// listed with its SHA-256 in run.json, which contains nothing that varies
/// between identical invocations.
class RunContext {
public:
    RunContext(std::filesystem::path dir, std::string command, std::uint64_t seed);

    const std::filesystem::path& dir() const { return dir_; }
    std::filesystem::path path(const std::string& relative) const { return dir_ / relative; }

    void write_text(const std::string& relative, const std::string& content);
    /// Registers a file some module already wrote under dir().
    void add_output(const std::string& relative);

    /// Writes config.toml and run.json. Returns true when an earlier run.json
    /// in the same directory had identical content.
    bool finish(const std::string& resolved_config, const nlohmann::json& extra);

private:
    std::filesystem::path dir_;
    std::string command_;
    std::uint64_t seed_;
    std::vector<std::string> outputs_;
};

}  // namespace qmr::cli
