#include "run_context.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "qmr/error.hpp"

namespace qmr::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 computation failed");
    std::ostringstream os;
    os << std::hex << std::setfill('0');
    for (unsigned int i = 0; i < len; ++i) os << std::setw(2) << static_cast<int>(digest[i]);
    return os.str();
}

fs::path default_run_dir(std::uint64_t seed) {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    localtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y%m%d-%H%M%S") << "_s" << seed;
    return fs::path("runs") / os.str();
}

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot read " + p.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace

RunContext::RunContext(fs::path dir, std::string command, std::uint64_t seed)
    : dir_(std::move(dir)), command_(std::move(command)), seed_(seed) {
    fs::create_directories(dir_);
}

void RunContext::write_text(const std::string& relative, const std::string& content) {
    const fs::path p = dir_ / relative;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out << content;
    if (!out) throw IoError("cannot write " + p.string());
    add_output(relative);
}

void RunContext::add_output(const std::string& relative) {
    if (std::find(outputs_.begin(), outputs_.end(), relative) == outputs_.end()) outputs_.push_back(relative);
}

bool RunContext::finish(const std::string& resolved_config, const json& extra) {
    write_text("config.toml", resolved_config);
    json outputs = json::object();
    for (const auto& rel : outputs_) outputs[rel] = sha256_hex(read_file(dir_ / rel));

    json manifest = {{"tool", "qmr"},   {"version", kToolVersion}, {"command", command_},
                     {"seed", seed_},   {"outputs", outputs}};
    for (const auto& [k, v] : extra.items()) manifest[k] = v;
    const std::string text = manifest.dump(2) + "\n";

    bool reproduced = false;
    const fs::path run_json = dir_ / "run.json";
    if (fs::exists(run_json)) reproduced = read_file(run_json) == text;
    std::ofstream out(run_json, std::ios::binary);
    out << text;
    if (!out) throw IoError("cannot write " + run_json.string());
    return reproduced;
}

}  // namespace qmr::cli
