#include "fable/manifest.hpp"

#include "fable/error.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <array>
#include <chrono>
#include <ctime>
#include <fstream>
#include <memory>

namespace fable {

using nlohmann::json;

namespace {

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new(), &EVP_MD_CTX_free) {
        if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1)
            throw Error(ErrorCode::IoError, "SHA-256 initialisation failed");
    }

    void update(const void* data, std::size_t size) { EVP_DigestUpdate(ctx_.get(), data, size); }

    std::string hex() {
        std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
        unsigned int len = 0;
        EVP_DigestFinal_ex(ctx_.get(), digest.data(), &len);
        static constexpr char kHex[] = "0123456789abcdef";
        std::string out;
        for (unsigned int i = 0; i < len; ++i) {
            out += kHex[digest[i] >> 4];
            out += kHex[digest[i] & 0xf];
        }
        return out;
    }

private:
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

template <typename T>
void put_optional(json& j, const char* key, const std::optional<T>& value) {
    j[key] = value ? json(*value) : json(nullptr);
}

template <typename T>
std::optional<T> get_optional(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<T>();
}

}  // namespace

std::string sha256_hex(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for hashing");
    Sha256 h;
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    return h.hex();
}

std::string sha256_hex_bytes(std::string_view bytes) {
    Sha256 h;
    h.update(bytes.data(), bytes.size());
    return h.hex();
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void save_manifest(const std::filesystem::path& path, const RunManifest& m) {
    json j;
    j["format"] = "FABLE-MANIFEST-v1";
    j["subcommand"] = m.subcommand;
    j["argv"] = m.argv;
    j["config"] = json::parse(m.config_json);
    put_optional(j, "k_hat", m.k_hat);
    put_optional(j, "tau_sq", m.tau_sq);
    put_optional(j, "rho", m.rho);
    put_optional(j, "gamma_n", m.gamma_n);
    j["version"] = m.version;
    // Stored as a string: JSON readers commonly lose 64-bit integer precision.
    j["seed"] = m.seed ? json(std::to_string(*m.seed)) : json(nullptr);
    j["started_utc"] = m.started_utc;
    j["finished_utc"] = m.finished_utc;
    j["input"] = {{"path", m.input_path}, {"sha256", m.input_sha256}};
    json outputs = json::array();
    for (const auto& o : m.outputs) outputs.push_back({{"path", o.path}, {"sha256", o.sha256}});
    j["outputs"] = outputs;

    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
    out << j.dump(2) << '\n';
    if (!out) throw Error(ErrorCode::IoError, "failed writing '" + path.string() + "'");
}

RunManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for reading");
    try {
        const json j = json::parse(in);
        if (j.value("format", "") != "FABLE-MANIFEST-v1") throw Error(ErrorCode::MagicMismatch, "not a run manifest");
        RunManifest m;
        m.subcommand = j.at("subcommand").get<std::string>();
        m.argv = j.at("argv").get<std::vector<std::string>>();
        m.config_json = j.at("config").dump();
        m.k_hat = get_optional<int>(j, "k_hat");
        m.tau_sq = get_optional<double>(j, "tau_sq");
        m.rho = get_optional<double>(j, "rho");
        m.gamma_n = get_optional<double>(j, "gamma_n");
        m.version = j.value("version", "");
        if (auto seed = get_optional<std::string>(j, "seed")) m.seed = std::stoull(*seed);
        m.started_utc = j.value("started_utc", "");
        m.finished_utc = j.value("finished_utc", "");
        m.input_path = j.at("input").value("path", "");
        m.input_sha256 = j.at("input").value("sha256", "");
        for (const auto& o : j.at("outputs")) m.outputs.push_back({o.at("path").get<std::string>(), o.at("sha256").get<std::string>()});
        return m;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
}

}  // namespace fable
