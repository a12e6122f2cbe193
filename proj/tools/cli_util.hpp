#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "flab/errors.hpp"
#include "flab/manifest.hpp"
#include "flab/model.hpp"
#include "flab/version.hpp"

namespace flab::cli {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitSchema = 5;

inline uint64_t default_seed() {
    if (const char* env = std::getenv("FIDELITY_LAB_SEED")) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (end && *end == '\0') return v;
        throw ConfigError("FIDELITY_LAB_SEED is not an integer: " + std::string(env));
    }
    return 7;
}

// Pre-parse scan for --from-manifest; returns that manifest's resolved
// config so it can seed the flag defaults (explicit flags still win).
inline nlohmann::json manifest_defaults(int argc, char** argv) {
    for (int i = 1; i + 1 < argc; ++i)
        if (std::string(argv[i]) == "--from-manifest")
            return RunManifest::load(argv[i + 1]).config;
    return nlohmann::json::object();
}

template <class T>
void apply_default(const nlohmann::json& cfg, const char* key, T& var) {
    if (cfg.contains(key)) var = cfg.at(key).get<T>();
}

inline void require_out_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir))
        throw IoError("output directory is not writable: " + dir);
}

inline std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open: " + path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(is, line))
        if (!line.empty()) out.push_back(line);
    return out;
}

struct Csv {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        throw SchemaError("csv: no column named \"" + name + "\"", 1);
    }
};

inline Csv read_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open: " + path);
    Csv out;
    std::string line;
    long lineno = 0;
    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::stringstream ss(s);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!s.empty() && s.back() == ',') cells.push_back("");
        return cells;
    };
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (out.header.empty()) {
            out.header = split(line);
        } else {
            auto cells = split(line);
            cells.resize(out.header.size());
            out.rows.push_back(std::move(cells));
        }
    }
    if (out.header.empty()) throw SchemaError("csv: empty file " + path, 1);
    return out;
}

inline std::string fmt10(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

// Model-size presets for the train command.
inline ModelConfig size_preset(const std::string& name, Role role) {
    ModelConfig c;
    c.role = role;
    if (name == "micro") {
        c.n_layers = 2;
        c.d_model = 32;
        c.n_heads = 4;
        c.d_ff = 128;
    } else if (name == "tiny") {
        c.n_layers = 2;
        c.d_model = 64;
        c.n_heads = 4;
        c.d_ff = 256;
    } else if (name == "small") {
        c.n_layers = 4;
        c.d_model = 128;
        c.n_heads = 8;
        c.d_ff = 512;
    } else {
        throw ConfigError("unknown model size \"" + name + "\" (micro|tiny|small)");
    }
    return c;
}

} // namespace flab::cli
