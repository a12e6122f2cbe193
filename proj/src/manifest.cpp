#include "flab/manifest.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "flab/errors.hpp"

namespace flab {

using nlohmann::json;

std::string iso8601_utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void RunManifest::write(const std::string& path) const {
    json j;
    j["command"] = command;
    j["version"] = version;
    j["seed"] = seed;
    j["config"] = config;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["started_at"] = started_at;
    j["finished_at"] = finished_at;
    j["status"] = status;
    if (!error.empty()) j["error"] = error;
    if (failed_step >= 0) j["failed_step"] = failed_step;
    std::ofstream os(path);
    if (!os) throw IoError("cannot write manifest: " + path);
    os << j.dump(2) << "\n";
    if (!os) throw IoError("manifest write failed: " + path);
}

RunManifest RunManifest::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open manifest: " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    json j;
    try {
        j = json::parse(ss.str());
    } catch (const json::exception& e) {
        throw SchemaError(std::string("manifest: invalid JSON: ") + e.what());
    }
    RunManifest m;
    try {
        m.command = j.at("command").get<std::string>();
        m.version = j.value("version", "");
        m.seed = j.value("seed", uint64_t{0});
        m.config = j.value("config", json::object());
        m.inputs = j.value("inputs", std::vector<std::string>{});
        m.outputs = j.value("outputs", std::vector<std::string>{});
        m.started_at = j.value("started_at", "");
        m.finished_at = j.value("finished_at", "");
        m.status = j.value("status", "");
        m.error = j.value("error", "");
        m.failed_step = j.value("failed_step", -1L);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("manifest: missing field: ") + e.what());
    }
    return m;
}

} // namespace flab
