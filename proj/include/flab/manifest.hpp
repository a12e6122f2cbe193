#pragma once

#include <json.hpp>
#include <string>
#include <vector>

namespace flab {

// Every CLI command writes one of these into its output directory before
// doing any work and finalizes it on completion, so a run can be audited and
// replayed from the resolved configuration alone.
struct RunManifest {
    std::string command;
    std::string version;
    uint64_t seed = 0;
    nlohmann::json config; // fully resolved flag values
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::string started_at;
    std::string finished_at;
    std::string status = "running"; // running | complete | failed
    std::string error;
    long failed_step = -1;

    void write(const std::string& path) const;
    static RunManifest load(const std::string& path);
};

std::string iso8601_utc_now();

} // namespace flab
