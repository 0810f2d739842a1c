#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "stprotein/csv.hpp"
#include "stprotein/version.hpp"

namespace stprotein {

/// Provenance record written atomically next to every command's outputs.
struct RunManifest {
    std::string command;
    nlohmann::json config;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::uint64_t seed = 0;
    double wall_seconds = 0.0;
};

inline void write_run_manifest(const std::string& dir, const RunManifest& m) {
    nlohmann::json j{{"command", m.command}, {"config", m.config},   {"inputs", m.inputs},
                     {"outputs", m.outputs}, {"seed", m.seed},       {"wall_seconds", m.wall_seconds},
                     {"version", kVersion}};
    csv::write_file_atomic(dir + "/run_manifest.json", j.dump(2) + "\n");
}

} // namespace stprotein
