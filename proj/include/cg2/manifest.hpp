#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cg2/errors.hpp"

namespace cg2 {

constexpr const char* kToolVersion = "0.1.0";

// One record per invocation, appended to <out>/manifest.jsonl. Carries
// everything needed to reproduce the artifacts next to it.
struct RunManifest {
    std::string command;
    nlohmann::json resolved_config = nlohmann::json::object();
    uint64_t seed = 0;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    double wall_clock_sec = 0.0;
};

inline void append_manifest(const std::string& out_dir, const RunManifest& m) {
    std::filesystem::create_directories(out_dir);
    nlohmann::json j = {{"command", m.command},
                        {"resolved_config", m.resolved_config},
                        {"seed", m.seed},
                        {"inputs", m.inputs},
                        {"outputs", m.outputs},
                        {"tool_version", kToolVersion},
                        {"wall_clock_sec", m.wall_clock_sec}};
    std::ofstream f(out_dir + "/manifest.jsonl", std::ios::app);
    if (!f) throw DataError("cannot append manifest in " + out_dir);
    f << j.dump() << "\n";
}

class WallClock {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

  public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

}  // namespace cg2
