#pragma once

#include <map>
#include <string>
#include <vector>

#include "lcsim/protocol.hpp"

namespace lcsim {

struct SweepSpec {
    std::string kind = "loss";  // detuning | phase | loss
    double start = 0.0;
    double stop = 2.5;
    int count = 11;
};

// One human-readable configuration file with sections [system], [pulses],
// [bins], [solver], [sweep]. Schema versioned; unknown keys are rejected.
struct RunConfig {
    int schema = 1;
    SystemConfig system;
    BinConfig bins;
    PropagationSettings solver;
    double rotation_phase = 0.0;
    SweepSpec sweep;
};

RunConfig load_config(const std::string& path);
void save_config(const RunConfig& cfg, const std::string& path);
std::string config_to_string(const RunConfig& cfg);

// Reproducibility sidecar written next to every CLI output set.
struct RunManifest {
    std::string subcommand;
    std::string config_snapshot;
    std::string grid;
    int resolution = 0;
    int workers = 0;
    int n_qubits = 0;
    int k_max = 0;
    double wall_clock_s = 0.0;
    std::vector<std::string> outputs;
    std::string code_version = "lcsim 0.1.0";
    void save_json(const std::string& path) const;
};

}  // namespace lcsim
