#include "lcsim/config_io.hpp"

#include <fstream>
#include <functional>
#include <sstream>

#include <json.hpp>

namespace lcsim {

namespace {
std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

double parse_num(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("invalid numeric value for " + key + ": " + v);
    }
}
}  // namespace

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);

    RunConfig cfg;
    bool schema_seen = false;
    std::map<std::string, std::function<void(const std::string&, const std::string&)>> setters;

    auto num = [&](double& field) {
        return [&field](const std::string& k, const std::string& v) { field = parse_num(v, k); };
    };
    setters["system.e_g1"] = num(cfg.system.e_g1);
    setters["system.e_g2"] = num(cfg.system.e_g2);
    setters["system.e_x1"] = num(cfg.system.e_x1);
    setters["system.e_x2"] = num(cfg.system.e_x2);
    setters["system.e_t"] = num(cfg.system.e_t);
    setters["system.e_u"] = num(cfg.system.e_u);
    setters["system.gamma_cyc"] = num(cfg.system.gamma_cyc);
    setters["system.gamma_r_tu"] = num(cfg.system.gamma_r_tu);
    setters["system.gamma_d_tu"] = num(cfg.system.gamma_d_tu);
    setters["system.gamma_d_transition"] = num(cfg.system.gamma_d_transition);
    setters["system.branching_g1"] = num(cfg.system.branching_g1);
    setters["bins.bin_length_ps"] = num(cfg.bins.bin_length);
    setters["bins.extraction_offset_ps"] = num(cfg.bins.extraction_offset);
    setters["bins.rotation_offset_ps"] = num(cfg.bins.rotation_offset);
    setters["pulses.rotation_width_ps"] = [&](const std::string& k, const std::string& v) {
        cfg.bins.rotation_sigma = 1.0 / parse_num(v, k);
    };
    setters["pulses.extraction_width_ps"] = [&](const std::string& k, const std::string& v) {
        cfg.bins.extraction_sigma = 1.0 / parse_num(v, k);
    };
    setters["pulses.rotation_phase"] = num(cfg.rotation_phase);
    setters["solver.rtol"] = num(cfg.solver.rtol);
    setters["solver.atol"] = num(cfg.solver.atol);
    setters["solver.initial_step_ps"] = num(cfg.solver.initial_step);
    setters["solver.max_step_ps"] = num(cfg.solver.max_step);
    setters["sweep.kind"] = [&](const std::string&, const std::string& v) {
        if (v != "detuning" && v != "phase" && v != "loss")
            throw ConfigError("sweep.kind must be detuning, phase or loss");
        cfg.sweep.kind = v;
    };
    setters["sweep.start"] = num(cfg.sweep.start);
    setters["sweep.stop"] = num(cfg.sweep.stop);
    setters["sweep.count"] = [&](const std::string& k, const std::string& v) {
        cfg.sweep.count = static_cast<int>(parse_num(v, k));
    };

    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("malformed section header at line " + std::to_string(lineno));
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected key = value at line " + std::to_string(lineno));
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty() && key == "schema") {
            const int v = static_cast<int>(parse_num(value, key));
            if (v != 1) throw ConfigError("unsupported schema version " + value);
            schema_seen = true;
            continue;
        }
        const std::string full = section.empty() ? key : section + "." + key;
        auto it = setters.find(full);
        if (it == setters.end()) throw ConfigError("unknown config key: " + full);
        it->second(full, value);
    }
    if (!schema_seen) throw ConfigError("config file is missing the schema version");
    cfg.system.validate();
    cfg.solver.validate();
    return cfg;
}

std::string config_to_string(const RunConfig& cfg) {
    std::ostringstream out;
    out.precision(15);
    out << "schema = " << cfg.schema << "\n\n[system]\n";
    out << "e_g1 = " << cfg.system.e_g1 << "\ne_g2 = " << cfg.system.e_g2 << "\ne_x1 = "
        << cfg.system.e_x1 << "\ne_x2 = " << cfg.system.e_x2 << "\ne_t = " << cfg.system.e_t
        << "\ne_u = " << cfg.system.e_u << "\ngamma_cyc = " << cfg.system.gamma_cyc
        << "\ngamma_r_tu = " << cfg.system.gamma_r_tu << "\ngamma_d_tu = "
        << cfg.system.gamma_d_tu << "\ngamma_d_transition = " << cfg.system.gamma_d_transition
        << "\nbranching_g1 = " << cfg.system.branching_g1 << "\n";
    out << "\n[pulses]\nrotation_width_ps = " << 1.0 / cfg.bins.rotation_sigma
        << "\nextraction_width_ps = " << 1.0 / cfg.bins.extraction_sigma
        << "\nrotation_phase = " << cfg.rotation_phase << "\n";
    out << "\n[bins]\nbin_length_ps = " << cfg.bins.bin_length << "\nextraction_offset_ps = "
        << cfg.bins.extraction_offset << "\nrotation_offset_ps = " << cfg.bins.rotation_offset
        << "\n";
    out << "\n[solver]\nrtol = " << cfg.solver.rtol << "\natol = " << cfg.solver.atol
        << "\ninitial_step_ps = " << cfg.solver.initial_step << "\nmax_step_ps = "
        << cfg.solver.max_step << "\n";
    out << "\n[sweep]\nkind = " << cfg.sweep.kind << "\nstart = " << cfg.sweep.start
        << "\nstop = " << cfg.sweep.stop << "\ncount = " << cfg.sweep.count << "\n";
    return out.str();
}

void save_config(const RunConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open " + path);
    out << config_to_string(cfg);
}

void RunManifest::save_json(const std::string& path) const {
    nlohmann::json j;
    j["subcommand"] = subcommand;
    j["config"] = config_snapshot;
    j["grid"] = grid;
    j["resolution"] = resolution;
    j["workers"] = workers;
    j["n_qubits"] = n_qubits;
    j["k_max"] = k_max;
    j["wall_clock_s"] = wall_clock_s;
    j["outputs"] = outputs;
    j["code_version"] = code_version;
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open " + path);
    out << j.dump(2) << '\n';
}

}  // namespace lcsim
