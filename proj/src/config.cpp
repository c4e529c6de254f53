#include "dicke/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace dicke {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* what) {
    throw ConfigError("key '" + key + "': cannot parse '" + value + "' as " + what);
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) bad_value(key, v, "a number");
        return x;
    } catch (const std::logic_error&) {
        bad_value(key, v, "a number");
    }
}

}  // namespace

const std::vector<std::string>& Config::known_keys() {
    static const std::vector<std::string> keys = {
        "model.N", "model.rabi", "model.V", "model.gamma", "model.delta", "model.kappa", "model.omega",
        "modes.kind", "modes.frequencies", "modes.matrix_file",
        "init.A_re", "init.A_im", "init.Jx", "init.Jy", "init.Jz",
        "run.t_final", "run.dt_sample", "run.rtol", "run.atol", "run.n_trajectories", "run.seed",
        "run.n_max", "run.dt_max", "run.cutoff_guard", "run.grow_cutoff", "run.recoil", "run.eta", "run.bin_width", "run.emission_file",
        "quantum.modes",
        "scan.V_min", "scan.V_max", "scan.V_count", "scan.gamma_min", "scan.gamma_max",
        "scan.gamma_count", "scan.intermittency", "scan.lc_t_total",
        "dressing.gamma1", "dressing.gamma2", "dressing.drive_rabi", "dressing.drive_detuning",
        "dressing.probe_detuning", "dressing.probe_rabi",
        "output.dir", "output.observables",
    };
    return keys;
}

void Config::put(const std::string& key, const std::string& value, const std::string& where, bool allow_replace) {
    const auto& keys = known_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
        throw ConfigError(where + ": unknown key '" + key + "'");
    if (!allow_replace && values_.count(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
    values_[key] = value;
}

Config Config::parse(std::istream& is, const std::string& source) {
    Config c;
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string where = source + ":" + std::to_string(lineno);
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(where + ": empty key");
        if (!section.empty()) key = section + "." + key;
        c.put(key, value, where, false);
    }
    return c;
}

Config Config::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    return parse(in, path.string());
}

void Config::set(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + assignment + "'");
    put(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)), "--set", true);
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
    return get_optional_double(key).value_or(fallback);
}

std::optional<double> Config::get_optional_double(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return parse_double(key, it->second);
}

long Config::get_int(const std::string& key, long fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    long x = 0;
    const auto& v = it->second;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "an integer");
    return x;
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::uint64_t x = 0;
    const auto& v = it->second;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "an unsigned 64-bit integer");
    return x;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const auto& v = it->second;
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    bad_value(key, v, "a boolean");
}

std::vector<double> Config::get_doubles(const std::string& key) const {
    std::vector<double> out;
    const auto it = values_.find(key);
    if (it == values_.end()) return out;
    std::stringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim(item)));
    return out;
}

namespace {

Eigen::MatrixXd read_matrix(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open coupling matrix file " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        std::vector<double> row;
        double x;
        while (ls >> x) row.push_back(x);
        if (!ls.eof()) throw ConfigError("non-numeric entry in " + path.string());
        if (!row.empty()) rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ConfigError("coupling matrix file " + path.string() + " is empty");
    Eigen::MatrixXd m(rows.size(), rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows[0].size()) throw ConfigError("ragged coupling matrix in " + path.string());
        for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
    }
    return m;
}

}  // namespace

ModelParams model_from_config(const Config& c) {
    ModelParams p;
    p.N = static_cast<int>(c.get_int("model.N", 1));
    p.rabi = c.get_double("model.rabi", 1.0);
    p.coupling = c.get_double("model.V", 0.0);
    p.spin_decay = c.get_double("model.gamma", 0.0);
    p.detuning = c.get_double("model.delta", 0.0);
    p.phonon_decay = c.get_double("model.kappa", 0.0);
    p.trap_frequency = c.get_optional_double("model.omega");

    const std::string kind = c.get_string("modes.kind", "com");
    if (kind == "three_ion") {
        if (p.N != 3) throw ConfigError("modes.kind = three_ion requires model.N = 3");
        p.modes = normal_modes_3ion(p.omega(), p.coupling);
    } else if (kind == "explicit") {
        if (!c.has("modes.matrix_file") || !c.has("modes.frequencies"))
            throw ConfigError("modes.kind = explicit needs modes.matrix_file and modes.frequencies");
        p.modes.frequencies = c.get_doubles("modes.frequencies");
        p.modes.coupling = read_matrix(c.get_string("modes.matrix_file", ""));
    } else if (kind != "com") {
        throw ConfigError("modes.kind must be com, three_ion or explicit");
    }
    return validate_params(p);
}

MeanFieldState initial_state_from_config(const Config& c) {
    MeanFieldState s = ground_state();
    s.A = cplx(c.get_double("init.A_re", 0.0), c.get_double("init.A_im", 0.0));
    s.J = Eigen::Vector3d(c.get_double("init.Jx", 0.0), c.get_double("init.Jy", 0.0), c.get_double("init.Jz", -0.5));
    return s;
}

DressingParams dressing_from_config(const Config& c) {
    DressingParams d;
    d.gamma1 = c.get_double("dressing.gamma1", 0.0);
    d.gamma2 = c.get_double("dressing.gamma2", 0.0);
    d.drive_rabi = c.get_double("dressing.drive_rabi", 0.0);
    d.drive_detuning = c.get_double("dressing.drive_detuning", 0.0);
    d.probe_detuning = c.get_double("dressing.probe_detuning", 0.0);
    d.probe_rabi = c.get_double("dressing.probe_rabi", 1.0);
    validate_dressing(d);
    return d;
}

}  // namespace dicke
