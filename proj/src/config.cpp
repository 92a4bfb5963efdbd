#include "voxatn/config.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <sstream>

namespace voxatn::cli {

namespace {

std::string trim(const std::string& s) {
    const std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw UserError("config key '" + key + "': expected boolean, got '" + v + "'");
}

template <typename T>
T parse_num(const std::string& v, const std::string& key) {
    std::istringstream ss(v);
    T out;
    char extra;
    if (!(ss >> out) || (ss >> extra)) throw UserError("config key '" + key + "': bad value '" + v + "'");
    return out;
}

std::vector<cloudio::PaiKind> parse_pai_list(const std::string& v, const std::string& key) {
    std::vector<cloudio::PaiKind> out;
    std::istringstream ss(v);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        if (tok == "mask") out.push_back(cloudio::PaiKind::SiliconeMask);
        else if (tok == "wrap") out.push_back(cloudio::PaiKind::WrapPhoto);
        else throw UserError("config key '" + key + "': unknown PAI '" + tok + "'");
    }
    if (out.empty()) throw UserError("config key '" + key + "': empty PAI list");
    return out;
}

std::string pai_list_string(const std::vector<cloudio::PaiKind>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + cloudio::pai_to_string(v[i]);
    return s;
}

}  // namespace

RunConfig default_config() {
    RunConfig cfg;
    cfg.protocol.mode = padeval::ProtocolMode::Intra;
    cfg.protocol.train_pai = {cloudio::PaiKind::SiliconeMask};
    cfg.protocol.test_pai = {cloudio::PaiKind::SiliconeMask};
    return cfg;
}

void RunConfig::override_seed(std::uint64_t seed) {
    data.master_seed = seed;
    train.rng_seed = seed;
    split_seed = seed;
}

void RunConfig::override_resolution(int resolution) {
    if (resolution < 4) throw UserError("resolution override must be >= 4");
    model.resolution = resolution;
}

RunConfig parse_config(std::istream& in) {
    RunConfig cfg = default_config();
    std::string line, section;
    std::size_t lineno = 0;

    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw UserError("config line " + std::to_string(lineno) + ": unterminated section");
            section = line.substr(1, line.size() - 2);
            if (section != "data" && section != "model" && section != "train" && section != "protocol")
                throw UserError("unknown config section [" + section + "]");
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw UserError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const std::string qual = section + "." + key;

        if (section == "data") {
            if (key == "bona_identities") cfg.data.bona_identities = parse_num<int>(value, qual);
            else if (key == "mask_identities") cfg.data.mask_identities = parse_num<int>(value, qual);
            else if (key == "wrap_identities") cfg.data.wrap_identities = parse_num<int>(value, qual);
            else if (key == "sessions") cfg.data.sessions = parse_num<int>(value, qual);
            else if (key == "points_per_cloud") cfg.data.points_per_cloud = parse_num<int>(value, qual);
            else if (key == "noise_sigma") cfg.data.noise_sigma = parse_num<double>(value, qual);
            else if (key == "master_seed") cfg.data.master_seed = parse_num<std::uint64_t>(value, qual);
            else throw UserError("unknown config key '" + qual + "'");
        } else if (section == "model") {
            if (key == "resolution") cfg.model.resolution = parse_num<int>(value, qual);
            else if (key == "filter_variant") cfg.model.filter_variant = net::variant_from_string(value);
            else if (key == "attention_enabled") cfg.model.attention_enabled = parse_bool(value, qual);
            else if (key == "attention_hidden") cfg.model.attention_hidden = parse_num<int>(value, qual);
            else if (key == "fc_hidden") cfg.model.fc_hidden = parse_num<int>(value, qual);
            else if (key == "leaky_slope") cfg.model.leaky_slope = parse_num<double>(value, qual);
            else throw UserError("unknown config key '" + qual + "'");
        } else if (section == "train") {
            if (key == "batch_size") cfg.train.batch_size = parse_num<int>(value, qual);
            else if (key == "learning_rate") cfg.train.learning_rate = parse_num<double>(value, qual);
            else if (key == "momentum") cfg.train.momentum = parse_num<double>(value, qual);
            else if (key == "epochs") cfg.train.epochs = parse_num<int>(value, qual);
            else if (key == "rotation_copies") cfg.train.augment.rotation_copies = parse_num<int>(value, qual);
            else if (key == "jitter_sigma") cfg.train.augment.jitter_sigma = parse_num<double>(value, qual);
            else if (key == "mirror") cfg.train.augment.mirror = parse_bool(value, qual);
            else if (key == "shift_max") cfg.train.augment.shift_max = parse_num<double>(value, qual);
            else if (key == "rng_seed") cfg.train.rng_seed = parse_num<std::uint64_t>(value, qual);
            else throw UserError("unknown config key '" + qual + "'");
        } else if (section == "protocol") {
            if (key == "mode") cfg.protocol.mode = padeval::mode_from_string(value);
            else if (key == "train_pai") cfg.protocol.train_pai = parse_pai_list(value, qual);
            else if (key == "test_pai") cfg.protocol.test_pai = parse_pai_list(value, qual);
            else if (key == "split_seed") cfg.split_seed = parse_num<std::uint64_t>(value, qual);
            else throw UserError("unknown config key '" + qual + "'");
        } else {
            throw UserError("config line " + std::to_string(lineno) + ": key '" + key + "' outside any section");
        }
    }
    cfg.protocol.validate();
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw UserError("cannot open config file " + path);
    return parse_config(f);
}

std::string echo_config(const RunConfig& cfg) {
    std::ostringstream ss;
    char num[48];
    auto fnum = [&](double v) {
        std::snprintf(num, sizeof(num), "%.17g", v);
        return std::string(num);
    };
    ss << "[data]\n";
    ss << "bona_identities = " << cfg.data.bona_identities << "\n";
    ss << "mask_identities = " << cfg.data.mask_identities << "\n";
    ss << "wrap_identities = " << cfg.data.wrap_identities << "\n";
    ss << "sessions = " << cfg.data.sessions << "\n";
    ss << "points_per_cloud = " << cfg.data.points_per_cloud << "\n";
    ss << "noise_sigma = " << fnum(cfg.data.noise_sigma) << "\n";
    ss << "master_seed = " << cfg.data.master_seed << "\n";
    ss << "\n[model]\n";
    ss << "resolution = " << cfg.model.resolution << "\n";
    ss << "filter_variant = " << net::variant_to_string(cfg.model.filter_variant) << "\n";
    ss << "attention_enabled = " << (cfg.model.attention_enabled ? "true" : "false") << "\n";
    ss << "attention_hidden = " << cfg.model.attention_hidden << "\n";
    ss << "fc_hidden = " << cfg.model.fc_hidden << "\n";
    ss << "leaky_slope = " << fnum(cfg.model.leaky_slope) << "\n";
    ss << "\n[train]\n";
    ss << "batch_size = " << cfg.train.batch_size << "\n";
    ss << "learning_rate = " << fnum(cfg.train.learning_rate) << "\n";
    ss << "momentum = " << fnum(cfg.train.momentum) << "\n";
    ss << "epochs = " << cfg.train.epochs << "\n";
    ss << "rotation_copies = " << cfg.train.augment.rotation_copies << "\n";
    ss << "jitter_sigma = " << fnum(cfg.train.augment.jitter_sigma) << "\n";
    ss << "mirror = " << (cfg.train.augment.mirror ? "true" : "false") << "\n";
    ss << "shift_max = " << fnum(cfg.train.augment.shift_max) << "\n";
    ss << "rng_seed = " << cfg.train.rng_seed << "\n";
    ss << "\n[protocol]\n";
    ss << "mode = " << padeval::mode_to_string(cfg.protocol.mode) << "\n";
    ss << "train_pai = " << pai_list_string(cfg.protocol.train_pai) << "\n";
    ss << "test_pai = " << pai_list_string(cfg.protocol.test_pai) << "\n";
    ss << "split_seed = " << cfg.split_seed << "\n";
    return ss.str();
}

}  // namespace voxatn::cli
