#pragma once

#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "grainpick/errors.hpp"
#include "grainpick/material.hpp"

namespace grainpick {

/// A material plus the collection-time constants calibrated for it. The
/// numeric values are data, not logic: they were fixed by pilot runs and are
/// dumpable/overridable through the plain-text config.
struct MaterialPreset {
    MaterialParams params;
    double fill_mass_g = 0.0;   // pick-tray fill used by collection and evaluation
    int attempts_small = 50;    // eval attempts per target when dataset size <= 100
};

enum class OptimizerTag { sgd, adam };

inline std::string to_string(OptimizerTag t) { return t == OptimizerTag::sgd ? "sgd" : "adam"; }

inline OptimizerTag optimizer_from_string(const std::string& s) {
    if (s == "sgd") return OptimizerTag::sgd;
    if (s == "adam") return OptimizerTag::adam;
    throw config_error("unknown optimizer '" + s + "'");
}

/// Hyperparameters for one training run of a dense network.
struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 32;
    int epochs = 120;
    double weight_decay = 0.0;  // decoupled, applied per optimizer step
    double l1_input = 0.0;      // proximal L1 on the first layer (input selection)
    OptimizerTag optimizer = OptimizerTag::adam;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(learning_rate > 0.0)) throw config_error("learning_rate must be > 0");
        if (batch_size < 1) throw config_error("batch_size must be >= 1");
        if (epochs < 1) throw config_error("epochs must be >= 1");
        if (weight_decay < 0.0) throw config_error("weight_decay must be >= 0");
        if (l1_input < 0.0) throw config_error("l1_input must be >= 0");
    }
};

/// Every tunable of the pipeline in one place. Defaults reproduce the desk
/// scale experiment; dump()/parse() give a plain-text key = value round trip.
struct ExperimentConfig {
    // Geometry (units: mm and cells).
    int patch_cells = 30;
    double cell_size_mm = 5.0;
    int tray_cols = 120;
    int tray_rows = 75;
    double tray_depth_mm = 145.0;
    int gripper_cols = 6;
    int gripper_rows = 2;
    double insertion_depth_mm = 20.0;

    // Labels and selection.
    double scale_resolution_g = 1.0;
    double band_g = 0.5;  // scale_resolution_g / 2
    int grid_nx = 45;
    int grid_ny = 20;
    int output_dim = 1;

    // Simulator shaping.
    double eps_fill_fraction = 0.65;   // tray-switch threshold = fraction * fill mass
    double init_roughness = 0.5;       // relative amplitude of the initial surface noise
    double init_warmup_coverage = 1.0; // pick-and-drop-back cycles per gripper footprint
    double mound_sigma_cells = 2.5;
    int settle_max_sweeps = 1000;

    // Training.
    std::vector<int> hidden = {128, 64};
    double train_lr = 1e-3;
    int train_batch = 32;
    int train_epochs = 120;
    double train_weight_decay = 1e-4;
    double train_l1_input = 0.05;  // used by the mass and error heads
    OptimizerTag train_optimizer = OptimizerTag::adam;
    int rnd_k = 16;
    double norm_clip = 4.0;  // standardized inputs clamp, in stddevs

    // Evaluation protocol.
    std::vector<int> sizes = {50, 100, 200, 500, 1000};
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    int attempts = 50;
    std::vector<double> tolerances = {0.05, 0.10};

    // Frozen acceptance thresholds (derived once by pilot runs).
    double rnd_ood_ratio_min = 1.2;
    double trend_margin = 0.03;

    std::map<std::string, MaterialPreset> materials = default_materials();

    static std::map<std::string, MaterialPreset> default_materials() {
        std::map<std::string, MaterialPreset> m;
        m["coffee"] = {{"coffee", 4.45, 0.08, 6.5, 60.0, 0.00, 0.85}, 82000.0, 50};
        m["rice"] = {{"rice", 11.8, 0.13, 6.5, 150.0, 0.00, 0.85}, 210000.0, 100};
        m["oatmeal"] = {{"oatmeal", 5.60, 0.10, 5.0, 50.0, 0.00, 0.60}, 100000.0, 50};
        m["peanut"] = {{"peanut", 6.10, 0.10, 6.0, 70.0, 0.15, 0.85}, 110000.0, 50};
        return m;
    }

    const MaterialPreset& preset(const std::string& name) const {
        auto it = materials.find(name);
        if (it == materials.end()) throw config_error("unknown material '" + name + "'");
        return it->second;
    }

    int patch_margin_cells() const { return patch_cells / 2; }

    TrainConfig train_config(std::uint64_t seed) const {
        TrainConfig t;
        t.learning_rate = train_lr;
        t.batch_size = train_batch;
        t.epochs = train_epochs;
        t.weight_decay = train_weight_decay;
        t.optimizer = train_optimizer;
        t.seed = seed;
        return t;
    }

    void validate() const {
        if (patch_cells < 4) throw config_error("patch_cells must be >= 4");
        if (!(cell_size_mm > 0.0)) throw config_error("cell_size_mm must be > 0");
        if (tray_cols < patch_cells || tray_rows < patch_cells)
            throw config_error("tray must be at least patch_cells in both dimensions");
        if (!(tray_depth_mm > 0.0)) throw config_error("tray_depth_mm must be > 0");
        if (gripper_cols < 1 || gripper_rows < 1)
            throw config_error("gripper footprint must be at least 1x1 cells");
        if (gripper_cols / 2 > patch_margin_cells() || gripper_rows / 2 > patch_margin_cells())
            throw config_error("gripper footprint exceeds patch margin");
        if (!(insertion_depth_mm > 0.0)) throw config_error("insertion_depth_mm must be > 0");
        if (!(scale_resolution_g > 0.0)) throw config_error("scale_resolution_g must be > 0");
        if (!(band_g > 0.0)) throw config_error("band_g must be > 0");
        if (grid_nx < 1 || grid_ny < 1) throw config_error("grid dimensions must be >= 1");
        if (output_dim != 1)
            throw config_error("output_dim must be 1 (scalar mass regression)");
        if (!(eps_fill_fraction > 0.0) || eps_fill_fraction >= 1.0)
            throw config_error("eps_fill_fraction must be in (0, 1)");
        if (init_warmup_coverage < 0.0)
            throw config_error("init_warmup_coverage must be >= 0");
        if (hidden.empty()) throw config_error("hidden layer list must be non-empty");
        for (int h : hidden)
            if (h < 1) throw config_error("hidden widths must be >= 1");
        if (rnd_k < 1) throw config_error("rnd_k must be >= 1");
        if (!(norm_clip > 0.0)) throw config_error("norm_clip must be > 0");
        if (sizes.empty()) throw config_error("sizes must be non-empty");
        for (int s : sizes)
            if (s < 1) throw config_error("dataset sizes must be >= 1");
        if (seeds.empty()) throw config_error("seeds must be non-empty");
        if (attempts < 1) throw config_error("attempts must be >= 1");
        if (tolerances.empty()) throw config_error("tolerances must be non-empty");
        for (double t : tolerances)
            if (!(t > 0.0)) throw config_error("tolerances must be > 0");
        train_config(0).validate();
        for (const auto& [name, p] : materials) {
            p.params.validate();
            if (name != p.params.name)
                throw config_error("material key '" + name + "' does not match preset name");
            if (!(p.fill_mass_g > 0.0))
                throw config_error(name + ": fill_mass_g must be > 0");
            if (p.attempts_small < 1)
                throw config_error(name + ": attempts_small must be >= 1");
        }
    }

    std::string dump() const;
    static ExperimentConfig parse(const std::string& text);
};

namespace detail {

inline std::string join_ints(const std::vector<int>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

inline std::string join_u64(const std::vector<std::uint64_t>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

inline std::string fmt_double(double d) {
    std::ostringstream os;
    os.precision(17);
    os << d;
    return os.str();
}

inline std::string join_doubles(const std::vector<double>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << fmt_double(v[i]);
    return os.str();
}

template <typename T, typename Parse>
std::vector<T> split_list(const std::string& s, Parse parse_one) {
    std::vector<T> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, ',')) {
        if (!item.empty()) out.push_back(parse_one(item));
    }
    return out;
}

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& s) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw config_error("trailing characters in number '" + s + "'");
        return v;
    } catch (const config_error&) {
        throw;
    } catch (const std::exception&) {
        throw config_error("cannot parse number '" + s + "'");
    }
}

inline int parse_int(const std::string& s) {
    try {
        std::size_t pos = 0;
        long v = std::stol(s, &pos);
        if (pos != s.size()) throw config_error("trailing characters in integer '" + s + "'");
        return static_cast<int>(v);
    } catch (const config_error&) {
        throw;
    } catch (const std::exception&) {
        throw config_error("cannot parse integer '" + s + "'");
    }
}

inline std::uint64_t parse_u64(const std::string& s) {
    try {
        std::size_t pos = 0;
        unsigned long long v = std::stoull(s, &pos);
        if (pos != s.size()) throw config_error("trailing characters in integer '" + s + "'");
        return v;
    } catch (const config_error&) {
        throw;
    } catch (const std::exception&) {
        throw config_error("cannot parse integer '" + s + "'");
    }
}

}  // namespace detail

inline std::string ExperimentConfig::dump() const {
    using namespace detail;
    std::ostringstream os;
    os << "patch_cells = " << patch_cells << "\n";
    os << "cell_size_mm = " << fmt_double(cell_size_mm) << "\n";
    os << "tray_cols = " << tray_cols << "\n";
    os << "tray_rows = " << tray_rows << "\n";
    os << "tray_depth_mm = " << fmt_double(tray_depth_mm) << "\n";
    os << "gripper_cols = " << gripper_cols << "\n";
    os << "gripper_rows = " << gripper_rows << "\n";
    os << "insertion_depth_mm = " << fmt_double(insertion_depth_mm) << "\n";
    os << "scale_resolution_g = " << fmt_double(scale_resolution_g) << "\n";
    os << "band_g = " << fmt_double(band_g) << "\n";
    os << "grid_nx = " << grid_nx << "\n";
    os << "grid_ny = " << grid_ny << "\n";
    os << "output_dim = " << output_dim << "\n";
    os << "eps_fill_fraction = " << fmt_double(eps_fill_fraction) << "\n";
    os << "init_roughness = " << fmt_double(init_roughness) << "\n";
    os << "init_warmup_coverage = " << fmt_double(init_warmup_coverage) << "\n";
    os << "mound_sigma_cells = " << fmt_double(mound_sigma_cells) << "\n";
    os << "settle_max_sweeps = " << settle_max_sweeps << "\n";
    os << "hidden = " << join_ints(hidden) << "\n";
    os << "train_lr = " << fmt_double(train_lr) << "\n";
    os << "train_batch = " << train_batch << "\n";
    os << "train_epochs = " << train_epochs << "\n";
    os << "train_weight_decay = " << fmt_double(train_weight_decay) << "\n";
    os << "train_l1_input = " << fmt_double(train_l1_input) << "\n";
    os << "train_optimizer = " << to_string(train_optimizer) << "\n";
    os << "rnd_k = " << rnd_k << "\n";
    os << "norm_clip = " << fmt_double(norm_clip) << "\n";
    os << "sizes = " << join_ints(sizes) << "\n";
    os << "seeds = " << join_u64(seeds) << "\n";
    os << "attempts = " << attempts << "\n";
    os << "tolerances = " << join_doubles(tolerances) << "\n";
    os << "rnd_ood_ratio_min = " << fmt_double(rnd_ood_ratio_min) << "\n";
    os << "trend_margin = " << fmt_double(trend_margin) << "\n";
    for (const auto& [name, p] : materials) {
        const std::string k = "material." + name + ".";
        os << k << "density_scale = " << fmt_double(p.params.density_scale) << "\n";
        os << k << "noise_cv = " << fmt_double(p.params.noise_cv) << "\n";
        os << k << "repose_slope = " << fmt_double(p.params.repose_slope) << "\n";
        os << k << "capacity_g = " << fmt_double(p.params.capacity_g) << "\n";
        os << k << "breakage_prob = " << fmt_double(p.params.breakage_prob) << "\n";
        os << k << "compress_factor = " << fmt_double(p.params.compress_factor) << "\n";
        os << k << "fill_mass_g = " << fmt_double(p.fill_mass_g) << "\n";
        os << k << "attempts_small = " << p.attempts_small << "\n";
    }
    return os.str();
}

inline ExperimentConfig ExperimentConfig::parse(const std::string& text) {
    using namespace detail;
    ExperimentConfig cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw config_error("line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(t.substr(0, eq));
        std::string val = trim(t.substr(eq + 1));

        if (key.rfind("material.", 0) == 0) {
            std::string rest = key.substr(9);
            std::size_t dot = rest.find('.');
            if (dot == std::string::npos)
                throw config_error("bad material key '" + key + "'");
            std::string mat = rest.substr(0, dot);
            std::string field = rest.substr(dot + 1);
            MaterialPreset& p = cfg.materials[mat];
            p.params.name = mat;
            if (field == "density_scale") p.params.density_scale = parse_double(val);
            else if (field == "noise_cv") p.params.noise_cv = parse_double(val);
            else if (field == "repose_slope") p.params.repose_slope = parse_double(val);
            else if (field == "capacity_g") p.params.capacity_g = parse_double(val);
            else if (field == "breakage_prob") p.params.breakage_prob = parse_double(val);
            else if (field == "compress_factor") p.params.compress_factor = parse_double(val);
            else if (field == "fill_mass_g") p.fill_mass_g = parse_double(val);
            else if (field == "attempts_small") p.attempts_small = parse_int(val);
            else throw config_error("unknown material field '" + field + "'");
            continue;
        }

        if (key == "patch_cells") cfg.patch_cells = parse_int(val);
        else if (key == "cell_size_mm") cfg.cell_size_mm = parse_double(val);
        else if (key == "tray_cols") cfg.tray_cols = parse_int(val);
        else if (key == "tray_rows") cfg.tray_rows = parse_int(val);
        else if (key == "tray_depth_mm") cfg.tray_depth_mm = parse_double(val);
        else if (key == "gripper_cols") cfg.gripper_cols = parse_int(val);
        else if (key == "gripper_rows") cfg.gripper_rows = parse_int(val);
        else if (key == "insertion_depth_mm") cfg.insertion_depth_mm = parse_double(val);
        else if (key == "scale_resolution_g") cfg.scale_resolution_g = parse_double(val);
        else if (key == "band_g") cfg.band_g = parse_double(val);
        else if (key == "grid_nx") cfg.grid_nx = parse_int(val);
        else if (key == "grid_ny") cfg.grid_ny = parse_int(val);
        else if (key == "output_dim") cfg.output_dim = parse_int(val);
        else if (key == "eps_fill_fraction") cfg.eps_fill_fraction = parse_double(val);
        else if (key == "init_roughness") cfg.init_roughness = parse_double(val);
        else if (key == "init_warmup_coverage") cfg.init_warmup_coverage = parse_double(val);
        else if (key == "mound_sigma_cells") cfg.mound_sigma_cells = parse_double(val);
        else if (key == "settle_max_sweeps") cfg.settle_max_sweeps = parse_int(val);
        else if (key == "hidden") cfg.hidden = split_list<int>(val, parse_int);
        else if (key == "train_lr") cfg.train_lr = parse_double(val);
        else if (key == "train_batch") cfg.train_batch = parse_int(val);
        else if (key == "train_epochs") cfg.train_epochs = parse_int(val);
        else if (key == "train_weight_decay") cfg.train_weight_decay = parse_double(val);
        else if (key == "train_l1_input") cfg.train_l1_input = parse_double(val);
        else if (key == "train_optimizer") cfg.train_optimizer = optimizer_from_string(val);
        else if (key == "rnd_k") cfg.rnd_k = parse_int(val);
        else if (key == "norm_clip") cfg.norm_clip = parse_double(val);
        else if (key == "sizes") cfg.sizes = split_list<int>(val, parse_int);
        else if (key == "seeds") cfg.seeds = split_list<std::uint64_t>(val, parse_u64);
        else if (key == "attempts") cfg.attempts = parse_int(val);
        else if (key == "tolerances") cfg.tolerances = split_list<double>(val, parse_double);
        else if (key == "rnd_ood_ratio_min") cfg.rnd_ood_ratio_min = parse_double(val);
        else if (key == "trend_margin") cfg.trend_margin = parse_double(val);
        else throw config_error("unknown config key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

/// FNV-1a hash of the canonical dump; stored in model bundles so a bundle can
/// be matched to the config it was trained under.
inline std::uint64_t config_hash(const ExperimentConfig& cfg) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : cfg.dump()) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace grainpick
