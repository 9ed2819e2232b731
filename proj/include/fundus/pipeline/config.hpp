#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "fundus/classify/svm.hpp"
#include "fundus/data/synthetic.hpp"
#include "fundus/train/harness.hpp"

namespace fundus {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// One parsed `key = value`; TOML-style scalars plus flat arrays.
struct ConfigValue {
    enum class Kind { boolean, number, string, number_list, string_list };
    Kind kind = Kind::string;
    bool b = false;
    double num = 0;
    std::string str;
    std::vector<double> nums;
    std::vector<std::string> strs;
};

struct ConfigDoc {
    // section -> key -> value; root keys live under ""
    std::map<std::string, std::map<std::string, ConfigValue>> sections;
};

namespace config_detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline ConfigValue parse_scalar(const std::string& raw, int line_no) {
    ConfigValue v;
    if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') {
        v.kind = ConfigValue::Kind::string;
        v.str = raw.substr(1, raw.size() - 2);
        return v;
    }
    if (raw == "true" || raw == "false") {
        v.kind = ConfigValue::Kind::boolean;
        v.b = raw == "true";
        return v;
    }
    try {
        size_t used = 0;
        v.num = std::stod(raw, &used);
        if (used != raw.size()) throw std::invalid_argument("");
        v.kind = ConfigValue::Kind::number;
        return v;
    } catch (...) {
        throw ConfigError("config line " + std::to_string(line_no) + ": cannot parse value '" +
                          raw + "'");
    }
}

}  // namespace config_detail

/// Parses the TOML-style subset used by run configs: `[section]` headers,
/// `key = value` pairs, `#` comments, quoted strings, booleans, numbers, and
/// flat arrays.
inline ConfigDoc parse_config_text(const std::string& text) {
    using namespace config_detail;
    ConfigDoc doc;
    std::string section;
    int line_no = 0;
    size_t pos = 0;
    while (pos <= text.size()) {
        const size_t eol = text.find('\n', pos);
        std::string line = text.substr(pos, eol == std::string::npos ? std::string::npos : eol - pos);
        pos = eol == std::string::npos ? text.size() + 1 : eol + 1;
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(line_no) + ": malformed section");
            section = trim(line.substr(1, line.size() - 2));
            doc.sections[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string raw = trim(line.substr(eq + 1));
        if (key.empty() || raw.empty())
            throw ConfigError("config line " + std::to_string(line_no) + ": empty key or value");
        ConfigValue v;
        if (raw.front() == '[') {
            if (raw.back() != ']')
                throw ConfigError("config line " + std::to_string(line_no) + ": malformed array");
            const std::string inner = trim(raw.substr(1, raw.size() - 2));
            v.kind = ConfigValue::Kind::number_list;
            size_t p = 0;
            while (!inner.empty() && p <= inner.size()) {
                size_t comma = inner.find(',', p);
                const std::string item =
                    trim(inner.substr(p, comma == std::string::npos ? std::string::npos : comma - p));
                p = comma == std::string::npos ? inner.size() + 1 : comma + 1;
                if (item.empty()) continue;
                const ConfigValue sv = parse_scalar(item, line_no);
                if (sv.kind == ConfigValue::Kind::string) {
                    v.kind = ConfigValue::Kind::string_list;
                    v.strs.push_back(sv.str);
                } else if (sv.kind == ConfigValue::Kind::number) {
                    v.nums.push_back(sv.num);
                } else {
                    throw ConfigError("config line " + std::to_string(line_no) +
                                      ": unsupported array element");
                }
            }
        } else {
            v = parse_scalar(raw, line_no);
        }
        doc.sections[section][key] = std::move(v);
    }
    return doc;
}

inline ConfigDoc parse_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config_text(text);
}

// ---------------------------------------------------------------------------
// RunConfig: the one auditable document per experiment
// ---------------------------------------------------------------------------

struct DatasetSection {
    std::string kind = "synthetic";  // synthetic | directory
    long n_normal = 250;
    long n_glaucoma = 250;
    double split_ratio = 0.2;
    int image_size = 128;
    bool overlap = false;
    double label_threshold = 0.55;
    double disc_radius = 0.28;
    double noise_level = 0.02;
    int vessel_count = 6;
    std::string path;    // directory kind only
    std::string labels;  // labels CSV path
};

struct VaeSection {
    std::vector<int> sweep = {4, 32, 256};
    std::vector<int> encoder_widths = {8, 16, 32, 64, 128};
    double beta = 1.0;
    int norm_groups = 8;
    std::string extractor = "tiny";  // tiny | vgg16 | identity
    std::string extractor_weights;
};

struct AnalysisSection {
    std::vector<double> topk_ratios = {10.0 / 128.0, 50.0 / 128.0};
    int umap_neighbors = 15;
    double umap_min_dist = 0.1;
    int umap_epochs = 500;
};

struct ClassifySection {
    double split_ratio = 0.3;
    std::vector<double> grid_c = {0.1, 1.0, 10.0};
    std::vector<std::string> grid_kernel = {"linear", "rbf"};
    std::vector<std::string> grid_class_weight = {"none", "balanced"};
};

struct RunConfig {
    std::uint64_t seed = 1;
    std::string output_root = "runs";
    DatasetSection dataset;
    VaeSection vae;
    TrainConfig train;
    AnalysisSection analysis;
    ClassifySection classify;

    /// `desk` runs in minutes on a CPU; `paper` encodes the full recipe
    /// (300 epochs, step 140, batch 64, the eleven latent sizes 2..2048,
    /// and the pretrained backbone).
    static RunConfig preset(const std::string& name) {
        RunConfig cfg;  // defaults are the desk preset
        cfg.train.epochs = 30;
        cfg.train.batch_size = 64;
        cfg.train.lr = 1e-3;
        cfg.train.scheduler_step = 14;
        cfg.train.scheduler_gamma = 0.1;
        cfg.train.flip_prob = 0.5;
        if (name == "desk") return cfg;
        if (name == "paper") {
            cfg.dataset.n_normal = 3158;
            cfg.dataset.n_glaucoma = 3744;
            cfg.dataset.split_ratio = 0.2;
            cfg.vae.sweep = {2, 4, 8, 16, 32, 64, 128, 256, 512, 1024, 2048};
            cfg.vae.encoder_widths = {32, 64, 128, 256, 512};
            cfg.vae.extractor = "vgg16";
            cfg.train.epochs = 300;
            cfg.train.scheduler_step = 140;
            return cfg;
        }
        throw ConfigError("unknown preset '" + name + "' (expected paper or desk)");
    }

    std::vector<SvcParams> grid() const {
        std::vector<SvcParams> out;
        for (double c : classify.grid_c)
            for (const auto& k : classify.grid_kernel)
                for (const auto& w : classify.grid_class_weight) {
                    SvcParams p;
                    p.C = c;
                    p.kernel = k == "linear" ? Kernel::linear : Kernel::rbf;
                    p.class_weight = w == "none" ? ClassWeight::none : ClassWeight::balanced;
                    out.push_back(p);
                }
        return out;
    }

    SyntheticDatasetOptions synthetic_options() const {
        SyntheticDatasetOptions opts;
        opts.base.image_size = dataset.image_size;
        opts.base.label_threshold = dataset.label_threshold;
        opts.base.disc_radius = dataset.disc_radius;
        opts.base.noise_level = dataset.noise_level;
        opts.base.vessel_count = dataset.vessel_count;
        opts.overlap = dataset.overlap;
        return opts;
    }

    void apply_document(const ConfigDoc& doc) {
        std::vector<std::string> problems;
        const auto number = [&](const ConfigValue& v, const std::string& where) -> double {
            if (v.kind != ConfigValue::Kind::number) problems.push_back(where + ": expected a number");
            return v.num;
        };
        const auto text = [&](const ConfigValue& v, const std::string& where) -> std::string {
            if (v.kind != ConfigValue::Kind::string) problems.push_back(where + ": expected a string");
            return v.str;
        };
        const auto boolean = [&](const ConfigValue& v, const std::string& where) -> bool {
            if (v.kind != ConfigValue::Kind::boolean) problems.push_back(where + ": expected a boolean");
            return v.b;
        };
        const auto int_list = [&](const ConfigValue& v, const std::string& where) -> std::vector<int> {
            std::vector<int> out;
            if (v.kind != ConfigValue::Kind::number_list) {
                problems.push_back(where + ": expected a number array");
                return out;
            }
            for (double d : v.nums) out.push_back(static_cast<int>(d));
            return out;
        };

        for (const auto& [section, kv] : doc.sections) {
            for (const auto& [key, v] : kv) {
                const std::string where = section.empty() ? key : section + "." + key;
                if (section.empty()) {
                    if (key == "seed") seed = static_cast<std::uint64_t>(number(v, where));
                    else if (key == "output_root") output_root = text(v, where);
                    else problems.push_back("unknown key: " + where);
                } else if (section == "dataset") {
                    if (key == "kind") dataset.kind = text(v, where);
                    else if (key == "n_normal") dataset.n_normal = static_cast<long>(number(v, where));
                    else if (key == "n_glaucoma") dataset.n_glaucoma = static_cast<long>(number(v, where));
                    else if (key == "split_ratio") dataset.split_ratio = number(v, where);
                    else if (key == "image_size") dataset.image_size = static_cast<int>(number(v, where));
                    else if (key == "overlap") dataset.overlap = boolean(v, where);
                    else if (key == "label_threshold") dataset.label_threshold = number(v, where);
                    else if (key == "disc_radius") dataset.disc_radius = number(v, where);
                    else if (key == "noise_level") dataset.noise_level = number(v, where);
                    else if (key == "vessel_count") dataset.vessel_count = static_cast<int>(number(v, where));
                    else if (key == "path") dataset.path = text(v, where);
                    else if (key == "labels") dataset.labels = text(v, where);
                    else problems.push_back("unknown key: " + where);
                } else if (section == "vae") {
                    if (key == "sweep") vae.sweep = int_list(v, where);
                    else if (key == "encoder_widths") vae.encoder_widths = int_list(v, where);
                    else if (key == "beta") vae.beta = number(v, where);
                    else if (key == "norm_groups") vae.norm_groups = static_cast<int>(number(v, where));
                    else if (key == "extractor") vae.extractor = text(v, where);
                    else if (key == "extractor_weights") vae.extractor_weights = text(v, where);
                    else problems.push_back("unknown key: " + where);
                } else if (section == "train") {
                    if (key == "epochs") train.epochs = static_cast<int>(number(v, where));
                    else if (key == "batch_size") train.batch_size = static_cast<int>(number(v, where));
                    else if (key == "lr") train.lr = number(v, where);
                    else if (key == "scheduler_step") train.scheduler_step = static_cast<int>(number(v, where));
                    else if (key == "scheduler_gamma") train.scheduler_gamma = number(v, where);
                    else if (key == "flip_prob") train.flip_prob = number(v, where);
                    else problems.push_back("unknown key: " + where);
                } else if (section == "analysis") {
                    if (key == "topk_ratios") {
                        if (v.kind != ConfigValue::Kind::number_list)
                            problems.push_back(where + ": expected a number array");
                        else analysis.topk_ratios = v.nums;
                    } else if (key == "umap_neighbors") analysis.umap_neighbors = static_cast<int>(number(v, where));
                    else if (key == "umap_min_dist") analysis.umap_min_dist = number(v, where);
                    else if (key == "umap_epochs") analysis.umap_epochs = static_cast<int>(number(v, where));
                    else problems.push_back("unknown key: " + where);
                } else if (section == "classify") {
                    if (key == "split_ratio") classify.split_ratio = number(v, where);
                    else if (key == "grid_c") {
                        if (v.kind != ConfigValue::Kind::number_list)
                            problems.push_back(where + ": expected a number array");
                        else classify.grid_c = v.nums;
                    } else if (key == "grid_kernel") {
                        if (v.kind != ConfigValue::Kind::string_list)
                            problems.push_back(where + ": expected a string array");
                        else classify.grid_kernel = v.strs;
                    } else if (key == "grid_class_weight") {
                        if (v.kind != ConfigValue::Kind::string_list)
                            problems.push_back(where + ": expected a string array");
                        else classify.grid_class_weight = v.strs;
                    } else problems.push_back("unknown key: " + where);
                } else {
                    problems.push_back("unknown section: [" + section + "]");
                    break;
                }
            }
        }
        if (!problems.empty()) {
            std::string msg = "invalid config:";
            for (const auto& p : problems) msg += "\n  - " + p;
            throw ConfigError(msg);
        }
    }

    void apply_env() {
        if (const char* root = std::getenv("FUNDUS_OUTPUT_ROOT"); root && *root) output_root = root;
        if (const char* w = std::getenv("FUNDUS_EXTRACTOR_WEIGHTS"); w && *w)
            vae.extractor_weights = w;
    }

    /// Collects every problem before anything runs; malformed configs are
    /// rejected before side effects.
    void validate() const {
        std::vector<std::string> problems;
        const auto check = [&](bool ok, const std::string& msg) {
            if (!ok) problems.push_back(msg);
        };

        check(dataset.kind == "synthetic" || dataset.kind == "directory",
              "dataset.kind must be synthetic or directory");
        if (dataset.kind == "synthetic") {
            check(dataset.n_normal >= 1 && dataset.n_glaucoma >= 1,
                  "dataset counts must be >= 1");
            check(dataset.label_threshold > 0 && dataset.label_threshold < 1,
                  "dataset.label_threshold must be in (0,1)");
        } else {
            check(!dataset.path.empty() && std::filesystem::is_directory(dataset.path),
                  "dataset.path must name an existing directory");
            check(!dataset.labels.empty() && std::filesystem::exists(dataset.labels),
                  "dataset.labels must name an existing CSV");
        }
        check(dataset.split_ratio > 0 && dataset.split_ratio < 1,
              "dataset.split_ratio must be in (0,1)");

        check(!vae.sweep.empty(), "vae.sweep must not be empty");
        for (int nl : vae.sweep)
            check(VaeConfig::valid_latent(nl),
                  "vae.sweep entry " + std::to_string(nl) +
                      " is not a power of two in [2, 2048]");
        check(!vae.encoder_widths.empty(), "vae.encoder_widths must not be empty");
        int s = dataset.image_size;
        bool div_ok = true;
        for (size_t i = 0; i < vae.encoder_widths.size(); ++i) {
            if (s % 2 != 0) div_ok = false;
            s /= 2;
        }
        check(div_ok && s >= 1,
              "dataset.image_size must be divisible by 2^len(encoder_widths)");
        check(vae.beta >= 0, "vae.beta must be >= 0");
        check(vae.extractor == "tiny" || vae.extractor == "vgg16" || vae.extractor == "identity",
              "vae.extractor must be tiny, vgg16, or identity");
        if (vae.extractor == "vgg16")
            check(!vae.extractor_weights.empty() && std::filesystem::exists(vae.extractor_weights),
                  "vae.extractor_weights must name an existing weights file for the vgg16 "
                  "extractor (or set FUNDUS_EXTRACTOR_WEIGHTS)");

        try {
            train.validate();
        } catch (const std::exception& e) {
            problems.emplace_back(e.what());
        }

        for (double r : analysis.topk_ratios)
            check(r > 0 && r <= 1, "analysis.topk_ratios entries must be in (0,1]");
        check(analysis.umap_neighbors >= 2, "analysis.umap_neighbors must be >= 2");
        check(analysis.umap_min_dist > 0, "analysis.umap_min_dist must be > 0");
        check(analysis.umap_epochs >= 1, "analysis.umap_epochs must be >= 1");

        check(classify.split_ratio > 0 && classify.split_ratio < 1,
              "classify.split_ratio must be in (0,1)");
        check(!classify.grid_c.empty(), "classify.grid_c must not be empty");
        for (double c : classify.grid_c) check(c > 0, "classify.grid_c entries must be > 0");
        for (const auto& k : classify.grid_kernel)
            check(k == "linear" || k == "rbf", "classify.grid_kernel entries must be linear or rbf");
        for (const auto& w : classify.grid_class_weight)
            check(w == "none" || w == "balanced",
                  "classify.grid_class_weight entries must be none or balanced");

        if (!problems.empty()) {
            std::string msg = "invalid config:";
            for (const auto& p : problems) msg += "\n  - " + p;
            throw ConfigError(msg);
        }
    }
};

}  // namespace fundus
