#include "alstream/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <sstream>

namespace alstream {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char ch) { return std::tolower(ch); });
    return out;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(std::string_view name, std::string_view value, std::string_view expected) {
    throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(name) + " (expected " +
                      std::string(expected) + ")");
}

template <typename T>
T parse_number(std::string_view name, std::string_view text) {
    const std::string v = trim(text);
    T out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty())
        bad_value(name, text, std::is_floating_point_v<T> ? "a number" : "an integer");
    return out;
}

std::size_t parse_size(std::string_view name, std::string_view text) {
    const auto v = parse_number<long long>(name, text);
    if (v < 0) bad_value(name, text, "a non-negative integer");
    return static_cast<std::size_t>(v);
}

bool parse_bool(std::string_view name, std::string_view text) {
    const auto v = lower(trim(text));
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    bad_value(name, text, "true or false");
}

std::vector<int> parse_int_list(std::string_view name, std::string_view text) {
    std::vector<int> out;
    std::string item;
    std::istringstream in{std::string(text)};
    while (std::getline(in, item, ',')) out.push_back(parse_number<int>(name, item));
    if (out.empty()) bad_value(name, text, "a comma-separated list of integers");
    return out;
}

template <typename T>
std::string fmt(const T& v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

struct KeyDef {
    std::string section;
    std::string key;
    std::function<void(WorkflowConfig&, std::string_view)> set;
    std::function<std::string(const WorkflowConfig&)> get;

    std::string name() const { return section + "." + key; }
};

void add_range(std::vector<KeyDef>& keys, const std::string& prefix, Range ParamSpace::*member) {
    keys.push_back({"space", prefix + "_lo",
                    [=](WorkflowConfig& c, std::string_view v) {
                        (c.space.*member).lo = parse_number<double>("space." + prefix + "_lo", v);
                    },
                    [=](const WorkflowConfig& c) { return fmt((c.space.*member).lo); }});
    keys.push_back({"space", prefix + "_hi",
                    [=](WorkflowConfig& c, std::string_view v) {
                        (c.space.*member).hi = parse_number<double>("space." + prefix + "_hi", v);
                    },
                    [=](const WorkflowConfig& c) { return fmt((c.space.*member).hi); }});
}

#define ALS_DOUBLE(SEC, KEY, FIELD)                                                                  \
    keys.push_back({SEC, KEY,                                                                       \
                    [](WorkflowConfig& c, std::string_view v) { c.FIELD = parse_number<double>(SEC "." KEY, v); }, \
                    [](const WorkflowConfig& c) { return fmt(c.FIELD); }})
#define ALS_SIZE(SEC, KEY, FIELD)                                                                    \
    keys.push_back({SEC, KEY,                                                                       \
                    [](WorkflowConfig& c, std::string_view v) { c.FIELD = parse_size(SEC "." KEY, v); }, \
                    [](const WorkflowConfig& c) { return fmt(c.FIELD); }})

const std::vector<KeyDef>& key_table() {
    static const std::vector<KeyDef> table = [] {
        std::vector<KeyDef> keys;
        add_range(keys, "cubic_a", &ParamSpace::cubic_a);
        add_range(keys, "trigonal_a", &ParamSpace::trigonal_a);
        add_range(keys, "trigonal_alpha", &ParamSpace::trigonal_alpha);
        add_range(keys, "tetragonal_a", &ParamSpace::tetragonal_a);
        add_range(keys, "tetragonal_c", &ParamSpace::tetragonal_c);

        ALS_DOUBLE("sim", "t0", sim.grid.t0);
        ALS_DOUBLE("sim", "delta", sim.grid.delta);
        ALS_SIZE("sim", "n_bins", sim.grid.n_bins);
        ALS_DOUBLE("sim", "difc", sim.difc);
        ALS_DOUBLE("sim", "w0", sim.w0);
        ALS_DOUBLE("sim", "w1", sim.w1);
        keys.push_back({"sim", "hkl_bound",
                        [](WorkflowConfig& c, std::string_view v) { c.sim.hkl_bound = parse_number<int>("sim.hkl_bound", v); },
                        [](const WorkflowConfig& c) { return fmt(c.sim.hkl_bound); }});
        ALS_DOUBLE("sim", "noise_std", sim.noise_std);
        ALS_DOUBLE("sim", "artificial_cost_ms", sim.artificial_cost_ms);
        keys.push_back({"sim", "cost_mode",
                        [](WorkflowConfig& c, std::string_view v) {
                            const auto m = lower(trim(v));
                            if (m == "sleep") c.sim.cost_mode = CostMode::Sleep;
                            else if (m == "spin") c.sim.cost_mode = CostMode::Spin;
                            else bad_value("sim.cost_mode", v, "sleep or spin");
                        },
                        [](const WorkflowConfig& c) {
                            return std::string(c.sim.cost_mode == CostMode::Sleep ? "sleep" : "spin");
                        }});
        ALS_SIZE("sim", "sim_pool_size", sim.pool_size);

        ALS_SIZE("train", "batch_size", train.batch_size);
        ALS_DOUBLE("train", "learning_rate", train.adam.learning_rate);
        ALS_DOUBLE("train", "beta1", train.adam.beta1);
        ALS_DOUBLE("train", "beta2", train.adam.beta2);
        ALS_DOUBLE("train", "epsilon", train.adam.epsilon);
        keys.push_back({"train", "epochs",
                        [](WorkflowConfig& c, std::string_view v) { c.train.epochs = parse_int_list("train.epochs", v); },
                        [](const WorkflowConfig& c) {
                            std::string out;
                            for (std::size_t i = 0; i < c.train.epochs.size(); ++i)
                                out += (i ? "," : "") + std::to_string(c.train.epochs[i]);
                            return out;
                        }});
        keys.push_back({"train", "epoch_rule",
                        [](WorkflowConfig& c, std::string_view v) {
                            const auto m = lower(trim(v));
                            if (m == "schedule") c.train.epoch_rule = EpochRule::Schedule;
                            else if (m == "inverse_sqrt") c.train.epoch_rule = EpochRule::InverseSqrt;
                            else bad_value("train.epoch_rule", v, "schedule or inverse_sqrt");
                        },
                        [](const WorkflowConfig& c) {
                            return std::string(c.train.epoch_rule == EpochRule::Schedule ? "schedule" : "inverse_sqrt");
                        }});
        ALS_DOUBLE("train", "epoch_constant", train.epoch_constant);
        ALS_SIZE("train", "input_bins", train.input_bins);
        ALS_SIZE("train", "hidden1", train.hidden1);
        ALS_SIZE("train", "hidden2", train.hidden2);
        ALS_SIZE("train", "eval_pool_size", train.eval_pool_size);
        ALS_SIZE("train", "train_pool_size", train_pool_size);

        ALS_DOUBLE("al", "tau_multiplier", al.tau_multiplier);
        keys.push_back({"al", "prior",
                        [](WorkflowConfig& c, std::string_view v) {
                            const auto m = lower(trim(v));
                            if (m == "uniform") c.al.prior = PriorKind::Uniform;
                            else if (m == "trunc_gaussian") c.al.prior = PriorKind::TruncGaussian;
                            else bad_value("al.prior", v, "uniform or trunc_gaussian");
                        },
                        [](const WorkflowConfig& c) {
                            return std::string(c.al.prior == PriorKind::Uniform ? "uniform" : "trunc_gaussian");
                        }});
        ALS_DOUBLE("al", "prior_scale", al.prior_scale);

        keys.push_back({"workflow", "mode",
                        [](WorkflowConfig& c, std::string_view v) {
                            try {
                                c.mode = parse_mode(lower(trim(v)));
                            } catch (const std::invalid_argument& e) {
                                throw ConfigError(std::string("workflow.mode: ") + e.what());
                            }
                        },
                        [](const WorkflowConfig& c) { return std::string(mode_name(c.mode)); }});
        ALS_SIZE("workflow", "phases", n_phases);
        ALS_SIZE("workflow", "train_per_class", train_per_class);
        ALS_DOUBLE("workflow", "val_ratio", val_ratio);
        ALS_DOUBLE("workflow", "test_ratio", test_ratio);
        ALS_DOUBLE("workflow", "study_ratio", study_ratio);
        ALS_DOUBLE("workflow", "stream_ratio", stream_ratio);
        ALS_SIZE("workflow", "val_size", val_size);
        ALS_SIZE("workflow", "test_size", test_size);
        ALS_SIZE("workflow", "study_size", study_size);
        keys.push_back({"workflow", "seed",
                        [](WorkflowConfig& c, std::string_view v) {
                            c.seed = parse_number<std::uint64_t>("workflow.seed", v);
                        },
                        [](const WorkflowConfig& c) { return fmt(c.seed); }});

        keys.push_back({"output", "directory",
                        [](WorkflowConfig& c, std::string_view v) { c.output_dir = trim(v); },
                        [](const WorkflowConfig& c) { return c.output_dir.string(); }});
        keys.push_back({"output", "checkpoints",
                        [](WorkflowConfig& c, std::string_view v) {
                            c.save_checkpoints = parse_bool("output.checkpoints", v);
                        },
                        [](const WorkflowConfig& c) { return std::string(c.save_checkpoints ? "true" : "false"); }});
        return keys;
    }();
    return table;
}

#undef ALS_DOUBLE
#undef ALS_SIZE

const KeyDef* find_key(std::string_view section, std::string_view key) {
    for (const auto& k : key_table())
        if (k.section == section && k.key == key) return &k;
    return nullptr;
}

boost::property_tree::ptree read_ini(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(path.string(), tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError("cannot parse config " + path.string() + ": " + e.what());
    }
    return tree;
}

}  // namespace

WorkflowConfig preset_config(std::string_view name) {
    const auto names = preset_names();
    if (std::find(names.begin(), names.end(), name) == names.end())
        throw ConfigError("unknown preset '" + std::string(name) + "' (expected E1, E2, E1-desk or E2-desk)");
    WorkflowConfig cfg;
    cfg.space = ParamSpace::preset(name);
    if (name == "E1") return cfg;
    if (name == "E2") {
        cfg.train_per_class = 72000;
        cfg.train.batch_size = 1024;
        return cfg;
    }
    cfg.train.input_bins = 512;
    cfg.train.epochs = {40, 30, 25, 20};
    if (name == "E1-desk") {
        cfg.train_per_class = 450;
        cfg.train.batch_size = 64;
        return cfg;
    }
    if (name == "E2-desk") {
        cfg.train_per_class = 1600;
        cfg.train.batch_size = 128;
    }
    return cfg;
}

std::vector<std::string> preset_names() { return {"E1", "E2", "E1-desk", "E2-desk"}; }

void set_config_value(WorkflowConfig& cfg, std::string_view section, std::string_view key,
                      std::string_view value) {
    const auto* def = find_key(section, key);
    if (!def) throw ConfigError("unknown config key " + std::string(section) + "." + std::string(key));
    def->set(cfg, value);
}

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& k : key_table()) out.push_back(k.name());
    return out;
}

std::optional<std::string> file_preset(const std::filesystem::path& path) {
    const auto tree = read_ini(path);
    if (const auto v = tree.get_optional<std::string>("space.preset")) return trim(*v);
    return std::nullopt;
}

void apply_config_file(WorkflowConfig& cfg, const std::filesystem::path& path) {
    const auto tree = read_ini(path);
    for (const auto& [section, body] : tree) {
        if (!body.data().empty() && body.empty())
            throw ConfigError("key '" + section + "' in " + path.string() + " is outside any section");
    }
    for (const auto& [section, body] : tree)
        for (const auto& [key, value] : body) {
            if (section == "space" && key == "preset") continue;
            set_config_value(cfg, section, key, value.data());
        }
}

void apply_env_overrides(WorkflowConfig& cfg,
                         const std::function<std::optional<std::string>(const std::string&)>& lookup) {
    auto get = lookup ? lookup : [](const std::string& name) -> std::optional<std::string> {
        if (const char* v = std::getenv(name.c_str())) return std::string(v);
        return std::nullopt;
    };
    for (const auto& def : key_table()) {
        std::string var = "ALSTREAM_" + def.section + "_" + def.key;
        std::transform(var.begin(), var.end(), var.begin(), [](unsigned char ch) { return std::toupper(ch); });
        if (const auto v = get(var)) {
            try {
                def.set(cfg, *v);
            } catch (const ConfigError& e) {
                throw ConfigError(var + ": " + e.what());
            }
        }
    }
}

std::string dump_config(const WorkflowConfig& cfg) {
    std::ostringstream out;
    std::string section;
    for (const auto& def : key_table()) {
        if (def.section != section) {
            if (!section.empty()) out << '\n';
            section = def.section;
            out << '[' << section << "]\n";
        }
        out << def.key << " = " << def.get(cfg) << '\n';
    }
    return out.str();
}

}  // namespace alstream
