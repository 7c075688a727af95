#include "ivl/config.hpp"

#include "ivl/rng.hpp"
#include "ivl/task_spec.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ivl {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

KvMap parse_kv_text(const std::string& text) {
    KvMap out;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": empty key");
        }
        out[key] = value;
    }
    return out;
}

KvMap parse_kv_file(const std::filesystem::path& file) {
    std::ifstream is(file);
    if (!is) throw std::runtime_error("cannot read config file " + file.string());
    std::stringstream buf;
    buf << is.rdbuf();
    return parse_kv_text(buf.str());
}

std::string serialize_kv(const KvMap& kv) {
    std::string out;
    for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
    return out;
}

void TrainConfig::validate() const {
    if (steps < 1) throw std::invalid_argument("train config: steps must be >= 1");
    if (batch_size < 2) throw std::invalid_argument("train config: batch_size must be >= 2");
    if (learning_rate < 0) throw std::invalid_argument("train config: negative learning rate");
    if (p_replace < 0 || p_replace > 1) {
        throw std::invalid_argument("train config: p_replace outside [0,1]");
    }
    for (const auto& [task, w] : task_mix) {
        builtin_task(task);  // throws on unknown names
        if (w < 0) throw std::invalid_argument("train config: negative mix for " + task);
    }
    weights.validate();
    interface.validate();
}

std::map<std::string, double> TrainConfig::effective_task_mix() const {
    std::map<std::string, double> mix;
    for (const TaskSpec& t : builtin_tasks()) mix[t.name] = 1.0;
    for (const auto& [task, w] : task_mix) mix[task] = w;

    // a task whose loss weights are all zero cannot contribute a step
    auto zero_out = [&](const char* task, double a, double b, double c) {
        if (a <= 0 && b <= 0 && c <= 0) mix[task] = 0.0;
    };
    zero_out("generic_segmentation", weights.pano_ce, weights.pano_bce, weights.pano_dice);
    zero_out("grounded_segmentation", weights.grd_ce, weights.grd_bce, weights.grd_dice);
    zero_out("interactive_segmentation", weights.iseg_ce, weights.iseg_bce, weights.iseg_dice);
    zero_out("interleave_grounding", weights.intg_ce, weights.intg_bce, weights.intg_dice);
    if (weights.retrieval <= 0) mix["image_text_retrieval"] = 0.0;
    if (weights.interleave_retrieval <= 0) mix["interleave_retrieval"] = 0.0;

    double total = 0;
    for (const auto& [task, w] : mix) total += w;
    if (total <= 0) throw std::invalid_argument("train config: no task has positive mix");
    return mix;
}

KvMap train_config_to_kv(const TrainConfig& cfg) {
    KvMap kv;
    kv["seed"] = std::to_string(cfg.seed);
    kv["steps"] = std::to_string(cfg.steps);
    kv["batch_size"] = std::to_string(cfg.batch_size);
    kv["learning_rate"] = fmt_double(cfg.learning_rate);
    kv["p_replace"] = fmt_double(cfg.p_replace);
    kv["interface.dim"] = std::to_string(cfg.interface.dim);
    kv["interface.layers"] = std::to_string(cfg.interface.layers);
    kv["interface.heads"] = std::to_string(cfg.interface.heads);
    kv["interface.n_obj"] = std::to_string(cfg.interface.n_obj);
    kv["interface.cosine_score"] = cfg.interface.cosine_score ? "true" : "false";
    kv["interface.score_tau_init"] = fmt_double(cfg.interface.score_tau_init);
    for (const auto& [task, w] : cfg.task_mix) kv["task_mix." + task] = fmt_double(w);
    kv["loss.pano_ce"] = fmt_double(cfg.weights.pano_ce);
    kv["loss.pano_bce"] = fmt_double(cfg.weights.pano_bce);
    kv["loss.pano_dice"] = fmt_double(cfg.weights.pano_dice);
    kv["loss.grd_ce"] = fmt_double(cfg.weights.grd_ce);
    kv["loss.grd_bce"] = fmt_double(cfg.weights.grd_bce);
    kv["loss.grd_dice"] = fmt_double(cfg.weights.grd_dice);
    kv["loss.iseg_ce"] = fmt_double(cfg.weights.iseg_ce);
    kv["loss.iseg_bce"] = fmt_double(cfg.weights.iseg_bce);
    kv["loss.iseg_dice"] = fmt_double(cfg.weights.iseg_dice);
    kv["loss.retrieval"] = fmt_double(cfg.weights.retrieval);
    kv["loss.interleave_retrieval"] = fmt_double(cfg.weights.interleave_retrieval);
    kv["loss.intg_ce"] = fmt_double(cfg.weights.intg_ce);
    kv["loss.intg_bce"] = fmt_double(cfg.weights.intg_bce);
    kv["loss.intg_dice"] = fmt_double(cfg.weights.intg_dice);
    return kv;
}

TrainConfig train_config_from_kv(const KvMap& kv) {
    TrainConfig cfg;
    auto get_ll = [&](const char* key, auto& field) {
        if (auto it = kv.find(key); it != kv.end()) {
            field = static_cast<std::remove_reference_t<decltype(field)>>(
                std::stoll(it->second));
        }
    };
    auto get_d = [&](const char* key, double& field) {
        if (auto it = kv.find(key); it != kv.end()) field = std::stod(it->second);
    };
    get_ll("seed", cfg.seed);
    get_ll("steps", cfg.steps);
    get_ll("batch_size", cfg.batch_size);
    get_d("learning_rate", cfg.learning_rate);
    get_d("p_replace", cfg.p_replace);
    get_ll("interface.dim", cfg.interface.dim);
    get_ll("interface.layers", cfg.interface.layers);
    get_ll("interface.heads", cfg.interface.heads);
    get_ll("interface.n_obj", cfg.interface.n_obj);
    if (auto it = kv.find("interface.cosine_score"); it != kv.end()) {
        if (it->second != "true" && it->second != "false") {
            throw std::invalid_argument("config: interface.cosine_score must be true/false");
        }
        cfg.interface.cosine_score = it->second == "true";
    }
    get_d("interface.score_tau_init", cfg.interface.score_tau_init);
    get_d("loss.pano_ce", cfg.weights.pano_ce);
    get_d("loss.pano_bce", cfg.weights.pano_bce);
    get_d("loss.pano_dice", cfg.weights.pano_dice);
    get_d("loss.grd_ce", cfg.weights.grd_ce);
    get_d("loss.grd_bce", cfg.weights.grd_bce);
    get_d("loss.grd_dice", cfg.weights.grd_dice);
    get_d("loss.iseg_ce", cfg.weights.iseg_ce);
    get_d("loss.iseg_bce", cfg.weights.iseg_bce);
    get_d("loss.iseg_dice", cfg.weights.iseg_dice);
    get_d("loss.retrieval", cfg.weights.retrieval);
    get_d("loss.interleave_retrieval", cfg.weights.interleave_retrieval);
    get_d("loss.intg_ce", cfg.weights.intg_ce);
    get_d("loss.intg_bce", cfg.weights.intg_bce);
    get_d("loss.intg_dice", cfg.weights.intg_dice);

    static const char* known_prefixes[] = {"task_mix."};
    for (const auto& [key, value] : kv) {
        if (key.rfind("task_mix.", 0) == 0) {
            cfg.task_mix[key.substr(9)] = std::stod(value);
            continue;
        }
        (void)known_prefixes;
        static const KvMap reference = train_config_to_kv(TrainConfig{});
        if (reference.find(key) == reference.end()) {
            throw std::invalid_argument("config: unknown key " + key);
        }
    }
    cfg.validate();
    return cfg;
}

std::uint64_t config_hash(const TrainConfig& cfg) {
    return fnv1a(serialize_kv(train_config_to_kv(cfg)));
}

}  // namespace ivl
