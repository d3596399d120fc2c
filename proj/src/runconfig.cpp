#include "dg/runconfig.hpp"

#include <fstream>
#include <functional>
#include <sstream>

namespace dg {

using nlohmann::json;

namespace {

struct Field {
    std::string section, key;
    std::function<json()> get;
    std::function<void(const json&)> set;
};

struct Binder {
    std::vector<Field> fields;

    void bind(const std::string& sec, const std::string& key, int* p) {
        fields.push_back({sec, key, [p] { return json(*p); }, [p](const json& j) { *p = j; }});
    }
    void bind(const std::string& sec, const std::string& key, bool* p) {
        fields.push_back({sec, key, [p] { return json(*p); }, [p](const json& j) { *p = j; }});
    }
    void bind(const std::string& sec, const std::string& key, float* p) {
        fields.push_back({sec, key, [p] { return json(static_cast<double>(*p)); },
                          [p](const json& j) { *p = static_cast<float>(j.get<double>()); }});
    }
    void bind(const std::string& sec, const std::string& key, double* p) {
        fields.push_back({sec, key, [p] { return json(*p); },
                          [p](const json& j) { *p = j.get<double>(); }});
    }
    void bind(const std::string& sec, const std::string& key, AttnTargetKind* p) {
        fields.push_back({sec, key, [p] { return json(attn_target_name(*p)); },
                          [p](const json& j) { *p = parse_attn_target(j.get<std::string>()); }});
    }

    Field& find(const std::string& sec, const std::string& key) {
        for (auto& f : fields)
            if (f.section == sec && f.key == key) return f;
        throw ConfigError("unknown config key [" + sec + "] " + key);
    }
};

Binder make_binder(RunConfig& c) {
    Binder b;
    b.bind("model", "image_size", &c.model.image_size);
    b.bind("model", "latent_channels", &c.model.latent_channels);
    b.bind("model", "enc_ch1", &c.model.enc_ch1);
    b.bind("model", "enc_ch2", &c.model.enc_ch2);
    b.bind("model", "unet_ch1", &c.model.unet_ch1);
    b.bind("model", "unet_ch2", &c.model.unet_ch2);
    b.bind("model", "n_heads", &c.model.n_heads);
    b.bind("model", "temb_dim", &c.model.temb_dim);
    b.bind("model", "temb_hidden", &c.model.temb_hidden);
    b.bind("model", "tok_len", &c.model.tok_len);
    b.bind("model", "embed_dim", &c.model.embed_dim);

    b.bind("schedule", "T", &c.schedule.T);
    b.bind("schedule", "beta_start", &c.schedule.beta_start);
    b.bind("schedule", "beta_end", &c.schedule.beta_end);

    b.bind("dataset", "n_subjects", &c.dataset.n_subjects);
    b.bind("dataset", "per_subject", &c.dataset.per_subject);
    b.bind("dataset", "heldout", &c.dataset.heldout);
    b.bind("dataset", "image_size", &c.dataset.image_size);

    b.bind("pretrain", "ae_steps", &c.pretrain.ae_steps);
    b.bind("pretrain", "ldm_steps", &c.pretrain.ldm_steps);
    b.bind("pretrain", "batch", &c.pretrain.batch);
    b.bind("pretrain", "ae_lr", &c.pretrain.ae_lr);
    b.bind("pretrain", "ldm_lr", &c.pretrain.ldm_lr);
    b.bind("pretrain", "draws_per_image", &c.pretrain.draws_per_image);

    b.bind("prompt_tuning", "steps", &c.protection.pt.steps);
    b.bind("prompt_tuning", "learning_rate", &c.protection.pt.learning_rate);
    b.bind("prompt_tuning", "draws_per_step", &c.protection.pt.draws_per_step);

    b.bind("attack", "eta", &c.protection.budget.eta);
    b.bind("attack", "alpha", &c.protection.budget.alpha);
    b.bind("attack", "steps", &c.protection.budget.steps);
    b.bind("attack", "draws", &c.protection.attack_draws);
    b.bind("attack", "target", &c.protection.target);
    b.bind("attack", "url_weight", &c.protection.url_weight);
    b.bind("attack", "sdl_weight", &c.protection.sdl_weight);

    b.bind("surrogate", "steps", &c.protection.surrogate.steps);
    b.bind("surrogate", "lr", &c.protection.surrogate.lr);
    b.bind("surrogate", "draws_per_step", &c.protection.surrogate.draws_per_step);

    b.bind("pipeline", "epochs", &c.protection.epochs);
    b.bind("pipeline", "use_pt", &c.protection.use_pt);
    b.bind("pipeline", "probe_count", &c.protection.probe_count);
    b.bind("pipeline", "parallel_images", &c.protection.parallel_images);

    b.bind("finetune", "steps", &c.finetune.steps);
    b.bind("finetune", "lr", &c.finetune.lr);
    b.bind("finetune", "draws_per_step", &c.finetune.draws_per_step);

    b.bind("trial", "finetune_steps", &c.trial.finetune.steps);
    b.bind("trial", "finetune_lr", &c.trial.finetune.lr);
    b.bind("trial", "finetune_draws", &c.trial.finetune.draws_per_step);
    b.bind("trial", "probe_count", &c.trial.probe_count);
    b.bind("trial", "sample_count", &c.trial.sample_count);
    b.bind("trial", "sample_steps", &c.trial.sample_steps);

    b.bind("edit", "t_frac", &c.edit.t_frac);
    b.bind("edit", "denoise_stride", &c.edit.denoise_stride);

    b.bind("sampling", "ddim_steps", &c.ddim_steps);
    return b;
}

json ini_value_to_json(const std::string& raw) {
    if (raw == "true") return json(true);
    if (raw == "false") return json(false);
    json num = json::parse(raw, nullptr, false);
    if (!num.is_discarded() && (num.is_number() || num.is_boolean())) return num;
    return json(raw);
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

std::string dump_ini(const RunConfig& cfg) {
    Binder b = make_binder(const_cast<RunConfig&>(cfg));
    std::ostringstream out;
    std::string cur;
    for (const auto& f : b.fields) {
        if (f.section != cur) {
            if (!cur.empty()) out << "\n";
            out << "[" << f.section << "]\n";
            cur = f.section;
        }
        json v = f.get();
        out << f.key << " = " << (v.is_string() ? v.get<std::string>() : v.dump()) << "\n";
    }
    return out.str();
}

void apply_ini_text(RunConfig& cfg, const std::string& text) {
    Binder b = make_binder(cfg);
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("line " + std::to_string(lineno) + ": bad section header");
            section = line.substr(1, line.size() - 2);
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (section.empty())
            throw ConfigError("line " + std::to_string(lineno) + ": key outside a section");
        try {
            b.find(section, key).set(ini_value_to_json(val));
        } catch (const json::exception& e) {
            throw ConfigError("line " + std::to_string(lineno) + ": bad value for [" + section +
                              "] " + key + ": " + e.what());
        }
    }
}

void apply_ini_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    apply_ini_text(cfg, buf.str());
}

json config_to_json(const RunConfig& cfg) {
    Binder b = make_binder(const_cast<RunConfig&>(cfg));
    json out = json::object();
    for (const auto& f : b.fields) out[f.section][f.key] = f.get();
    return out;
}

void config_from_json(RunConfig& cfg, const json& j) {
    Binder b = make_binder(cfg);
    for (const auto& [sec, kv] : j.items())
        for (const auto& [key, val] : kv.items()) b.find(sec, key).set(val);
}

}  // namespace dg
