// diffguard: adds budgeted adversarial noise to images so that diffusion-based
// personalization and editing degrade on them, and measures that degradation
// against a self-contained toy latent diffusion stack.
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "dg/checkpoint.hpp"
#include "dg/png_io.hpp"
#include "dg/runconfig.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dg;

namespace {

constexpr int kExitParse = 2;
constexpr int kExitConfig = 3;
constexpr int kExitIo = 4;
constexpr int kExitNumeric = 5;

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw IoError("bad JSON in " + path.string());
    return j;
}

std::vector<fs::path> list_pngs(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
    std::sort(out.begin(), out.end());
    if (out.empty()) throw IoError("no .png files in " + dir.string());
    return out;
}

std::vector<int> parse_tokens(const std::string& spec) {
    std::vector<int> ids;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t pos = 0;
            int v = std::stoi(item, &pos);
            if (pos == item.size()) {
                ids.push_back(v);
                continue;
            }
        } catch (...) {
        }
        ids.push_back(token_id(item));
    }
    if (ids.empty()) throw ConfigError("empty token list: " + spec);
    return ids;
}

const Subject& subject_by_id(const ToyDataset& ds, int id) {
    for (const auto& s : ds.subjects)
        if (s.id == id) return s;
    throw ConfigError("dataset has no subject " + std::to_string(id));
}

double mean_of(const std::vector<double>& v) {
    double acc = 0;
    for (double x : v) acc += x;
    return v.empty() ? 0 : acc / static_cast<double>(v.size());
}

json report_header(const std::string& kind) {
    return json{{"version", 1},
                {"kind", kind},
                {"proxy_note",
                 "identity and learned image-quality metrics are replaced by loss- and "
                 "template-based proxies; no pretrained networks are involved at this scale"}};
}

// ------------------------------------------------------------------ protect

struct ProtectArgs {
    std::string data, ckpt, out, config, from_manifest;
    int subject = 0;
    uint64_t seed = 0;
    double eta = -1;  // <0: keep config value
    int epochs = -1;
    bool trace = false;
};

int run_protect(ProtectArgs a) {
    RunConfig cfg;
    json manifest_in;
    if (!a.from_manifest.empty()) {
        manifest_in = read_json(a.from_manifest);
        config_from_json(cfg, manifest_in.at("config"));
        a.seed = manifest_in.at("seed").get<uint64_t>();
        if (a.data.empty()) a.data = manifest_in.at("inputs").at("dataset").get<std::string>();
        if (a.ckpt.empty()) a.ckpt = manifest_in.at("inputs").at("checkpoint").get<std::string>();
        a.subject = manifest_in.at("inputs").at("subject").get<int>();
    }
    if (!a.config.empty()) apply_ini_file(cfg, a.config);
    if (a.eta >= 0) cfg.protection.budget.eta = a.eta;
    if (a.epochs > 0) cfg.protection.epochs = a.epochs;
    cfg.protection.seed = a.seed;

    ToyLdm<float> base = load_checkpoint(a.ckpt);
    ToyDataset ds = load_dataset(a.data);
    const Subject& sub = subject_by_id(ds, a.subject);

    ProtectionResult res = protect(sub.train, base, cfg.protection);

    fs::create_directories(a.out);
    json outputs;
    json images = json::array();
    std::vector<double> psnrs;
    double linf_pre = 0, linf_post = 0;
    for (std::size_t i = 0; i < res.images.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "protected_%02zu.png", i);
        const fs::path p = fs::path(a.out) / name;
        save_png(res.images[i], p.string());
        images.push_back(name);
        linf_pre = std::max(linf_pre, linf(res.images[i], sub.train[i]));
        linf_post = std::max(linf_post, linf(quantize8(res.images[i]), quantize8(sub.train[i])));
        psnrs.push_back(psnr(res.images[i], sub.train[i]));
    }
    save_embedding((fs::path(a.out) / "prompt.dgc").string(), res.embedding);
    save_checkpoint((fs::path(a.out) / "surrogate.dgc").string(), res.surrogate);
    outputs["images"] = images;
    outputs["embedding"] = "prompt.dgc";
    outputs["surrogate"] = "surrogate.dgc";

    if (a.trace) {
        fs::create_directories(fs::path(a.out) / "traces");
        for (std::size_t i = 0; i < res.traces.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof(name), "traces/img_%02zu.csv", i);
            std::ostringstream csv;
            csv << "epoch,iter,cost,url,sdl,grad_inf\n";
            for (const auto& r : res.traces[i])
                csv << r.epoch << "," << r.iter << "," << r.cost << "," << r.url << "," << r.sdl
                    << "," << r.grad_inf << "\n";
            write_text(fs::path(a.out) / name, csv.str());
        }
    }

    json epochs = json::array();
    for (const auto& e : res.epochs)
        epochs.push_back({{"epoch", e.epoch},
                          {"pt_probe_before", e.pt.probe_before},
                          {"pt_probe_after", e.pt.probe_after},
                          {"pt_accepted", e.pt.accepted},
                          {"cost_first", e.cost_first},
                          {"cost_last", e.cost_last},
                          {"surrogate_probe_before", e.surrogate.probe_before},
                          {"surrogate_probe_after", e.surrogate.probe_after},
                          {"surrogate_accepted", e.surrogate.accepted},
                          {"max_linf", e.max_linf}});

    json manifest;
    manifest["version"] = 1;
    manifest["command"] = "protect";
    manifest["seed"] = a.seed;
    manifest["config"] = config_to_json(cfg);
    manifest["inputs"] = {{"dataset", a.data}, {"subject", a.subject}, {"checkpoint", a.ckpt}};
    manifest["outputs"] = outputs;
    manifest["metrics"] = {{"linf_pre_quant", linf_pre},
                           {"linf_post_quant", linf_post},
                           {"eta", cfg.protection.budget.eta},
                           {"psnr_mean", mean_of(psnrs)}};
    manifest["epochs"] = epochs;
    write_json(fs::path(a.out) / "manifest.json", manifest);

    std::cout << "protected " << res.images.size() << " images of subject " << a.subject
              << ": linf=" << linf_pre << " (post-quant " << linf_post << ", eta "
              << cfg.protection.budget.eta << "), psnr mean=" << mean_of(psnrs) << " dB\n";
    if (linf_pre > cfg.protection.budget.eta) {
        std::cerr << "budget violated pre-quantization\n";
        return kExitNumeric;
    }
    return 0;
}

// ------------------------------------------------------------------- ablate

int run_ablate(const std::string& data, const std::string& ckpt, int subject_id,
               const std::string& grid, int n_seeds, uint64_t seed, const std::string& config,
               const std::string& out) {
    RunConfig cfg;
    if (!config.empty()) apply_ini_file(cfg, config);
    ToyLdm<float> base = load_checkpoint(ckpt);
    ToyDataset ds = load_dataset(data);
    const Subject& sub = subject_by_id(ds, subject_id);

    const TensorF f_caption = embed_tokens(base, sub.caption);
    const auto probe = probe_draws(base, derive_seed(seed, "ablate-probe"));
    const TensorF class_prompt = embed_tokens(base, {kShapeTokBase + sub.shape});

    struct Row {
        std::string name;
        int wins = 0, trials = 0;
        std::vector<double> energy, psnr_vals;
    };
    std::vector<Row> rows;

    auto run_cell = [&](const std::string& name, bool use_pt, bool use_sdl, AttnTargetKind tgt,
                        bool with_trial) {
        Row row;
        row.name = name;
        for (int s = 0; s < n_seeds; ++s) {
            ProtectionConfig pc = cfg.protection;
            pc.seed = derive_seed(seed, "ablate", fnv1a64(name), static_cast<uint64_t>(s));
            pc.use_pt = use_pt;
            pc.sdl_weight = use_sdl ? cfg.protection.sdl_weight : 0.0f;
            pc.target = tgt;
            auto res = protect(sub.train, base, pc, use_pt ? nullptr : &class_prompt);
            double e = 0, pv = 0;
            for (std::size_t i = 0; i < res.images.size(); ++i) {
                e += attention_energy(base, res.images[i], f_caption, probe);
                pv += psnr(res.images[i], sub.train[i]);
            }
            row.energy.push_back(e / res.images.size());
            row.psnr_vals.push_back(pv / res.images.size());
            if (with_trial) {
                EfficacyTrialConfig tc = cfg.trial;
                tc.seed = derive_seed(seed, "ablate-trial", fnv1a64(name),
                                      static_cast<uint64_t>(s));
                auto rec = efficacy_trial(base, sub.train, res.images, sub.heldout,
                                          sub.subject_token, sub.canonical, tc);
                row.trials += 1;
                row.wins += rec.win ? 1 : 0;
            }
        }
        rows.push_back(std::move(row));
    };

    if (grid == "pt,sdl") {
        run_cell("baseline", false, false, AttnTargetKind::Zero, true);
        run_cell("pt_only", true, false, AttnTargetKind::Zero, true);
        run_cell("sdl_only", false, true, AttnTargetKind::Zero, true);
        run_cell("pt_sdl", true, true, AttnTargetKind::Zero, true);
    } else if (grid == "target") {
        run_cell("zero", true, true, AttnTargetKind::Zero, false);
        run_cell("noise", true, true, AttnTargetKind::Noise, false);
        run_cell("diagonal", true, true, AttnTargetKind::Diagonal, false);
    } else {
        throw ConfigError("unknown grid: " + grid + " (want pt,sdl | target)");
    }

    json jrows = json::array();
    std::cout << "config        wins  attention_energy  psnr\n";
    for (const auto& r : rows) {
        const double me = mean_of(r.energy), mp = mean_of(r.psnr_vals);
        std::printf("%-12s  %d/%d  %.6f  %.2f\n", r.name.c_str(), r.wins, r.trials, me, mp);
        jrows.push_back({{"config", r.name},
                         {"wins", r.wins},
                         {"trials", r.trials},
                         {"attention_energy_mean", me},
                         {"attention_energy", r.energy},
                         {"psnr_mean", mp}});
    }
    json rep = report_header("ablation");
    rep["grid"] = grid;
    rep["seed"] = seed;
    rep["seeds"] = n_seeds;
    rep["rows"] = jrows;
    rep["config"] = config_to_json(cfg);
    if (!out.empty()) write_json(out, rep);
    return 0;
}

// --------------------------------------------------------------------- eval

int run_eval(const std::string& clean_dir, const std::string& protected_dir,
             const std::string& ckpt, const std::string& data, int subject_id, double eta,
             uint64_t seed, const std::string& out, const std::string& csv) {
    auto clean_files = list_pngs(clean_dir);
    auto prot_files = list_pngs(protected_dir);
    if (clean_files.size() != prot_files.size())
        throw ConfigError("eval: directory sizes differ (" +
                          std::to_string(clean_files.size()) + " vs " +
                          std::to_string(prot_files.size()) + ")");

    json rep = report_header("metrics");
    rep["seed"] = seed;
    json per_image = json::array();
    double linf_max = 0, psnr_min = 1e300;
    std::vector<double> psnrs;
    std::vector<TensorF> clean, prot;
    for (std::size_t i = 0; i < clean_files.size(); ++i) {
        TensorF a = load_png(clean_files[i].string());
        TensorF b = load_png(prot_files[i].string());
        const double l = linf(a, b);
        const double p = psnr(a, b);
        linf_max = std::max(linf_max, l);
        psnr_min = std::min(psnr_min, p);
        psnrs.push_back(p);
        per_image.push_back({{"clean", clean_files[i].filename().string()},
                             {"protected", prot_files[i].filename().string()},
                             {"linf", l},
                             {"psnr", std::isinf(p) ? json("inf") : json(p)}});
        clean.push_back(std::move(a));
        prot.push_back(std::move(b));
    }
    rep["linf"] = {{"max", linf_max},
                   {"eta", eta},
                   {"budget_ok_post_quant", linf_max <= eta + 1.0 / 255.0 + 1e-12}};
    rep["psnr"] = {{"mean", mean_of(psnrs)},
                   {"min", std::isinf(psnr_min) ? json("inf") : json(psnr_min)}};
    rep["per_image"] = per_image;

    if (!ckpt.empty()) {
        if (data.empty()) throw ConfigError("eval: --data is required with --ckpt");
        ToyLdm<float> base = load_checkpoint(ckpt);
        ToyDataset ds = load_dataset(data);
        const Subject& sub = subject_by_id(ds, subject_id);
        const TensorF f_caption = embed_tokens(base, sub.caption);
        const auto probe = probe_draws(base, derive_seed(seed, "eval-probe"));
        double ec = 0, ep = 0;
        for (std::size_t i = 0; i < clean.size(); ++i) {
            ec += attention_energy(base, clean[i], f_caption, probe);
            ep += attention_energy(base, prot[i], f_caption, probe);
        }
        rep["attention_energy"] = {{"clean", ec / clean.size()},
                                   {"protected", ep / prot.size()}};
    }

    if (!out.empty()) write_json(out, rep);
    if (!csv.empty()) {
        std::ostringstream flat;
        flat << "metric,value\n";
        flat << "linf_max," << linf_max << "\n";
        flat << "psnr_mean," << mean_of(psnrs) << "\n";
        if (rep.contains("attention_energy")) {
            flat << "attention_energy_clean," << rep["attention_energy"]["clean"] << "\n";
            flat << "attention_energy_protected," << rep["attention_energy"]["protected"]
                 << "\n";
        }
        write_text(csv, flat.str());
    }
    std::cout << "linf max " << linf_max << " (eta " << eta << "), psnr mean " << mean_of(psnrs)
              << " dB\n";
    if (rep.contains("attention_energy"))
        std::cout << "attention energy clean " << rep["attention_energy"]["clean"]
                  << " -> protected " << rep["attention_energy"]["protected"] << "\n";
    return 0;
}

// --------------------------------------------------------------------- demo

int run_demo(const std::string& out, uint64_t seed) {
    RunConfig cfg;
    cfg.dataset.n_subjects = 3;
    cfg.dataset.per_subject = 3;
    cfg.dataset.heldout = 2;
    cfg.pretrain.ae_steps = 400;
    cfg.pretrain.ldm_steps = 700;
    cfg.protection.epochs = 3;
    cfg.protection.pt.steps = 25;
    cfg.protection.budget.steps = 25;
    cfg.protection.surrogate.steps = 10;
    cfg.trial.finetune.steps = 120;

    fs::create_directories(out);
    std::cout << "[demo] generating toy dataset\n";
    cfg.dataset.seed = derive_seed(seed, "demo-data");
    ToyDataset ds = generate_dataset(cfg.dataset);
    save_dataset((fs::path(out) / "data").string(), ds);

    std::cout << "[demo] pretraining toy model\n";
    cfg.pretrain.seed = derive_seed(seed, "demo-pretrain");
    PretrainReport prep;
    ToyLdm<float> base = pretrain_toy(ds, cfg.model, cfg.schedule, cfg.pretrain, &prep);
    save_checkpoint((fs::path(out) / "base.dgc").string(), base);
    std::cout << "  heldout ldm " << prep.heldout_initial << " -> " << prep.heldout_final
              << ", recon mse " << prep.recon_mse << "\n";

    std::cout << "[demo] protecting subject 0\n";
    const Subject& sub = ds.subjects[0];
    cfg.protection.seed = derive_seed(seed, "demo-protect");
    ProtectionResult res = protect(sub.train, base, cfg.protection);
    fs::create_directories(fs::path(out) / "protected");
    double worst_psnr = 1e300, linf_max = 0;
    for (std::size_t i = 0; i < res.images.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "protected/protected_%02zu.png", i);
        save_png(res.images[i], (fs::path(out) / name).string());
        worst_psnr = std::min(worst_psnr, psnr(res.images[i], sub.train[i]));
        linf_max = std::max(linf_max, linf(res.images[i], sub.train[i]));
    }
    std::cout << "  linf " << linf_max << ", worst psnr " << worst_psnr << " dB\n";

    std::cout << "[demo] tuning-attack trials (clean vs protected)\n";
    int wins = 0;
    const int trials = 3;
    for (int s = 0; s < trials; ++s) {
        EfficacyTrialConfig tc = cfg.trial;
        tc.seed = derive_seed(seed, "demo-trial", static_cast<uint64_t>(s));
        auto rec = efficacy_trial(base, sub.train, res.images, sub.heldout, sub.subject_token,
                                  sub.canonical, tc);
        wins += rec.win ? 1 : 0;
        std::cout << "  trial " << s << ": heldout clean " << rec.heldout_clean
                  << " vs protected " << rec.heldout_protected << (rec.win ? "  WIN" : "") << "\n";
    }
    std::cout << "  protection wins " << wins << "/" << trials << "\n";

    std::cout << "[demo] edit attack (noise-and-denoise)\n";
    EditConfig ec = cfg.edit;
    ec.seed = derive_seed(seed, "demo-edit");
    const TensorF f_tgt = embed_tokens(base, {token_id("circle")});
    TensorF edit_clean = edit_attack(base, sub.train[0], f_tgt, ec);
    TensorF edit_prot = edit_attack(base, res.images[0], f_tgt, ec);
    save_png(edit_clean, (fs::path(out) / "edit_clean.png").string());
    save_png(edit_prot, (fs::path(out) / "edit_protected.png").string());
    const double amp = image_mse(edit_prot, edit_clean);
    std::cout << "  edit divergence mse " << amp << " (input power <= "
              << cfg.protection.budget.eta * cfg.protection.budget.eta << ")\n";
    std::cout << "[demo] artifacts under " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"image protection against diffusion-based tuning and editing, on a toy stack"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate the procedural toy dataset");
    std::string gen_out;
    DatasetConfig gen_cfg;
    uint64_t gen_seed = 0;
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--seed", gen_seed, "rng seed")->required();
    gen->add_option("--subjects", gen_cfg.n_subjects, "subject count (<=16)");
    gen->add_option("--per-subject", gen_cfg.per_subject, "training images per subject");
    gen->add_option("--heldout", gen_cfg.heldout, "held-out images per subject");
    gen->add_option("--size", gen_cfg.image_size, "image size (power of two)");

    // pretrain
    auto* pre = app.add_subcommand("pretrain", "train the toy autoencoder + UNet");
    std::string pre_data, pre_out, pre_config;
    uint64_t pre_seed = 0;
    pre->add_option("--data", pre_data, "dataset directory")->required();
    pre->add_option("--out", pre_out, "checkpoint path")->required();
    pre->add_option("--seed", pre_seed, "rng seed")->required();
    pre->add_option("--config", pre_config, "config file (ini)");

    // protect
    auto* prot = app.add_subcommand("protect", "run the three-stage protection pipeline");
    ProtectArgs pa;
    prot->add_option("--data", pa.data, "dataset directory");
    prot->add_option("--subject", pa.subject, "subject id");
    prot->add_option("--ckpt", pa.ckpt, "pretrained checkpoint");
    prot->add_option("--out", pa.out, "output directory")->required();
    prot->add_option("--seed", pa.seed, "master seed");
    prot->add_option("--eta", pa.eta, "L-inf budget override");
    prot->add_option("--epochs", pa.epochs, "epoch count override");
    prot->add_option("--config", pa.config, "config file (ini)");
    prot->add_option("--from-manifest", pa.from_manifest, "reproduce a run from its manifest");
    prot->add_flag("--trace", pa.trace, "write per-image cost traces (csv)");

    // attack-tune
    auto* tune = app.add_subcommand("attack-tune", "personalization attack on an image folder");
    std::string tune_ckpt, tune_images, tune_token = "sub00", tune_out;
    int tune_samples = 4;
    uint64_t tune_seed = 0;
    std::string tune_config;
    tune->add_option("--ckpt", tune_ckpt, "base checkpoint")->required();
    tune->add_option("--images", tune_images, "directory of training PNGs")->required();
    tune->add_option("--token", tune_token, "subject token (name or id)");
    tune->add_option("--out", tune_out, "output directory")->required();
    tune->add_option("--seed", tune_seed, "rng seed")->required();
    tune->add_option("--samples", tune_samples, "gallery size");
    tune->add_option("--config", tune_config, "config file (ini)");

    // attack-edit
    auto* edit = app.add_subcommand("attack-edit", "noise-and-denoise editing attack");
    std::string edit_ckpt, edit_in, edit_target, edit_out;
    double edit_tfrac = -1;
    uint64_t edit_seed = 0;
    std::string edit_config;
    edit->add_option("--ckpt", edit_ckpt, "base checkpoint")->required();
    edit->add_option("--in", edit_in, "input PNG or directory")->required();
    edit->add_option("--target", edit_target, "target tokens, e.g. circle,red")->required();
    edit->add_option("--out", edit_out, "output directory")->required();
    edit->add_option("--seed", edit_seed, "rng seed")->required();
    edit->add_option("--t-frac", edit_tfrac, "edit strength in [0,1]");
    edit->add_option("--config", edit_config, "config file (ini)");

    // eval
    auto* ev = app.add_subcommand("eval", "imperceptibility + budget + attention metrics");
    std::string ev_clean, ev_prot, ev_ckpt, ev_data, ev_out, ev_csv;
    int ev_subject = 0;
    double ev_eta = 0.05;
    uint64_t ev_seed = 0;
    ev->add_option("--clean", ev_clean, "clean image directory")->required();
    ev->add_option("--protected", ev_prot, "protected image directory")->required();
    ev->add_option("--ckpt", ev_ckpt, "checkpoint for attention energy");
    ev->add_option("--data", ev_data, "dataset directory (captions)");
    ev->add_option("--subject", ev_subject, "subject id");
    ev->add_option("--eta", ev_eta, "budget for the compliance check");
    ev->add_option("--seed", ev_seed, "probe seed");
    ev->add_option("--report", ev_out, "write JSON report here");
    ev->add_option("--csv", ev_csv, "write flat CSV here");

    // ablate
    auto* ab = app.add_subcommand("ablate", "PT/SDL and attention-target grids");
    std::string ab_data, ab_ckpt, ab_grid = "pt,sdl", ab_out, ab_config;
    int ab_subject = 0, ab_seeds = 10;
    uint64_t ab_seed = 0;
    ab->add_option("--data", ab_data, "dataset directory")->required();
    ab->add_option("--ckpt", ab_ckpt, "base checkpoint")->required();
    ab->add_option("--subject", ab_subject, "subject id");
    ab->add_option("--grid", ab_grid, "pt,sdl | target");
    ab->add_option("--seeds", ab_seeds, "seeds per cell");
    ab->add_option("--seed", ab_seed, "base seed")->required();
    ab->add_option("--report", ab_out, "write JSON report here");
    ab->add_option("--config", ab_config, "config file (ini)");

    // demo
    auto* demo = app.add_subcommand("demo", "small end-to-end run");
    std::string demo_out;
    uint64_t demo_seed = 0;
    demo->add_option("--out", demo_out, "output directory")->required();
    demo->add_option("--seed", demo_seed, "rng seed")->required();

    // dump-config
    auto* dump = app.add_subcommand("dump-config", "print the default config (ini)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitParse;
    }

    try {
        if (gen->parsed()) {
            gen_cfg.seed = gen_seed;
            ToyDataset ds = generate_dataset(gen_cfg);
            save_dataset(gen_out, ds);
            std::cout << "wrote " << ds.subjects.size() << " subjects to " << gen_out << "\n";
            return 0;
        }
        if (pre->parsed()) {
            RunConfig cfg;
            if (!pre_config.empty()) apply_ini_file(cfg, pre_config);
            cfg.pretrain.seed = pre_seed;
            ToyDataset ds = load_dataset(pre_data);
            PretrainReport rep;
            ToyLdm<float> model = pretrain_toy(ds, cfg.model, cfg.schedule, cfg.pretrain, &rep);
            save_checkpoint(pre_out, model);
            json jrep = report_header("pretrain");
            jrep["seed"] = pre_seed;
            jrep["recon_mse"] = rep.recon_mse;
            jrep["heldout_initial"] = rep.heldout_initial;
            jrep["heldout_final"] = rep.heldout_final;
            jrep["config"] = config_to_json(cfg);
            write_json(pre_out + ".report.json", jrep);
            std::cout << "heldout ldm " << rep.heldout_initial << " -> " << rep.heldout_final
                      << ", recon mse " << rep.recon_mse << "\n";
            if (rep.heldout_final > 0.5 * rep.heldout_initial || rep.recon_mse >= 0.01)
                std::cerr << "warning: pretraining quality contract not met; increase steps\n";
            return 0;
        }
        if (prot->parsed()) {
            if (pa.from_manifest.empty()) {
                if (pa.data.empty() || pa.ckpt.empty())
                    throw ConfigError("protect: --data and --ckpt are required "
                                      "(or --from-manifest)");
                if (!prot->count("--seed")) throw ConfigError("protect: --seed is required");
            }
            return run_protect(pa);
        }
        if (tune->parsed()) {
            RunConfig cfg;
            if (!tune_config.empty()) apply_ini_file(cfg, tune_config);
            ToyLdm<float> base = load_checkpoint(tune_ckpt);
            std::vector<TensorF> images;
            for (const auto& p : list_pngs(tune_images)) images.push_back(load_png(p.string()));
            const int token = parse_tokens(tune_token).at(0);
            FinetuneConfig fc = cfg.finetune;
            fc.seed = tune_seed;
            ToyLdm<float> tuned = finetune_attack(base, images, token, fc);
            fs::create_directories(tune_out);
            save_checkpoint((fs::path(tune_out) / "tuned.dgc").string(), tuned);
            const TensorF f_tok = embed_tokens(tuned, {token});
            json gallery = json::array();
            for (int k = 0; k < tune_samples; ++k) {
                char name[32];
                std::snprintf(name, sizeof(name), "sample_%02d.png", k);
                TensorF img = ddim_sample(tuned, f_tok, cfg.ddim_steps,
                                          derive_seed(tune_seed, "sample",
                                                      static_cast<uint64_t>(k)));
                save_png(img, (fs::path(tune_out) / name).string());
                gallery.push_back(name);
            }
            json idx = report_header("attack-tune");
            idx["seed"] = tune_seed;
            idx["token"] = token;
            idx["samples"] = gallery;
            write_json(fs::path(tune_out) / "index.json", idx);
            std::cout << "tuned checkpoint + " << tune_samples << " samples in " << tune_out
                      << "\n";
            return 0;
        }
        if (edit->parsed()) {
            RunConfig cfg;
            if (!edit_config.empty()) apply_ini_file(cfg, edit_config);
            if (edit_tfrac >= 0) cfg.edit.t_frac = edit_tfrac;
            ToyLdm<float> base = load_checkpoint(edit_ckpt);
            const TensorF f_tgt = embed_tokens(base, parse_tokens(edit_target));
            std::vector<fs::path> inputs;
            if (fs::is_directory(edit_in))
                inputs = list_pngs(edit_in);
            else
                inputs.push_back(edit_in);
            fs::create_directories(edit_out);
            json gallery = json::array();
            for (const auto& p : inputs) {
                EditConfig ec = cfg.edit;
                ec.seed = derive_seed(edit_seed, "edit", fnv1a64(p.filename().string()));
                TensorF img = edit_attack(base, load_png(p.string()), f_tgt, ec);
                const std::string name = "edited_" + p.filename().string();
                save_png(img, (fs::path(edit_out) / name).string());
                gallery.push_back({{"input", p.string()}, {"output", name}});
            }
            json idx = report_header("attack-edit");
            idx["seed"] = edit_seed;
            idx["t_frac"] = cfg.edit.t_frac;
            idx["target"] = edit_target;
            idx["edits"] = gallery;
            write_json(fs::path(edit_out) / "index.json", idx);
            std::cout << "edited " << inputs.size() << " images into " << edit_out << "\n";
            return 0;
        }
        if (ev->parsed())
            return run_eval(ev_clean, ev_prot, ev_ckpt, ev_data, ev_subject, ev_eta, ev_seed,
                            ev_out, ev_csv);
        if (ab->parsed())
            return run_ablate(ab_data, ab_ckpt, ab_subject, ab_grid, ab_seeds, ab_seed,
                              ab_config, ab_out);
        if (demo->parsed()) return run_demo(demo_out, demo_seed);
        if (dump->parsed()) {
            RunConfig cfg;
            std::cout << dump_ini(cfg);
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    } catch (const IoError& e) {
        std::cerr << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return kExitNumeric;
    }
    return 0;
}
