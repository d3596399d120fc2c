#include "dg/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"

namespace dg {

using nlohmann::json;

namespace {

json model_meta(const ToyLdm<float>& m) {
    const ModelConfig& c = m.cfg;
    return json{{"model",
                 {{"image_size", c.image_size},
                  {"image_channels", c.image_channels},
                  {"latent_channels", c.latent_channels},
                  {"enc_ch1", c.enc_ch1},
                  {"enc_ch2", c.enc_ch2},
                  {"unet_ch1", c.unet_ch1},
                  {"unet_ch2", c.unet_ch2},
                  {"n_heads", c.n_heads},
                  {"temb_dim", c.temb_dim},
                  {"temb_hidden", c.temb_hidden},
                  {"vocab_size", c.vocab_size},
                  {"tok_len", c.tok_len},
                  {"embed_dim", c.embed_dim}}},
                {"schedule",
                 {{"T", m.sched.T},
                  {"beta_start", m.sched.betas.front()},
                  {"beta_end", m.sched.betas.back()}}}};
}

void read_meta(const json& meta, ModelConfig& c, ScheduleConfig& s) {
    const json& mc = meta.at("model");
    c.image_size = mc.at("image_size");
    c.image_channels = mc.at("image_channels");
    c.latent_channels = mc.at("latent_channels");
    c.enc_ch1 = mc.at("enc_ch1");
    c.enc_ch2 = mc.at("enc_ch2");
    c.unet_ch1 = mc.at("unet_ch1");
    c.unet_ch2 = mc.at("unet_ch2");
    c.n_heads = mc.at("n_heads");
    c.temb_dim = mc.at("temb_dim");
    c.temb_hidden = mc.at("temb_hidden");
    c.vocab_size = mc.at("vocab_size");
    c.tok_len = mc.at("tok_len");
    c.embed_dim = mc.at("embed_dim");
    const json& sc = meta.at("schedule");
    s.T = sc.at("T");
    s.beta_start = sc.at("beta_start");
    s.beta_end = sc.at("beta_end");
}

void write_container(const std::string& path, const ParamStore<float>& store, json meta) {
    json manifest;
    manifest["version"] = kCheckpointVersion;
    manifest["meta"] = std::move(meta);
    json params = json::array();
    uint64_t offset = 0;
    for (const auto& e : store.entries) {
        const uint64_t nbytes = e.t.size() * sizeof(float);
        params.push_back({{"name", e.name},
                          {"group", e.group},
                          {"shape", e.t.shape},
                          {"dtype", "f32"},
                          {"offset", offset},
                          {"nbytes", nbytes}});
        offset += nbytes;
    }
    manifest["params"] = std::move(params);
    const std::string mtext = manifest.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for write: " + path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    uint64_t msize = mtext.size();
    unsigned char lenbuf[8];
    for (int i = 0; i < 8; ++i) lenbuf[i] = static_cast<unsigned char>((msize >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(lenbuf), 8);
    out.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
    for (const auto& e : store.entries)
        out.write(reinterpret_cast<const char*>(e.t.v.data()),
                  static_cast<std::streamsize>(e.t.size() * sizeof(float)));
    if (!out) throw IoError("short write: " + path);
}

std::pair<ParamStore<float>, json> read_container(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw IoError("not a checkpoint container: " + path);
    unsigned char lenbuf[8];
    in.read(reinterpret_cast<char*>(lenbuf), 8);
    uint64_t msize = 0;
    for (int i = 0; i < 8; ++i) msize |= static_cast<uint64_t>(lenbuf[i]) << (8 * i);
    std::string mtext(msize, '\0');
    in.read(mtext.data(), static_cast<std::streamsize>(msize));
    if (!in) throw IoError("truncated manifest: " + path);

    json manifest = json::parse(mtext, nullptr, false);
    if (manifest.is_discarded()) throw IoError("bad manifest JSON: " + path);
    if (!manifest.contains("version")) throw IoError("manifest missing version: " + path);
    if (manifest["version"].get<int>() != kCheckpointVersion)
        throw IoError("unsupported checkpoint version in " + path);

    ParamStore<float> store;
    for (const auto& p : manifest.at("params")) {
        if (p.at("dtype").get<std::string>() != "f32")
            throw IoError("unsupported dtype in " + path);
        Shape shape = p.at("shape").get<Shape>();
        Tensor<float> t(shape);
        in.read(reinterpret_cast<char*>(t.v.data()),
                static_cast<std::streamsize>(t.size() * sizeof(float)));
        if (!in) throw IoError("truncated parameter data: " + path);
        store.add(p.at("name").get<std::string>(), p.at("group").get<std::string>(),
                  std::move(t));
    }
    return {std::move(store), manifest.at("meta")};
}

}  // namespace

void save_checkpoint(const std::string& path, const ToyLdm<float>& model) {
    write_container(path, model.params, model_meta(model));
}

ToyLdm<float> load_checkpoint(const std::string& path) {
    auto [store, meta] = read_container(path);
    ModelConfig mc;
    ScheduleConfig sc;
    read_meta(meta, mc, sc);
    // Template for shape/order validation, then adopt the stored values.
    ToyLdm<float> model = init_model<float>(mc, sc, 0);
    if (store.entries.size() != model.params.entries.size())
        throw IoError("checkpoint parameter count mismatch: " + path);
    for (std::size_t i = 0; i < store.entries.size(); ++i) {
        const auto& got = store.entries[i];
        const auto& want = model.params.entries[i];
        if (got.name != want.name || got.group != want.group || got.t.shape != want.t.shape)
            throw IoError("checkpoint entry mismatch at " + got.name + " in " + path);
    }
    model.params = std::move(store);
    return model;
}

void save_embedding(const std::string& path, const TensorF& f) {
    ParamStore<float> store;
    store.add("prompt.embedding", "prompt", f);
    write_container(path, store, json{{"kind", "prompt-embedding"}});
}

TensorF load_embedding(const std::string& path) {
    auto [store, meta] = read_container(path);
    (void)meta;
    return store.at("prompt.embedding");
}

}  // namespace dg
