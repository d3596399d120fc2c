#include "dg/dataset.hpp"

#include <filesystem>
#include <fstream>

#include "dg/png_io.hpp"
#include "json.hpp"

namespace dg {

namespace fs = std::filesystem;
using nlohmann::json;

void save_dataset(const std::string& dir, const ToyDataset& ds) {
    fs::create_directories(dir);
    json index;
    index["version"] = 1;
    index["image_size"] = ds.image_size;
    index["seed"] = ds.seed;
    index["vocab"] = vocab_names();
    json subjects = json::array();

    for (const auto& sub : ds.subjects) {
        char name[16];
        std::snprintf(name, sizeof(name), "sub%02d", sub.id);
        const fs::path sdir = fs::path(dir) / name;
        fs::create_directories(sdir);

        json js;
        js["id"] = sub.id;
        js["shape"] = sub.shape;
        js["color"] = sub.color;
        js["texture"] = sub.texture;
        js["subject_token"] = sub.subject_token;
        js["caption"] = sub.caption;

        save_png(sub.canonical, (sdir / "template.png").string());
        js["template"] = std::string(name) + "/template.png";

        json train = json::array(), heldout = json::array();
        for (std::size_t i = 0; i < sub.train.size(); ++i) {
            char f[32];
            std::snprintf(f, sizeof(f), "train_%02zu.png", i);
            save_png(sub.train[i], (sdir / f).string());
            train.push_back(std::string(name) + "/" + f);
        }
        for (std::size_t i = 0; i < sub.heldout.size(); ++i) {
            char f[32];
            std::snprintf(f, sizeof(f), "heldout_%02zu.png", i);
            save_png(sub.heldout[i], (sdir / f).string());
            heldout.push_back(std::string(name) + "/" + f);
        }
        js["train"] = std::move(train);
        js["heldout"] = std::move(heldout);
        subjects.push_back(std::move(js));
    }
    index["subjects"] = std::move(subjects);

    std::ofstream out(fs::path(dir) / "index.json");
    if (!out) throw IoError("cannot write dataset index in " + dir);
    out << index.dump(2) << "\n";
}

ToyDataset load_dataset(const std::string& dir) {
    const fs::path index_path = fs::path(dir) / "index.json";
    std::ifstream in(index_path);
    if (!in) throw IoError("missing dataset index: " + index_path.string());
    json index = json::parse(in, nullptr, false);
    if (index.is_discarded()) throw IoError("bad dataset index JSON: " + index_path.string());

    ToyDataset ds;
    ds.image_size = index.at("image_size");
    ds.seed = index.value("seed", 0ull);
    for (const auto& js : index.at("subjects")) {
        Subject sub;
        sub.id = js.at("id");
        sub.shape = js.at("shape");
        sub.color = js.at("color");
        sub.texture = js.at("texture");
        sub.subject_token = js.at("subject_token");
        sub.caption = js.at("caption").get<std::vector<int>>();
        sub.canonical = load_png((fs::path(dir) / js.at("template").get<std::string>()).string());
        for (const auto& f : js.at("train"))
            sub.train.push_back(load_png((fs::path(dir) / f.get<std::string>()).string()));
        for (const auto& f : js.at("heldout"))
            sub.heldout.push_back(load_png((fs::path(dir) / f.get<std::string>()).string()));
        ds.subjects.push_back(std::move(sub));
    }
    return ds;
}

}  // namespace dg
