#include "plab/store.hpp"

#include "plab/idx.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>

namespace plab {

namespace fs = std::filesystem;
using nlohmann::json;

void save_patch_store(const std::string& dir, const PatchStore& store) {
    fs::create_directories(dir);
    int n = (int)store.patches.size();
    if (n == 0) throw Error("save_patch_store: empty store");
    int h = store.height, w = store.width, c = store.channels;

    Tensor images({n, h, w, c});
    Tensor masks({n, h, w});
    std::size_t per = (std::size_t)h * w * c;
    std::size_t perm = (std::size_t)h * w;
    for (int i = 0; i < n; ++i) {
        const auto& p = store.patches[i];
        std::copy(p.image.data.begin(), p.image.data.end(), images.data.begin() + i * per);
        std::copy(p.validity.data.begin(), p.validity.data.end(), masks.data.begin() + i * perm);
    }
    save_idx_double((fs::path(dir) / "images.idx").string(), images);
    save_idx_ubyte((fs::path(dir) / "masks.idx").string(), masks);

    std::ofstream mf(fs::path(dir) / "manifest.jsonl");
    if (!mf) throw Error("save_patch_store: cannot write manifest");
    for (const auto& p : store.patches) {
        json rec;
        rec["class"] = p.klass;
        if (p.concept_idx == -2) {
            rec["concept"] = "stitched";
            json sf = json::array();
            for (auto [cp, cq] : p.stitched_from) sf.push_back({cp, cq});
            rec["stitched_from"] = sf;
        } else {
            rec["concept"] = p.concept_idx;
        }
        rec["segment"] = p.segment_idx;
        rec["tcav"] = p.tcav;
        rec["coverage"] = p.coverage;
        rec["source_image_id"] = p.source_image_id;
        mf << rec.dump() << "\n";
    }

    json meta;
    meta["classes"] = store.classes;
    meta["height"] = h;
    meta["width"] = w;
    meta["channels"] = c;
    meta["channel_mean"] = store.channel_mean;
    meta["count"] = n;
    meta["warnings"] = store.warnings;
    std::ofstream mj(fs::path(dir) / "meta.json");
    mj << meta.dump(2) << "\n";
}

PatchStore load_patch_store(const std::string& dir) {
    std::ifstream mj(fs::path(dir) / "meta.json");
    if (!mj) throw Error("load_patch_store: missing meta.json in " + dir);
    json meta = json::parse(mj);

    PatchStore store;
    store.classes = meta.at("classes").get<int>();
    store.height = meta.at("height").get<int>();
    store.width = meta.at("width").get<int>();
    store.channels = meta.at("channels").get<int>();
    store.channel_mean = meta.at("channel_mean").get<std::vector<double>>();
    store.warnings = meta.value("warnings", std::vector<std::string>{});

    Tensor images = load_idx((fs::path(dir) / "images.idx").string());
    Tensor masks = load_idx((fs::path(dir) / "masks.idx").string());
    int n = images.shape[0];
    int h = store.height, w = store.width, c = store.channels;
    std::size_t per = (std::size_t)h * w * c;
    std::size_t perm = (std::size_t)h * w;

    std::ifstream mf(fs::path(dir) / "manifest.jsonl");
    if (!mf) throw Error("load_patch_store: missing manifest.jsonl in " + dir);
    std::string line;
    int i = 0;
    while (std::getline(mf, line)) {
        if (line.empty()) continue;
        if (i >= n) throw Error("load_patch_store: more manifest records than images");
        json rec = json::parse(line);
        DiscriminativePatch p;
        p.image = Tensor({h, w, c});
        std::copy(images.data.begin() + i * per, images.data.begin() + (i + 1) * per,
                  p.image.data.begin());
        p.validity = Tensor({h, w});
        for (std::size_t j = 0; j < perm; ++j)
            p.validity.data[j] = masks.data[i * perm + j] > 0.5 ? 1.0 : 0.0;
        p.klass = p.label = rec.at("class").get<int>();
        if (rec.at("concept").is_string()) {
            p.concept_idx = -2;
            if (rec.contains("stitched_from"))
                for (const auto& e : rec["stitched_from"])
                    p.stitched_from.push_back({e[0].get<int>(), e[1].get<int>()});
        } else {
            p.concept_idx = rec.at("concept").get<int>();
        }
        p.segment_idx = rec.at("segment").get<int>();
        p.tcav = rec.at("tcav").get<double>();
        p.coverage = rec.at("coverage").get<double>();
        p.source_image_id = rec.at("source_image_id").get<int>();
        store.patches.push_back(std::move(p));
        ++i;
    }
    if (i != n) throw Error("load_patch_store: manifest/image count mismatch");
    return store;
}

} // namespace plab
