#include "plab/harness.hpp"

#include "plab/store.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace plab {

namespace fs = std::filesystem;
using nlohmann::json;

const char* material_mode_name(MaterialMode m) {
    switch (m) {
        case MaterialMode::RandomImage: return "random-image";
        case MaterialMode::Dop: return "dop";
        case MaterialMode::Stitch: return "stitch";
        case MaterialMode::AllOne: return "all-one";
        case MaterialMode::RandomSegment: return "random-segment";
        case MaterialMode::LessPatch: return "less-patch";
    }
    return "?";
}

MaterialMode material_mode_from_name(const std::string& s) {
    if (s == "random-image") return MaterialMode::RandomImage;
    if (s == "dop") return MaterialMode::Dop;
    if (s == "stitch") return MaterialMode::Stitch;
    if (s == "all-one") return MaterialMode::AllOne;
    if (s == "random-segment") return MaterialMode::RandomSegment;
    if (s == "less-patch") return MaterialMode::LessPatch;
    throw Error("unknown material mode: " + s);
}

namespace {

void check_keys(const json& j, std::initializer_list<const char*> known, const char* where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || it.key() == k;
        if (!ok) throw Error(std::string("config: unknown key \"") + it.key() + "\" in " + where);
    }
}

TrainSchedule schedule_from_json(const json& j, TrainSchedule base) {
    check_keys(j, {"epochs", "batch", "lr", "decay_epochs", "decay_factor", "momentum",
                   "weight_decay", "augment"}, "schedule");
    if (j.contains("epochs")) base.epochs = j["epochs"].get<int>();
    if (j.contains("batch")) base.batch = j["batch"].get<int>();
    if (j.contains("lr")) base.lr = j["lr"].get<double>();
    if (j.contains("decay_epochs")) base.decay_epochs = j["decay_epochs"].get<std::vector<int>>();
    if (j.contains("decay_factor")) base.decay_factor = j["decay_factor"].get<double>();
    if (j.contains("momentum")) base.momentum = j["momentum"].get<double>();
    if (j.contains("weight_decay")) base.weight_decay = j["weight_decay"].get<double>();
    if (j.contains("augment")) base.augment = j["augment"].get<bool>();
    return base;
}

json schedule_to_json(const TrainSchedule& s) {
    json j;
    j["epochs"] = s.epochs;
    j["batch"] = s.batch;
    j["lr"] = s.lr;
    j["decay_epochs"] = s.decay_epochs;
    j["decay_factor"] = s.decay_factor;
    j["momentum"] = s.momentum;
    j["weight_decay"] = s.weight_decay;
    j["augment"] = s.augment;
    return j;
}

ExperimentConfig config_from_json(const json& j) {
    check_keys(j, {"dataset", "model", "criterion", "material_mode", "material_budget",
                   "sparsities", "sigma", "sigma_mode", "seeds", "schedule", "ref_schedule",
                   "ref_accuracy_floor", "extract", "score_batch_cap", "grasp_temperature", "out"}, "config");
    ExperimentConfig c;
    if (j.contains("dataset")) {
        const json& d = j["dataset"];
        check_keys(d, {"kind", "classes", "image_size", "channels", "train_n", "test_n",
                       "min_shape_px", "max_shape_px", "clutter_density", "seed", "train_images",
                       "train_labels", "test_images", "test_labels"}, "dataset");
        if (d.contains("kind")) c.dataset.kind = d["kind"].get<std::string>();
        if (c.dataset.kind == "synthetic") {
            SyntheticSpec& s = c.dataset.synthetic;
            if (d.contains("classes")) s.classes = d["classes"].get<int>();
            if (d.contains("image_size")) s.image_size = d["image_size"].get<int>();
            if (d.contains("channels")) s.channels = d["channels"].get<int>();
            if (d.contains("train_n")) s.train_n = d["train_n"].get<int>();
            if (d.contains("test_n")) s.test_n = d["test_n"].get<int>();
            if (d.contains("min_shape_px")) s.min_shape_px = d["min_shape_px"].get<int>();
            if (d.contains("max_shape_px")) s.max_shape_px = d["max_shape_px"].get<int>();
            if (d.contains("clutter_density")) s.clutter_density = d["clutter_density"].get<double>();
            if (d.contains("seed")) s.seed = d["seed"].get<std::uint64_t>();
            c.dataset.classes = s.classes;
        } else if (c.dataset.kind == "idx") {
            c.dataset.train_images = d.at("train_images").get<std::string>();
            c.dataset.train_labels = d.at("train_labels").get<std::string>();
            c.dataset.test_images = d.at("test_images").get<std::string>();
            c.dataset.test_labels = d.at("test_labels").get<std::string>();
            c.dataset.classes = d.at("classes").get<int>();
        } else {
            throw Error("config: unknown dataset kind " + c.dataset.kind);
        }
    }
    if (j.contains("model")) c.model = j["model"].get<std::string>();
    if (j.contains("criterion")) c.criterion = criterion_from_name(j["criterion"].get<std::string>());
    if (j.contains("material_mode"))
        c.mode = material_mode_from_name(j["material_mode"].get<std::string>());
    if (j.contains("material_budget")) c.material_budget = j["material_budget"].get<int>();
    if (j.contains("sparsities")) c.sparsities = j["sparsities"].get<std::vector<double>>();
    if (j.contains("sigma")) c.sigma = j["sigma"].get<double>();
    if (j.contains("sigma_mode")) {
        std::string m = j["sigma_mode"].get<std::string>();
        if (m == "fixed")
            c.sigma_mode = SigmaMode::Fixed;
        else if (m == "endpoints")
            c.sigma_mode = SigmaMode::SampleEndpoints;
        else
            throw Error("config: unknown sigma_mode " + m);
    }
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("schedule")) c.schedule = schedule_from_json(j["schedule"], c.schedule);
    TrainSchedule ref_base = c.schedule;
    c.ref_schedule = ref_base;
    if (j.contains("ref_schedule")) c.ref_schedule = schedule_from_json(j["ref_schedule"], ref_base);
    if (j.contains("ref_accuracy_floor")) c.ref_accuracy_floor = j["ref_accuracy_floor"].get<double>();
    if (j.contains("extract")) {
        const json& e = j["extract"];
        check_keys(e, {"slic_scales", "slic_compactness", "clusters_per_class",
                       "min_cluster_population", "top_concepts", "random_counterexamples",
                       "images_per_class", "min_segment_px", "dedup_overlap", "seed"}, "extract");
        if (e.contains("slic_scales")) c.extract.slic_scales = e["slic_scales"].get<std::vector<int>>();
        if (e.contains("slic_compactness"))
            c.extract.slic_compactness = e["slic_compactness"].get<double>();
        if (e.contains("clusters_per_class"))
            c.extract.clusters_per_class = e["clusters_per_class"].get<int>();
        if (e.contains("min_cluster_population"))
            c.extract.min_cluster_population = e["min_cluster_population"].get<int>();
        if (e.contains("top_concepts")) c.extract.top_concepts = e["top_concepts"].get<int>();
        if (e.contains("random_counterexamples"))
            c.extract.random_counterexamples = e["random_counterexamples"].get<int>();
        if (e.contains("images_per_class"))
            c.extract.images_per_class = e["images_per_class"].get<int>();
        if (e.contains("min_segment_px")) c.extract.min_segment_px = e["min_segment_px"].get<int>();
        if (e.contains("dedup_overlap")) c.extract.dedup_overlap = e["dedup_overlap"].get<double>();
        if (e.contains("seed")) c.extract.seed = e["seed"].get<std::uint64_t>();
    }
    if (j.contains("score_batch_cap")) c.score_batch_cap = j["score_batch_cap"].get<int>();
    if (j.contains("grasp_temperature")) c.grasp_temperature = j["grasp_temperature"].get<double>();
    if (j.contains("out")) c.out = j["out"].get<std::string>();
    return c;
}

} // namespace

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("config: cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return from_json_text(ss.str());
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
    return config_from_json(json::parse(text));
}

std::string ExperimentConfig::canonical_json() const {
    json j;
    json d;
    d["kind"] = dataset.kind;
    if (dataset.kind == "synthetic") {
        d["spec"] = dataset.synthetic.canonical();
    } else {
        d["train_images"] = dataset.train_images;
        d["train_labels"] = dataset.train_labels;
        d["test_images"] = dataset.test_images;
        d["test_labels"] = dataset.test_labels;
        d["classes"] = dataset.classes;
    }
    j["dataset"] = d;
    j["model"] = model;
    j["criterion"] = criterion_name(criterion);
    j["material_mode"] = material_mode_name(mode);
    j["material_budget"] = material_budget;
    j["sparsities"] = sparsities;
    j["sigma"] = sigma;
    j["sigma_mode"] = sigma_mode == SigmaMode::Fixed ? "fixed" : "endpoints";
    j["seeds"] = seeds;
    j["schedule"] = schedule_to_json(schedule);
    j["ref_schedule"] = schedule_to_json(ref_schedule);
    j["ref_accuracy_floor"] = ref_accuracy_floor;
    json e;
    e["slic_scales"] = extract.slic_scales;
    e["slic_compactness"] = extract.slic_compactness;
    e["clusters_per_class"] = extract.clusters_per_class;
    e["min_cluster_population"] = extract.min_cluster_population;
    e["top_concepts"] = extract.top_concepts;
    e["random_counterexamples"] = extract.random_counterexamples;
    e["images_per_class"] = extract.images_per_class;
    e["min_segment_px"] = extract.min_segment_px;
    e["dedup_overlap"] = extract.dedup_overlap;
    e["seed"] = extract.seed;
    j["extract"] = e;
    j["score_batch_cap"] = score_batch_cap;
    j["grasp_temperature"] = grasp_temperature;
    return j.dump();
}

std::string ExperimentConfig::hash() const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char ch : canonical_json()) {
        h ^= (unsigned char)ch;
        h *= 0x100000001B3ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
    return buf;
}

bool RunReport::all_ok() const {
    for (const auto& c : cells)
        if (!c.ok) return false;
    return !cells.empty();
}

void prepare_data(const ExperimentConfig& cfg, PipelineContext& ctx) {
    if (cfg.dataset.kind == "synthetic") {
        ctx.shapes = generate_shapes(cfg.dataset.synthetic);
        ctx.train = ctx.shapes.train;
        ctx.test = ctx.shapes.test;
    } else {
        ctx.train = load_idx_dataset(cfg.dataset.train_images, cfg.dataset.train_labels,
                                     cfg.dataset.classes, "train");
        ctx.test = load_idx_dataset(cfg.dataset.test_images, cfg.dataset.test_labels,
                                    cfg.dataset.classes, "test");
        ctx.test.channel_mean = ctx.train.channel_mean;
    }
    ctx.net = NetworkSpec::by_name(cfg.model, ctx.train.height(), ctx.train.width(),
                                   ctx.train.channels(), ctx.train.classes);
    ctx.ref_net = ctx.net;
}

void train_reference(const ExperimentConfig& cfg, PipelineContext& ctx) {
    fs::create_directories(cfg.out);
    std::string ckpt = (fs::path(cfg.out) / "ref.ckpt").string();
    if (fs::exists(ckpt)) {
        ctx.ref_params = load_checkpoint(ckpt);
        ctx.ref_accuracy =
            test_accuracy(ctx.ref_net, ctx.ref_params, ctx.test.images, ctx.test.labels);
        return;
    }
    const std::uint64_t ref_seed = 0xF00D;
    ParameterSet params = init_params(ctx.ref_net, ref_seed);
    Mask ones = all_ones_mask(params);
    TrainSchedule sched = cfg.ref_schedule;
    int rounds = 0;
    double acc = 0.0;
    ParameterSet trained = params;
    while (true) {
        trained = finetune(ctx.ref_net, trained, ones, ctx.train, sched, ref_seed + rounds);
        acc = test_accuracy(ctx.ref_net, trained, ctx.test.images, ctx.test.labels);
        ++rounds;
        if (acc >= cfg.ref_accuracy_floor || rounds >= 3) break;
        sched.lr *= 0.5; // continue training from where we stopped
    }
    if (acc < cfg.ref_accuracy_floor)
        throw Error("train_reference: accuracy " + std::to_string(acc) + " below floor " +
                    std::to_string(cfg.ref_accuracy_floor));
    ctx.ref_params = trained;
    ctx.ref_accuracy = acc;
    save_checkpoint(ckpt, trained);
}

PatchStore get_patch_store(const ExperimentConfig& cfg, PipelineContext& ctx) {
    std::string dir = (fs::path(cfg.out) / "patches").string();
    if (fs::exists(fs::path(dir) / "meta.json")) return load_patch_store(dir);
    train_reference(cfg, ctx);
    PatchStore store =
        extract_discriminative_patches(ctx.ref_net, ctx.ref_params, ctx.train, cfg.extract);
    if (store.patches.empty()) throw Error("extract: produced no patches");
    save_patch_store(dir, store);
    return store;
}

PatchStore get_stitched_store(const ExperimentConfig& cfg, PipelineContext& ctx) {
    std::string dir = (fs::path(cfg.out) / "stitched").string();
    if (fs::exists(fs::path(dir) / "meta.json")) return load_patch_store(dir);
    PatchStore source = get_patch_store(cfg, ctx);
    StitchConfig sc;
    sc.sigma = cfg.sigma;
    sc.mode = cfg.sigma_mode;
    sc.per_class_count = std::max(1, cfg.material_budget / ctx.train.classes);
    sc.seed = Rng::derive(cfg.extract.seed, 0x57177);
    PatchStore stitched = build_stitch_set(source, sc);
    save_patch_store(dir, stitched);
    return stitched;
}

namespace {

LabeledBatch batch_from_patches(const std::vector<const DiscriminativePatch*>& picks) {
    int n = (int)picks.size();
    const Tensor& first = picks[0]->image;
    LabeledBatch b;
    b.images = Tensor({n, first.shape[0], first.shape[1], first.shape[2]});
    b.labels.resize(n);
    std::size_t per = first.numel();
    for (int i = 0; i < n; ++i) {
        std::copy(picks[i]->image.data.begin(), picks[i]->image.data.end(),
                  b.images.data.begin() + (std::size_t)i * per);
        b.labels[i] = picks[i]->label;
    }
    return b;
}

// Per class: concepts in descending TCAV, round-robin, one random unused
// segment per visit, pools refilling, until the per-class quota is met.
LabeledBatch sample_dop_materials(const PatchStore& store, int budget, std::uint64_t seed) {
    int per_class = std::max(1, budget / store.classes);
    Rng rng(Rng::derive(seed, 0xD0B));
    std::vector<const DiscriminativePatch*> picks;
    for (int k = 0; k < store.classes; ++k) {
        std::map<int, std::vector<const DiscriminativePatch*>> pools;
        for (const auto& p : store.patches)
            if (p.klass == k) pools[p.concept_idx].push_back(&p);
        if (pools.empty()) continue;
        std::vector<std::vector<const DiscriminativePatch*>> concept_list;
        for (auto& [idx, pool] : pools) concept_list.push_back(pool);
        std::vector<std::vector<const DiscriminativePatch*>> waiting = concept_list;
        int taken = 0;
        std::size_t ci = 0;
        while (taken < per_class) {
            auto& w = waiting[ci % concept_list.size()];
            if (w.empty()) w = concept_list[ci % concept_list.size()];
            int pick = rng.below_int((int)w.size());
            picks.push_back(w[pick]);
            w.erase(w.begin() + pick);
            ++taken;
            ++ci;
        }
    }
    if (picks.empty()) throw Error("materials: store yielded nothing");
    return batch_from_patches(picks);
}

LabeledBatch sample_less_patch(const PatchStore& store, std::uint64_t seed) {
    Rng rng(Rng::derive(seed, 0x1E55));
    std::vector<const DiscriminativePatch*> picks;
    for (int k = 0; k < store.classes; ++k) {
        std::vector<const DiscriminativePatch*> pool;
        for (const auto& p : store.patches)
            if (p.klass == k) pool.push_back(&p);
        if (pool.empty()) continue;
        picks.push_back(pool[rng.below_int((int)pool.size())]);
    }
    if (picks.empty()) throw Error("materials: store yielded nothing");
    return batch_from_patches(picks);
}

} // namespace

LabeledBatch prepare_materials(const ExperimentConfig& cfg, PipelineContext& ctx,
                               std::uint64_t seed) {
    std::uint64_t mseed = Rng::derive(seed, 0x3A7E);
    LabeledBatch batch;
    bool augment_materials = cfg.schedule.augment;
    switch (cfg.mode) {
        case MaterialMode::RandomImage:
            batch = sample_minibatch(ctx.train, cfg.material_budget, mseed, /*stratified=*/true);
            break;
        case MaterialMode::Dop:
            batch = sample_dop_materials(get_patch_store(cfg, ctx), cfg.material_budget, mseed);
            break;
        case MaterialMode::Stitch: {
            PatchStore st = get_stitched_store(cfg, ctx);
            std::vector<const DiscriminativePatch*> all;
            for (const auto& p : st.patches) all.push_back(&p);
            batch = batch_from_patches(all);
            break;
        }
        case MaterialMode::AllOne: {
            LabeledBatch ref =
                sample_minibatch(ctx.train, cfg.material_budget, mseed, /*stratified=*/true);
            batch = all_one_batch(ref.images.shape, ref.labels);
            augment_materials = false; // crop padding would break the all-one premise
            break;
        }
        case MaterialMode::RandomSegment: {
            PatchStore st = random_segment_store(ctx.train, cfg.material_budget, mseed, cfg.extract);
            std::vector<const DiscriminativePatch*> all;
            for (const auto& p : st.patches) all.push_back(&p);
            batch = batch_from_patches(all);
            break;
        }
        case MaterialMode::LessPatch:
            batch = sample_less_patch(get_patch_store(cfg, ctx), mseed);
            break;
    }
    if (augment_materials) {
        Rng arng(Rng::derive(seed, 0xA06));
        batch = augment(batch, arng);
    }
    return batch;
}

ScoreMap score_materials(const ExperimentConfig& cfg, const NetworkSpec& net,
                         const ParameterSet& theta, const LabeledBatch& materials) {
    int n = materials.size();
    int cap = cfg.score_batch_cap > 0 ? cfg.score_batch_cap : n;
    std::size_t per = materials.images.numel() / n;
    ScoreMap total;
    bool first = true;
    for (int start = 0; start < n; start += cap) {
        int m = std::min(cap, n - start);
        LabeledBatch chunk;
        std::vector<int> s = materials.images.shape;
        s[0] = m;
        chunk.images = Tensor(s);
        std::copy(materials.images.data.begin() + (std::size_t)start * per,
                  materials.images.data.begin() + (std::size_t)(start + m) * per,
                  chunk.images.data.begin());
        chunk.labels.assign(materials.labels.begin() + start, materials.labels.begin() + start + m);
        ScoreMap sm = cfg.criterion == Criterion::Snip ? snip_scores(net, theta, chunk)
                                                       : grasp_scores(net, theta, chunk, cfg.grasp_temperature);
        total = first ? sm : accumulate_scores(total, sm);
        first = false;
    }
    return total;
}

namespace {

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

json cell_to_json(const CellResult& c) {
    json j;
    j["sparsity"] = c.sparsity;
    j["seed"] = c.seed;
    j["ok"] = c.ok;
    j["accuracy"] = fmt_double(c.accuracy);
    j["collapsed_layers"] = c.collapsed_layers;
    j["threshold"] = fmt_double(c.threshold);
    if (!c.ok) j["error"] = c.error;
    return j;
}

CellResult cell_from_json(const json& j) {
    CellResult c;
    c.sparsity = j.at("sparsity").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.ok = j.at("ok").get<bool>();
    c.accuracy = std::stod(j.at("accuracy").get<std::string>());
    c.collapsed_layers = j.at("collapsed_layers").get<int>();
    c.threshold = std::stod(j.at("threshold").get<std::string>());
    if (j.contains("error")) c.error = j["error"].get<std::string>();
    return c;
}

} // namespace

RunReport run_pipeline(const ExperimentConfig& cfg) {
    PipelineContext ctx;
    prepare_data(cfg, ctx);
    fs::create_directories(cfg.out);

    RunReport report;
    report.config_hash = cfg.hash();
    report.dataset_id = ctx.train.provenance;
    report.mode = material_mode_name(cfg.mode);
    report.criterion = criterion_name(cfg.criterion);
    report.model = cfg.model;

    // resume: previously completed cells are kept as-is
    std::map<std::pair<std::string, std::uint64_t>, CellResult> done;
    std::string cells_path = (fs::path(cfg.out) / "cells.jsonl").string();
    if (fs::exists(cells_path)) {
        std::ifstream f(cells_path);
        std::string line;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            json j = json::parse(line);
            if (j.value("config_hash", "") != report.config_hash) continue;
            CellResult c = cell_from_json(j);
            if (c.ok) done[{fmt_double(c.sparsity), c.seed}] = c;
        }
    }
    std::ofstream cells_out(cells_path, std::ios::app);

    for (std::uint64_t seed : cfg.seeds) {
        ParameterSet theta;
        ScoreMap scores;
        bool seed_prepared = false;
        std::string seed_error;
        for (double sp : cfg.sparsities) {
            auto key = std::make_pair(fmt_double(sp), seed);
            if (auto it = done.find(key); it != done.end()) {
                report.cells.push_back(it->second);
                continue;
            }
            CellResult cell;
            cell.sparsity = sp;
            cell.seed = seed;
            auto t0 = std::chrono::steady_clock::now();
            try {
                if (!seed_prepared) {
                    if (!seed_error.empty()) throw Error(seed_error);
                    try {
                        theta = init_params(ctx.net, seed);
                        LabeledBatch materials = prepare_materials(cfg, ctx, seed);
                        scores = score_materials(cfg, ctx.net, theta, materials);
                        seed_prepared = true;
                    } catch (const std::exception& e) {
                        seed_error = e.what();
                        throw;
                    }
                }
                MaskResult mr = top_kappa_mask(scores, SparsityTarget::from_sparsity(sp));
                LayerStatsReport stats = layer_stats(mr.mask, ctx.net);
                ParameterSet trained =
                    finetune(ctx.net, theta, mr.mask, ctx.train, cfg.schedule, seed);
                cell.accuracy =
                    test_accuracy(ctx.net, trained, ctx.test.images, ctx.test.labels);
                cell.collapsed_layers = stats.collapsed_count;
                cell.threshold = mr.threshold;
                cell.ok = true;
            } catch (const std::exception& e) {
                cell.ok = false;
                cell.error = e.what();
            }
            cell.seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            json j = cell_to_json(cell);
            j["config_hash"] = report.config_hash;
            cells_out << j.dump() << "\n";
            cells_out.flush();
            report.cells.push_back(cell);
        }
    }
    std::stable_sort(report.cells.begin(), report.cells.end(),
                     [](const CellResult& a, const CellResult& b) {
                         if (a.sparsity != b.sparsity) return a.sparsity < b.sparsity;
                         return a.seed < b.seed;
                     });
    write_report(report, cfg.out);
    return report;
}

void write_report(const RunReport& report, const std::string& dir) {
    fs::create_directories(dir);
    json j;
    j["config_hash"] = report.config_hash;
    j["dataset_id"] = report.dataset_id;
    j["mode"] = report.mode;
    j["criterion"] = report.criterion;
    j["model"] = report.model;
    j["dense_baseline"] = report.dense_baseline;
    json rows = json::array();
    for (const auto& c : report.cells) rows.push_back(cell_to_json(c));
    j["cells"] = rows;
    std::ofstream f(fs::path(dir) / "report.json");
    f << j.dump(2) << "\n";

    std::ofstream csv(fs::path(dir) / "report.csv");
    csv << "mode,criterion,sparsity,seed,accuracy,collapsed_layers,ok,config_hash\n";
    for (const auto& c : report.cells)
        csv << report.mode << "," << report.criterion << "," << fmt_double(c.sparsity) << ","
            << c.seed << "," << fmt_double(c.accuracy) << "," << c.collapsed_layers << ","
            << (c.ok ? 1 : 0) << "," << report.config_hash << "\n";
}

RunReport load_report(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("load_report: cannot open " + path);
    json j = json::parse(f);
    RunReport r;
    r.config_hash = j.at("config_hash").get<std::string>();
    r.dataset_id = j.at("dataset_id").get<std::string>();
    r.mode = j.at("mode").get<std::string>();
    r.criterion = j.at("criterion").get<std::string>();
    r.model = j.value("model", "");
    r.dense_baseline = j.value("dense_baseline", -1.0);
    for (const auto& c : j.at("cells")) r.cells.push_back(cell_from_json(c));
    return r;
}

std::vector<AggregateRow> aggregate(const std::vector<RunReport>& reports) {
    if (reports.empty()) throw Error("aggregate: no reports");
    const std::string& ds = reports[0].dataset_id;
    for (const auto& r : reports)
        if (r.dataset_id != ds)
            throw Error("aggregate: reports mix datasets (" + ds + " vs " + r.dataset_id + ")");
    std::map<std::tuple<std::string, std::string, double>, std::vector<double>> groups;
    for (const auto& r : reports)
        for (const auto& c : r.cells)
            if (c.ok) groups[{r.mode, r.criterion, c.sparsity}].push_back(c.accuracy);
    std::vector<AggregateRow> rows;
    for (const auto& [key, accs] : groups) {
        AggregateRow row;
        row.mode = std::get<0>(key);
        row.criterion = std::get<1>(key);
        row.sparsity = std::get<2>(key);
        row.n_seeds = (int)accs.size();
        double mean = 0.0;
        for (double a : accs) mean += a;
        mean /= accs.size();
        double var = 0.0;
        for (double a : accs) var += (a - mean) * (a - mean);
        row.mean_acc = mean;
        row.std_acc = accs.size() > 1 ? std::sqrt(var / (accs.size() - 1)) : 0.0;
        rows.push_back(row);
    }
    return rows;
}

namespace {

void write_svg_plot(const std::string& path, const std::string& title,
                    const std::vector<AggregateRow>& rows) {
    // series keyed by mode
    std::map<std::string, std::vector<std::pair<double, double>>> series;
    double ymin = 1.0, ymax = 0.0;
    for (const auto& r : rows) {
        series[r.mode].push_back({r.sparsity, r.mean_acc});
        ymin = std::min(ymin, r.mean_acc);
        ymax = std::max(ymax, r.mean_acc);
    }
    if (series.empty()) return;
    ymin = std::max(0.0, ymin - 0.05);
    ymax = std::min(1.0, ymax + 0.05);
    if (ymax - ymin < 0.1) ymax = std::min(1.0, ymin + 0.1);

    const int W = 640, H = 480, ML = 60, MR = 20, MT = 40, MB = 50;
    auto px = [&](double sp) { return ML + (W - ML - MR) * sp; };
    auto py = [&](double acc) { return H - MB - (H - MT - MB) * (acc - ymin) / (ymax - ymin); };
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

    std::ofstream f(path);
    f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
    f << "<rect width='100%' height='100%' fill='white'/>\n";
    f << "<text x='" << W / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title
      << "</text>\n";
    f << "<line x1='" << ML << "' y1='" << H - MB << "' x2='" << W - MR << "' y2='" << H - MB
      << "' stroke='black'/>\n";
    f << "<line x1='" << ML << "' y1='" << MT << "' x2='" << ML << "' y2='" << H - MB
      << "' stroke='black'/>\n";
    for (int i = 0; i <= 5; ++i) {
        double acc = ymin + (ymax - ymin) * i / 5;
        f << "<text x='" << ML - 8 << "' y='" << py(acc) + 4
          << "' text-anchor='end' font-size='11'>" << (int)std::lround(acc * 100) << "%</text>\n";
    }
    for (int s = 0; s <= 100; s += 20)
        f << "<text x='" << px(s / 100.0) << "' y='" << H - MB + 18
          << "' text-anchor='middle' font-size='11'>" << s << "%</text>\n";
    f << "<text x='" << (W / 2) << "' y='" << H - 12
      << "' text-anchor='middle' font-size='12'>sparsity</text>\n";

    int ci = 0;
    for (const auto& [mode, pts_raw] : series) {
        auto pts = pts_raw;
        std::sort(pts.begin(), pts.end());
        const char* col = colors[ci % 6];
        f << "<polyline fill='none' stroke='" << col << "' stroke-width='2' points='";
        for (auto [sp, acc] : pts) f << px(sp) << "," << py(acc) << " ";
        f << "'/>\n";
        for (auto [sp, acc] : pts)
            f << "<circle cx='" << px(sp) << "' cy='" << py(acc) << "' r='3' fill='" << col
              << "'/>\n";
        f << "<text x='" << W - MR - 8 << "' y='" << MT + 16 * ci + 12
          << "' text-anchor='end' font-size='12' fill='" << col << "'>" << mode << "</text>\n";
        ++ci;
    }
    f << "</svg>\n";
}

} // namespace

void compare_runs(const std::vector<RunReport>& reports, const std::string& out_dir) {
    std::vector<AggregateRow> rows = aggregate(reports);
    fs::create_directories(out_dir);
    std::ofstream csv(fs::path(out_dir) / "comparison.csv");
    csv << "mode,criterion,sparsity,mean_acc,std_acc,n_seeds\n";
    for (const auto& r : rows)
        csv << r.mode << "," << r.criterion << "," << fmt_double(r.sparsity) << ","
            << fmt_double(r.mean_acc) << "," << fmt_double(r.std_acc) << "," << r.n_seeds << "\n";

    std::set<std::string> criteria;
    for (const auto& r : rows) criteria.insert(r.criterion);
    for (const auto& crit : criteria) {
        std::vector<AggregateRow> sub;
        for (const auto& r : rows)
            if (r.criterion == crit) sub.push_back(r);
        write_svg_plot((fs::path(out_dir) / ("accuracy_" + crit + ".svg")).string(),
                       "test accuracy vs sparsity (" + crit + ")", sub);
    }
}

} // namespace plab
