#include "plab/network.hpp"

#include "plab/rng.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace plab {

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Dense: return "dense";
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::Relu: return "relu";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::Flatten: return "flatten";
    }
    return "?";
}

static Error layer_error(int i, const LayerDesc& l, const std::string& msg) {
    return Error("layer " + std::to_string(i) + " (" + layer_kind_name(l.kind) + "): " + msg);
}

std::vector<ActShape> NetworkSpec::act_shapes() const {
    std::vector<ActShape> out;
    ActShape cur;
    if (in_h > 0 && in_w > 0) {
        cur.spatial = true;
        cur.h = in_h;
        cur.w = in_w;
        cur.c = in_c;
    } else {
        cur.spatial = false;
        cur.d = in_c; // flat input width stored in in_c
    }
    out.push_back(cur);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerDesc& l = layers[i];
        switch (l.kind) {
            case LayerKind::Dense: {
                int d = cur.spatial ? cur.h * cur.w * cur.c : cur.d;
                if (!cur.spatial && d != l.in)
                    throw layer_error((int)i, l, "expects fan-in " + std::to_string(l.in) +
                                                     ", got " + std::to_string(d));
                if (cur.spatial)
                    throw layer_error((int)i, l, "spatial input; insert flatten first");
                cur = ActShape{false, 0, 0, 0, l.out};
                break;
            }
            case LayerKind::Conv2d: {
                if (!cur.spatial) throw layer_error((int)i, l, "needs spatial input");
                if (cur.c != l.in_c)
                    throw layer_error((int)i, l, "expects " + std::to_string(l.in_c) +
                                                     " channels, got " + std::to_string(cur.c));
                int oh = (cur.h + 2 * l.pad - l.ksize) / l.stride + 1;
                int ow = (cur.w + 2 * l.pad - l.ksize) / l.stride + 1;
                if (oh <= 0 || ow <= 0) throw layer_error((int)i, l, "output collapses to zero");
                cur = ActShape{true, oh, ow, l.out_c, 0};
                break;
            }
            case LayerKind::Relu:
                break;
            case LayerKind::MaxPool: {
                if (!cur.spatial) throw layer_error((int)i, l, "needs spatial input");
                int oh = (cur.h - l.pool) / l.pool_stride + 1;
                int ow = (cur.w - l.pool) / l.pool_stride + 1;
                if (oh <= 0 || ow <= 0) throw layer_error((int)i, l, "output collapses to zero");
                cur = ActShape{true, oh, ow, cur.c, 0};
                break;
            }
            case LayerKind::Flatten:
                if (cur.spatial) cur = ActShape{false, 0, 0, 0, cur.h * cur.w * cur.c};
                break;
        }
        out.push_back(cur);
    }
    return out;
}

void NetworkSpec::validate() const {
    auto shapes = act_shapes();
    const ActShape& last = shapes.back();
    if (last.spatial || last.d != classes)
        throw Error("network output width " + std::to_string(last.spatial ? -1 : last.d) +
                    " does not match class count " + std::to_string(classes));
    if (bottleneck < 0 || bottleneck >= (int)layers.size())
        throw Error("bottleneck layer id out of range");
}

NetworkSpec NetworkSpec::mlp(int in_dim, int classes, std::vector<int> hidden) {
    NetworkSpec s;
    s.name = "mlp";
    s.in_h = s.in_w = 0;
    s.in_c = in_dim;
    s.classes = classes;
    int d = in_dim;
    for (int h : hidden) {
        s.layers.push_back({LayerKind::Dense, d, h});
        s.layers.push_back({LayerKind::Relu});
        d = h;
    }
    s.layers.push_back({LayerKind::Dense, d, classes});
    // penultimate activation (post-relu of the last hidden layer); with no
    // hidden layers the logits double as the bottleneck
    s.bottleneck = std::max(0, (int)s.layers.size() - 2);
    s.validate();
    return s;
}

NetworkSpec NetworkSpec::cnn(int in_h, int in_w, int in_c, int classes, int c1, int c2, int fc) {
    NetworkSpec s;
    s.name = "cnn";
    s.in_h = in_h;
    s.in_w = in_w;
    s.in_c = in_c;
    s.classes = classes;
    LayerDesc conv1{LayerKind::Conv2d};
    conv1.in_c = in_c;
    conv1.out_c = c1;
    conv1.ksize = 3;
    conv1.stride = 1;
    conv1.pad = 1;
    s.layers.push_back(conv1);
    s.layers.push_back({LayerKind::Relu});
    s.layers.push_back({LayerKind::MaxPool});
    LayerDesc conv2{LayerKind::Conv2d};
    conv2.in_c = c1;
    conv2.out_c = c2;
    conv2.ksize = 3;
    conv2.stride = 1;
    conv2.pad = 1;
    s.layers.push_back(conv2);
    s.layers.push_back({LayerKind::Relu});
    s.layers.push_back({LayerKind::MaxPool});
    s.layers.push_back({LayerKind::Flatten});
    int hh = in_h / 4, ww = in_w / 4;
    s.layers.push_back({LayerKind::Dense, hh * ww * c2, fc});
    s.layers.push_back({LayerKind::Relu});
    s.layers.push_back({LayerKind::Dense, fc, classes});
    // post-relu of the penultimate dense layer
    s.bottleneck = (int)s.layers.size() - 2;
    s.validate();
    return s;
}

NetworkSpec NetworkSpec::by_name(const std::string& name, int in_h, int in_w, int in_c,
                                 int classes) {
    if (name == "mlp") return mlp(in_h > 0 ? in_h * in_w * in_c : in_c, classes);
    if (name == "cnn") return cnn(in_h, in_w, in_c, classes);
    if (name == "cnn_tiny") return cnn(in_h, in_w, in_c, classes, 8, 16, 32);
    throw Error("unknown model name: " + name);
}

std::size_t ParameterSet::weight_count() const {
    std::size_t n = 0;
    for (const auto& l : layers)
        if (l.present) n += l.w.numel();
    return n;
}

std::size_t ParameterSet::total_count() const {
    std::size_t n = 0;
    for (const auto& l : layers)
        if (l.present) n += l.w.numel() + l.b.numel();
    return n;
}

std::vector<double> ParameterSet::flatten_weights() const {
    std::vector<double> out;
    out.reserve(weight_count());
    for (const auto& l : layers)
        if (l.present) out.insert(out.end(), l.w.data.begin(), l.w.data.end());
    return out;
}

std::vector<double> ParameterSet::flatten_all() const {
    std::vector<double> out;
    out.reserve(total_count());
    for (const auto& l : layers)
        if (l.present) {
            out.insert(out.end(), l.w.data.begin(), l.w.data.end());
            out.insert(out.end(), l.b.data.begin(), l.b.data.end());
        }
    return out;
}

void ParameterSet::unflatten_all(const std::vector<double>& flat) {
    std::size_t k = 0;
    for (auto& l : layers)
        if (l.present) {
            for (double& v : l.w.data) v = flat[k++];
            for (double& v : l.b.data) v = flat[k++];
        }
    if (k != flat.size()) throw Error("unflatten_all: size mismatch");
}

double ParameterSet::max_abs() const {
    double m = 0.0;
    for (const auto& l : layers)
        if (l.present) {
            for (double v : l.w.data) m = std::max(m, std::fabs(v));
            for (double v : l.b.data) m = std::max(m, std::fabs(v));
        }
    return m;
}

ParameterSet ParameterSet::zeros_like() const {
    ParameterSet out = *this;
    for (auto& l : out.layers)
        if (l.present) {
            std::fill(l.w.data.begin(), l.w.data.end(), 0.0);
            std::fill(l.b.data.begin(), l.b.data.end(), 0.0);
        }
    return out;
}

std::size_t Mask::ones() const {
    std::size_t n = 0;
    for (const auto& t : m)
        for (double v : t.data)
            if (v != 0.0) ++n;
    return n;
}

ParameterSet zero_params(const NetworkSpec& spec) {
    ParameterSet p;
    p.layers.resize(spec.layers.size());
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerDesc& l = spec.layers[i];
        if (!l.has_params()) continue;
        LayerParams& lp = p.layers[i];
        lp.present = true;
        if (l.kind == LayerKind::Dense) {
            lp.w = Tensor({l.in, l.out});
            lp.b = Tensor({l.out});
        } else {
            lp.w = Tensor({l.out_c, l.ksize, l.ksize, l.in_c});
            lp.b = Tensor({l.out_c});
        }
    }
    return p;
}

ParameterSet init_params(const NetworkSpec& spec, std::uint64_t seed) {
    ParameterSet p = zero_params(spec);
    Rng rng(Rng::derive(seed, 0x11171));
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerDesc& l = spec.layers[i];
        if (!l.has_params()) continue;
        int fan_in = (l.kind == LayerKind::Dense) ? l.in : l.ksize * l.ksize * l.in_c;
        double sd = std::sqrt(2.0 / fan_in);
        for (double& v : p.layers[i].w.data) v = sd * rng.normal();
        // biases stay zero
    }
    return p;
}

ParameterSet apply_mask(const ParameterSet& params, const Mask& mask) {
    if (mask.m.size() != params.layers.size()) throw Error("apply_mask: layout mismatch");
    ParameterSet out = params;
    for (std::size_t i = 0; i < out.layers.size(); ++i) {
        if (!out.layers[i].present) continue;
        const Tensor& m = mask.m[i];
        Tensor& w = out.layers[i].w;
        if (!m.same_shape(w)) throw Error("apply_mask: layout mismatch at layer " + std::to_string(i));
        for (std::size_t j = 0; j < w.numel(); ++j) w[j] = (m[j] != 0.0) ? w[j] : 0.0;
    }
    return out;
}

Mask all_ones_mask(const ParameterSet& params) {
    Mask mk;
    mk.m.resize(params.layers.size());
    for (std::size_t i = 0; i < params.layers.size(); ++i)
        if (params.layers[i].present) mk.m[i] = Tensor(params.layers[i].w.shape, 1.0);
    mk.kappa = params.weight_count();
    return mk;
}

// ---- checkpoint container ----------------------------------------------
// layout: "PLAB" | u32 version | u8 content (0=params,1=mask) | u32 nlayers |
// per layer: u8 present, [u32 wdims, dims..., u32 bdims, dims...] |
// payload: per present layer, w doubles then b doubles, little-endian.

namespace {

void put_u32(std::ofstream& f, std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }
std::uint32_t get_u32(std::ifstream& f) {
    std::uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    if (!f) throw Error("checkpoint: truncated header");
    return v;
}

void write_container(const std::string& path, const ParameterSet& p, std::uint8_t content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("checkpoint: cannot open " + path + " for writing");
    f.write("PLAB", 4);
    put_u32(f, 1u);
    f.put(static_cast<char>(content));
    put_u32(f, static_cast<std::uint32_t>(p.layers.size()));
    for (const auto& l : p.layers) {
        f.put(l.present ? 1 : 0);
        if (!l.present) continue;
        put_u32(f, static_cast<std::uint32_t>(l.w.shape.size()));
        for (int d : l.w.shape) put_u32(f, static_cast<std::uint32_t>(d));
        put_u32(f, static_cast<std::uint32_t>(l.b.shape.size()));
        for (int d : l.b.shape) put_u32(f, static_cast<std::uint32_t>(d));
    }
    for (const auto& l : p.layers) {
        if (!l.present) continue;
        f.write(reinterpret_cast<const char*>(l.w.data.data()),
                static_cast<std::streamsize>(l.w.data.size() * sizeof(double)));
        f.write(reinterpret_cast<const char*>(l.b.data.data()),
                static_cast<std::streamsize>(l.b.data.size() * sizeof(double)));
    }
    if (!f) throw Error("checkpoint: write failed for " + path);
}

ParameterSet read_container(const std::string& path, std::uint8_t expect_content) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("checkpoint: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "PLAB", 4) != 0) throw Error("checkpoint: bad magic in " + path);
    std::uint32_t version = get_u32(f);
    if (version != 1) throw Error("checkpoint: unsupported version " + std::to_string(version));
    int content = f.get();
    if (content != expect_content)
        throw Error("checkpoint: content type mismatch in " + path);
    std::uint32_t nlayers = get_u32(f);
    ParameterSet p;
    p.layers.resize(nlayers);
    for (auto& l : p.layers) {
        int present = f.get();
        if (present < 0) throw Error("checkpoint: truncated layer table");
        l.present = present != 0;
        if (!l.present) continue;
        auto read_shape = [&]() {
            std::uint32_t nd = get_u32(f);
            std::vector<int> s(nd);
            for (auto& d : s) d = static_cast<int>(get_u32(f));
            return s;
        };
        l.w = Tensor(read_shape());
        l.b = Tensor(read_shape());
    }
    for (auto& l : p.layers) {
        if (!l.present) continue;
        f.read(reinterpret_cast<char*>(l.w.data.data()),
               static_cast<std::streamsize>(l.w.data.size() * sizeof(double)));
        f.read(reinterpret_cast<char*>(l.b.data.data()),
               static_cast<std::streamsize>(l.b.data.size() * sizeof(double)));
        if (!f) throw Error("checkpoint: truncated payload in " + path);
    }
    return p;
}

} // namespace

void save_checkpoint(const std::string& path, const ParameterSet& params) {
    write_container(path, params, 0);
}

ParameterSet load_checkpoint(const std::string& path) { return read_container(path, 0); }

void save_mask(const std::string& path, const Mask& mask) {
    ParameterSet p;
    p.layers.resize(mask.m.size());
    for (std::size_t i = 0; i < mask.m.size(); ++i) {
        if (mask.m[i].numel() == 0) continue;
        p.layers[i].present = true;
        p.layers[i].w = mask.m[i];
        p.layers[i].b = Tensor({1});
    }
    write_container(path, p, 1);
}

Mask load_mask(const std::string& path) {
    ParameterSet p = read_container(path, 1);
    Mask mk;
    mk.m.resize(p.layers.size());
    for (std::size_t i = 0; i < p.layers.size(); ++i)
        if (p.layers[i].present) mk.m[i] = p.layers[i].w;
    mk.kappa = mk.ones();
    return mk;
}

} // namespace plab
