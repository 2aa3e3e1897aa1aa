#pragma once

#include "plab/tensor.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace plab {

enum class LayerKind { Dense, Conv2d, Relu, MaxPool, Flatten };

const char* layer_kind_name(LayerKind k);

struct LayerDesc {
    LayerKind kind;
    // Dense
    int in = 0, out = 0;
    // Conv2d
    int in_c = 0, out_c = 0, ksize = 0, stride = 1, pad = 0;
    // MaxPool
    int pool = 2, pool_stride = 2;

    bool has_params() const { return kind == LayerKind::Dense || kind == LayerKind::Conv2d; }
};

// Shape of one layer's activation: either spatial (h,w,c) or flat (d).
struct ActShape {
    bool spatial = false;
    int h = 0, w = 0, c = 0;
    int d = 0;
    std::size_t numel() const {
        return spatial ? static_cast<std::size_t>(h) * w * c : static_cast<std::size_t>(d);
    }
};

struct NetworkSpec {
    std::string name;
    int in_h = 0, in_w = 0, in_c = 0;
    int classes = 0;
    std::vector<LayerDesc> layers;
    // index of the layer whose output is the bottleneck activation space
    int bottleneck = -1;

    // Activation shapes; entry 0 is the input, entry i+1 is layer i's output.
    // Throws on incompatible consecutive layers, naming the layer.
    std::vector<ActShape> act_shapes() const;
    void validate() const;

    // zoo
    static NetworkSpec mlp(int in_dim, int classes, std::vector<int> hidden = {300, 100});
    static NetworkSpec cnn(int in_h, int in_w, int in_c, int classes,
                           int c1 = 16, int c2 = 32, int fc = 64);
    static NetworkSpec by_name(const std::string& name, int in_h, int in_w, int in_c, int classes);
};

struct LayerParams {
    Tensor w; // Dense: (in,out); Conv2d: (out_c,k,k,in_c)
    Tensor b; // (out) / (out_c)
    bool present = false;
};

// Per-layer parameter container; the flat view (weights only) defines the
// prunable index space used by scores and masks.
struct ParameterSet {
    std::vector<LayerParams> layers;

    std::size_t weight_count() const;       // prunable entries
    std::size_t total_count() const;        // weights + biases
    std::vector<double> flatten_weights() const;
    std::vector<double> flatten_all() const; // per layer: w then b
    void unflatten_all(const std::vector<double>& flat);
    double max_abs() const;

    ParameterSet zeros_like() const;
};

using GradientSet = ParameterSet;

struct Mask {
    // aligned with ParameterSet::layers; entries only for layers with params
    std::vector<Tensor> m;
    std::size_t kappa = 0;

    std::size_t ones() const;
};

ParameterSet init_params(const NetworkSpec& spec, std::uint64_t seed);
ParameterSet zero_params(const NetworkSpec& spec);
ParameterSet apply_mask(const ParameterSet& params, const Mask& mask);
Mask all_ones_mask(const ParameterSet& params);

// "PLAB" container: header + layer table + raw little-endian f64 payload.
void save_checkpoint(const std::string& path, const ParameterSet& params);
ParameterSet load_checkpoint(const std::string& path);
void save_mask(const std::string& path, const Mask& mask);
Mask load_mask(const std::string& path);

} // namespace plab
