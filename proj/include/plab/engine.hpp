#pragma once

#include "plab/network.hpp"
#include "plab/tensor.hpp"

#include <functional>
#include <vector>

namespace plab {

struct LabeledBatch {
    Tensor images;           // (N,H,W,C) or (N,D)
    std::vector<int> labels; // size N

    int size() const { return images.shape.empty() ? 0 : images.shape[0]; }
};

struct ForwardCache {
    std::vector<Tensor> acts;                  // acts[0]=input, acts[i+1]=layer i output
    std::vector<std::vector<int>> pool_argmax; // per layer, flat input offsets
};

struct EvalResult {
    double loss = 0.0;
    Tensor logits; // (N, classes)
};

struct BackpropResult {
    double loss = 0.0;
    Tensor logits;
    GradientSet grads;
};

// Forward pass through all layers; returns logits (N,classes).
Tensor forward(const NetworkSpec& spec, const ParameterSet& params, const Tensor& images,
               ForwardCache* cache = nullptr);

// Mean softmax cross-entropy over the batch (log-sum-exp with max shift).
EvalResult evaluate(const NetworkSpec& spec, const ParameterSet& params, const LabeledBatch& batch);

// logit_temperature > 0 softens the loss to xent(logits / T); 0 disables.
BackpropResult backprop(const NetworkSpec& spec, const ParameterSet& params,
                        const LabeledBatch& batch, double logit_temperature = 0.0);

GradientSet gradients(const NetworkSpec& spec, const ParameterSet& params,
                      const LabeledBatch& batch, double logit_temperature = 0.0);

// Activations at the configured bottleneck layer, flattened per sample: (N,D).
Tensor bottleneck_activations(const NetworkSpec& spec, const ParameterSet& params,
                              const Tensor& images);

// Gradient of the class-k logit with respect to the bottleneck activation,
// per sample: (N,D).
Tensor logit_grad_wrt_bottleneck(const NetworkSpec& spec, const ParameterSet& params,
                                 const Tensor& images, int k);

// H·v by central finite differences of the gradient map:
//   (grad(theta + eps*v_hat) - grad(theta - eps*v_hat)) * |v| / (2 eps).
// eps < 0 selects the default 1e-4 * (1 + max|theta|). |v| = 0 gives zeros.
using FlatGradFn = std::function<std::vector<double>(const std::vector<double>&)>;
std::vector<double> hvp_fd(const FlatGradFn& grad, const std::vector<double>& theta,
                           const std::vector<double>& v, double eps = -1.0);

GradientSet hessian_vector_product(const NetworkSpec& spec, const ParameterSet& params,
                                   const LabeledBatch& batch, const GradientSet& v,
                                   double eps = -1.0, double logit_temperature = 0.0);

double test_accuracy(const NetworkSpec& spec, const ParameterSet& params,
                     const Tensor& images, const std::vector<int>& labels,
                     int chunk = 256);

} // namespace plab
