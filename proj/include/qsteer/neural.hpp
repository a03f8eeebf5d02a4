#pragma once

#include <cstdint>
#include <vector>

#include "qsteer/common.hpp"

// Hand-rolled dense networks on 64-bit floats. Hidden activations are tanh;
// the output layer is linear or row-wise softmax. All forward/backward math
// is batched: rows are samples.

namespace qsteer::nn {

struct Layer {
  MatrixXd w;  // (out x in)
  VectorXd b;  // (out)
};

enum class OutputActivation { Identity, Softmax };

struct Mlp {
  std::vector<Layer> layers;
  OutputActivation out_act = OutputActivation::Identity;

  int in_dim() const { return static_cast<int>(layers.front().w.cols()); }
  int out_dim() const { return static_cast<int>(layers.back().w.rows()); }
};

// widths = {in, hidden..., out}; weights ~ U(-sqrt(3/fan_in), sqrt(3/fan_in))
// (unit variance scale 1/sqrt(fan_in)), biases zero. Deterministic in seed.
Mlp init_mlp(const std::vector<int>& widths, std::uint64_t seed,
             OutputActivation out_act = OutputActivation::Identity);

struct ForwardCache {
  MatrixXd input;
  std::vector<MatrixXd> post;  // activations after each layer; back() = output
};

// x is (N x in). Returns (N x out). Pass a cache to enable backward.
MatrixXd mlp_forward(const Mlp& net, const MatrixXd& x,
                     ForwardCache* cache = nullptr);
VectorXd mlp_forward_one(const Mlp& net, const VectorXd& x);

// Same shapes as the network's layers; accumulated across calls.
struct Gradients {
  std::vector<Layer> layers;
  void set_zero();
};
Gradients zero_like(const Mlp& net);

// output_grad = dL/dy with y the (post-activation) network output.
// Accumulates parameter gradients into g and returns dL/dx.
MatrixXd mlp_backward(const Mlp& net, const ForwardCache& cache,
                      const MatrixXd& output_grad, Gradients& g);

// Variant taking dL/dz for the final pre-activation z (skips the output
// activation Jacobian; used for fused softmax cross-entropy).
MatrixXd mlp_backward_preact(const Mlp& net, const ForwardCache& cache,
                             const MatrixXd& preact_grad, Gradients& g);

// Joint L2 norm across several gradient sets.
double global_grad_norm(const std::vector<const Gradients*>& gs);

// Scales gradients in place so the joint norm is at most max_norm.
// Returns the pre-clip norm. No-op when already within bound.
double clip_gradient_norm(const std::vector<Gradients*>& gs, double max_norm);

struct AdamState {
  std::vector<Layer> m, v;
  long t = 0;
};
AdamState adam_init(const Mlp& net);

// Descent step p -= lr * mhat / (sqrt(vhat) + eps) with bias correction.
void adam_step(Mlp& net, const Gradients& g, AdamState& st, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

}  // namespace qsteer::nn
