#include "qsteer/neural.hpp"

#include <cmath>

#include "qsteer/rng.hpp"

namespace qsteer::nn {

Mlp init_mlp(const std::vector<int>& widths, std::uint64_t seed,
             OutputActivation out_act) {
  require(widths.size() >= 2, "need at least input and output widths");
  for (int w : widths) require(w >= 1, "layer width must be positive");
  Rng rng(derive_seed(seed, 0x6d6c70ULL));
  Mlp net;
  net.out_act = out_act;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    Layer layer;
    const int fan_in = widths[l], fan_out = widths[l + 1];
    const double bound = std::sqrt(3.0 / fan_in);
    layer.w.resize(fan_out, fan_in);
    for (int i = 0; i < fan_out; ++i)
      for (int j = 0; j < fan_in; ++j)
        layer.w(i, j) = rng.uniform(-bound, bound);
    layer.b = VectorXd::Zero(fan_out);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

namespace {

MatrixXd softmax_rows(const MatrixXd& z) {
  MatrixXd y = z;
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    VectorXd row = y.row(r);
    const double m = row.maxCoeff();
    row = (row.array() - m).exp();
    y.row(r) = row / row.sum();
  }
  return y;
}

}  // namespace

MatrixXd mlp_forward(const Mlp& net, const MatrixXd& x, ForwardCache* cache) {
  require(x.cols() == net.in_dim(), "input width mismatch");
  if (cache) {
    cache->input = x;
    cache->post.clear();
  }
  MatrixXd h = x;
  const std::size_t n = net.layers.size();
  for (std::size_t l = 0; l < n; ++l) {
    MatrixXd z = (h * net.layers[l].w.transpose()).rowwise() +
                 net.layers[l].b.transpose();
    if (l + 1 < n)
      h = z.array().tanh();
    else
      h = (net.out_act == OutputActivation::Softmax) ? softmax_rows(z) : z;
    if (cache) cache->post.push_back(h);
  }
  return h;
}

VectorXd mlp_forward_one(const Mlp& net, const VectorXd& x) {
  return mlp_forward(net, x.transpose()).row(0);
}

void Gradients::set_zero() {
  for (auto& l : layers) {
    l.w.setZero();
    l.b.setZero();
  }
}

Gradients zero_like(const Mlp& net) {
  Gradients g;
  for (const auto& l : net.layers)
    g.layers.push_back({MatrixXd::Zero(l.w.rows(), l.w.cols()),
                        VectorXd::Zero(l.b.size())});
  return g;
}

namespace {

MatrixXd backward_impl(const Mlp& net, const ForwardCache& cache,
                       MatrixXd delta, Gradients& g) {
  // delta on entry: dL/dz for the last layer's pre-activation.
  for (int l = static_cast<int>(net.layers.size()) - 1; l >= 0; --l) {
    const MatrixXd& below = (l == 0) ? cache.input : cache.post[l - 1];
    g.layers[l].w.noalias() += delta.transpose() * below;
    g.layers[l].b += delta.colwise().sum().transpose();
    if (l == 0) return delta * net.layers[l].w;
    delta = (delta * net.layers[l].w).array() *
            (1.0 - cache.post[l - 1].array().square());
  }
  return {};
}

}  // namespace

MatrixXd mlp_backward(const Mlp& net, const ForwardCache& cache,
                      const MatrixXd& output_grad, Gradients& g) {
  require(cache.post.size() == net.layers.size(), "cache/network mismatch");
  require(g.layers.size() == net.layers.size(), "gradient shape mismatch");
  MatrixXd delta;
  if (net.out_act == OutputActivation::Softmax) {
    // dz_j = y_j * (dy_j - sum_k dy_k y_k), row-wise
    const MatrixXd& y = cache.post.back();
    VectorXd dot = (output_grad.array() * y.array()).rowwise().sum();
    delta = y.array() * (output_grad.colwise() - dot).array();
  } else {
    delta = output_grad;
  }
  return backward_impl(net, cache, std::move(delta), g);
}

MatrixXd mlp_backward_preact(const Mlp& net, const ForwardCache& cache,
                             const MatrixXd& preact_grad, Gradients& g) {
  require(cache.post.size() == net.layers.size(), "cache/network mismatch");
  require(g.layers.size() == net.layers.size(), "gradient shape mismatch");
  return backward_impl(net, cache, preact_grad, g);
}

double global_grad_norm(const std::vector<const Gradients*>& gs) {
  double sq = 0.0;
  for (const auto* g : gs)
    for (const auto& l : g->layers) sq += l.w.squaredNorm() + l.b.squaredNorm();
  return std::sqrt(sq);
}

double clip_gradient_norm(const std::vector<Gradients*>& gs, double max_norm) {
  require(max_norm > 0.0, "max_norm must be positive");
  std::vector<const Gradients*> view(gs.begin(), gs.end());
  const double norm = global_grad_norm(view);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto* g : gs)
      for (auto& l : g->layers) {
        l.w *= s;
        l.b *= s;
      }
  }
  return norm;
}

AdamState adam_init(const Mlp& net) {
  AdamState st;
  for (const auto& l : net.layers) {
    st.m.push_back({MatrixXd::Zero(l.w.rows(), l.w.cols()),
                    VectorXd::Zero(l.b.size())});
    st.v.push_back({MatrixXd::Zero(l.w.rows(), l.w.cols()),
                    VectorXd::Zero(l.b.size())});
  }
  return st;
}

void adam_step(Mlp& net, const Gradients& g, AdamState& st, double lr,
               double beta1, double beta2, double eps) {
  require(g.layers.size() == net.layers.size(), "gradient shape mismatch");
  require(st.m.size() == net.layers.size(), "optimizer state mismatch");
  st.t += 1;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(st.t));
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto& m = st.m[l];
    auto& v = st.v[l];
    const auto& gl = g.layers[l];
    m.w = beta1 * m.w + (1.0 - beta1) * gl.w;
    m.b = beta1 * m.b + (1.0 - beta1) * gl.b;
    v.w = beta2 * v.w.array().matrix() +
          (1.0 - beta2) * gl.w.array().square().matrix();
    v.b = beta2 * v.b.array().matrix() +
          (1.0 - beta2) * gl.b.array().square().matrix();
    net.layers[l].w.array() -=
        lr * (m.w.array() / c1) / ((v.w.array() / c2).sqrt() + eps);
    net.layers[l].b.array() -=
        lr * (m.b.array() / c1) / ((v.b.array() / c2).sqrt() + eps);
  }
}

}  // namespace qsteer::nn
