#include "qsteer/repnet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "qsteer/rng.hpp"

namespace qsteer::rep {

namespace {

constexpr int kHidden = 128;

VectorXd pair_row(const RepNet& net, const MeasurementPair& pair) {
  if (pair.first.size() != net.enc_dim)
    throw ValidationError("measurement encoding length mismatch");
  if (pair.second.size() != net.n_outcomes)
    throw ValidationError("outcome distribution length mismatch");
  validate_distribution(pair.second);
  VectorXd row(net.enc_dim + net.n_outcomes);
  row << pair.first, pair.second;
  return row;
}

double cross_entropy(const OutcomeDistribution& truth,
                     const OutcomeDistribution& predicted) {
  double ce = 0.0;
  for (int i = 0; i < truth.size(); ++i)
    if (truth[i] > 0.0) ce -= truth[i] * std::log(std::max(predicted[i], 1e-300));
  return ce;
}

// One optimizer update over a batch of records. Context rows of the whole
// batch go through the encoder as a single matrix; `seg` marks each record's
// row span. Returns the summed per-record loss.
struct BatchPlan {
  MatrixXd context_rows;
  std::vector<int> offset, length;  // per record in the batch
};

BatchPlan build_batch(const RepNet& net, const std::vector<RepRecord>& data,
                      const std::vector<int>& order, int begin, int end) {
  BatchPlan plan;
  int total = 0;
  for (int i = begin; i < end; ++i)
    total += int(data[order[i]].context.size());
  plan.context_rows.resize(total, net.encoder.in_dim());
  int at = 0;
  for (int i = begin; i < end; ++i) {
    const RepRecord& rec = data[order[i]];
    if (rec.context.empty())
      throw ValidationError("record has an empty measurement context");
    plan.offset.push_back(at);
    plan.length.push_back(int(rec.context.size()));
    for (const auto& pair : rec.context)
      plan.context_rows.row(at++) = pair_row(net, pair).transpose();
  }
  return plan;
}

TrainTrace train_loop(RepNet& net, const std::vector<RepRecord>& dataset,
                      const RepTrainOptions& opts, bool generative) {
  if (generative != (net.mode == Mode::Generative))
    throw ContractError("training routine does not match network mode");
  if (dataset.empty()) throw ValidationError("empty training dataset");
  if (opts.epochs < 1 || opts.batch_records < 1 || opts.lr <= 0.0)
    throw ValidationError("bad training options");
  if (generative)
    for (const auto& rec : dataset)
      if (rec.queries.empty())
        throw ValidationError("generative record has no query measurements");

  Rng rng(derive_seed(opts.seed, 0x72657074));
  nn::AdamState enc_adam = nn::adam_init(net.encoder);
  nn::AdamState head_adam = nn::adam_init(net.head);
  nn::Gradients g_enc = nn::zero_like(net.encoder);
  nn::Gradients g_head = nn::zero_like(net.head);

  std::vector<int> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  TrainTrace trace;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (int begin = 0; begin < int(order.size());
         begin += opts.batch_records) {
      const int end =
          std::min<int>(int(order.size()), begin + opts.batch_records);
      const int nb = end - begin;
      const BatchPlan plan = build_batch(net, dataset, order, begin, end);

      nn::ForwardCache enc_cache;
      const MatrixXd enc_out =
          nn::mlp_forward(net.encoder, plan.context_rows, &enc_cache);
      MatrixXd reps(nb, net.d);
      for (int b = 0; b < nb; ++b)
        reps.row(b) =
            enc_out.middleRows(plan.offset[b], plan.length[b]).colwise().mean();

      MatrixXd head_in(nb, net.head.in_dim());
      MatrixXd target(nb, net.head.out_dim());
      for (int b = 0; b < nb; ++b) {
        const RepRecord& rec = dataset[order[begin + b]];
        if (generative) {
          const auto& q =
              rec.queries[rng.uniform_int(int(rec.queries.size()))];
          if (q.first.size() != net.enc_dim ||
              q.second.size() != net.n_outcomes)
            throw ValidationError("query measurement shape mismatch");
          head_in.row(b) << reps.row(b), q.first.transpose();
          target.row(b) = q.second.transpose();
        } else {
          head_in.row(b) = reps.row(b);
          target(b, 0) = rec.label;
        }
      }

      nn::ForwardCache head_cache;
      const MatrixXd out = nn::mlp_forward(net.head, head_in, &head_cache);

      double batch_loss = 0.0;
      MatrixXd head_grad(nb, net.head.out_dim());
      if (generative) {
        for (int b = 0; b < nb; ++b)
          batch_loss += cross_entropy(target.row(b), out.row(b));
        head_grad = (out - target) / double(nb);  // fused softmax + CE
      } else {
        batch_loss = (out - target).squaredNorm();
        head_grad = 2.0 * (out - target) / double(nb);
      }
      epoch_loss += batch_loss;

      g_enc.set_zero();
      g_head.set_zero();
      const MatrixXd head_in_grad =
          generative
              ? nn::mlp_backward_preact(net.head, head_cache, head_grad,
                                        g_head)
              : nn::mlp_backward(net.head, head_cache, head_grad, g_head);

      // d(loss)/d(rep): first d columns of the head input gradient; spread
      // uniformly over each record's context rows (mean pooling).
      MatrixXd enc_out_grad(plan.context_rows.rows(), net.d);
      for (int b = 0; b < nb; ++b)
        enc_out_grad.middleRows(plan.offset[b], plan.length[b]) =
            (head_in_grad.row(b).head(net.d) / double(plan.length[b]))
                .replicate(plan.length[b], 1);
      nn::mlp_backward(net.encoder, enc_cache, enc_out_grad, g_enc);

      nn::clip_gradient_norm({&g_enc, &g_head}, opts.grad_clip);
      nn::adam_step(net.encoder, g_enc, enc_adam, opts.lr);
      nn::adam_step(net.head, g_head, head_adam, opts.lr);
    }
    epoch_loss /= double(dataset.size());
    if (!std::isfinite(epoch_loss))
      throw NumericError("training diverged at epoch " +
                         std::to_string(epoch));
    trace.epoch_loss.push_back(epoch_loss);
  }
  return trace;
}

}  // namespace

RepNet make_repnet(Mode mode, int enc_dim, int n_outcomes, int d,
                   std::uint64_t seed) {
  if (enc_dim < 1 || n_outcomes < 2) throw ValidationError("bad pair shape");
  if (d < 1) throw ValidationError("representation dimension must be >= 1");
  RepNet net;
  net.mode = mode;
  net.enc_dim = enc_dim;
  net.n_outcomes = n_outcomes;
  net.d = d;
  net.encoder = nn::init_mlp({enc_dim + n_outcomes, kHidden, kHidden, d},
                             derive_seed(seed, 0x656e63),
                             nn::OutputActivation::Identity);
  if (mode == Mode::Generative)
    net.head = nn::init_mlp({d + enc_dim, kHidden, kHidden, n_outcomes},
                            derive_seed(seed, 0x646563),
                            nn::OutputActivation::Softmax);
  else
    net.head = nn::init_mlp({d, kHidden, kHidden, 1},
                            derive_seed(seed, 0x70726f70),
                            nn::OutputActivation::Identity);
  return net;
}

VectorXd encode(const RepNet& net,
                const std::vector<MeasurementPair>& pairs) {
  if (pairs.empty()) throw ValidationError("encode needs at least one pair");
  MatrixXd rows(pairs.size(), net.encoder.in_dim());
  for (int i = 0; i < int(pairs.size()); ++i)
    rows.row(i) = pair_row(net, pairs[i]).transpose();
  return nn::mlp_forward(net.encoder, rows).colwise().mean().transpose();
}

OutcomeDistribution generate(const RepNet& net, const VectorXd& r,
                             const VectorXd& query) {
  if (net.mode != Mode::Generative)
    throw ContractError("generate requires a generative-mode network");
  if (r.size() != net.d) throw ValidationError("representation size mismatch");
  if (query.size() != net.enc_dim)
    throw ValidationError("query encoding size mismatch");
  VectorXd in(net.d + net.enc_dim);
  in << r, query;
  return nn::mlp_forward_one(net.head, in);
}

double predict_property(const RepNet& net, const VectorXd& r) {
  if (net.mode != Mode::Property)
    throw ContractError("predict_property requires a property-mode network");
  if (r.size() != net.d) throw ValidationError("representation size mismatch");
  return nn::mlp_forward_one(net.head, r)[0];
}

double representation_distance(const VectorXd& a, const VectorXd& b) {
  if (a.size() != b.size())
    throw ValidationError("representation dimension mismatch");
  return (a - b).norm();
}

TrainTrace train_self_supervised(RepNet& net,
                                 const std::vector<RepRecord>& dataset,
                                 const RepTrainOptions& opts) {
  return train_loop(net, dataset, opts, true);
}

TrainTrace train_supervised(RepNet& net,
                            const std::vector<RepRecord>& dataset,
                            const RepTrainOptions& opts) {
  return train_loop(net, dataset, opts, false);
}

MatrixXd pca_project(const std::vector<VectorXd>& reps) {
  if (reps.size() < 3) throw ValidationError("pca needs >= 3 points");
  const int n = int(reps.size()), d = int(reps[0].size());
  MatrixXd x(n, d);
  for (int i = 0; i < n; ++i) {
    if (reps[i].size() != d)
      throw ValidationError("representation dimension mismatch");
    x.row(i) = reps[i];
  }
  const MatrixXd centered = x.rowwise() - x.colwise().mean();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(centered.transpose() * centered /
                                             double(n));
  if (es.info() != Eigen::Success) throw NumericError("pca eigensolve failed");
  MatrixXd axes(d, 2);
  axes.col(0) = es.eigenvectors().col(d - 1);  // eigenvalues ascend
  axes.col(1) = es.eigenvectors().col(d - 2);
  for (int c = 0; c < 2; ++c) {
    int imax = 0;
    axes.col(c).cwiseAbs().maxCoeff(&imax);
    if (axes(imax, c) < 0.0) axes.col(c) = -axes.col(c);
  }
  return centered * axes;
}

VectorXd encode_pauli_window(int n_qubits, const spin::PauliWindow& window) {
  if (n_qubits < 3) throw ValidationError("need at least three qubits");
  if (window.position < 0 || window.position > n_qubits - 3)
    throw ValidationError("window position out of range");
  VectorXd enc = VectorXd::Zero(n_qubits - 2 + 9);
  enc[window.position] = 1.0;
  for (int s = 0; s < 3; ++s)
    enc[n_qubits - 2 + 3 * s + int(window.paulis[size_t(s)])] = 1.0;
  return enc;
}

VectorXd encode_homodyne(double theta) {
  VectorXd enc(2);
  enc << std::cos(2.0 * theta), std::sin(2.0 * theta);
  return enc;
}

VectorXd encode_full_basis(const std::vector<qc::Pauli>& bases) {
  if (bases.empty()) throw ValidationError("empty basis assignment");
  VectorXd enc = VectorXd::Zero(3 * bases.size());
  for (int q = 0; q < int(bases.size()); ++q)
    enc[3 * q + int(bases[size_t(q)])] = 1.0;
  return enc;
}

}  // namespace qsteer::rep
