#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "qsteer/common.hpp"
#include "qsteer/neural.hpp"
#include "qsteer/qcore.hpp"
#include "qsteer/spin_env.hpp"

// State-representation network. Each performed measurement contributes one
// (encoding, outcome-distribution) pair; the encoder maps every pair to a
// d-vector and the state representation is their mean, making the pipeline
// permutation-invariant and independent of how many measurements were taken.
//
// Two heads: a generative decoder predicting the outcome statistics of a
// queried measurement (self-supervised mode), or a scalar property head
// trained against Renyi-2 mutual-information labels (supervised mode).

namespace qsteer::rep {

enum class Mode { Generative, Property };

// (measurement encoding, outcome distribution)
using MeasurementPair = std::pair<VectorXd, OutcomeDistribution>;

struct RepNet {
  Mode mode = Mode::Generative;
  int enc_dim = 0;     // measurement-encoding length
  int n_outcomes = 0;  // outcome-distribution length
  int d = 32;          // representation dimension
  nn::Mlp encoder;     // enc_dim + n_outcomes -> 128 -> 128 -> d
  nn::Mlp head;        // generative: d + enc_dim -> ... -> n_outcomes, softmax
                       // property:   d -> ... -> 1, linear
};

RepNet make_repnet(Mode mode, int enc_dim, int n_outcomes, int d,
                   std::uint64_t seed);

// Mean over pairs of encoder(encoding ++ distribution).
VectorXd encode(const RepNet& net, const std::vector<MeasurementPair>& pairs);

// Predicted outcome distribution for a queried measurement (generative mode).
OutcomeDistribution generate(const RepNet& net, const VectorXd& r,
                             const VectorXd& query);

// Scalar property estimate (property mode).
double predict_property(const RepNet& net, const VectorXd& r);

// Plain Euclidean distance ||a - b||.
double representation_distance(const VectorXd& a, const VectorXd& b);

struct RepRecord {
  std::vector<MeasurementPair> context;
  std::vector<MeasurementPair> queries;  // generative mode only
  double label = 0.0;                    // property mode only
};

struct RepTrainOptions {
  int epochs = 200;
  int batch_records = 32;
  double lr = 1e-3;        // Adam step size
  double grad_clip = 5.0;  // joint encoder+head gradient norm bound
  std::uint64_t seed = 1;
};

struct TrainTrace {
  std::vector<double> epoch_loss;  // one entry per epoch
};

// Cross-entropy against the true statistics of one seed-sampled query per
// record visit. Throws NumericError naming the epoch if the loss stops
// being finite.
TrainTrace train_self_supervised(RepNet& net,
                                 const std::vector<RepRecord>& dataset,
                                 const RepTrainOptions& opts);

// Squared error of predict_property against record labels.
TrainTrace train_supervised(RepNet& net, const std::vector<RepRecord>& dataset,
                            const RepTrainOptions& opts);

// Centered PCA onto the top-2 principal axes, rows aligned with `reps`.
// Each axis's largest-magnitude loading is made positive so the output is
// reproducible. Degenerate all-equal input projects to zeros.
MatrixXd pca_project(const std::vector<VectorXd>& reps);

// Measurement encodings per environment family.
VectorXd encode_pauli_window(int n_qubits, const spin::PauliWindow& window);
VectorXd encode_homodyne(double theta);  // (cos 2theta, sin 2theta)
VectorXd encode_full_basis(const std::vector<qc::Pauli>& bases);

}  // namespace qsteer::rep
