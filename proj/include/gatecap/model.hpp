#pragma once

#include "gatecap/common.hpp"
#include "gatecap/miner.hpp"

#include <array>
#include <span>
#include <string>
#include <vector>

namespace gatecap {

enum class CellKind { Gru, Lstm };

struct ModelDims {
  int hidden = 200;   // d  (200 matches the GRU reference setting; toy runs use 32)
  int feature = 16;   // d'
  int vocab = 0;      // |Y|
  CellKind cell = CellKind::Gru;
};

inline int gate_count(CellKind kind) { return kind == CellKind::Gru ? 3 : 4; }

// All trainable tensors. The same struct doubles as a gradient container
// (zeros_like + accumulate), so the optimizer and the finite-difference
// checker can walk parameters and gradients in lockstep.
struct Params {
  ModelDims dims;
  Mat img_proj;    // d x d'   image feature projection
  Mat embed_in;    // d x |Y|  input word embeddings (columns)
  Mat embed_out;   // d x |Y|  output word embeddings (columns)
  Mat gate_key;    // d x d    key transform inside the gate score
  Mat gate_value;  // d x d    value transform mixed into the readout
  // Recurrent cell, one matrix triple per internal gate:
  // GRU order {update, reset, candidate}; LSTM order {input, forget, output, cell}.
  std::vector<Mat> cell_in;    // d x d each
  std::vector<Mat> cell_rec;   // d x d each
  std::vector<Mat> cell_bias;  // d x 1 each

  // Uniform init in [-0.08, 0.08], fully determined by the seed.
  static Params init(const ModelDims& dims, std::uint64_t seed);
  static Params zeros_like(const Params& other);

  // this += scale * other, tensor by tensor.
  void accumulate(const Params& other, double scale = 1.0);
  void scale(double factor);
  double squared_norm() const;

  struct TensorRef {
    std::string name;
    Mat* tensor;
  };
  std::vector<TensorRef> tensors();
  std::vector<TensorRef> tensors() const;  // const_cast view for read-only walks

  long coordinate_count() const;
};

// Recurrent state. `memory` is used by the LSTM only and stays empty for GRU.
struct CellState {
  Vec hidden;
  Vec memory;
};

CellState initial_state(const Params& params);

// One decoder step plus its readout, as produced during the forward pass.
struct StepOutput {
  Vec hidden;   // h_t
  double gate = 0.0;  // g_t (0.5 placeholder in ungated mode)
  Vec mix;      // r_t (equals h_t in ungated mode)
  Vec probs;    // distribution over the vocabulary
};

// Everything the backward pass and the tests need from one forward run.
struct SequenceResult {
  double loss = 0.0;       // L = L_g + L_f
  double word_loss = 0.0;  // L_g, mean token cross-entropy
  double gate_loss = 0.0;  // L_f, mean weighted gate BCE (0 in ungated mode)
  std::vector<double> gate_trace;
  std::vector<StepOutput> steps;
};

struct Example {
  Vec feature;
  PseudoCaption caption;
};

// v = img_proj * feature. The result is unnormalized; each consumer applies
// its own L2 normalization (or none, for the gate key input).
Vec encode_image(const Params& params, const Vec& feature);

// One step of the recurrent cell. The input is the normalized image vector at
// t = 1 and the previous token's embedding column afterwards.
CellState decode_step(const Params& params, const CellState& prev, const Vec& input);

// g = sigmoid(tanh(gate_key v) . h), r = g * normalize(gate_value v) + (1-g) h.
// Throws NumericError when gate_value * v has zero norm.
std::pair<double, Vec> gate_step(const Params& params, const Vec& img, const Vec& hidden);

// Stable softmax over embed_out^T r.
Vec token_distribution(const Params& params, const Vec& mix);

// Teacher-forced loss over one (image, caption) pair. `gated` false gives the
// plain encoder-decoder readout from h_t with no gate loss; `pseudo_labels`
// false keeps the gate in the forward pass but drops its supervision term
// (the w/o-pseudoL ablation). Ignored when gated is false.
SequenceResult sequence_loss(const Params& params, const Vec& feature,
                             const PseudoCaption& caption, double alpha, bool gated,
                             bool pseudo_labels = true);

// Exact analytic gradients of the mean batch loss, matching sequence_loss.
Params gradients(const Params& params, std::span<const Example> batch, double alpha,
                 bool gated, bool pseudo_labels = true);

// Gradients plus the mean losses of the forward passes that produced them.
struct BatchGradients {
  Params grads;
  double loss = 0.0;
  double word_loss = 0.0;
  double gate_loss = 0.0;
};
BatchGradients batch_gradients(const Params& params, std::span<const Example> batch,
                               double alpha, bool gated, bool pseudo_labels = true);

// Max over parameter coordinates of the relative error between analytic
// gradients and central finite differences with step eps.
double grad_check(const Params& params, const Example& example, double eps,
                  double alpha, bool gated, bool pseudo_labels = true);

}  // namespace gatecap
