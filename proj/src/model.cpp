#include "gatecap/model.hpp"

#include <cmath>

namespace gatecap {

namespace {

constexpr double kLogFloor = 1e-12;

double sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  double e = std::exp(a);
  return e / (1.0 + e);
}

void check_dims(const ModelDims& dims) {
  if (dims.hidden < 1 || dims.feature < 1 || dims.vocab < 2) {
    throw ConfigError("model dims must satisfy hidden >= 1, feature >= 1, vocab >= 2");
  }
}

// Shared cell step. `acts` receives the internal gate activations when the
// backward pass needs them: GRU {update, reset, candidate}, LSTM {input,
// forget, output, cell-candidate}.
CellState cell_forward(const Params& p, const CellState& prev, const Vec& x,
                       std::array<Vec, 4>* acts) {
  const int d = p.dims.hidden;
  CellState next;
  if (p.dims.cell == CellKind::Gru) {
    Vec update = (p.cell_in[0] * x + p.cell_rec[0] * prev.hidden + p.cell_bias[0].col(0))
                     .unaryExpr([](double a) { return sigmoid(a); });
    Vec reset = (p.cell_in[1] * x + p.cell_rec[1] * prev.hidden + p.cell_bias[1].col(0))
                    .unaryExpr([](double a) { return sigmoid(a); });
    Vec cand = (p.cell_in[2] * x + p.cell_rec[2] * reset.cwiseProduct(prev.hidden) +
                p.cell_bias[2].col(0))
                   .unaryExpr([](double a) { return std::tanh(a); });
    next.hidden = (Vec::Ones(d) - update).cwiseProduct(cand) + update.cwiseProduct(prev.hidden);
    if (acts) *acts = {update, reset, cand, Vec()};
  } else {
    Vec in_gate = (p.cell_in[0] * x + p.cell_rec[0] * prev.hidden + p.cell_bias[0].col(0))
                      .unaryExpr([](double a) { return sigmoid(a); });
    Vec forget = (p.cell_in[1] * x + p.cell_rec[1] * prev.hidden + p.cell_bias[1].col(0))
                     .unaryExpr([](double a) { return sigmoid(a); });
    Vec out_gate = (p.cell_in[2] * x + p.cell_rec[2] * prev.hidden + p.cell_bias[2].col(0))
                       .unaryExpr([](double a) { return sigmoid(a); });
    Vec cand = (p.cell_in[3] * x + p.cell_rec[3] * prev.hidden + p.cell_bias[3].col(0))
                   .unaryExpr([](double a) { return std::tanh(a); });
    next.memory = forget.cwiseProduct(prev.memory) + in_gate.cwiseProduct(cand);
    next.hidden = out_gate.cwiseProduct(next.memory.unaryExpr([](double a) { return std::tanh(a); }));
    if (acts) *acts = {in_gate, forget, out_gate, cand};
  }
  return next;
}

struct ForwardCache {
  Vec v;          // projected image
  double v_norm = 0.0;
  Vec u;          // v / ||v||
  Vec key;        // tanh(gate_key v)
  Vec value;      // gate_value v
  double value_norm = 0.0;
  Vec value_hat;  // normalized value
  std::vector<Vec> inputs;                    // x_t per step
  std::vector<std::array<Vec, 4>> cell_acts;  // per-step activations
  std::vector<Vec> memories;                  // LSTM c_t per step
  SequenceResult result;
};

ForwardCache run_forward(const Params& params, const Vec& feature,
                         const PseudoCaption& caption, double alpha, bool gated,
                         bool pseudo_labels) {
  check_dims(params.dims);
  if (alpha <= 0.0) throw ConfigError("alpha must be positive");
  const std::size_t T = caption.tokens.size();
  if (T == 0) throw DataError("caption must contain at least the end-of-sentence token");
  if (caption.matches_detected.size() != T) {
    throw DataError("caption labels and tokens differ in length");
  }
  for (int id : caption.tokens) {
    if (id < 0 || id >= params.dims.vocab) throw DataError("caption token id out of range");
  }
  if (!feature.allFinite()) throw NumericError("image feature contains non-finite values");

  ForwardCache cache;
  cache.v = encode_image(params, feature);
  cache.v_norm = cache.v.norm();
  if (cache.v_norm == 0.0) {
    throw NumericError("degenerate image: projected feature has zero norm");
  }
  cache.u = cache.v / cache.v_norm;
  if (gated) {
    cache.key = (params.gate_key * cache.v).unaryExpr([](double a) { return std::tanh(a); });
    cache.value = params.gate_value * cache.v;
    cache.value_norm = cache.value.norm();
    if (cache.value_norm == 0.0) {
      throw NumericError("degenerate image: gate value vector has zero norm");
    }
    cache.value_hat = cache.value / cache.value_norm;
  }

  CellState state = initial_state(params);
  double ce_sum = 0.0;
  double gate_sum = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    Vec x = (t == 0) ? cache.u : Vec(params.embed_in.col(caption.tokens[t - 1]));
    std::array<Vec, 4> acts;
    state = cell_forward(params, state, x, &acts);
    cache.inputs.push_back(std::move(x));
    cache.cell_acts.push_back(std::move(acts));
    if (params.dims.cell == CellKind::Lstm) cache.memories.push_back(state.memory);

    StepOutput step;
    step.hidden = state.hidden;
    if (gated) {
      step.gate = sigmoid(cache.key.dot(state.hidden));
      step.mix = step.gate * cache.value_hat + (1.0 - step.gate) * state.hidden;
      if (pseudo_labels) {
        double f = caption.matches_detected[t] ? 1.0 : 0.0;
        gate_sum -= alpha * f * std::log(std::max(step.gate, kLogFloor)) +
                    (1.0 - f) * std::log(std::max(1.0 - step.gate, kLogFloor));
      }
      cache.result.gate_trace.push_back(step.gate);
    } else {
      step.gate = 0.0;
      step.mix = state.hidden;
    }
    step.probs = token_distribution(params, step.mix);
    ce_sum -= std::log(std::max(step.probs[caption.tokens[t]], kLogFloor));
    cache.result.steps.push_back(std::move(step));
  }

  cache.result.word_loss = ce_sum / static_cast<double>(T);
  cache.result.gate_loss = (gated && pseudo_labels) ? gate_sum / static_cast<double>(T) : 0.0;
  cache.result.loss = cache.result.word_loss + cache.result.gate_loss;
  return cache;
}

// Adds the gradients of one example's loss into `grads`.
void backward(const Params& params, const PseudoCaption& caption, const Vec& feature,
              double alpha, bool gated, bool pseudo_labels, const ForwardCache& cache,
              Params& grads) {
  const int d = params.dims.hidden;
  const std::size_t T = caption.tokens.size();
  const double inv_T = 1.0 / static_cast<double>(T);
  const bool lstm = params.dims.cell == CellKind::Lstm;

  Vec dh_carry = Vec::Zero(d);
  Vec dc_carry = Vec::Zero(d);
  Vec d_value_hat = Vec::Zero(d);
  Vec d_key = Vec::Zero(d);
  Vec dv = Vec::Zero(d);
  const Vec zero_state = Vec::Zero(d);

  for (std::size_t ti = T; ti-- > 0;) {
    const StepOutput& step = cache.result.steps[ti];
    const int target = caption.tokens[ti];

    // Softmax cross-entropy: d(logits) = (p - onehot) / T.
    Vec dlogits = step.probs * inv_T;
    dlogits[target] -= inv_T;
    grads.embed_out += step.mix * dlogits.transpose();
    Vec dmix = params.embed_out * dlogits;

    Vec dh;
    if (gated) {
      const double g = step.gate;
      double dg = dmix.dot(cache.value_hat - step.hidden);
      if (pseudo_labels) {
        const double f = caption.matches_detected[ti] ? 1.0 : 0.0;
        if (g > kLogFloor) dg -= inv_T * alpha * f / g;
        if (1.0 - g > kLogFloor) dg += inv_T * (1.0 - f) / (1.0 - g);
      }
      const double da = dg * g * (1.0 - g);
      d_key += da * step.hidden;
      d_value_hat += g * dmix;
      dh = (1.0 - g) * dmix + da * cache.key + dh_carry;
    } else {
      dh = dmix + dh_carry;
    }

    const Vec& x = cache.inputs[ti];
    const Vec& h_prev = ti == 0 ? zero_state : cache.result.steps[ti - 1].hidden;
    const auto& acts = cache.cell_acts[ti];
    Vec dx;
    Vec dh_prev = Vec::Zero(d);

    if (!lstm) {
      const Vec& update = acts[0];
      const Vec& reset = acts[1];
      const Vec& cand = acts[2];
      Vec d_update = dh.cwiseProduct(h_prev - cand);
      Vec d_cand = dh.cwiseProduct(Vec::Ones(d) - update);
      dh_prev += dh.cwiseProduct(update);

      Vec dA_cand = d_cand.cwiseProduct(Vec::Ones(d) - cand.cwiseProduct(cand));
      grads.cell_in[2] += dA_cand * x.transpose();
      grads.cell_rec[2] += dA_cand * reset.cwiseProduct(h_prev).transpose();
      grads.cell_bias[2].col(0) += dA_cand;
      Vec d_reset_h = params.cell_rec[2].transpose() * dA_cand;
      Vec d_reset = d_reset_h.cwiseProduct(h_prev);
      dh_prev += d_reset_h.cwiseProduct(reset);

      Vec dA_reset = d_reset.cwiseProduct(reset).cwiseProduct(Vec::Ones(d) - reset);
      grads.cell_in[1] += dA_reset * x.transpose();
      grads.cell_rec[1] += dA_reset * h_prev.transpose();
      grads.cell_bias[1].col(0) += dA_reset;
      dh_prev += params.cell_rec[1].transpose() * dA_reset;

      Vec dA_update = d_update.cwiseProduct(update).cwiseProduct(Vec::Ones(d) - update);
      grads.cell_in[0] += dA_update * x.transpose();
      grads.cell_rec[0] += dA_update * h_prev.transpose();
      grads.cell_bias[0].col(0) += dA_update;
      dh_prev += params.cell_rec[0].transpose() * dA_update;

      dx = params.cell_in[0].transpose() * dA_update +
           params.cell_in[1].transpose() * dA_reset +
           params.cell_in[2].transpose() * dA_cand;
    } else {
      const Vec& in_gate = acts[0];
      const Vec& forget = acts[1];
      const Vec& out_gate = acts[2];
      const Vec& cand = acts[3];
      const Vec& memory = cache.memories[ti];
      const Vec& c_prev = ti == 0 ? zero_state : cache.memories[ti - 1];
      Vec tanh_c = memory.unaryExpr([](double a) { return std::tanh(a); });

      Vec d_out = dh.cwiseProduct(tanh_c);
      Vec dc = dc_carry +
               dh.cwiseProduct(out_gate).cwiseProduct(Vec::Ones(d) - tanh_c.cwiseProduct(tanh_c));
      Vec d_forget = dc.cwiseProduct(c_prev);
      Vec d_in = dc.cwiseProduct(cand);
      Vec d_cand = dc.cwiseProduct(in_gate);
      dc_carry = dc.cwiseProduct(forget);

      Vec dA_in = d_in.cwiseProduct(in_gate).cwiseProduct(Vec::Ones(d) - in_gate);
      Vec dA_forget = d_forget.cwiseProduct(forget).cwiseProduct(Vec::Ones(d) - forget);
      Vec dA_out = d_out.cwiseProduct(out_gate).cwiseProduct(Vec::Ones(d) - out_gate);
      Vec dA_cand = d_cand.cwiseProduct(Vec::Ones(d) - cand.cwiseProduct(cand));

      const std::array<const Vec*, 4> dAs = {&dA_in, &dA_forget, &dA_out, &dA_cand};
      dx = Vec::Zero(d);
      for (int gate = 0; gate < 4; ++gate) {
        grads.cell_in[gate] += (*dAs[gate]) * x.transpose();
        grads.cell_rec[gate] += (*dAs[gate]) * h_prev.transpose();
        grads.cell_bias[gate].col(0) += *dAs[gate];
        dh_prev += params.cell_rec[gate].transpose() * (*dAs[gate]);
        dx += params.cell_in[gate].transpose() * (*dAs[gate]);
      }
    }

    if (ti == 0) {
      // x_1 = v / ||v||; gradient of the normalization uses the full
      // Jacobian (I - u u^T) / ||v||.
      dv += (dx - cache.u * cache.u.dot(dx)) / cache.v_norm;
    } else {
      grads.embed_in.col(caption.tokens[ti - 1]) += dx;
    }
    dh_carry = dh_prev;
  }

  if (gated) {
    Vec d_value = (d_value_hat - cache.value_hat * cache.value_hat.dot(d_value_hat)) /
                  cache.value_norm;
    grads.gate_value += d_value * cache.v.transpose();
    dv += params.gate_value.transpose() * d_value;

    Vec d_key_pre =
        d_key.cwiseProduct(Vec::Ones(params.dims.hidden) - cache.key.cwiseProduct(cache.key));
    grads.gate_key += d_key_pre * cache.v.transpose();
    dv += params.gate_key.transpose() * d_key_pre;
  }

  grads.img_proj += dv * feature.transpose();
}

}  // namespace

Params Params::init(const ModelDims& dims, std::uint64_t seed) {
  check_dims(dims);
  Params p;
  p.dims = dims;
  Rng rng(seed);
  auto fill = [&](Mat& m, int rows, int cols) {
    m.resize(rows, cols);
    for (int c = 0; c < cols; ++c) {
      for (int r = 0; r < rows; ++r) m(r, c) = rng.uniform(-0.08, 0.08);
    }
  };
  const int d = dims.hidden;
  fill(p.img_proj, d, dims.feature);
  fill(p.embed_in, d, dims.vocab);
  fill(p.embed_out, d, dims.vocab);
  fill(p.gate_key, d, d);
  fill(p.gate_value, d, d);
  const int gates = gate_count(dims.cell);
  p.cell_in.resize(static_cast<std::size_t>(gates));
  p.cell_rec.resize(static_cast<std::size_t>(gates));
  p.cell_bias.resize(static_cast<std::size_t>(gates));
  for (int g = 0; g < gates; ++g) {
    fill(p.cell_in[static_cast<std::size_t>(g)], d, d);
    fill(p.cell_rec[static_cast<std::size_t>(g)], d, d);
    fill(p.cell_bias[static_cast<std::size_t>(g)], d, 1);
  }
  return p;
}

Params Params::zeros_like(const Params& other) {
  Params p;
  p.dims = other.dims;
  p.img_proj = Mat::Zero(other.img_proj.rows(), other.img_proj.cols());
  p.embed_in = Mat::Zero(other.embed_in.rows(), other.embed_in.cols());
  p.embed_out = Mat::Zero(other.embed_out.rows(), other.embed_out.cols());
  p.gate_key = Mat::Zero(other.gate_key.rows(), other.gate_key.cols());
  p.gate_value = Mat::Zero(other.gate_value.rows(), other.gate_value.cols());
  for (const auto& m : other.cell_in) p.cell_in.push_back(Mat::Zero(m.rows(), m.cols()));
  for (const auto& m : other.cell_rec) p.cell_rec.push_back(Mat::Zero(m.rows(), m.cols()));
  for (const auto& m : other.cell_bias) p.cell_bias.push_back(Mat::Zero(m.rows(), m.cols()));
  return p;
}

void Params::accumulate(const Params& other, double factor) {
  auto mine = tensors();
  auto theirs = const_cast<Params&>(other).tensors();
  for (std::size_t i = 0; i < mine.size(); ++i) {
    *mine[i].tensor += factor * (*theirs[i].tensor);
  }
}

void Params::scale(double factor) {
  for (auto& ref : tensors()) *ref.tensor *= factor;
}

double Params::squared_norm() const {
  double total = 0.0;
  for (const auto& ref : tensors()) total += ref.tensor->squaredNorm();
  return total;
}

std::vector<Params::TensorRef> Params::tensors() {
  std::vector<TensorRef> refs = {
      {"img_proj", &img_proj},   {"embed_in", &embed_in},
      {"embed_out", &embed_out}, {"gate_key", &gate_key},
      {"gate_value", &gate_value}};
  for (std::size_t g = 0; g < cell_in.size(); ++g) {
    refs.push_back({"cell_in" + std::to_string(g), &cell_in[g]});
    refs.push_back({"cell_rec" + std::to_string(g), &cell_rec[g]});
    refs.push_back({"cell_bias" + std::to_string(g), &cell_bias[g]});
  }
  return refs;
}

std::vector<Params::TensorRef> Params::tensors() const {
  return const_cast<Params*>(this)->tensors();
}

long Params::coordinate_count() const {
  long n = 0;
  for (const auto& ref : tensors()) n += static_cast<long>(ref.tensor->size());
  return n;
}

CellState initial_state(const Params& params) {
  CellState s;
  s.hidden = Vec::Zero(params.dims.hidden);
  if (params.dims.cell == CellKind::Lstm) s.memory = Vec::Zero(params.dims.hidden);
  return s;
}

Vec encode_image(const Params& params, const Vec& feature) {
  if (feature.size() != params.dims.feature) {
    throw ShapeError("feature length " + std::to_string(feature.size()) +
                     " does not match model feature dim " +
                     std::to_string(params.dims.feature));
  }
  return params.img_proj * feature;
}

CellState decode_step(const Params& params, const CellState& prev, const Vec& input) {
  if (input.size() != params.dims.hidden || prev.hidden.size() != params.dims.hidden) {
    throw ShapeError("decode_step input and state must have the hidden dimension");
  }
  if (!input.allFinite() || !prev.hidden.allFinite()) {
    throw NumericError("decode_step received non-finite values");
  }
  return cell_forward(params, prev, input, nullptr);
}

std::pair<double, Vec> gate_step(const Params& params, const Vec& img, const Vec& hidden) {
  if (img.size() != params.dims.hidden || hidden.size() != params.dims.hidden) {
    throw ShapeError("gate_step expects hidden-sized vectors");
  }
  Vec key = (params.gate_key * img).unaryExpr([](double a) { return std::tanh(a); });
  Vec value = params.gate_value * img;
  double norm = value.norm();
  if (norm == 0.0) throw NumericError("degenerate image: gate value vector has zero norm");
  double g = sigmoid(key.dot(hidden));
  Vec mix = g * (value / norm) + (1.0 - g) * hidden;
  return {g, mix};
}

Vec token_distribution(const Params& params, const Vec& mix) {
  if (mix.size() != params.dims.hidden) {
    throw ShapeError("token_distribution expects a hidden-sized vector");
  }
  if (!mix.allFinite()) throw NumericError("token_distribution received non-finite values");
  Vec logits = params.embed_out.transpose() * mix;
  double peak = logits.maxCoeff();
  // Scalar exp keeps IEEE underflow-to-zero semantics (Eigen's vectorized
  // exp clamps instead), which the unique-object suppression relies on.
  Vec probs = logits.unaryExpr([peak](double a) { return std::exp(a - peak); });
  probs /= probs.sum();
  return probs;
}

SequenceResult sequence_loss(const Params& params, const Vec& feature,
                             const PseudoCaption& caption, double alpha, bool gated,
                             bool pseudo_labels) {
  return run_forward(params, feature, caption, alpha, gated, pseudo_labels).result;
}

Params gradients(const Params& params, std::span<const Example> batch, double alpha,
                 bool gated, bool pseudo_labels) {
  return batch_gradients(params, batch, alpha, gated, pseudo_labels).grads;
}

BatchGradients batch_gradients(const Params& params, std::span<const Example> batch,
                               double alpha, bool gated, bool pseudo_labels) {
  if (batch.empty()) throw DataError("gradient batch must be nonempty");
  BatchGradients out{Params::zeros_like(params)};
  for (const Example& ex : batch) {
    ForwardCache cache = run_forward(params, ex.feature, ex.caption, alpha, gated, pseudo_labels);
    backward(params, ex.caption, ex.feature, alpha, gated, pseudo_labels, cache, out.grads);
    out.loss += cache.result.loss;
    out.word_loss += cache.result.word_loss;
    out.gate_loss += cache.result.gate_loss;
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.grads.scale(inv);
  out.loss *= inv;
  out.word_loss *= inv;
  out.gate_loss *= inv;
  return out;
}

double grad_check(const Params& params, const Example& example, double eps, double alpha,
                  bool gated, bool pseudo_labels) {
  if (!(eps > 0.0) || eps > 1e-2) throw ConfigError("grad_check eps must be in (0, 1e-2]");
  Params work = params;
  Params analytic =
      gradients(work, std::span<const Example>(&example, 1), alpha, gated, pseudo_labels);

  double worst = 0.0;
  auto tensor_refs = work.tensors();
  auto grad_refs = analytic.tensors();
  for (std::size_t m = 0; m < tensor_refs.size(); ++m) {
    Mat& tensor = *tensor_refs[m].tensor;
    const Mat& grad = *grad_refs[m].tensor;
    for (long i = 0; i < tensor.size(); ++i) {
      double saved = tensor.data()[i];
      tensor.data()[i] = saved + eps;
      double up =
          sequence_loss(work, example.feature, example.caption, alpha, gated, pseudo_labels).loss;
      tensor.data()[i] = saved - eps;
      double down =
          sequence_loss(work, example.feature, example.caption, alpha, gated, pseudo_labels).loss;
      tensor.data()[i] = saved;
      double fd = (up - down) / (2.0 * eps);
      double got = grad.data()[i];
      double rel = std::abs(got - fd) / std::max({std::abs(got), std::abs(fd), 1e-12});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace gatecap
