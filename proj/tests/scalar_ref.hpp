// Test-only scalar re-implementation of the model forward pass. Plain loops
// over std::vector<double>, no shared code with the library, so it can serve
// as an independent oracle for the Eigen-based implementation.
#pragma once

#include "gatecap/model.hpp"

#include <cmath>
#include <vector>

namespace scalar_ref {

using Grid = std::vector<std::vector<double>>;  // row-major [r][c]

inline Grid from_mat(const gatecap::Mat& m) {
  Grid g(static_cast<std::size_t>(m.rows()),
         std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (long r = 0; r < m.rows(); ++r) {
    for (long c = 0; c < m.cols(); ++c) g[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = m(r, c);
  }
  return g;
}

inline std::vector<double> from_vec(const gatecap::Vec& v) {
  std::vector<double> out(static_cast<std::size_t>(v.size()));
  for (long i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] = v[i];
  return out;
}

inline std::vector<double> matvec(const Grid& m, const std::vector<double>& x) {
  std::vector<double> out(m.size(), 0.0);
  for (std::size_t r = 0; r < m.size(); ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) sum += m[r][c] * x[c];
    out[r] = sum;
  }
  return out;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

inline double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

inline double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

struct ScalarModel {
  Grid img_proj, embed_in, embed_out, gate_key, gate_value;
  std::vector<Grid> cell_in, cell_rec;
  std::vector<std::vector<double>> cell_bias;
  bool lstm = false;

  static ScalarModel from(const gatecap::Params& p) {
    ScalarModel m;
    m.img_proj = from_mat(p.img_proj);
    m.embed_in = from_mat(p.embed_in);
    m.embed_out = from_mat(p.embed_out);
    m.gate_key = from_mat(p.gate_key);
    m.gate_value = from_mat(p.gate_value);
    for (const auto& w : p.cell_in) m.cell_in.push_back(from_mat(w));
    for (const auto& w : p.cell_rec) m.cell_rec.push_back(from_mat(w));
    for (const auto& b : p.cell_bias) {
      std::vector<double> col(static_cast<std::size_t>(b.rows()));
      for (long r = 0; r < b.rows(); ++r) col[static_cast<std::size_t>(r)] = b(r, 0);
      m.cell_bias.push_back(col);
    }
    m.lstm = p.dims.cell == gatecap::CellKind::Lstm;
    return m;
  }

  std::vector<double> embed_column(const Grid& table, int id) const {
    std::vector<double> out(table.size());
    for (std::size_t r = 0; r < table.size(); ++r) out[r] = table[r][static_cast<std::size_t>(id)];
    return out;
  }

  // One recurrent step; h and c updated in place.
  void step(const std::vector<double>& x, std::vector<double>& h,
            std::vector<double>& c) const {
    const std::size_t d = h.size();
    auto preact = [&](std::size_t gate, const std::vector<double>& hvec) {
      std::vector<double> a = matvec(cell_in[gate], x);
      std::vector<double> rec = matvec(cell_rec[gate], hvec);
      for (std::size_t i = 0; i < d; ++i) a[i] += rec[i] + cell_bias[gate][i];
      return a;
    };
    if (!lstm) {
      std::vector<double> update = preact(0, h);
      std::vector<double> reset = preact(1, h);
      for (std::size_t i = 0; i < d; ++i) {
        update[i] = sigmoid(update[i]);
        reset[i] = sigmoid(reset[i]);
      }
      std::vector<double> gated_h(d);
      for (std::size_t i = 0; i < d; ++i) gated_h[i] = reset[i] * h[i];
      std::vector<double> cand = matvec(cell_in[2], x);
      std::vector<double> rec = matvec(cell_rec[2], gated_h);
      for (std::size_t i = 0; i < d; ++i) {
        cand[i] = std::tanh(cand[i] + rec[i] + cell_bias[2][i]);
      }
      for (std::size_t i = 0; i < d; ++i) {
        h[i] = (1.0 - update[i]) * cand[i] + update[i] * h[i];
      }
    } else {
      std::vector<double> in_gate = preact(0, h);
      std::vector<double> forget = preact(1, h);
      std::vector<double> out_gate = preact(2, h);
      std::vector<double> cand = preact(3, h);
      for (std::size_t i = 0; i < d; ++i) {
        in_gate[i] = sigmoid(in_gate[i]);
        forget[i] = sigmoid(forget[i]);
        out_gate[i] = sigmoid(out_gate[i]);
        cand[i] = std::tanh(cand[i]);
        c[i] = forget[i] * c[i] + in_gate[i] * cand[i];
        h[i] = out_gate[i] * std::tanh(c[i]);
      }
    }
  }

  // Softmax over embed_out^T mix in extended precision.
  std::vector<double> distribution(const std::vector<double>& mix) const {
    const std::size_t vocab = embed_out[0].size();
    std::vector<long double> logits(vocab, 0.0L);
    for (std::size_t y = 0; y < vocab; ++y) {
      long double sum = 0.0L;
      for (std::size_t r = 0; r < mix.size(); ++r) {
        sum += static_cast<long double>(embed_out[r][y]) * static_cast<long double>(mix[r]);
      }
      logits[y] = sum;
    }
    long double peak = logits[0];
    for (long double v : logits) peak = std::max(peak, v);
    long double total = 0.0L;
    std::vector<long double> exps(vocab);
    for (std::size_t y = 0; y < vocab; ++y) {
      exps[y] = expl(logits[y] - peak);
      total += exps[y];
    }
    std::vector<double> out(vocab);
    for (std::size_t y = 0; y < vocab; ++y) out[y] = static_cast<double>(exps[y] / total);
    return out;
  }

  struct Losses {
    double total = 0, word = 0, gate = 0;
    std::vector<double> gates;
    std::vector<std::vector<double>> step_probs;
    std::vector<std::vector<double>> hiddens;
  };

  // force_gate >= 0 overrides every g_t with that value (used to check the
  // ungated path against the gated one).
  Losses sequence(const std::vector<double>& feature, const std::vector<int>& tokens,
                  const std::vector<std::uint8_t>& labels, double alpha, bool gated,
                  double force_gate = -1.0) const {
    const std::size_t d = img_proj.size();
    Losses out;
    std::vector<double> v = matvec(img_proj, feature);
    double vn = norm(v);
    std::vector<double> u(d);
    for (std::size_t i = 0; i < d; ++i) u[i] = v[i] / vn;

    std::vector<double> key(d), value_hat(d);
    if (gated) {
      std::vector<double> kp = matvec(gate_key, v);
      for (std::size_t i = 0; i < d; ++i) key[i] = std::tanh(kp[i]);
      std::vector<double> w = matvec(gate_value, v);
      double wn = norm(w);
      for (std::size_t i = 0; i < d; ++i) value_hat[i] = w[i] / wn;
    }

    std::vector<double> h(d, 0.0), c(d, 0.0);
    double ce = 0.0, gl = 0.0;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      std::vector<double> x = t == 0 ? u : embed_column(embed_in, tokens[t - 1]);
      step(x, h, c);
      out.hiddens.push_back(h);
      std::vector<double> mix = h;
      if (gated) {
        double g = force_gate >= 0.0 ? force_gate : sigmoid(dot(key, h));
        out.gates.push_back(g);
        for (std::size_t i = 0; i < d; ++i) mix[i] = g * value_hat[i] + (1.0 - g) * h[i];
        double f = labels[t] ? 1.0 : 0.0;
        gl -= alpha * f * std::log(std::max(g, 1e-12)) +
              (1.0 - f) * std::log(std::max(1.0 - g, 1e-12));
      }
      std::vector<double> probs = distribution(mix);
      out.step_probs.push_back(probs);
      ce -= std::log(std::max(probs[static_cast<std::size_t>(tokens[t])], 1e-12));
    }
    out.word = ce / static_cast<double>(tokens.size());
    out.gate = gated ? gl / static_cast<double>(tokens.size()) : 0.0;
    out.total = out.word + out.gate;
    return out;
  }
};

}  // namespace scalar_ref
