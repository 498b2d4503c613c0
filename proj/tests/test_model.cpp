#include "gatecap/model.hpp"

#include "scalar_ref.hpp"

#include <doctest.h>

#include <cmath>

using namespace gatecap;

namespace {

PseudoCaption make_caption(std::vector<int> tokens, std::vector<std::uint8_t> labels) {
  PseudoCaption cap;
  cap.tokens = std::move(tokens);
  cap.matches_detected = std::move(labels);
  return cap;
}

Example random_example(Rng& rng, const ModelDims& dims, int steps) {
  Example ex;
  ex.feature = Vec(dims.feature);
  for (int i = 0; i < dims.feature; ++i) ex.feature[i] = rng.normal();
  if (ex.feature.norm() < 1e-3) ex.feature[0] += 1.0;
  for (int t = 0; t < steps - 1; ++t) {
    ex.caption.tokens.push_back(static_cast<int>(rng.index(static_cast<std::size_t>(dims.vocab - 1))));
    ex.caption.matches_detected.push_back(rng.bernoulli(0.4) ? 1 : 0);
  }
  ex.caption.tokens.push_back(dims.vocab - 1);
  ex.caption.matches_detected.push_back(0);
  return ex;
}

// Central finite differences against a caller-supplied gradient; lets the
// corrupted-gradient test reuse the same numerics as grad_check.
double fd_max_rel_err(Params params, const Example& ex, double alpha, bool gated,
                      const Params& grads, double eps) {
  double worst = 0.0;
  auto t_refs = params.tensors();
  auto g_refs = grads.tensors();
  for (std::size_t m = 0; m < t_refs.size(); ++m) {
    Mat& tensor = *t_refs[m].tensor;
    const Mat& grad = *g_refs[m].tensor;
    for (long i = 0; i < tensor.size(); ++i) {
      double saved = tensor.data()[i];
      tensor.data()[i] = saved + eps;
      double up = sequence_loss(params, ex.feature, ex.caption, alpha, gated).loss;
      tensor.data()[i] = saved - eps;
      double down = sequence_loss(params, ex.feature, ex.caption, alpha, gated).loss;
      tensor.data()[i] = saved;
      double fd = (up - down) / (2.0 * eps);
      double got = grad.data()[i];
      double rel = std::abs(got - fd) / std::max({std::abs(got), std::abs(fd), 1e-12});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("encode_image") {
  ModelDims dims;
  dims.hidden = 3;
  dims.feature = 3;
  dims.vocab = 4;
  Params p = Params::init(dims, 1);

  SUBCASE("unit basis feature picks a projection column") {
    Vec e1 = Vec::Zero(3);
    e1[0] = 1.0;
    Vec v = encode_image(p, e1);
    CHECK(v == Vec(p.img_proj.col(0)));
  }

  SUBCASE("zero feature gives zero projection and the loss rejects it") {
    Vec v = encode_image(p, Vec::Zero(3));
    CHECK(v.norm() == 0.0);
    PseudoCaption cap = make_caption({3}, {0});
    CHECK_THROWS_AS(sequence_loss(p, Vec::Zero(3), cap, 16.0, true), NumericError);
  }

  SUBCASE("matches an elementwise product oracle") {
    ModelDims wide = dims;
    wide.feature = 4;
    Params q = Params::init(wide, 7);
    Rng rng(3);
    Vec feature(4);
    for (int i = 0; i < 4; ++i) feature[i] = rng.normal();
    Vec v = encode_image(q, feature);
    for (int r = 0; r < 3; ++r) {
      double expect = 0.0;
      for (int c = 0; c < 4; ++c) expect += q.img_proj(r, c) * feature[c];
      CHECK(v[r] == doctest::Approx(expect).epsilon(1e-12));
    }
  }

  SUBCASE("dimension mismatch is a shape error") {
    CHECK_THROWS_AS(encode_image(p, Vec::Zero(5)), ShapeError);
  }
}

TEST_CASE("decode_step") {
  for (CellKind kind : {CellKind::Gru, CellKind::Lstm}) {
    CAPTURE(kind == CellKind::Gru ? "gru" : "lstm");
    ModelDims dims;
    dims.hidden = 2;
    dims.feature = 2;
    dims.vocab = 3;
    dims.cell = kind;

    SUBCASE("zero weights and zero input give zero state") {
      Params p = Params::zeros_like(Params::init(dims, 0));
      p.dims = dims;
      CellState next = decode_step(p, initial_state(p), Vec::Zero(2));
      CHECK(next.hidden.norm() == 0.0);
    }

    SUBCASE("matches the scalar cell equations") {
      Params p = Params::init(dims, 5);
      p.scale(4.0);  // push activations away from the linear regime
      Rng rng(2);
      Vec input(2);
      input << rng.normal(), rng.normal();
      CellState state = initial_state(p);
      auto model = scalar_ref::ScalarModel::from(p);
      std::vector<double> h(2, 0.0), c(2, 0.0);
      for (int t = 0; t < 4; ++t) {
        state = decode_step(p, state, input);
        model.step(scalar_ref::from_vec(input), h, c);
        for (int i = 0; i < 2; ++i) {
          CHECK(state.hidden[i] == doctest::Approx(h[static_cast<std::size_t>(i)]).epsilon(1e-9));
        }
      }
    }

    SUBCASE("repeated input stays within activation bounds") {
      Params p = Params::init(dims, 9);
      p.scale(10.0);
      CellState state = initial_state(p);
      Vec input = Vec::Ones(2);
      for (int t = 0; t < 50; ++t) {
        state = decode_step(p, state, input);
        for (int i = 0; i < 2; ++i) {
          CHECK(state.hidden[i] >= -1.0);
          CHECK(state.hidden[i] <= 1.0);
        }
      }
    }

    SUBCASE("non-finite input is a numeric error") {
      Params p = Params::init(dims, 0);
      Vec bad = Vec::Zero(2);
      bad[0] = std::numeric_limits<double>::quiet_NaN();
      CHECK_THROWS_AS(decode_step(p, initial_state(p), bad), NumericError);
    }
  }
}

TEST_CASE("gate_step") {
  ModelDims dims;
  dims.hidden = 3;
  dims.feature = 3;
  dims.vocab = 4;
  Params p = Params::init(dims, 11);
  Rng rng(4);
  Vec img(3);
  img << rng.normal(), rng.normal(), rng.normal();

  SUBCASE("zero hidden state gives exactly one half") {
    auto [g, mix] = gate_step(p, img, Vec::Zero(3));
    CHECK(g == 0.5);
    Vec value = p.gate_value * img;
    Vec expect = 0.5 * value / value.norm();
    CHECK((mix - expect).norm() < 1e-15);
  }

  SUBCASE("saturated score pins the mix to the normalized value vector") {
    Params q = p;
    q.gate_key *= 50.0;
    // Align the hidden state with the key so the score saturates.
    Vec key = (q.gate_key * img).unaryExpr([](double a) { return std::tanh(a); });
    Vec h = 100.0 * key.unaryExpr([](double a) { return a >= 0 ? 1.0 : -1.0; });
    auto [g, mix] = gate_step(q, img, h);
    CHECK(g > 1.0 - 1e-9);
    Vec value = q.gate_value * img;
    CHECK((mix - value / value.norm()).norm() < 1e-6);
  }

  SUBCASE("matches scalar evaluation") {
    Vec h(3);
    h << 0.3, -0.8, 0.5;
    auto [g, mix] = gate_step(p, img, h);
    auto model = scalar_ref::ScalarModel::from(p);
    auto key_pre = scalar_ref::matvec(model.gate_key, scalar_ref::from_vec(img));
    std::vector<double> key(3);
    for (int i = 0; i < 3; ++i) key[static_cast<std::size_t>(i)] = std::tanh(key_pre[static_cast<std::size_t>(i)]);
    double expect_g = scalar_ref::sigmoid(scalar_ref::dot(key, scalar_ref::from_vec(h)));
    CHECK(g == doctest::Approx(expect_g).epsilon(1e-12));
    auto value = scalar_ref::matvec(model.gate_value, scalar_ref::from_vec(img));
    double wn = scalar_ref::norm(value);
    for (int i = 0; i < 3; ++i) {
      double expect = expect_g * value[static_cast<std::size_t>(i)] / wn + (1 - expect_g) * h[i];
      CHECK(mix[i] == doctest::Approx(expect).epsilon(1e-9));
    }
  }

  SUBCASE("zero value vector is a numeric error") {
    Params q = p;
    q.gate_value.setZero();
    CHECK_THROWS_AS(gate_step(q, img, Vec::Zero(3)), NumericError);
  }
}

TEST_CASE("token_distribution") {
  ModelDims dims;
  dims.hidden = 3;
  dims.feature = 2;
  dims.vocab = 7;
  Params p = Params::init(dims, 2);

  SUBCASE("zero output embeddings give the uniform distribution") {
    Params q = p;
    q.embed_out.setZero();
    Vec probs = token_distribution(q, Vec::Ones(3));
    for (int y = 0; y < 7; ++y) CHECK(probs[y] == doctest::Approx(1.0 / 7).epsilon(1e-12));
  }

  SUBCASE("shift invariance: equal logits stay uniform") {
    Params q = p;
    // Each vocabulary column identical -> identical logits regardless of mix.
    for (int y = 0; y < 7; ++y) q.embed_out.col(y) = Vec::Ones(3) * 42.0;
    Vec probs = token_distribution(q, Vec::Ones(3) * 3.0);
    for (int y = 0; y < 7; ++y) CHECK(probs[y] == doctest::Approx(1.0 / 7).epsilon(1e-12));
  }

  SUBCASE("matches an extended-precision oracle") {
    Rng rng(6);
    Params q = p;
    q.scale(8.0);
    Vec mix(3);
    mix << rng.normal(), rng.normal(), rng.normal();
    Vec probs = token_distribution(q, mix);
    auto oracle = scalar_ref::ScalarModel::from(q).distribution(scalar_ref::from_vec(mix));
    double total = 0.0;
    for (int y = 0; y < 7; ++y) {
      CHECK(std::abs(probs[y] - oracle[static_cast<std::size_t>(y)]) < 1e-9);
      total += probs[y];
    }
    CHECK(std::abs(total - 1.0) < 1e-9);
  }
}

TEST_CASE("sequence_loss closed forms") {
  // img_proj and gate_value identity-like, everything else zero: the hidden
  // state stays zero, every gate is exactly 0.5, and the readout is uniform.
  ModelDims dims;
  dims.hidden = 4;
  dims.feature = 4;
  dims.vocab = 10;
  Params p = Params::zeros_like(Params::init(dims, 0));
  p.dims = dims;
  p.img_proj = Mat::Identity(4, 4);
  p.gate_value = Mat::Identity(4, 4);
  Vec feature(4);
  feature << 1.0, -2.0, 0.5, 3.0;
  PseudoCaption cap = make_caption({2, 5, 9}, {0, 0, 0});

  SequenceResult res = sequence_loss(p, feature, cap, 16.0, true);
  CHECK(res.word_loss == doctest::Approx(std::log(10.0)).epsilon(1e-12));
  CHECK(res.gate_loss == doctest::Approx(0.6931471805599453).epsilon(1e-9));
  CHECK(res.loss == doctest::Approx(std::log(10.0) + 0.6931471805599453).epsilon(1e-9));
  for (double g : res.gate_trace) CHECK(g == 0.5);

  SUBCASE("ungated variant has no gate loss") {
    SequenceResult base = sequence_loss(p, feature, cap, 16.0, false);
    CHECK(base.gate_loss == 0.0);
    CHECK(base.word_loss == doctest::Approx(std::log(10.0)).epsilon(1e-12));
    CHECK(base.gate_trace.empty());
  }

  SUBCASE("empty caption is a data error") {
    PseudoCaption empty;
    CHECK_THROWS_AS(sequence_loss(p, feature, empty, 16.0, true), DataError);
  }

  SUBCASE("alpha must be positive") {
    CHECK_THROWS_AS(sequence_loss(p, feature, cap, 0.0, true), ConfigError);
  }
}

TEST_CASE("sequence_loss matches the scalar reference") {
  for (CellKind kind : {CellKind::Gru, CellKind::Lstm}) {
    for (bool gated : {true, false}) {
      CAPTURE(kind == CellKind::Gru ? "gru" : "lstm");
      CAPTURE(gated);
      ModelDims dims;
      dims.hidden = 2;
      dims.feature = 3;
      dims.vocab = 4;
      dims.cell = kind;
      Params p = Params::init(dims, 13);
      p.scale(5.0);
      Vec feature(3);
      feature << 0.4, -1.2, 0.9;
      PseudoCaption cap = make_caption({1, 0, 3}, {1, 0, 0});

      SequenceResult got = sequence_loss(p, feature, cap, 16.0, gated);
      auto oracle = scalar_ref::ScalarModel::from(p).sequence(
          scalar_ref::from_vec(feature), cap.tokens, cap.matches_detected, 16.0, gated);
      CHECK(std::abs(got.loss - oracle.total) < 1e-9);
      CHECK(std::abs(got.word_loss - oracle.word) < 1e-9);
      CHECK(std::abs(got.gate_loss - oracle.gate) < 1e-9);
      REQUIRE(got.steps.size() == 3);
      for (std::size_t t = 0; t < 3; ++t) {
        for (int y = 0; y < 4; ++y) {
          CHECK(std::abs(got.steps[t].probs[y] -
                         oracle.step_probs[t][static_cast<std::size_t>(y)]) < 1e-9);
        }
        if (gated) {
          CHECK(std::abs(got.gate_trace[t] - oracle.gates[t]) < 1e-9);
        }
      }
    }
  }
}

TEST_CASE("ungated loss equals the gated path with the gate forced to zero") {
  ModelDims dims;
  dims.hidden = 3;
  dims.feature = 2;
  dims.vocab = 5;
  Params p = Params::init(dims, 21);
  p.scale(4.0);
  Vec feature(2);
  feature << 1.5, -0.7;
  PseudoCaption cap = make_caption({0, 2, 4}, {0, 1, 0});

  SequenceResult ungated = sequence_loss(p, feature, cap, 16.0, false);
  auto forced = scalar_ref::ScalarModel::from(p).sequence(
      scalar_ref::from_vec(feature), cap.tokens, cap.matches_detected, 16.0, true,
      /*force_gate=*/0.0);
  CHECK(std::abs(ungated.word_loss - forced.word) < 1e-12);
}

TEST_CASE("forward invariants on random instances") {
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    ModelDims dims;
    dims.hidden = 2 + static_cast<int>(rng.index(3));
    dims.feature = 2 + static_cast<int>(rng.index(3));
    dims.vocab = 4 + static_cast<int>(rng.index(5));
    dims.cell = rng.bernoulli(0.5) ? CellKind::Gru : CellKind::Lstm;
    Params p = Params::init(dims, rng.next());
    p.scale(rng.uniform(0.5, 10.0));
    Example ex = random_example(rng, dims, 1 + static_cast<int>(rng.index(5)));

    SequenceResult res = sequence_loss(p, ex.feature, ex.caption, 16.0, true);
    CHECK(res.gate_loss >= 0.0);
    for (const StepOutput& step : res.steps) {
      double total = 0.0;
      for (int y = 0; y < dims.vocab; ++y) {
        CHECK(step.probs[y] >= 0.0);
        total += step.probs[y];
      }
      CHECK(std::abs(total - 1.0) < 1e-9);
      CHECK(step.gate > 0.0);
      CHECK(step.gate < 1.0);
    }

    // Normalizations used by the forward pass have unit norm.
    Vec v = encode_image(p, ex.feature);
    CHECK(std::abs((v / v.norm()).norm() - 1.0) < 1e-12);
    Vec value = p.gate_value * v;
    CHECK(std::abs((value / value.norm()).norm() - 1.0) < 1e-12);

    // Gate endpoint algebra: g = 0 keeps the hidden state, g = 1 lands on
    // the unit sphere.
    const Vec& h = res.steps[0].hidden;
    Vec value_hat = value / value.norm();
    Vec mix0 = 0.0 * value_hat + 1.0 * h;
    CHECK((mix0 - h).norm() == 0.0);
    Vec mix1 = 1.0 * value_hat;
    CHECK(std::abs(mix1.norm() - 1.0) < 1e-12);
  }
}

TEST_CASE("gate loss term is monotone around its target") {
  auto term = [](double f, double g) {
    return -(16.0 * f * std::log(g) + (1.0 - f) * std::log(1.0 - g));
  };
  double prev1 = term(1.0, 0.05);
  double prev0 = term(0.0, 0.05);
  for (double g = 0.1; g < 1.0; g += 0.05) {
    double cur1 = term(1.0, g);
    double cur0 = term(0.0, g);
    CHECK(cur1 < prev1);  // decreasing toward g -> 1 when f = 1
    CHECK(cur0 > prev0);  // increasing away from g -> 0 when f = 0
    prev1 = cur1;
    prev0 = cur0;
  }
}

TEST_CASE("gradients") {
  ModelDims dims;
  dims.hidden = 3;
  dims.feature = 2;
  dims.vocab = 6;
  Rng rng(31);
  Params p = Params::init(dims, 17);
  p.scale(6.0);
  Example ex = random_example(rng, dims, 4);

  SUBCASE("single-example batch equals the per-example gradient") {
    Params g1 = gradients(p, std::span<const Example>(&ex, 1), 16.0, true);
    std::vector<Example> batch = {ex, ex};
    Params g2 = gradients(p, batch, 16.0, true);
    auto r1 = g1.tensors();
    auto r2 = g2.tensors();
    for (std::size_t m = 0; m < r1.size(); ++m) {
      CHECK((*r1[m].tensor - *r2[m].tensor).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  SUBCASE("softmax denominator reaches unused output embeddings") {
    // Pick a token that is neither a target nor an input anywhere.
    int unused = 0;
    for (int y = 0; y < dims.vocab; ++y) {
      bool used = false;
      for (int t : ex.caption.tokens) used = used || t == y;
      if (!used) {
        unused = y;
        break;
      }
    }
    Params g = gradients(p, std::span<const Example>(&ex, 1), 16.0, true);
    CHECK(g.embed_out.col(unused).norm() > 0.0);   // denominator path
    CHECK(g.embed_in.col(unused).norm() == 0.0);   // never an input
  }

  SUBCASE("a token with vanishing probability gets a vanishing gradient") {
    Params q = p;
    // Early tokens always carry some probability mass under moderate logits;
    // crush one column far below the rest.
    q.embed_out.col(0).setConstant(-60.0);
    bool target_is_0 = false;
    for (int t : ex.caption.tokens) target_is_0 = target_is_0 || t == 0;
    if (!target_is_0) {
      Params g = gradients(q, std::span<const Example>(&ex, 1), 16.0, true);
      CHECK(g.embed_out.col(0).norm() < 1e-12);
    }
  }

  SUBCASE("empty batch is a data error") {
    CHECK_THROWS_AS(gradients(p, std::span<const Example>(), 16.0, true), DataError);
  }
}

TEST_CASE("gradients match finite differences") {
  // A compact sweep; the acceptance suite runs the full 24-fixture version.
  const std::array<int, 3> lengths = {1, 2, 5};
  for (int i = 0; i < 8; ++i) {
    ModelDims dims;
    dims.hidden = 3;
    dims.feature = 2;
    dims.vocab = 6;
    dims.cell = i % 2 == 0 ? CellKind::Gru : CellKind::Lstm;
    bool gated = (i / 2) % 2 == 0;
    double alpha = (i / 4) % 2 == 0 ? 1.0 : 16.0;
    Rng rng(1000003ull + static_cast<std::uint64_t>(i));
    Params p = Params::init(dims, rng.next());
    p.scale(6.0);
    Example ex = random_example(rng, dims, lengths[static_cast<std::size_t>(i % 3)]);
    double err = grad_check(p, ex, 1e-5, alpha, gated);
    CAPTURE(i);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("grad_check catches a corrupted gradient") {
  ModelDims dims;
  dims.hidden = 3;
  dims.feature = 2;
  dims.vocab = 6;
  Rng rng(8);
  Params p = Params::init(dims, 19);
  p.scale(6.0);
  Example ex = random_example(rng, dims, 3);

  Params good = gradients(p, std::span<const Example>(&ex, 1), 16.0, true);
  CHECK(fd_max_rel_err(p, ex, 16.0, true, good, 1e-5) < 1e-4);

  Params bad = good;
  bad.gate_key *= 2.0;  // deliberate corruption
  CHECK(fd_max_rel_err(p, ex, 16.0, true, bad, 1e-5) > 1e-1);

  CHECK_THROWS_AS(grad_check(p, ex, 0.0, 16.0, true), ConfigError);
  CHECK_THROWS_AS(grad_check(p, ex, 0.5, 16.0, true), ConfigError);
}
