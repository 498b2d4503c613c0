#include "gatecap/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <thread>

namespace gatecap {

void TrainConfig::validate() const {
  if (alpha <= 0.0) throw ConfigError("alpha must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  if (patience < 1) throw ConfigError("patience must be positive");
  if (max_epochs < 1) throw ConfigError("max epochs must be positive");
  if (patience > max_epochs) throw ConfigError("patience must not exceed max epochs");
  if (adam.lr <= 0.0 || adam.beta1 <= 0.0 || adam.beta1 >= 1.0 || adam.beta2 <= 0.0 ||
      adam.beta2 >= 1.0 || adam.eps <= 0.0) {
    throw ConfigError("invalid Adam hyperparameters");
  }
  if (grad_clip < 0.0) throw ConfigError("gradient clip must be >= 0");
  if (max_decode_len < 1) throw ConfigError("max decode length must be positive");
  if (threads < 1) throw ConfigError("thread count must be positive");
}

AdamOptimizer::AdamOptimizer(const AdamConfig& config, const Params& shape)
    : config_(config), first_(Params::zeros_like(shape)), second_(Params::zeros_like(shape)) {}

void AdamOptimizer::step(Params& params, const Params& grads) {
  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(t_));

  auto p_refs = params.tensors();
  auto g_refs = grads.tensors();
  auto m_refs = first_.tensors();
  auto v_refs = second_.tensors();
  for (std::size_t i = 0; i < p_refs.size(); ++i) {
    Mat& p = *p_refs[i].tensor;
    const Mat& g = *g_refs[i].tensor;
    Mat& m = *m_refs[i].tensor;
    Mat& v = *v_refs[i].tensor;
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    Mat m_hat = m / bias1;
    Mat v_hat = v / bias2;
    p.array() -= config_.lr * m_hat.array() / (v_hat.array().sqrt() + config_.eps);
  }
}

Example sample_training_example(const TrainingUnit& unit, const TrainData& data, Rng& rng) {
  if (unit.image_ids.empty() || unit.caption_ids.empty()) {
    throw DataError("training unit has no images or no captions");
  }
  int image_id = unit.image_ids[rng.index(unit.image_ids.size())];
  int caption_id = unit.caption_ids[rng.index(unit.caption_ids.size())];
  const ImageRecord& image = data.images.at(static_cast<std::size_t>(image_id));
  Example ex;
  ex.feature = image.feature;
  ex.caption = make_pseudo_caption(data.sentences.at(static_cast<std::size_t>(caption_id)),
                                   data.vocab, data.plurals, image.detected, unit.key);
  return ex;
}

Trainer::Trainer(const TrainConfig& config, const TrainData& data, Params initial)
    : config_(config),
      data_(data),
      params_(std::move(initial)),
      optimizer_(config.adam, params_),
      rng_(config.seed) {
  config_.validate();
  if (data_.units.empty()) throw DataError("no training units; nothing to train on");
  if (data_.vocab.size() != params_.dims.vocab) {
    throw ShapeError("vocabulary size does not match the model");
  }
}

EpochMetrics Trainer::run_epoch() {
  std::vector<std::size_t> order(data_.units.size());
  std::iota(order.begin(), order.end(), 0);
  rng_.shuffle(order);

  EpochMetrics metrics;
  long counted = 0;
  for (std::size_t start = 0; start < order.size();
       start += static_cast<std::size_t>(config_.batch_size)) {
    std::size_t end =
        std::min(order.size(), start + static_cast<std::size_t>(config_.batch_size));
    std::vector<Example> batch;
    batch.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) {
      const TrainingUnit& unit = data_.units[order[i]];
      try {
        batch.push_back(sample_training_example(unit, data_, rng_));
      } catch (const std::runtime_error& err) {
        std::string key = unit.key.size() == 2 ? unit.key[0] + "+" + unit.key[1] : unit.key[0];
        throw DataError("unit '" + key + "': " + err.what());
      }
    }

    BatchGradients batch_result = [&] {
      try {
        if (config_.threads <= 1 || batch.size() < 2) {
          return batch_gradients(params_, batch, config_.alpha, config_.gated,
                                 config_.pseudo_labels);
        }
        // Parallel workers over fixed chunks, partials summed in worker
        // order, so the result does not depend on scheduling.
        std::size_t n_workers =
            std::min<std::size_t>(static_cast<std::size_t>(config_.threads), batch.size());
        std::size_t chunk = (batch.size() + n_workers - 1) / n_workers;
        std::vector<BatchGradients> partials;
        std::vector<std::size_t> sizes;
        for (std::size_t w = 0; w < n_workers; ++w) {
          std::size_t b = w * chunk;
          std::size_t e = std::min(batch.size(), b + chunk);
          if (b >= e) break;
          partials.emplace_back();
          sizes.push_back(e - b);
        }
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < partials.size(); ++w) {
          std::size_t b = w * chunk;
          std::size_t e = std::min(batch.size(), b + chunk);
          pool.emplace_back([&, w, b, e] {
            partials[w] = batch_gradients(
                params_, std::span<const Example>(batch.data() + b, e - b), config_.alpha,
                config_.gated, config_.pseudo_labels);
          });
        }
        for (auto& th : pool) th.join();
        BatchGradients total{Params::zeros_like(params_)};
        for (std::size_t w = 0; w < partials.size(); ++w) {
          double weight = static_cast<double>(sizes[w]) / static_cast<double>(batch.size());
          total.grads.accumulate(partials[w].grads, weight);
          total.loss += weight * partials[w].loss;
          total.word_loss += weight * partials[w].word_loss;
          total.gate_loss += weight * partials[w].gate_loss;
        }
        return total;
      } catch (const std::runtime_error& err) {
        const TrainingUnit& unit = data_.units[order[start]];
        std::string key = unit.key.size() == 2 ? unit.key[0] + "+" + unit.key[1] : unit.key[0];
        throw NumericError("batch starting at unit '" + key + "': " + err.what());
      }
    }();

    if (config_.grad_clip > 0.0) {
      double norm = std::sqrt(batch_result.grads.squared_norm());
      if (norm > config_.grad_clip) batch_result.grads.scale(config_.grad_clip / norm);
    }
    optimizer_.step(params_, batch_result.grads);

    double weight = static_cast<double>(batch.size());
    metrics.loss += batch_result.loss * weight;
    metrics.word_loss += batch_result.word_loss * weight;
    metrics.gate_loss += batch_result.gate_loss * weight;
    counted += static_cast<long>(batch.size());
  }
  metrics.loss /= static_cast<double>(counted);
  metrics.word_loss /= static_cast<double>(counted);
  metrics.gate_loss /= static_cast<double>(counted);
  return metrics;
}

double Trainer::validation_metric() const {
  DecodeOptions options;
  options.max_len = config_.max_decode_len;
  options.unique_objects = config_.unique_objects;
  options.gated = config_.gated;

  BowAccumulator acc;
  for (std::size_t i = 0; i < data_.val_images.size(); ++i) {
    DecodedCaption caption = greedy_decode(params_, data_.val_images[i].feature, data_.vocab,
                                           data_.plurals, options);
    std::vector<std::vector<std::string>> refs;
    for (const auto& raw : data_.val_references[i]) refs.push_back(tokenize(raw));
    std::set<std::string> object_words;
    for (const auto& label : data_.val_images[i].detected) {
      object_words.insert(label);
      std::string plural = data_.plurals.plural_of(label);
      if (!plural.empty()) object_words.insert(plural);
    }
    acc.add(caption.tokens, refs, object_words);
  }
  BowResult bow = acc.joint();
  double total = 0.0;
  int groups = 0;
  if (bow.detected.n_pairs > 0) {
    total += bow.detected.f1;
    ++groups;
  }
  if (bow.others.n_pairs > 0) {
    total += bow.others.f1;
    ++groups;
  }
  return groups == 0 ? 0.0 : total / static_cast<double>(groups);
}

TrainResult Trainer::train() {
  if (data_.val_images.empty()) {
    throw ConfigError("training requires a nonempty validation set with references");
  }
  if (data_.val_images.size() != data_.val_references.size()) {
    throw DataError("validation images and reference rows differ in count");
  }

  TrainResult result;
  result.best = params_;
  result.best_epoch = 0;
  result.best_metric = -1.0;

  for (epoch_ = 1; epoch_ <= config_.max_epochs; ++epoch_) {
    EpochMetrics metrics = run_epoch();
    double val = validation_metric();
    result.history.push_back({epoch_, metrics.loss, metrics.word_loss, metrics.gate_loss, val});
    if (val > result.best_metric) {
      result.best_metric = val;
      result.best_epoch = epoch_;
      result.best = params_;
    }
    if (epoch_ - result.best_epoch >= config_.patience) break;
  }
  return result;
}

void write_history_csv(const std::string& path, const std::vector<HistoryRow>& history) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write history: " + path);
  out << "epoch,L,L_g,L_f,val_metric\n";
  char buf[128];
  for (const auto& row : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g\n", row.epoch, row.loss,
                  row.word_loss, row.gate_loss, row.val_metric);
    out << buf;
  }
}

}  // namespace gatecap
