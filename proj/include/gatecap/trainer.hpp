#pragma once

#include "gatecap/eval.hpp"
#include "gatecap/miner.hpp"
#include "gatecap/model.hpp"

#include <optional>
#include <string>
#include <vector>

namespace gatecap {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  double alpha = 16.0;     // weight on the reliable-word gate loss term
  int batch_size = 8;      // training units per update
  int patience = 20;       // epochs without validation improvement before stopping
  int max_epochs = 200;
  AdamConfig adam;
  std::uint64_t seed = 0;
  bool gated = true;
  bool pseudo_labels = true;  // gate supervision; off reproduces the w/o-pseudoL ablation
  double grad_clip = 0.0;  // max gradient norm; 0 disables clipping
  int max_decode_len = 20; // for the per-epoch validation decode
  bool unique_objects = true;
  int threads = 1;         // parallel gradient workers per batch

  void validate() const;
};

// First/second-moment Adam with bias correction, applied tensor-by-tensor.
class AdamOptimizer {
 public:
  AdamOptimizer(const AdamConfig& config, const Params& shape);

  void step(Params& params, const Params& grads);
  long updates() const { return t_; }

 private:
  AdamConfig config_;
  Params first_;
  Params second_;
  long t_ = 0;
};

// Everything a training run needs, already loaded and linked.
struct TrainData {
  Vocab vocab;
  PluralMap plurals;
  std::vector<std::vector<std::string>> sentences;  // tokenized corpus
  std::vector<ImageRecord> images;                  // training images
  std::vector<TrainingUnit> units;
  std::vector<ImageRecord> val_images;
  std::vector<std::vector<std::string>> val_references;  // raw strings per image
  std::set<std::string> categories;
};

// One unit instantiated for one update: a sampled image paired with a sampled
// mined sentence, with the reliable-word labels bound to that image.
Example sample_training_example(const TrainingUnit& unit, const TrainData& data, Rng& rng);

struct EpochMetrics {
  double loss = 0.0;
  double word_loss = 0.0;
  double gate_loss = 0.0;
};

struct HistoryRow {
  int epoch = 0;
  double loss = 0.0;
  double word_loss = 0.0;
  double gate_loss = 0.0;
  double val_metric = 0.0;
};

struct TrainResult {
  Params best;
  int best_epoch = 0;
  double best_metric = 0.0;
  std::vector<HistoryRow> history;
};

class Trainer {
 public:
  Trainer(const TrainConfig& config, const TrainData& data, Params initial);

  // One pass over a seed-shuffled permutation of the units, grouped into
  // batches of batch_size (one sampled example per unit; the last partial
  // batch still trains).
  EpochMetrics run_epoch();

  // Full loop with per-epoch validation decoding and early stopping on the
  // mean bag-of-words F1 (detected and others averaged).
  TrainResult train();

  double validation_metric() const;
  const Params& params() const { return params_; }
  long updates() const { return optimizer_.updates(); }

 private:
  TrainConfig config_;
  const TrainData& data_;
  Params params_;
  AdamOptimizer optimizer_;
  Rng rng_;
  int epoch_ = 0;
};

// "epoch,L,L_g,L_f,val_metric" rows.
void write_history_csv(const std::string& path, const std::vector<HistoryRow>& history);

}  // namespace gatecap
