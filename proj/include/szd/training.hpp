#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "szd/imaging.hpp"
#include "szd/model.hpp"

namespace szd {

struct TrainConfig {
  int batch_size = 128;
  double learning_rate = 0.001;
  std::string optimizer = "rmsprop";
  double rho = 0.9;
  double epsilon = 1e-8;
  bool dropout = false;
  std::array<double, 2> target_ratio{0.8, 0.2};  // (non-seizure, seizure)
  int patience_epochs = 1;                        // <= 0 disables early stopping
  int max_epochs = 30;
  int pretrain_epochs = 3;
  int ensemble_size = 3;
  double validation_fraction = 0.2;
  std::uint64_t seed = 1;
  int jobs = 1;

  void validate() const;
};

// Flat `key = value` text; unknown keys are rejected. See docs/config.md.
TrainConfig parse_train_config(std::string_view text);
std::string format_train_config(const TrainConfig& config);
// Hash of the canonical text form (jobs excluded), stored in checkpoints.
std::uint64_t config_hash(const TrainConfig& config);

// Keeps all positives; draws floor(n_pos * ratio_neg / ratio_pos) negatives
// without replacement. Returns sorted indices into `labels`.
std::vector<std::size_t> rebalance(std::span<const Label> labels,
                                   std::array<double, 2> target_ratio, std::uint64_t seed);

// q(c) proportional to p(c) * deploy(c) / train(c).
ProbPair prior_correct(ProbPair p, ProbPair train_prior, ProbPair deploy_prior);

// Stops after `patience` consecutive epochs whose metric fell below the
// previous epoch's. Tracks the best epoch (latest among equal maxima).
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}

  // Returns true when training should stop after this epoch.
  bool update(double metric);
  int best_epoch() const { return best_epoch_; }  // 1-based, 0 before any update
  double best_metric() const { return best_; }
  bool improved_last() const { return improved_last_; }

 private:
  int patience_;
  int epoch_ = 0;
  int best_epoch_ = 0;
  int declines_ = 0;
  double best_ = -1.0;
  double previous_ = -1.0;
  bool improved_last_ = false;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double validation_accuracy = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  bool stopped_early = false;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Normalized sequences plus their classes. Pretraining expands each sequence
// into its 30 images, all carrying the window's label.
struct SequenceSet {
  std::vector<const ImageSequence*> items;
  std::vector<int> labels;

  std::size_t size() const { return items.size(); }
  void add(const ImageSequence& seq);
};

// Mini-batch RMSprop over shuffled, seeded epochs. Validation accuracy is
// balanced accuracy (mean per-class recall) on `validation`.
TrainResult train_loop(const ModelParams& init, const SequenceSet& train,
                       const SequenceSet& validation, const TrainConfig& config,
                       const EpochCallback& on_epoch = {});

// Same loop, started from the weights of `base`.
TrainResult finetune(const ModelParams& base, const SequenceSet& patient_train,
                     const SequenceSet& patient_validation, const TrainConfig& config,
                     const EpochCallback& on_epoch = {});

// Trains the feature extractor with a temporary 64 -> 2 head on individual
// 1 s images. Returns extractor weights only (conv1, conv2, fv).
ModelParams pretrain_conv(const ModelParams& init, const SequenceSet& train,
                          const SequenceSet& validation, const TrainConfig& config,
                          const EpochCallback& on_epoch = {});

// Balanced accuracy (mean per-class recall) and plain accuracy of `params`.
double balanced_accuracy(const ModelParams& params, const SequenceSet& set, int jobs = 1);
double accuracy(const ModelParams& params, const SequenceSet& set, int jobs = 1);

class EnsembleModel {
 public:
  EnsembleModel() = default;
  EnsembleModel(std::vector<ModelParams> members, Normalizer normalizer, ProbPair train_prior,
                ProbPair deploy_prior);

  static EnsembleModel from_checkpoint(const Checkpoint& ckpt);
  Checkpoint to_checkpoint() const;

  const std::vector<ModelParams>& members() const { return members_; }
  const Normalizer& normalizer() const { return normalizer_; }
  ProbPair train_prior() const { return train_prior_; }
  ProbPair deploy_prior() const { return deploy_prior_; }

  // Mean of the members' softmax outputs on a normalized sequence.
  ProbPair mean_probability(const ImageSequence& normalized) const;
  // Mean, then prior correction. Input must be normalized.
  ProbPair predict_normalized(const ImageSequence& normalized) const;
  // Normalizes raw images first.
  ProbPair predict(const ImageSequence& raw) const;
  std::vector<ProbPair> predict_all(std::span<const ImageSequence> raw, int jobs = 1) const;

  std::uint64_t seed = 0;
  std::uint32_t epoch = 0;
  std::uint64_t config_hash = 0;
  std::vector<std::string> trained_patients;

 private:
  std::vector<ModelParams> members_;
  std::vector<Network> networks_;
  Normalizer normalizer_;
  ProbPair train_prior_{0.5, 0.5};
  ProbPair deploy_prior_{0.5, 0.5};
};

ProbPair ensemble_predict(const EnsembleModel& ensemble, const ImageSequence& normalized);

struct DetectorTrainingOptions {
  // Pretrain the feature extractor first and copy it into every member.
  bool pretrain = true;
  // Member m starts from init[m % init.size()]; fresh seeded weights if empty.
  std::vector<ModelParams> init;
  EpochCallback on_epoch;
  std::function<void(const std::string&)> log;
};

// End-to-end recipe on raw (unnormalized) training sequences: normalizer from
// the training data, balanced validation split, rebalancing, optional conv
// pretraining, `ensemble_size` members with derived seeds.
EnsembleModel train_detector(std::span<const ImageSequence> raw_train, const TrainConfig& config,
                             const DetectorTrainingOptions& options = {});

// Transfer learning: every member of `base` is trained further on one
// patient's raw sequences. The base normalizer is kept; priors are recomputed
// from the patient's data.
EnsembleModel finetune_detector(const EnsembleModel& base, std::span<const ImageSequence> raw_patient,
                                const TrainConfig& config, const DetectorTrainingOptions& options = {});

// Seeded balanced validation split: validation_fraction of positives (at least
// one) and as many negatives. Returns (train indices, validation indices).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> balanced_validation_split(
    std::span<const Label> labels, double fraction, std::uint64_t seed);

// Runs fn(0..count-1) on up to `jobs` threads; jobs <= 1 runs inline.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace szd
