#include "szd/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <charconv>
#include <exception>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "szd/error.hpp"
#include "szd/random.hpp"

namespace szd {

namespace {

// Sequences per gradient chunk. Chunk sums are added in chunk order, so the
// result does not depend on how many threads computed them.
constexpr std::size_t kChunk = 8;
// Pretraining processes single images, so chunks are larger.
constexpr std::size_t kImageChunk = 32;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename N>
N parse_number(const std::string& key, const std::string& value) {
  N out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    fail(ErrorKind::kInvalidArgument, "config: bad value for " + key + ": '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  fail(ErrorKind::kInvalidArgument, "config: bad boolean for " + key + ": '" + value + "'");
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

int argmax(std::span<const float> z) {
  return z[1] > z[0] ? 1 : 0;
}

// Flattened gradient buffer laid out like ModelParams.
struct GradBuffer {
  std::vector<std::vector<float>> parts;

  explicit GradBuffer(const ModelParams& params) {
    for (const auto& e : params.entries) parts.emplace_back(e.values.size(), 0.0f);
  }
  void add(const GradBuffer& other) {
    for (std::size_t i = 0; i < parts.size(); ++i) {
      auto& dst = parts[i];
      const auto& src = other.parts[i];
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  }
};

struct ChunkResult {
  GradBuffer grad;
  double loss = 0.0;
  std::size_t correct = 0;
};

void collect_grads(const ModelParams& params, const BoundParams<float>& bound, GradBuffer& out) {
  for (std::size_t i = 0; i < params.entries.size(); ++i) {
    auto g = bound.at(params.entries[i].name).grad();
    if (g.empty()) continue;
    auto& dst = out.parts[i];
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += g[j];
  }
}

// One optimizer step from per-chunk results; gradient is the batch mean.
void apply_step(ModelParams& params, std::vector<ChunkResult>& chunks, std::size_t batch_len,
                std::vector<std::vector<float>>& mean_square, const TrainConfig& config) {
  GradBuffer total = std::move(chunks.front().grad);
  for (std::size_t c = 1; c < chunks.size(); ++c) total.add(chunks[c].grad);
  const float inv = 1.0f / static_cast<float>(batch_len);
  const ad::RmspropConfig rc{config.learning_rate, config.rho, config.epsilon};
  for (std::size_t i = 0; i < params.entries.size(); ++i) {
    for (auto& g : total.parts[i]) g *= inv;
    ad::rmsprop_step<float>(params.entries[i].values, total.parts[i], mean_square[i], rc);
  }
}

std::vector<std::vector<float>> zero_state(const ModelParams& params) {
  std::vector<std::vector<float>> out;
  for (const auto& e : params.entries) out.emplace_back(e.values.size(), 0.0f);
  return out;
}

// Per-class recall averaged over the classes present.
double balanced_from_counts(const std::array<std::size_t, 2>& hit,
                            const std::array<std::size_t, 2>& total) {
  double sum = 0.0;
  int classes = 0;
  for (int c = 0; c < 2; ++c) {
    if (total[c] == 0) continue;
    sum += static_cast<double>(hit[c]) / static_cast<double>(total[c]);
    ++classes;
  }
  return classes == 0 ? 0.0 : sum / classes;
}

void require_nonempty(const SequenceSet& set, const char* what) {
  if (set.size() == 0) fail(ErrorKind::kEmptySplit, std::string(what) + " split is empty");
}

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  return order;
}

ad::Tensor image_batch(const SequenceSet& set, std::span<const std::size_t> ids) {
  std::vector<float> data(ids.size() * kImageSize);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto frame = set.items[ids[i] / kSubWindows]->frame(static_cast<int>(ids[i] % kSubWindows));
    std::copy(frame.begin(), frame.end(), data.begin() + static_cast<std::ptrdiff_t>(i * kImageSize));
  }
  return ad::Tensor::constant({static_cast<int>(ids.size()), kBandCount, kGridSize, kGridSize},
                              std::move(data));
}

double image_balanced_accuracy(const ModelParams& params, const SequenceSet& set, int jobs) {
  const auto bound = bind(params, false);
  const std::size_t n_images = set.size() * kSubWindows;
  const std::size_t n_chunks = (n_images + kImageChunk - 1) / kImageChunk;
  std::vector<std::array<std::size_t, 4>> counts(n_chunks, {0, 0, 0, 0});
  parallel_for(n_chunks, jobs, [&](std::size_t c) {
    const std::size_t begin = c * kImageChunk;
    const std::size_t end = std::min(n_images, begin + kImageChunk);
    std::vector<std::size_t> ids;
    for (std::size_t i = begin; i < end; ++i) ids.push_back(i);
    auto z = pretrain_logits(bound, image_batch(set, ids));
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const int y = set.labels[ids[i] / kSubWindows];
      const int pred = argmax(z.data().subspan(i * 2, 2));
      counts[c][static_cast<std::size_t>(y)]++;
      if (pred == y) counts[c][2 + static_cast<std::size_t>(y)]++;
    }
  });
  std::array<std::size_t, 2> hit{0, 0}, total{0, 0};
  for (const auto& k : counts) {
    total[0] += k[0];
    total[1] += k[1];
    hit[0] += k[2];
    hit[1] += k[3];
  }
  return balanced_from_counts(hit, total);
}

}  // namespace

void TrainConfig::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorKind::kInvalidArgument, "config: " + m); };
  if (batch_size < 1) bad("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) bad("learning_rate must be positive");
  if (optimizer != "rmsprop") bad("optimizer must be rmsprop");
  if (!(rho > 0.0 && rho < 1.0)) bad("rho must lie in (0, 1)");
  if (!(epsilon > 0.0)) bad("epsilon must be positive");
  if (dropout) bad("dropout is not supported");
  if (!(target_ratio[0] > 0.0 && target_ratio[1] > 0.0)) bad("target_ratio entries must be positive");
  if (std::abs(target_ratio[0] + target_ratio[1] - 1.0) > 1e-9) bad("target_ratio must sum to 1");
  if (max_epochs < 0) bad("max_epochs must be >= 0");
  if (pretrain_epochs < 0) bad("pretrain_epochs must be >= 0");
  if (ensemble_size < 1) bad("ensemble_size must be >= 1");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    bad("validation_fraction must lie in (0, 1)");
  }
  if (jobs < 1) bad("jobs must be >= 1");
}

TrainConfig parse_train_config(std::string_view text) {
  TrainConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::kUnparseableLine, "config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key == "batch_size") c.batch_size = parse_number<int>(key, value);
    else if (key == "learning_rate") c.learning_rate = parse_number<double>(key, value);
    else if (key == "optimizer") c.optimizer = value;
    else if (key == "rho") c.rho = parse_number<double>(key, value);
    else if (key == "epsilon") c.epsilon = parse_number<double>(key, value);
    else if (key == "dropout") c.dropout = parse_bool(key, value);
    else if (key == "target_ratio") {
      const auto comma = value.find(',');
      if (comma == std::string::npos) fail(ErrorKind::kInvalidArgument, "config: target_ratio needs two values");
      c.target_ratio = {parse_number<double>(key, trim(std::string_view(value).substr(0, comma))),
                        parse_number<double>(key, trim(std::string_view(value).substr(comma + 1)))};
    } else if (key == "patience_epochs") c.patience_epochs = parse_number<int>(key, value);
    else if (key == "max_epochs") c.max_epochs = parse_number<int>(key, value);
    else if (key == "pretrain_epochs") c.pretrain_epochs = parse_number<int>(key, value);
    else if (key == "ensemble_size") c.ensemble_size = parse_number<int>(key, value);
    else if (key == "validation_fraction") c.validation_fraction = parse_number<double>(key, value);
    else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "jobs") c.jobs = parse_number<int>(key, value);
    else fail(ErrorKind::kInvalidArgument, "config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

namespace {

std::string format_without_jobs(const TrainConfig& c) {
  std::ostringstream os;
  os << "batch_size = " << c.batch_size << "\n"
     << "learning_rate = " << format_double(c.learning_rate) << "\n"
     << "optimizer = " << c.optimizer << "\n"
     << "rho = " << format_double(c.rho) << "\n"
     << "epsilon = " << format_double(c.epsilon) << "\n"
     << "dropout = " << (c.dropout ? "true" : "false") << "\n"
     << "target_ratio = " << format_double(c.target_ratio[0]) << ", "
     << format_double(c.target_ratio[1]) << "\n"
     << "patience_epochs = " << c.patience_epochs << "\n"
     << "max_epochs = " << c.max_epochs << "\n"
     << "pretrain_epochs = " << c.pretrain_epochs << "\n"
     << "ensemble_size = " << c.ensemble_size << "\n"
     << "validation_fraction = " << format_double(c.validation_fraction) << "\n"
     << "seed = " << c.seed << "\n";
  return os.str();
}

}  // namespace

std::string format_train_config(const TrainConfig& config) {
  return format_without_jobs(config) + "jobs = " + std::to_string(config.jobs) + "\n";
}

std::uint64_t config_hash(const TrainConfig& config) {
  return fnv1a(format_without_jobs(config));
}

std::vector<std::size_t> rebalance(std::span<const Label> labels,
                                   std::array<double, 2> target_ratio, std::uint64_t seed) {
  if (!(target_ratio[0] > 0.0 && target_ratio[1] > 0.0)) {
    fail(ErrorKind::kInvalidArgument, "target_ratio entries must be positive");
  }
  std::vector<std::size_t> positives, negatives;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    (labels[i] == Label::kSeizure ? positives : negatives).push_back(i);
  }
  if (positives.empty()) fail(ErrorKind::kNoPositives, "no seizure samples to rebalance");
  const double want =
      static_cast<double>(positives.size()) * target_ratio[0] / target_ratio[1];
  const auto keep = static_cast<std::size_t>(std::floor(want + 1e-9));
  if (negatives.size() > keep) {
    Rng rng(seed);
    rng.shuffle(negatives);
    negatives.resize(keep);
  }
  std::vector<std::size_t> out = positives;
  out.insert(out.end(), negatives.begin(), negatives.end());
  std::sort(out.begin(), out.end());
  return out;
}

ProbPair prior_correct(ProbPair p, ProbPair train_prior, ProbPair deploy_prior) {
  for (int c = 0; c < 2; ++c) {
    if (!(train_prior[c] > 0.0) || !(deploy_prior[c] > 0.0)) {
      fail(ErrorKind::kZeroPrior, "class priors must be strictly positive");
    }
  }
  ProbPair q{p[0] * deploy_prior[0] / train_prior[0], p[1] * deploy_prior[1] / train_prior[1]};
  const double s = q[0] + q[1];
  if (!(s > 0.0)) return p;
  return {q[0] / s, q[1] / s};
}

bool EarlyStopper::update(double metric) {
  ++epoch_;
  improved_last_ = false;
  if (epoch_ == 1 || metric >= best_) {
    best_ = metric;
    best_epoch_ = epoch_;
    improved_last_ = true;
  }
  declines_ = (epoch_ > 1 && metric < previous_) ? declines_ + 1 : 0;
  previous_ = metric;
  return patience_ > 0 && declines_ >= patience_;
}

void SequenceSet::add(const ImageSequence& seq) {
  items.push_back(&seq);
  labels.push_back(static_cast<int>(seq.label));
}

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(count, jobs < 1 ? 1 : static_cast<std::size_t>(jobs));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

TrainResult train_loop(const ModelParams& init, const SequenceSet& train,
                       const SequenceSet& validation, const TrainConfig& config,
                       const EpochCallback& on_epoch) {
  config.validate();
  require_nonempty(train, "training");
  require_nonempty(validation, "validation");

  TrainResult result;
  result.params = init;
  ModelParams current = init;
  auto mean_square = zero_state(current);
  EarlyStopper stopper(config.patience_epochs);
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto order = shuffled_order(train.size(), derive_seed(config.seed, 0x7472, static_cast<std::uint64_t>(epoch)));
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += batch) {
      const std::size_t b1 = std::min(order.size(), b0 + batch);
      const std::size_t n_chunks = (b1 - b0 + kChunk - 1) / kChunk;
      std::vector<ChunkResult> chunks;
      chunks.reserve(n_chunks);
      for (std::size_t c = 0; c < n_chunks; ++c) chunks.push_back({GradBuffer(current), 0.0, 0});
      parallel_for(n_chunks, config.jobs, [&](std::size_t c) {
        const auto bound = bind(current, true);
        const std::size_t s0 = b0 + c * kChunk;
        const std::size_t s1 = std::min(b1, s0 + kChunk);
        for (std::size_t s = s0; s < s1; ++s) {
          const std::size_t id = order[s];
          auto z = sequence_logits(bound, sequence_tensor(*train.items[id]));
          auto loss = ad::softmax_cross_entropy(z, train.labels[id]);
          ad::backward(loss);
          chunks[c].loss += loss.item();
          if (argmax(z.data()) == train.labels[id]) chunks[c].correct++;
        }
        collect_grads(current, bound, chunks[c].grad);
      });
      for (const auto& c : chunks) {
        loss_sum += c.loss;
        correct += c.correct;
      }
      apply_step(current, chunks, b1 - b0, mean_square, config);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train.size());
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(train.size());
    rec.validation_accuracy = balanced_accuracy(current, validation, config.jobs);
    result.history.push_back(rec);
    const bool stop = stopper.update(rec.validation_accuracy);
    if (stopper.improved_last()) {
      result.params = current;
      result.best_epoch = epoch;
    }
    if (on_epoch) on_epoch(rec);
    if (stop) {
      result.stopped_early = epoch < config.max_epochs;
      break;
    }
  }
  return result;
}

TrainResult finetune(const ModelParams& base, const SequenceSet& patient_train,
                     const SequenceSet& patient_validation, const TrainConfig& config,
                     const EpochCallback& on_epoch) {
  return train_loop(base, patient_train, patient_validation, config, on_epoch);
}

ModelParams pretrain_conv(const ModelParams& init, const SequenceSet& train,
                          const SequenceSet& validation, const TrainConfig& config,
                          const EpochCallback& on_epoch) {
  config.validate();
  require_nonempty(train, "training");
  require_nonempty(validation, "validation");

  ModelParams current = attach_pretrain_head(init, derive_seed(config.seed, 0x6864));
  ModelParams best = current;
  auto mean_square = zero_state(current);
  EarlyStopper stopper(config.patience_epochs);
  const std::size_t n_images = train.size() * kSubWindows;
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.pretrain_epochs; ++epoch) {
    const auto order = shuffled_order(n_images, derive_seed(config.seed, 0x7074, static_cast<std::uint64_t>(epoch)));
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b0 = 0; b0 < n_images; b0 += batch) {
      const std::size_t b1 = std::min(n_images, b0 + batch);
      const std::size_t n_chunks = (b1 - b0 + kImageChunk - 1) / kImageChunk;
      std::vector<ChunkResult> chunks;
      chunks.reserve(n_chunks);
      for (std::size_t c = 0; c < n_chunks; ++c) chunks.push_back({GradBuffer(current), 0.0, 0});
      parallel_for(n_chunks, config.jobs, [&](std::size_t c) {
        const auto bound = bind(current, true);
        const std::size_t s0 = b0 + c * kImageChunk;
        const std::size_t s1 = std::min(b1, s0 + kImageChunk);
        std::span<const std::size_t> ids(order.data() + s0, s1 - s0);
        std::vector<int> labels;
        for (auto id : ids) labels.push_back(train.labels[id / kSubWindows]);
        auto z = pretrain_logits(bound, image_batch(train, ids));
        auto loss = ad::softmax_cross_entropy(z, std::span<const int>(labels));
        ad::backward(loss);
        chunks[c].loss = loss.item();
        for (std::size_t i = 0; i < ids.size(); ++i) {
          if (argmax(z.data().subspan(i * 2, 2)) == labels[i]) chunks[c].correct++;
        }
        collect_grads(current, bound, chunks[c].grad);
      });
      for (const auto& c : chunks) {
        loss_sum += c.loss;
        correct += c.correct;
      }
      apply_step(current, chunks, b1 - b0, mean_square, config);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(n_images);
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(n_images);
    rec.validation_accuracy = image_balanced_accuracy(current, validation, config.jobs);
    const bool stop = stopper.update(rec.validation_accuracy);
    if (stopper.improved_last()) best = current;
    if (on_epoch) on_epoch(rec);
    if (stop) break;
  }
  return feature_extractor_only(best);
}

namespace {

std::array<std::size_t, 4> sequence_counts(const Network& net, const SequenceSet& set,
                                           std::size_t begin, std::size_t end) {
  std::array<std::size_t, 4> k{0, 0, 0, 0};
  for (std::size_t i = begin; i < end; ++i) {
    const auto p = net.forward_sequence(*set.items[i]);
    const int pred = p[1] > p[0] ? 1 : 0;
    const auto y = static_cast<std::size_t>(set.labels[i]);
    k[y]++;
    if (pred == set.labels[i]) k[2 + y]++;
  }
  return k;
}

std::array<std::size_t, 4> counts_for(const ModelParams& params, const SequenceSet& set, int jobs) {
  const Network net(params);
  const std::size_t n_chunks = (set.size() + kChunk - 1) / kChunk;
  std::vector<std::array<std::size_t, 4>> parts(n_chunks);
  parallel_for(n_chunks, jobs, [&](std::size_t c) {
    parts[c] = sequence_counts(net, set, c * kChunk, std::min(set.size(), (c + 1) * kChunk));
  });
  std::array<std::size_t, 4> k{0, 0, 0, 0};
  for (const auto& p : parts) {
    for (int i = 0; i < 4; ++i) k[i] += p[i];
  }
  return k;
}

}  // namespace

double balanced_accuracy(const ModelParams& params, const SequenceSet& set, int jobs) {
  const auto k = counts_for(params, set, jobs);
  return balanced_from_counts({k[2], k[3]}, {k[0], k[1]});
}

double accuracy(const ModelParams& params, const SequenceSet& set, int jobs) {
  if (set.size() == 0) return 0.0;
  const auto k = counts_for(params, set, jobs);
  return static_cast<double>(k[2] + k[3]) / static_cast<double>(set.size());
}

EnsembleModel::EnsembleModel(std::vector<ModelParams> members, Normalizer normalizer,
                             ProbPair train_prior, ProbPair deploy_prior)
    : members_(std::move(members)),
      normalizer_(normalizer),
      train_prior_(train_prior),
      deploy_prior_(deploy_prior) {
  if (members_.empty()) fail(ErrorKind::kInvalidArgument, "ensemble needs at least one member");
  for (const auto& m : members_) {
    if (m.entries.size() != members_.front().entries.size()) {
      fail(ErrorKind::kShapeMismatch, "ensemble members differ in layout");
    }
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
      if (m.entries[i].name != members_.front().entries[i].name ||
          m.entries[i].shape != members_.front().entries[i].shape) {
        fail(ErrorKind::kShapeMismatch, "ensemble members differ in parameter " + m.entries[i].name);
      }
    }
    networks_.emplace_back(m);
  }
  prior_correct({0.5, 0.5}, train_prior_, deploy_prior_);  // validates the priors
}

EnsembleModel EnsembleModel::from_checkpoint(const Checkpoint& ckpt) {
  EnsembleModel e(ckpt.members, ckpt.normalizer, ckpt.train_prior, ckpt.deploy_prior);
  e.seed = ckpt.seed;
  e.epoch = ckpt.epoch;
  e.config_hash = ckpt.config_hash;
  e.trained_patients = ckpt.trained_patients;
  return e;
}

Checkpoint EnsembleModel::to_checkpoint() const {
  Checkpoint c;
  c.members = members_;
  c.normalizer = normalizer_;
  c.train_prior = train_prior_;
  c.deploy_prior = deploy_prior_;
  c.seed = seed;
  c.epoch = epoch;
  c.config_hash = config_hash;
  c.trained_patients = trained_patients;
  return c;
}

ProbPair EnsembleModel::mean_probability(const ImageSequence& normalized) const {
  ProbPair sum{0.0, 0.0};
  for (const auto& net : networks_) {
    const auto p = net.forward_sequence(normalized);
    sum[0] += p[0];
    sum[1] += p[1];
  }
  const auto n = static_cast<double>(networks_.size());
  return {sum[0] / n, sum[1] / n};
}

ProbPair EnsembleModel::predict_normalized(const ImageSequence& normalized) const {
  return prior_correct(mean_probability(normalized), train_prior_, deploy_prior_);
}

ProbPair EnsembleModel::predict(const ImageSequence& raw) const {
  return predict_normalized(normalizer_.applied(raw));
}

std::vector<ProbPair> EnsembleModel::predict_all(std::span<const ImageSequence> raw, int jobs) const {
  std::vector<ProbPair> out(raw.size());
  parallel_for(raw.size(), jobs, [&](std::size_t i) { out[i] = predict(raw[i]); });
  return out;
}

ProbPair ensemble_predict(const EnsembleModel& ensemble, const ImageSequence& normalized) {
  return ensemble.predict_normalized(normalized);
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> balanced_validation_split(
    std::span<const Label> labels, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> positives, negatives;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    (labels[i] == Label::kSeizure ? positives : negatives).push_back(i);
  }
  if (positives.size() < 2 || negatives.size() < 2) {
    fail(ErrorKind::kEmptySplit, "need at least two samples of each class for a validation split");
  }
  Rng rng(seed);
  rng.shuffle(positives);
  rng.shuffle(negatives);
  auto n_val = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(positives.size())));
  n_val = std::clamp<std::size_t>(n_val, 1, positives.size() - 1);
  n_val = std::min(n_val, negatives.size() - 1);
  std::vector<std::size_t> val(positives.begin(), positives.begin() + static_cast<std::ptrdiff_t>(n_val));
  val.insert(val.end(), negatives.begin(), negatives.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(positives.begin() + static_cast<std::ptrdiff_t>(n_val), positives.end());
  train.insert(train.end(), negatives.begin() + static_cast<std::ptrdiff_t>(n_val), negatives.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  return {std::move(train), std::move(val)};
}

namespace {

// Normalized, rebalanced training set and balanced validation set.
struct PreparedData {
  std::vector<ImageSequence> train;
  std::vector<ImageSequence> validation;
  SequenceSet train_set;
  SequenceSet validation_set;
  ProbPair train_prior;
  ProbPair deploy_prior;
};

PreparedData prepare(std::span<const ImageSequence> raw, const Normalizer& normalizer,
                     const TrainConfig& config) {
  std::vector<Label> labels;
  labels.reserve(raw.size());
  std::size_t n_pos = 0;
  for (const auto& s : raw) {
    labels.push_back(s.label);
    if (s.label == Label::kSeizure) ++n_pos;
  }
  if (n_pos == 0) fail(ErrorKind::kNoPositives, "training data holds no seizure windows");
  auto [train_ids, val_ids] =
      balanced_validation_split(labels, config.validation_fraction, derive_seed(config.seed, 1));
  std::vector<Label> train_labels;
  for (auto i : train_ids) train_labels.push_back(labels[i]);
  const auto kept = rebalance(train_labels, config.target_ratio, derive_seed(config.seed, 2));

  PreparedData d;
  d.train.reserve(kept.size());
  std::size_t kept_pos = 0;
  for (auto k : kept) {
    d.train.push_back(normalizer.applied(raw[train_ids[k]]));
    if (d.train.back().label == Label::kSeizure) ++kept_pos;
  }
  d.validation.reserve(val_ids.size());
  for (auto i : val_ids) d.validation.push_back(normalizer.applied(raw[i]));
  for (const auto& s : d.train) d.train_set.add(s);
  for (const auto& s : d.validation) d.validation_set.add(s);
  const double train_pos = static_cast<double>(kept_pos) / static_cast<double>(d.train.size());
  const double deploy_pos = static_cast<double>(n_pos) / static_cast<double>(raw.size());
  d.train_prior = {1.0 - train_pos, train_pos};
  d.deploy_prior = {1.0 - deploy_pos, deploy_pos};
  return d;
}

std::vector<std::string> patients_in(std::span<const ImageSequence> raw) {
  std::set<std::string> patients;
  for (const auto& s : raw) patients.insert(s.patient_id);
  return {patients.begin(), patients.end()};
}

}  // namespace

EnsembleModel train_detector(std::span<const ImageSequence> raw_train, const TrainConfig& config,
                             const DetectorTrainingOptions& options) {
  config.validate();
  auto log = [&](const std::string& m) {
    if (options.log) options.log(m);
  };
  const Normalizer normalizer = Normalizer::fit(raw_train);
  const PreparedData data = prepare(raw_train, normalizer, config);
  log("training set: " + std::to_string(data.train.size()) + " sequences, validation: " +
      std::to_string(data.validation.size()));

  auto member_init = [&](int m) {
    return options.init.empty()
               ? initialize_model(derive_seed(config.seed, 4, static_cast<std::uint64_t>(m)))
               : options.init[static_cast<std::size_t>(m) % options.init.size()];
  };

  std::optional<ModelParams> extractor;
  if (options.pretrain && config.pretrain_epochs > 0) {
    log("pretraining convolutional layers");
    const ModelParams start =
        options.init.empty() ? initialize_model(derive_seed(config.seed, 3)) : options.init.front();
    extractor = pretrain_conv(start, data.train_set, data.validation_set, config,
                              [&](const EpochRecord& r) {
                                log("  pretrain epoch " + std::to_string(r.epoch) + " loss " +
                                    format_double(r.train_loss) + " val " +
                                    format_double(r.validation_accuracy));
                              });
  }

  std::vector<ModelParams> members;
  int last_epoch = 0;
  for (int m = 0; m < config.ensemble_size; ++m) {
    ModelParams init = member_init(m);
    if (extractor) copy_feature_extractor(*extractor, init);
    TrainConfig member_cfg = config;
    member_cfg.seed = derive_seed(config.seed, 5, static_cast<std::uint64_t>(m));
    log("training member " + std::to_string(m + 1) + "/" + std::to_string(config.ensemble_size));
    auto result = train_loop(init, data.train_set, data.validation_set, member_cfg,
                             [&](const EpochRecord& r) {
                               log("  epoch " + std::to_string(r.epoch) + " loss " +
                                   format_double(r.train_loss) + " train acc " +
                                   format_double(r.train_accuracy) + " val " +
                                   format_double(r.validation_accuracy));
                               if (options.on_epoch) options.on_epoch(r);
                             });
    last_epoch = std::max(last_epoch, result.best_epoch);
    members.push_back(std::move(result.params));
  }

  EnsembleModel model(std::move(members), normalizer, data.train_prior, data.deploy_prior);
  model.seed = config.seed;
  model.epoch = static_cast<std::uint32_t>(last_epoch);
  model.config_hash = config_hash(config);
  model.trained_patients = patients_in(raw_train);
  return model;
}

EnsembleModel finetune_detector(const EnsembleModel& base, std::span<const ImageSequence> raw_patient,
                                const TrainConfig& config, const DetectorTrainingOptions& options) {
  config.validate();
  const PreparedData data = prepare(raw_patient, base.normalizer(), config);
  std::vector<ModelParams> members;
  int last_epoch = 0;
  for (std::size_t m = 0; m < base.members().size(); ++m) {
    TrainConfig member_cfg = config;
    member_cfg.seed = derive_seed(config.seed, 6, m);
    if (options.log) options.log("fine-tuning member " + std::to_string(m + 1));
    auto result = finetune(base.members()[m], data.train_set, data.validation_set, member_cfg,
                           [&](const EpochRecord& r) {
                             if (options.log) {
                               options.log("  epoch " + std::to_string(r.epoch) + " loss " +
                                           format_double(r.train_loss) + " val " +
                                           format_double(r.validation_accuracy));
                             }
                             if (options.on_epoch) options.on_epoch(r);
                           });
    last_epoch = std::max(last_epoch, result.best_epoch);
    members.push_back(result.best_epoch == 0 ? base.members()[m] : std::move(result.params));
  }
  EnsembleModel model(std::move(members), base.normalizer(), data.train_prior, data.deploy_prior);
  model.seed = config.seed;
  model.epoch = base.epoch + static_cast<std::uint32_t>(last_epoch);
  model.config_hash = config_hash(config);
  std::set<std::string> patients(base.trained_patients.begin(), base.trained_patients.end());
  for (const auto& p : patients_in(raw_patient)) patients.insert(p);
  model.trained_patients.assign(patients.begin(), patients.end());
  return model;
}

}  // namespace szd
