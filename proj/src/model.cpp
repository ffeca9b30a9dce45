#include "szd/model.hpp"

#include <algorithm>
#include <cmath>

#include "szd/error.hpp"
#include "szd/io_util.hpp"
#include "szd/random.hpp"

namespace szd {

template <typename T>
const NamedParam<T>* BasicParams<T>::find(std::string_view name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

template <typename T>
NamedParam<T>* BasicParams<T>::find(std::string_view name) {
  for (auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

template <typename T>
const NamedParam<T>& BasicParams<T>::at(std::string_view name) const {
  const auto* p = find(name);
  if (!p) fail(ErrorKind::kInvalidArgument, "no parameter named " + std::string(name));
  return *p;
}

template <typename T>
NamedParam<T>& BasicParams<T>::at(std::string_view name) {
  auto* p = find(name);
  if (!p) fail(ErrorKind::kInvalidArgument, "no parameter named " + std::string(name));
  return *p;
}

template <typename T>
std::size_t BasicParams<T>::total_size() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.values.size();
  return n;
}

template class BasicParams<float>;
template class BasicParams<double>;

const std::vector<ParamSpec>& architecture() {
  constexpr int kIn = kFeatureDim + kLstmHidden;
  static const std::vector<ParamSpec> specs{
      {"conv1.weight", {32, kBandCount, 3, 3}, kBandCount * 9, 32 * 9, false},
      {"conv1.bias", {32}, 0, 0, true},
      {"conv2.weight", {64, 32, 3, 3}, 32 * 9, 64 * 9, false},
      {"conv2.bias", {64}, 0, 0, true},
      {"fv.weight", {kFeatureDim, 64 * 4 * 4}, 64 * 4 * 4, kFeatureDim, false},
      {"fv.bias", {kFeatureDim}, 0, 0, true},
      {"lstm_fwd.weight", {4 * kLstmHidden, kIn}, kIn, 4 * kLstmHidden, false},
      {"lstm_fwd.bias", {4 * kLstmHidden}, 0, 0, true},
      {"lstm_bwd.weight", {4 * kLstmHidden, kIn}, kIn, 4 * kLstmHidden, false},
      {"lstm_bwd.bias", {4 * kLstmHidden}, 0, 0, true},
      {"fc.weight", {kFcHidden, 2 * kLstmHidden}, 2 * kLstmHidden, kFcHidden, false},
      {"fc.bias", {kFcHidden}, 0, 0, true},
      {"out.weight", {kClasses, kFcHidden}, kFcHidden, kClasses, false},
      {"out.bias", {kClasses}, 0, 0, true},
  };
  return specs;
}

const std::vector<ParamSpec>& pretrain_head_architecture() {
  static const std::vector<ParamSpec> specs{
      {"head.weight", {kClasses, kFeatureDim}, kFeatureDim, kClasses, false},
      {"head.bias", {kClasses}, 0, 0, true},
  };
  return specs;
}

bool is_feature_extractor_param(std::string_view name) {
  return name.starts_with("conv1.") || name.starts_with("conv2.") || name.starts_with("fv.");
}

namespace {

void init_specs(const std::vector<ParamSpec>& specs, Rng& rng, ModelParams& out) {
  for (const auto& s : specs) {
    NamedParam<float> p{s.name, s.shape, std::vector<float>(ad::numel(s.shape), 0.0f)};
    if (!s.is_bias) {
      const double limit = std::sqrt(6.0 / (s.fan_in + s.fan_out));
      for (auto& v : p.values) v = static_cast<float>(rng.uniform(-limit, limit));
    } else if (s.name.starts_with("lstm_")) {
      for (int i = kLstmHidden; i < 2 * kLstmHidden; ++i) p.values[static_cast<std::size_t>(i)] = 1.0f;
    }
    out.entries.push_back(std::move(p));
  }
}

}  // namespace

ModelParams initialize_model(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x6d6f64656c));
  ModelParams out;
  init_specs(architecture(), rng, out);
  return out;
}

ModelParams attach_pretrain_head(const ModelParams& model, std::uint64_t seed) {
  ModelParams out = feature_extractor_only(model);
  Rng rng(derive_seed(seed, 0x68656164));
  init_specs(pretrain_head_architecture(), rng, out);
  return out;
}

ModelParams feature_extractor_only(const ModelParams& params) {
  ModelParams out;
  for (const auto& e : params.entries) {
    if (is_feature_extractor_param(e.name)) out.entries.push_back(e);
  }
  return out;
}

void copy_feature_extractor(const ModelParams& source, ModelParams& target) {
  for (const auto& e : source.entries) {
    if (!is_feature_extractor_param(e.name)) continue;
    auto& dst = target.at(e.name);
    if (dst.shape != e.shape) {
      fail(ErrorKind::kShapeMismatch, "feature extractor shape differs for " + e.name);
    }
    dst.values = e.values;
  }
}

template <typename T>
BoundParams<T> bind(const BasicParams<T>& params, bool requires_grad) {
  BoundParams<T> out;
  for (const auto& e : params.entries) {
    out.emplace(e.name, requires_grad ? ad::BasicTensor<T>::parameter(e.shape, e.values)
                                      : ad::BasicTensor<T>::constant(e.shape, e.values));
  }
  return out;
}

namespace {

template <typename T>
const ad::BasicTensor<T>& get(const BoundParams<T>& p, std::string_view name) {
  auto it = p.find(name);
  if (it == p.end()) fail(ErrorKind::kInvalidArgument, "missing parameter " + std::string(name));
  return it->second;
}

}  // namespace

template <typename T>
ad::BasicTensor<T> conv_features(const BoundParams<T>& p, const ad::BasicTensor<T>& images) {
  if (images.rank() != 4 || images.dim(1) != kBandCount || images.dim(2) != kGridSize ||
      images.dim(3) != kGridSize) {
    fail(ErrorKind::kShapeMismatch, "conv features expect [N, 3, 16, 16] input");
  }
  const int n = images.dim(0);
  auto x = ad::relu(ad::conv2d(images, get(p, "conv1.weight"), get(p, "conv1.bias"), 1));
  x = ad::maxpool2d(x);
  x = ad::relu(ad::conv2d(x, get(p, "conv2.weight"), get(p, "conv2.bias"), 1));
  x = ad::maxpool2d(x);
  x = ad::reshape(x, {n, 64 * 4 * 4});
  return ad::relu(ad::dense(x, get(p, "fv.weight"), get(p, "fv.bias")));
}

template <typename T>
ad::BasicTensor<T> sequence_logits(const BoundParams<T>& p, const ad::BasicTensor<T>& images) {
  if (images.rank() != 4 || images.dim(0) != kSubWindows) {
    fail(ErrorKind::kWrongSequenceLength,
         "sequence must hold exactly " + std::to_string(kSubWindows) + " images");
  }
  auto features = conv_features(p, images);
  const ad::LstmParams<T> fwd{get(p, "lstm_fwd.weight"), get(p, "lstm_fwd.bias")};
  const ad::LstmParams<T> bwd{get(p, "lstm_bwd.weight"), get(p, "lstm_bwd.bias")};
  auto h_f = ad::BasicTensor<T>::zeros({kLstmHidden});
  auto c_f = ad::BasicTensor<T>::zeros({kLstmHidden});
  auto h_b = h_f, c_b = c_f;
  for (int t = 0; t < kSubWindows; ++t) {
    std::tie(h_f, c_f) = ad::lstm_cell(ad::select(features, t), h_f, c_f, fwd);
    std::tie(h_b, c_b) = ad::lstm_cell(ad::select(features, kSubWindows - 1 - t), h_b, c_b, bwd);
  }
  auto joined = ad::concat(h_f, h_b, 0);
  auto hidden = ad::relu(ad::dense(joined, get(p, "fc.weight"), get(p, "fc.bias")));
  return ad::dense(hidden, get(p, "out.weight"), get(p, "out.bias"));
}

template <typename T>
ad::BasicTensor<T> pretrain_logits(const BoundParams<T>& p, const ad::BasicTensor<T>& images) {
  return ad::dense(conv_features(p, images), get(p, "head.weight"), get(p, "head.bias"));
}

template BoundParams<float> bind(const BasicParams<float>&, bool);
template BoundParams<double> bind(const BasicParams<double>&, bool);
template ad::BasicTensor<float> conv_features(const BoundParams<float>&, const ad::BasicTensor<float>&);
template ad::BasicTensor<double> conv_features(const BoundParams<double>&, const ad::BasicTensor<double>&);
template ad::BasicTensor<float> sequence_logits(const BoundParams<float>&, const ad::BasicTensor<float>&);
template ad::BasicTensor<double> sequence_logits(const BoundParams<double>&, const ad::BasicTensor<double>&);
template ad::BasicTensor<float> pretrain_logits(const BoundParams<float>&, const ad::BasicTensor<float>&);
template ad::BasicTensor<double> pretrain_logits(const BoundParams<double>&, const ad::BasicTensor<double>&);

ad::Tensor sequence_tensor(const ImageSequence& seq) {
  if (seq.data.size() % kImageSize != 0 || seq.data.size() / kImageSize != kSubWindows) {
    fail(ErrorKind::kWrongSequenceLength,
         "sequence holds " + std::to_string(seq.data.size() / kImageSize) + " images, expected " +
             std::to_string(kSubWindows));
  }
  return ad::Tensor::constant({kSubWindows, kBandCount, kGridSize, kGridSize}, seq.data);
}

Network::Network(const ModelParams& params) : bound_(bind(params, false)) {}

std::vector<float> Network::forward_conv(const EEGImage& image) const {
  auto x = ad::Tensor::constant({1, kBandCount, kGridSize, kGridSize},
                                std::vector<float>(image.pixels.begin(), image.pixels.end()));
  auto f = conv_features(bound_, x);
  return std::vector<float>(f.data().begin(), f.data().end());
}

std::array<double, kClasses> Network::logits(const ImageSequence& seq) const {
  auto z = sequence_logits(bound_, sequence_tensor(seq));
  return {z.data()[0], z.data()[1]};
}

ProbPair Network::forward_sequence(const ImageSequence& seq) const {
  auto z = logits(seq);
  auto p = ad::softmax(z);
  return {p[0], p[1]};
}

std::vector<float> forward_conv(const ModelParams& params, const EEGImage& image) {
  return Network(params).forward_conv(image);
}

ProbPair forward_sequence(const ModelParams& params, const ImageSequence& seq) {
  return Network(params).forward_sequence(seq);
}

namespace {

constexpr char kMagic[4] = {'S', 'Z', 'G', 'D'};

void validate_against_architecture(const ModelParams& member) {
  const auto& specs = architecture();
  if (member.entries.size() != specs.size()) {
    fail(ErrorKind::kShapeMismatchOnLoad,
         "checkpoint holds " + std::to_string(member.entries.size()) + " parameters, expected " +
             std::to_string(specs.size()));
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (member.entries[i].name != specs[i].name || member.entries[i].shape != specs[i].shape) {
      fail(ErrorKind::kShapeMismatchOnLoad,
           "parameter " + member.entries[i].name + " does not match " + specs[i].name);
    }
  }
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic, 4);
  put_u32(out, Checkpoint::kVersion);
  put_u64(out, ckpt.seed);
  put_u32(out, ckpt.epoch);
  put_u64(out, ckpt.config_hash);
  put_u32(out, static_cast<std::uint32_t>(ckpt.trained_patients.size()));
  for (const auto& p : ckpt.trained_patients) put_string(out, p);
  for (int b = 0; b < kBandCount; ++b) put_f64(out, ckpt.normalizer.mean[b]);
  for (int b = 0; b < kBandCount; ++b) put_f64(out, ckpt.normalizer.stddev[b]);
  for (double v : ckpt.train_prior) put_f64(out, v);
  for (double v : ckpt.deploy_prior) put_f64(out, v);
  put_u32(out, static_cast<std::uint32_t>(ckpt.members.size()));
  for (const auto& m : ckpt.members) {
    put_u32(out, static_cast<std::uint32_t>(m.entries.size()));
    for (const auto& e : m.entries) {
      put_string(out, e.name);
      put_u32(out, static_cast<std::uint32_t>(e.shape.size()));
      for (int d : e.shape) put_u32(out, static_cast<std::uint32_t>(d));
      for (float v : e.values) put_f32(out, v);
    }
  }
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != std::string_view(kMagic, 4)) {
    fail(ErrorKind::kBadMagic, "not a checkpoint (missing SZGD magic)");
  }
  ByteReader in(bytes.substr(4), ErrorKind::kTruncatedCheckpoint);
  const std::uint32_t version = in.u32();
  if (version != Checkpoint::kVersion) {
    fail(ErrorKind::kVersionUnsupported, "checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.seed = in.u64();
  ckpt.epoch = in.u32();
  ckpt.config_hash = in.u64();
  const std::uint32_t n_patients = in.u32();
  if (n_patients > in.remaining()) fail(ErrorKind::kTruncatedCheckpoint, "patient list truncated");
  for (std::uint32_t i = 0; i < n_patients; ++i) ckpt.trained_patients.push_back(in.string(4096));
  for (int b = 0; b < kBandCount; ++b) ckpt.normalizer.mean[b] = in.f64();
  for (int b = 0; b < kBandCount; ++b) ckpt.normalizer.stddev[b] = in.f64();
  for (auto& v : ckpt.train_prior) v = in.f64();
  for (auto& v : ckpt.deploy_prior) v = in.f64();
  const std::uint32_t n_members = in.u32();
  if (n_members == 0 || n_members > 64) {
    fail(ErrorKind::kShapeMismatchOnLoad, "member count out of range");
  }
  const auto& specs = architecture();
  for (std::uint32_t m = 0; m < n_members; ++m) {
    ModelParams params;
    const std::uint32_t count = in.u32();
    if (count != specs.size()) {
      fail(ErrorKind::kShapeMismatchOnLoad,
           "checkpoint holds " + std::to_string(count) + " parameters");
    }
    for (std::uint32_t i = 0; i < count; ++i) {
      NamedParam<float> p;
      p.name = in.string(256);
      const std::uint32_t rank = in.u32();
      if (rank == 0 || rank > 8) fail(ErrorKind::kShapeMismatchOnLoad, "bad rank for " + p.name);
      for (std::uint32_t d = 0; d < rank; ++d) {
        const std::uint32_t dim = in.u32();
        if (dim == 0 || dim > (1u << 24)) fail(ErrorKind::kShapeMismatchOnLoad, "bad dimension");
        p.shape.push_back(static_cast<int>(dim));
      }
      if (p.name != specs[i].name || p.shape != specs[i].shape) {
        fail(ErrorKind::kShapeMismatchOnLoad,
             "parameter " + p.name + " does not match architecture entry " + specs[i].name);
      }
      const std::size_t n = ad::numel(p.shape);
      if (n * 4 > in.remaining()) fail(ErrorKind::kTruncatedCheckpoint, "values truncated");
      p.values.resize(n);
      for (auto& v : p.values) v = in.f32();
      params.entries.push_back(std::move(p));
    }
    validate_against_architecture(params);
    ckpt.members.push_back(std::move(params));
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_file(path));
}

}  // namespace szd
