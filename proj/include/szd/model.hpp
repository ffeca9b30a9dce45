#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "szd/imaging.hpp"
#include "szd/tensor.hpp"

namespace szd {

// Recurrent convolutional network.
//
//   per 1 s image  3x16x16
//     conv1 3->32, 3x3, pad 1, relu    32x16x16
//     maxpool 2x2                      32x8x8
//     conv2 32->64, 3x3, pad 1, relu   64x8x8
//     maxpool 2x2                      64x4x4
//     fv    1024->64, relu             64          (feature vector)
//   per 30 s sequence
//     lstm_fwd 64->128 over t = 0..29
//     lstm_bwd 64->128 over t = 29..0
//     concat final hidden states       256
//     fc    256->512, relu             512
//     out   512->2                     logits
inline constexpr int kFeatureDim = 64;
inline constexpr int kLstmHidden = 128;
inline constexpr int kFcHidden = 512;
inline constexpr int kClasses = 2;
inline constexpr std::size_t kParameterCount = 415234;
inline constexpr std::size_t kPretrainHeadParameterCount = 130;

using ProbPair = std::array<double, 2>;  // (p_nonseizure, p_seizure)

template <typename T>
struct NamedParam {
  std::string name;
  ad::Shape shape;
  std::vector<T> values;
};

template <typename T>
class BasicParams {
 public:
  std::vector<NamedParam<T>> entries;

  const NamedParam<T>* find(std::string_view name) const;
  NamedParam<T>* find(std::string_view name);
  const NamedParam<T>& at(std::string_view name) const;
  NamedParam<T>& at(std::string_view name);
  std::size_t total_size() const;

  template <typename U>
  BasicParams<U> cast() const {
    BasicParams<U> out;
    for (const auto& e : entries) {
      out.entries.push_back({e.name, e.shape, std::vector<U>(e.values.begin(), e.values.end())});
    }
    return out;
  }
};

using ModelParams = BasicParams<float>;

struct ParamSpec {
  std::string name;
  ad::Shape shape;
  int fan_in;
  int fan_out;
  bool is_bias;
};

// Parameter layout of the full network, in checkpoint order.
const std::vector<ParamSpec>& architecture();
// Layout of the temporary single-image pretraining head (64 -> 2).
const std::vector<ParamSpec>& pretrain_head_architecture();
// Names of the convolutional feature-extractor parameters.
bool is_feature_extractor_param(std::string_view name);

// Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases, forget-gate bias +1.
ModelParams initialize_model(std::uint64_t seed);

// Extractor parameters plus a fresh head; conv weights are copied bit for bit.
ModelParams attach_pretrain_head(const ModelParams& model, std::uint64_t seed);
// Copies every feature-extractor parameter of `source` into `target`.
void copy_feature_extractor(const ModelParams& source, ModelParams& target);
ModelParams feature_extractor_only(const ModelParams& params);

// Graph leaves for one forward pass.
template <typename T>
using BoundParams = std::map<std::string, ad::BasicTensor<T>, std::less<>>;

template <typename T>
BoundParams<T> bind(const BasicParams<T>& params, bool requires_grad);

// images [N, 3, 16, 16] -> features [N, 64]
template <typename T>
ad::BasicTensor<T> conv_features(const BoundParams<T>& p, const ad::BasicTensor<T>& images);
// images [30, 3, 16, 16] -> logits [2]
template <typename T>
ad::BasicTensor<T> sequence_logits(const BoundParams<T>& p, const ad::BasicTensor<T>& images);
// images [N, 3, 16, 16] -> logits [N, 2] through the pretraining head
template <typename T>
ad::BasicTensor<T> pretrain_logits(const BoundParams<T>& p, const ad::BasicTensor<T>& images);

ad::Tensor sequence_tensor(const ImageSequence& seq);

// Inference wrapper that binds parameters once.
class Network {
 public:
  explicit Network(const ModelParams& params);

  std::vector<float> forward_conv(const EEGImage& image) const;
  // Input must already be normalized.
  ProbPair forward_sequence(const ImageSequence& seq) const;
  std::array<double, kClasses> logits(const ImageSequence& seq) const;

 private:
  BoundParams<float> bound_;
};

std::vector<float> forward_conv(const ModelParams& params, const EEGImage& image);
ProbPair forward_sequence(const ModelParams& params, const ImageSequence& seq);

// Model file: see docs/checkpoint_format.md.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::vector<ModelParams> members;
  Normalizer normalizer;
  ProbPair train_prior{0.5, 0.5};
  ProbPair deploy_prior{0.5, 0.5};
  std::uint64_t seed = 0;
  std::uint32_t epoch = 0;
  std::uint64_t config_hash = 0;
  std::vector<std::string> trained_patients;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace szd
