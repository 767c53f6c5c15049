#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "fedmcp/ops.hpp"
#include "fedmcp/rng.hpp"
#include "fedmcp/serialize.hpp"
#include "fedmcp/tensor.hpp"

namespace fedmcp {

inline constexpr double kLayerNormEps = 1e-5;

enum class Pooling { MeanPool, ClsToken };

/// Which adapter stack a forward pass routes through at every insertion point.
enum class AdapterMode { None, GlobalOnly, PrivateOnly, Dual, External };

/// Source selector for the contrastive representations.
enum class AdapterSource { LocalGlobal, LocalPrivateOnly, AverageGlobal };

struct EncoderConfig {
  std::size_t vocab_size = 64;
  std::size_t hidden_size = 32;
  std::size_t num_blocks = 2;
  std::size_t num_heads = 2;
  std::size_t ffn_size = 64;
  std::size_t max_seq_len = 16;
  std::size_t bottleneck = 4;
  std::size_t num_classes = 2;
  bool classifier_hidden = false;
  std::uint64_t seed = 7;

  void validate() const;
};

/// Bottleneck adapter weights for one insertion point.
struct AdapterParams {
  Tensor w_down;  // [h, r]
  Tensor b_down;  // [r]
  Tensor w_up;    // [r, h]
  Tensor b_up;    // [h]

  std::size_t parameter_count() const {
    return w_down.numel() + b_down.numel() + w_up.numel() + b_up.numel();
  }
};

/// One adapter per insertion point: after attention and after the FFN in
/// every block, in block order.
struct AdapterSet {
  std::vector<AdapterParams> points;

  std::size_t parameter_count() const;
  /// Canonical wire names: <prefix>.block<i>.{attn|ffn}.{w_down,b_down,w_up,b_up}.
  NamedTensors named(const std::string& prefix) const;
  /// Deep copy with the given trainability.
  AdapterSet clone(bool requires_grad) const;
  /// Overwrites values in place from another set of identical shapes.
  void copy_values_from(const AdapterSet& other);
  std::vector<Tensor> tensors() const;
};

struct BlockWeights {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln1_gain, ln1_bias;
  Tensor w1, b1, w2, b2;
  Tensor ln2_gain, ln2_bias;
};

/// Frozen encoder weights; shared read-only by every client.
struct Backbone {
  Tensor token_embedding;     // [vocab, h]
  Tensor position_embedding;  // [max_seq_len, h]
  std::vector<BlockWeights> blocks;

  std::size_t parameter_count() const;
  NamedTensors named() const;
};

struct ClassifierHead {
  Tensor w_hidden, b_hidden;  // defined only when classifier_hidden is set
  Tensor w_out, b_out;        // [h, c], [c]

  std::size_t parameter_count() const;
  std::vector<Tensor> tensors() const;
};

/// Full parameter set of one client's model: frozen backbone plus the
/// trainable (theta_g, theta_p, phi_a, phi_b). Methods without a private
/// adapter (single shared adapter) leave theta_p and phi_b empty.
struct ModelParams {
  EncoderConfig config;
  std::shared_ptr<const Backbone> backbone;
  AdapterSet theta_g;
  AdapterSet theta_p;
  ClassifierHead phi_a;
  ClassifierHead phi_b;

  bool has_private_adapter() const { return !theta_p.points.empty(); }
  /// All trainable tensors with canonical names, fixed order.
  NamedTensors trainable_named() const;
  std::vector<Tensor> trainable_tensors() const;
};

struct ParamCounts {
  std::size_t total = 0;
  std::size_t trainable = 0;
  std::size_t communicated = 0;
  std::size_t adapter_trainable = 0;  // |theta_g| + |theta_p|
};

struct RepresentationBatch {
  Tensor values;  // [n, h]
  Pooling pooling = Pooling::MeanPool;
};

/// Token-id batch; all sequences share one length.
struct TokenBatch {
  std::size_t batch_size = 0;
  std::size_t seq_len = 0;
  std::vector<int> tokens;  // row-major [batch_size, seq_len]

  int at(std::size_t i, std::size_t t) const { return tokens[i * seq_len + t]; }
};

struct ForwardResult {
  Tensor logits;  // [n, c]
  RepresentationBatch rep;
};

std::shared_ptr<Backbone> make_backbone(const EncoderConfig& config);
AdapterSet make_adapter_set(const EncoderConfig& config, std::uint64_t seed);
AdapterSet make_zero_adapter_set(const EncoderConfig& config);
ClassifierHead make_classifier_head(const EncoderConfig& config, std::size_t num_classes,
                                    std::uint64_t seed);

/// h <- h + GeLU(h W_down + b_down) W_up + b_up, applied per token.
Tensor adapter_apply(Tape& tape, const Tensor& h_in, const AdapterParams& adapter);

/// h <- h + (branch(g) + branch(p)) / 2: residual plus the averaged branches.
Tensor dual_adapter_apply(Tape& tape, const Tensor& h_in, const AdapterParams& g,
                          const AdapterParams& p);

/// Last-layer hidden states [n, s, h] for the requested adapter routing.
/// `external` supplies the broadcast adapter set for AdapterMode::External.
Tensor encode_last_hidden(Tape& tape, const ModelParams& params, const TokenBatch& batch,
                          AdapterMode mode, const AdapterSet* external = nullptr);

Tensor pool_hidden(Tape& tape, const Tensor& hidden, Pooling pooling);
Tensor classify(Tape& tape, const Tensor& rep, const ClassifierHead& head);

/// Full model: both adapters at every insertion point, classifier phi_a.
ForwardResult forward_full(Tape& tape, const ModelParams& params, const TokenBatch& batch,
                           Pooling pooling);

/// Backbone plus global adapter only, classifier phi_b.
ForwardResult forward_global(Tape& tape, const ModelParams& params, const TokenBatch& batch,
                             Pooling pooling);

/// X/Y/Z representations for the contrastive loss. AverageGlobal requires the
/// server-broadcast snapshot.
RepresentationBatch representation_with(Tape& tape, const ModelParams& params,
                                        AdapterSource source, const TokenBatch& batch,
                                        Pooling pooling,
                                        const AdapterSet* broadcast = nullptr);

ParamCounts count_parameters(const ModelParams& params);

}  // namespace fedmcp
