#include "fedmcp/model.hpp"

#include <cmath>
#include <stdexcept>

namespace fedmcp {

namespace {

constexpr double kInitSigma = 0.02;

Tensor gaussian(Shape shape, Rng& rng, double sigma, bool requires_grad) {
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  for (double& v : t.values()) v = sigma * rng.next_gaussian();
  return t;
}

}  // namespace

void EncoderConfig::validate() const {
  if (hidden_size == 0 || num_heads == 0 || hidden_size % num_heads != 0) {
    throw std::invalid_argument("encoder config: hidden_size must be divisible by num_heads");
  }
  if (bottleneck < 1 || bottleneck >= hidden_size) {
    throw std::invalid_argument("encoder config: bottleneck must satisfy 1 <= r < hidden_size");
  }
  if (vocab_size == 0 || num_blocks == 0 || ffn_size == 0 || max_seq_len == 0 ||
      num_classes < 2) {
    throw std::invalid_argument("encoder config: sizes must be positive (num_classes >= 2)");
  }
}

std::size_t AdapterSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : points) n += p.parameter_count();
  return n;
}

NamedTensors AdapterSet::named(const std::string& prefix) const {
  NamedTensors out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const std::string where = (i % 2 == 0) ? "attn" : "ffn";
    const std::string base =
        prefix + ".block" + std::to_string(i / 2) + "." + where + ".";
    out.add(base + "w_down", points[i].w_down);
    out.add(base + "b_down", points[i].b_down);
    out.add(base + "w_up", points[i].w_up);
    out.add(base + "b_up", points[i].b_up);
  }
  return out;
}

AdapterSet AdapterSet::clone(bool requires_grad) const {
  AdapterSet out;
  out.points.reserve(points.size());
  for (const auto& p : points) {
    AdapterParams q{p.w_down.clone(), p.b_down.clone(), p.w_up.clone(), p.b_up.clone()};
    q.w_down.set_requires_grad(requires_grad);
    q.b_down.set_requires_grad(requires_grad);
    q.w_up.set_requires_grad(requires_grad);
    q.b_up.set_requires_grad(requires_grad);
    out.points.push_back(std::move(q));
  }
  return out;
}

void AdapterSet::copy_values_from(const AdapterSet& other) {
  if (other.points.size() != points.size()) {
    throw std::invalid_argument("adapter set: insertion-point count mismatch");
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto copy_one = [](Tensor& dst, const Tensor& src) {
      if (dst.shape() != src.shape()) {
        throw std::invalid_argument("adapter set: shape mismatch " +
                                    shape_to_string(dst.shape()) + " vs " +
                                    shape_to_string(src.shape()));
      }
      dst.values() = src.values();
    };
    copy_one(points[i].w_down, other.points[i].w_down);
    copy_one(points[i].b_down, other.points[i].b_down);
    copy_one(points[i].w_up, other.points[i].w_up);
    copy_one(points[i].b_up, other.points[i].b_up);
  }
}

std::vector<Tensor> AdapterSet::tensors() const {
  std::vector<Tensor> out;
  for (const auto& p : points) {
    out.push_back(p.w_down);
    out.push_back(p.b_down);
    out.push_back(p.w_up);
    out.push_back(p.b_up);
  }
  return out;
}

std::size_t Backbone::parameter_count() const {
  std::size_t n = token_embedding.numel() + position_embedding.numel();
  for (const auto& b : blocks) {
    n += b.wq.numel() + b.bq.numel() + b.wk.numel() + b.bk.numel() + b.wv.numel() +
         b.bv.numel() + b.wo.numel() + b.bo.numel() + b.ln1_gain.numel() +
         b.ln1_bias.numel() + b.w1.numel() + b.b1.numel() + b.w2.numel() + b.b2.numel() +
         b.ln2_gain.numel() + b.ln2_bias.numel();
  }
  return n;
}

NamedTensors Backbone::named() const {
  NamedTensors out;
  out.add("backbone.token_embedding", token_embedding);
  out.add("backbone.position_embedding", position_embedding);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string base = "backbone.block" + std::to_string(i) + ".";
    const BlockWeights& b = blocks[i];
    out.add(base + "wq", b.wq);
    out.add(base + "bq", b.bq);
    out.add(base + "wk", b.wk);
    out.add(base + "bk", b.bk);
    out.add(base + "wv", b.wv);
    out.add(base + "bv", b.bv);
    out.add(base + "wo", b.wo);
    out.add(base + "bo", b.bo);
    out.add(base + "ln1_gain", b.ln1_gain);
    out.add(base + "ln1_bias", b.ln1_bias);
    out.add(base + "w1", b.w1);
    out.add(base + "b1", b.b1);
    out.add(base + "w2", b.w2);
    out.add(base + "b2", b.b2);
    out.add(base + "ln2_gain", b.ln2_gain);
    out.add(base + "ln2_bias", b.ln2_bias);
  }
  return out;
}

std::size_t ClassifierHead::parameter_count() const {
  std::size_t n = w_out.numel() + b_out.numel();
  if (w_hidden.defined()) n += w_hidden.numel() + b_hidden.numel();
  return n;
}

std::vector<Tensor> ClassifierHead::tensors() const {
  std::vector<Tensor> out;
  if (w_hidden.defined()) {
    out.push_back(w_hidden);
    out.push_back(b_hidden);
  }
  out.push_back(w_out);
  out.push_back(b_out);
  return out;
}

NamedTensors ModelParams::trainable_named() const {
  NamedTensors out;
  for (auto& [name, t] : theta_g.named("theta_g").entries) out.add(name, t);
  for (auto& [name, t] : theta_p.named("theta_p").entries) out.add(name, t);
  auto add_head = [&out](const std::string& prefix, const ClassifierHead& head) {
    if (head.w_hidden.defined()) {
      out.add(prefix + ".w_hidden", head.w_hidden);
      out.add(prefix + ".b_hidden", head.b_hidden);
    }
    if (head.w_out.defined()) {
      out.add(prefix + ".w_out", head.w_out);
      out.add(prefix + ".b_out", head.b_out);
    }
  };
  add_head("phi_a", phi_a);
  add_head("phi_b", phi_b);
  return out;
}

std::vector<Tensor> ModelParams::trainable_tensors() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : trainable_named().entries) out.push_back(t);
  return out;
}

std::shared_ptr<Backbone> make_backbone(const EncoderConfig& config) {
  config.validate();
  Rng rng(derive_seed(config.seed, "backbone"));
  auto bb = std::make_shared<Backbone>();
  const std::size_t h = config.hidden_size;
  bb->token_embedding = gaussian({config.vocab_size, h}, rng, kInitSigma, false);
  bb->position_embedding = gaussian({config.max_seq_len, h}, rng, kInitSigma, false);
  for (std::size_t i = 0; i < config.num_blocks; ++i) {
    BlockWeights b;
    b.wq = gaussian({h, h}, rng, kInitSigma, false);
    b.bq = Tensor::zeros({h});
    b.wk = gaussian({h, h}, rng, kInitSigma, false);
    b.bk = Tensor::zeros({h});
    b.wv = gaussian({h, h}, rng, kInitSigma, false);
    b.bv = Tensor::zeros({h});
    b.wo = gaussian({h, h}, rng, kInitSigma, false);
    b.bo = Tensor::zeros({h});
    b.ln1_gain = Tensor::full({h}, 1.0);
    b.ln1_bias = Tensor::zeros({h});
    b.w1 = gaussian({h, config.ffn_size}, rng, kInitSigma, false);
    b.b1 = Tensor::zeros({config.ffn_size});
    b.w2 = gaussian({config.ffn_size, h}, rng, kInitSigma, false);
    b.b2 = Tensor::zeros({h});
    b.ln2_gain = Tensor::full({h}, 1.0);
    b.ln2_bias = Tensor::zeros({h});
    bb->blocks.push_back(std::move(b));
  }
  return bb;
}

AdapterSet make_adapter_set(const EncoderConfig& config, std::uint64_t seed) {
  // W_up starts at zero so the freshly inserted adapter is the identity and
  // the model begins exactly at the backbone function.
  Rng rng(seed);
  AdapterSet set;
  const std::size_t h = config.hidden_size, r = config.bottleneck;
  for (std::size_t i = 0; i < 2 * config.num_blocks; ++i) {
    AdapterParams p;
    p.w_down = gaussian({h, r}, rng, kInitSigma, true);
    p.b_down = Tensor::zeros({r}, true);
    p.w_up = Tensor::zeros({r, h}, true);
    p.b_up = Tensor::zeros({h}, true);
    set.points.push_back(std::move(p));
  }
  return set;
}

AdapterSet make_zero_adapter_set(const EncoderConfig& config) {
  AdapterSet set;
  const std::size_t h = config.hidden_size, r = config.bottleneck;
  for (std::size_t i = 0; i < 2 * config.num_blocks; ++i) {
    AdapterParams p;
    p.w_down = Tensor::zeros({h, r}, true);
    p.b_down = Tensor::zeros({r}, true);
    p.w_up = Tensor::zeros({r, h}, true);
    p.b_up = Tensor::zeros({h}, true);
    set.points.push_back(std::move(p));
  }
  return set;
}

ClassifierHead make_classifier_head(const EncoderConfig& config, std::size_t num_classes,
                                    std::uint64_t seed) {
  Rng rng(seed);
  ClassifierHead head;
  const std::size_t h = config.hidden_size;
  if (config.classifier_hidden) {
    head.w_hidden = gaussian({h, h}, rng, kInitSigma, true);
    head.b_hidden = Tensor::zeros({h}, true);
  }
  head.w_out = gaussian({h, num_classes}, rng, kInitSigma, true);
  head.b_out = Tensor::zeros({num_classes}, true);
  return head;
}

Tensor adapter_apply(Tape& tape, const Tensor& h_in, const AdapterParams& adapter) {
  Tensor branch = add_bias(tape, matmul(tape, h_in, adapter.w_down), adapter.b_down);
  branch = add_bias(tape, matmul(tape, gelu(tape, branch), adapter.w_up), adapter.b_up);
  return add(tape, h_in, branch);
}

namespace {

Tensor adapter_branch(Tape& tape, const Tensor& h_in, const AdapterParams& adapter) {
  Tensor branch = add_bias(tape, matmul(tape, h_in, adapter.w_down), adapter.b_down);
  return add_bias(tape, matmul(tape, gelu(tape, branch), adapter.w_up), adapter.b_up);
}

}  // namespace

Tensor dual_adapter_apply(Tape& tape, const Tensor& h_in, const AdapterParams& g,
                          const AdapterParams& p) {
  Tensor bg = scale(tape, adapter_branch(tape, h_in, g), 0.5);
  Tensor bp = scale(tape, adapter_branch(tape, h_in, p), 0.5);
  return add(tape, h_in, add(tape, bg, bp));
}

namespace {

Tensor embed_tokens(const ModelParams& params, const TokenBatch& batch) {
  const EncoderConfig& cfg = params.config;
  if (batch.seq_len > cfg.max_seq_len) {
    throw std::invalid_argument("encoder: sequence length " + std::to_string(batch.seq_len) +
                                " exceeds maximum " + std::to_string(cfg.max_seq_len));
  }
  if (batch.batch_size == 0 || batch.seq_len == 0) {
    throw std::invalid_argument("encoder: empty batch");
  }
  const std::size_t h = cfg.hidden_size;
  const Backbone& bb = *params.backbone;
  Tensor out = Tensor::zeros({batch.batch_size, batch.seq_len, h});
  for (std::size_t i = 0; i < batch.batch_size; ++i) {
    for (std::size_t t = 0; t < batch.seq_len; ++t) {
      const int tok = batch.at(i, t);
      if (tok < 0 || static_cast<std::size_t>(tok) >= cfg.vocab_size) {
        throw std::out_of_range("encoder: token id " + std::to_string(tok) +
                                " outside vocabulary of size " +
                                std::to_string(cfg.vocab_size));
      }
      for (std::size_t j = 0; j < h; ++j) {
        out.at((i * batch.seq_len + t) * h + j) =
            bb.token_embedding.at(static_cast<std::size_t>(tok), j) +
            bb.position_embedding.at(t, j);
      }
    }
  }
  return out;
}

Tensor apply_insertion(Tape& tape, const Tensor& x, const ModelParams& params,
                       AdapterMode mode, const AdapterSet* external, std::size_t point) {
  switch (mode) {
    case AdapterMode::None:
      return x;
    case AdapterMode::GlobalOnly:
      return adapter_apply(tape, x, params.theta_g.points[point]);
    case AdapterMode::PrivateOnly:
      if (!params.has_private_adapter()) {
        throw std::logic_error("encoder: model has no private adapter");
      }
      return adapter_apply(tape, x, params.theta_p.points[point]);
    case AdapterMode::Dual:
      if (!params.has_private_adapter()) {
        // Single-adapter models collapse the full path onto the global path.
        return adapter_apply(tape, x, params.theta_g.points[point]);
      }
      return dual_adapter_apply(tape, x, params.theta_g.points[point],
                                params.theta_p.points[point]);
    case AdapterMode::External:
      if (external == nullptr) {
        throw std::invalid_argument("encoder: External adapter mode needs a broadcast snapshot");
      }
      return adapter_apply(tape, x, external->points[point]);
  }
  throw std::logic_error("encoder: unknown adapter mode");
}

Tensor self_attention(Tape& tape, const Tensor& hidden, const BlockWeights& w,
                      std::size_t num_heads) {
  const std::size_t n = hidden.dim(0), s = hidden.dim(1), h = hidden.dim(2);
  const std::size_t hd = h / num_heads;
  const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));

  Tensor q = add_bias(tape, matmul(tape, hidden, w.wq), w.bq);
  Tensor k = add_bias(tape, matmul(tape, hidden, w.wk), w.bk);
  Tensor v = add_bias(tape, matmul(tape, hidden, w.wv), w.bv);

  std::vector<Tensor> ctx_per_sample;
  ctx_per_sample.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor qi = slice_batch(tape, q, i);
    Tensor ki = slice_batch(tape, k, i);
    Tensor vi = slice_batch(tape, v, i);
    std::vector<Tensor> heads;
    heads.reserve(num_heads);
    for (std::size_t j = 0; j < num_heads; ++j) {
      Tensor qj = slice_cols(tape, qi, j * hd, (j + 1) * hd);
      Tensor kj = slice_cols(tape, ki, j * hd, (j + 1) * hd);
      Tensor vj = slice_cols(tape, vi, j * hd, (j + 1) * hd);
      Tensor scores = scale(tape, matmul(tape, qj, transpose(tape, kj)), inv_sqrt_hd);
      Tensor attn = softmax_rows(tape, scores);
      heads.push_back(matmul(tape, attn, vj));
    }
    ctx_per_sample.push_back(concat_cols(tape, heads));
  }
  Tensor ctx = stack_batch(tape, ctx_per_sample);
  (void)s;
  return add_bias(tape, matmul(tape, ctx, w.wo), w.bo);
}

}  // namespace

Tensor encode_last_hidden(Tape& tape, const ModelParams& params, const TokenBatch& batch,
                          AdapterMode mode, const AdapterSet* external) {
  Tensor hidden = embed_tokens(params, batch);
  const Backbone& bb = *params.backbone;
  for (std::size_t b = 0; b < bb.blocks.size(); ++b) {
    const BlockWeights& w = bb.blocks[b];
    Tensor attn_out = self_attention(tape, hidden, w, params.config.num_heads);
    attn_out = apply_insertion(tape, attn_out, params, mode, external, 2 * b);
    hidden = layer_norm(tape, add(tape, hidden, attn_out), w.ln1_gain, w.ln1_bias,
                        kLayerNormEps);

    Tensor ffn = add_bias(tape, matmul(tape, hidden, w.w1), w.b1);
    ffn = add_bias(tape, matmul(tape, gelu(tape, ffn), w.w2), w.b2);
    ffn = apply_insertion(tape, ffn, params, mode, external, 2 * b + 1);
    hidden = layer_norm(tape, add(tape, hidden, ffn), w.ln2_gain, w.ln2_bias, kLayerNormEps);
  }
  return hidden;
}

Tensor pool_hidden(Tape& tape, const Tensor& hidden, Pooling pooling) {
  if (pooling == Pooling::MeanPool) return mean_pool_rows(tape, hidden);
  return select_token(tape, hidden, 0);
}

Tensor classify(Tape& tape, const Tensor& rep, const ClassifierHead& head) {
  Tensor x = rep;
  if (head.w_hidden.defined()) {
    x = gelu(tape, add_bias(tape, matmul(tape, x, head.w_hidden), head.b_hidden));
  }
  return add_bias(tape, matmul(tape, x, head.w_out), head.b_out);
}

ForwardResult forward_full(Tape& tape, const ModelParams& params, const TokenBatch& batch,
                           Pooling pooling) {
  Tensor hidden = encode_last_hidden(tape, params, batch, AdapterMode::Dual);
  Tensor rep = pool_hidden(tape, hidden, pooling);
  return ForwardResult{classify(tape, rep, params.phi_a), RepresentationBatch{rep, pooling}};
}

ForwardResult forward_global(Tape& tape, const ModelParams& params, const TokenBatch& batch,
                             Pooling pooling) {
  Tensor hidden = encode_last_hidden(tape, params, batch, AdapterMode::GlobalOnly);
  Tensor rep = pool_hidden(tape, hidden, pooling);
  const ClassifierHead& head = params.phi_b.w_out.defined() ? params.phi_b : params.phi_a;
  return ForwardResult{classify(tape, rep, head), RepresentationBatch{rep, pooling}};
}

RepresentationBatch representation_with(Tape& tape, const ModelParams& params,
                                        AdapterSource source, const TokenBatch& batch,
                                        Pooling pooling, const AdapterSet* broadcast) {
  AdapterMode mode = AdapterMode::GlobalOnly;
  switch (source) {
    case AdapterSource::LocalGlobal:
      mode = AdapterMode::GlobalOnly;
      break;
    case AdapterSource::LocalPrivateOnly:
      mode = AdapterMode::PrivateOnly;
      break;
    case AdapterSource::AverageGlobal:
      if (broadcast == nullptr) {
        throw std::invalid_argument(
            "representation_with: AverageGlobal requires the broadcast snapshot");
      }
      mode = AdapterMode::External;
      break;
  }
  Tensor hidden = encode_last_hidden(tape, params, batch, mode, broadcast);
  return RepresentationBatch{pool_hidden(tape, hidden, pooling), pooling};
}

ParamCounts count_parameters(const ModelParams& params) {
  ParamCounts counts;
  counts.adapter_trainable = params.theta_g.parameter_count() + params.theta_p.parameter_count();
  counts.trainable = counts.adapter_trainable + params.phi_a.parameter_count() +
                     params.phi_b.parameter_count();
  counts.communicated = params.theta_g.parameter_count();
  counts.total = params.backbone->parameter_count() + counts.trainable;
  return counts;
}

}  // namespace fedmcp
