#include "moestress/router.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "moestress/errors.hpp"
#include "rng.hpp"

namespace moestress {

namespace {

// Stream tags keep every derived value on its own splitmix64 stream.
constexpr std::uint64_t kEmbeddingStream = 0x11;
constexpr std::uint64_t kRouterStream = 0x22;
constexpr std::uint64_t kMixingStream = 0x33;
constexpr std::uint64_t kAttractorStream = 0x44;
constexpr std::uint64_t kExpertStream = 0x55;
constexpr std::uint64_t kBaselineStream = 0x66;

void check_layer(int layer, int layers) {
  if (layer < 0 || layer >= layers) {
    throw Error("layer index " + std::to_string(layer) + " out of range [0, " +
                std::to_string(layers) + ")");
  }
}

}  // namespace

TopK select_topk(std::span<const double> gates, int k) {
  const int n = static_cast<int>(gates.size());
  if (k <= 0 || k > n) {
    throw Error("top-k of " + std::to_string(k) + " from " + std::to_string(n) +
                " gates");
  }
  for (double g : gates) {
    if (!std::isfinite(g)) throw Error("non-finite gate value");
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + k, order.end(),
                    [&](int a, int b) {
                      if (gates[a] != gates[b]) return gates[a] > gates[b];
                      return a < b;  // ties to the lower expert index
                    });
  TopK out;
  out.experts.assign(order.begin(), order.begin() + k);
  out.weights.resize(k);
  double sum = 0.0;
  for (int i = 0; i < k; ++i) sum += gates[out.experts[i]];
  if (sum > 0.0) {
    for (int i = 0; i < k; ++i) out.weights[i] = gates[out.experts[i]] / sum;
  } else {
    // All selected gates zero (possible only for hand-built inputs; softmax
    // output always has positive mass). Fall back to equal weights.
    std::fill(out.weights.begin(), out.weights.end(), 1.0 / k);
  }
  return out;
}

SyntheticRouter::SyntheticRouter(RouterConfig config)
    : config_(std::move(config)) {
  config_.arch.validate();
  const int L = config_.arch.layers;
  const int E = config_.arch.experts_per_layer;
  const int H = config_.hidden_dim;
  if (H <= 0) throw ConfigError("router hidden_dim must be positive");
  if (config_.attractor_experts < 0 || config_.attractor_experts > E) {
    throw ConfigError("attractor_experts must be in [0, experts_per_layer]");
  }
  if (config_.attractor_experts > 0 && config_.attractor_gain <= 0.0) {
    throw ConfigError("attractor_gain must be positive");
  }
  const std::uint64_t seed = config_.seed;

  router_weights_.resize(L);
  layer_mixing_.resize(L);
  attractors_.resize(L);

  for (int l = 0; l < L; ++l) {
    auto& w = router_weights_[l];
    w.resize(static_cast<std::size_t>(H) * E);
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] = detail::range_double(detail::mix_keys(seed, kRouterStream, l, i),
                                  -1.0, 1.0);
    }
    // Center each expert's weight vector. Hidden states are all-positive, so
    // without this every logit shares a large mean-driven component and the
    // top-k set barely varies across tokens.
    for (int e = 0; e < E; ++e) {
      double mean = 0.0;
      for (int i = 0; i < H; ++i) mean += w[static_cast<std::size_t>(i) * E + e];
      mean /= H;
      for (int i = 0; i < H; ++i) w[static_cast<std::size_t>(i) * E + e] -= mean;
    }

    // Row-normalized non-negative mixing: each output component is a convex
    // combination of inputs, so positive hidden states stay positive and
    // bounded across layers.
    auto& m = layer_mixing_[l];
    m.resize(static_cast<std::size_t>(H) * H);
    for (int r = 0; r < H; ++r) {
      double row_sum = 0.0;
      for (int c = 0; c < H; ++c) {
        const double u = detail::unit_double(detail::mix_keys(
            seed, kMixingStream, l, static_cast<std::uint64_t>(r) * H + c));
        m[static_cast<std::size_t>(r) * H + c] = u;
        row_sum += u;
      }
      if (row_sum <= 0.0) {
        m[static_cast<std::size_t>(r) * H + r] = 1.0;
        row_sum = 1.0;
      }
      for (int c = 0; c < H; ++c) m[static_cast<std::size_t>(r) * H + c] /= row_sum;
    }

    // Attractor block: a contiguous aligned run of experts whose router
    // columns all gain a strong positive direction. Positive hidden states
    // then always produce the block's logits on top, while column-specific
    // directions keep the within-block ordering token-dependent.
    const int a = config_.attractor_experts;
    if (a > 0) {
      const int num_blocks = E / a;  // at least 1 since a <= E
      const int block = static_cast<int>(
          detail::splitmix64(detail::mix_keys(seed, kAttractorStream, l)) %
          static_cast<std::uint64_t>(num_blocks));
      const int start = block * a;
      for (int j = 0; j < a; ++j) {
        const int e = start + j;
        attractors_[l].push_back(e);
        for (int i = 0; i < H; ++i) {
          const double dir = detail::range_double(
              detail::mix_keys(seed, kAttractorStream + 1,
                               static_cast<std::uint64_t>(l) * E + e, i),
              0.5, 1.0);
          w[static_cast<std::size_t>(i) * E + e] += config_.attractor_gain * dir;
        }
      }
    }
  }
}

std::vector<double> SyntheticRouter::embedding(int token_id) const {
  if (token_id < 0 || token_id >= config_.arch.vocab_size) {
    throw Error("token ID " + std::to_string(token_id) +
                " outside vocabulary of size " +
                std::to_string(config_.arch.vocab_size));
  }
  const int H = config_.hidden_dim;
  std::vector<double> h(H);
  // Strictly positive components so the attractor construction dominates.
  for (int i = 0; i < H; ++i) {
    h[i] = detail::range_double(
        detail::mix_keys(config_.seed, kEmbeddingStream, token_id, i), 0.1,
        1.0);
  }
  return h;
}

std::vector<double> SyntheticRouter::gate(int layer,
                                          std::span<const double> hidden) const {
  check_layer(layer, config_.arch.layers);
  const int H = config_.hidden_dim;
  const int E = config_.arch.experts_per_layer;
  if (static_cast<int>(hidden.size()) != H) {
    throw Error("hidden vector has length " + std::to_string(hidden.size()) +
                ", router expects " + std::to_string(H));
  }
  for (double x : hidden) {
    if (!std::isfinite(x)) throw Error("non-finite hidden state");
  }
  const auto& w = router_weights_[layer];
  std::vector<double> logits(E, 0.0);
  for (int i = 0; i < H; ++i) {
    const double hi = hidden[i];
    const double* row = &w[static_cast<std::size_t>(i) * E];
    for (int e = 0; e < E; ++e) logits[e] += hi * row[e];
  }
  double max_logit = logits[0];
  for (double x : logits) {
    if (!std::isfinite(x)) throw Error("non-finite router logit");
    max_logit = std::max(max_logit, x);
  }
  double sum = 0.0;
  for (double& x : logits) {
    x = std::exp(x - max_logit);
    sum += x;
  }
  for (double& x : logits) x /= sum;
  return logits;
}

std::vector<double> SyntheticRouter::advance_hidden(
    int layer, std::span<const double> hidden) const {
  check_layer(layer, config_.arch.layers);
  const int H = config_.hidden_dim;
  if (static_cast<int>(hidden.size()) != H) {
    throw Error("hidden vector has length " + std::to_string(hidden.size()) +
                ", router expects " + std::to_string(H));
  }
  const auto& m = layer_mixing_[layer];
  std::vector<double> out(H, 0.0);
  for (int r = 0; r < H; ++r) {
    const double* row = &m[static_cast<std::size_t>(r) * H];
    double acc = 0.0;
    for (int c = 0; c < H; ++c) acc += row[c] * hidden[c];
    out[r] = acc;
  }
  return out;
}

RoutingTrace SyntheticRouter::trace_for_tokens(
    std::span<const int> token_ids) const {
  const int L = config_.arch.layers;
  RoutingTrace trace(L, config_.arch.experts_per_layer, config_.arch.top_k);
  std::vector<TokenSelection> per_layer(L);
  for (int token : token_ids) {
    std::vector<double> h = embedding(token);
    for (int l = 0; l < L; ++l) {
      const TopK pick = select_topk(gate(l, h), config_.arch.top_k);
      per_layer[l] = TokenSelection{pick.experts, pick.weights};
      if (l + 1 < L) h = advance_hidden(l, h);
    }
    trace.append_token(per_layer);
  }
  return trace;
}

RoutingTrace SyntheticRouter::repeated_token_trace(int token_id,
                                                   int length) const {
  if (length < 0) throw Error("trace length must be non-negative");
  const int L = config_.arch.layers;
  RoutingTrace trace(L, config_.arch.experts_per_layer, config_.arch.top_k);
  if (length == 0) return trace;

  // Repeated tokens share one hidden trajectory; route once, append N times.
  std::vector<TokenSelection> per_layer(L);
  std::vector<double> h = embedding(token_id);
  for (int l = 0; l < L; ++l) {
    const TopK pick = select_topk(gate(l, h), config_.arch.top_k);
    per_layer[l] = TokenSelection{pick.experts, pick.weights};
    if (l + 1 < L) h = advance_hidden(l, h);
  }
  for (int i = 0; i < length; ++i) trace.append_token(per_layer);
  return trace;
}

RoutingTrace SyntheticRouter::sample_baseline_trace(
    int length, std::uint64_t sample_seed) const {
  if (length < 1) throw Error("baseline trace length must be >= 1");
  std::vector<int> tokens(length);
  const std::uint64_t base =
      detail::mix_keys(config_.seed, kBaselineStream, sample_seed);
  for (int i = 0; i < length; ++i) {
    tokens[i] = static_cast<int>(
        detail::splitmix64(detail::mix_keys(base, i)) %
        static_cast<std::uint64_t>(config_.arch.vocab_size));
  }
  return trace_for_tokens(tokens);
}

const std::vector<int>& SyntheticRouter::attractors(int layer) const {
  check_layer(layer, config_.arch.layers);
  return attractors_[layer];
}

void SyntheticRouter::set_router_weights(int layer,
                                         std::vector<double> weights) {
  check_layer(layer, config_.arch.layers);
  const std::size_t expected = static_cast<std::size_t>(config_.hidden_dim) *
                               config_.arch.experts_per_layer;
  if (weights.size() != expected) {
    throw Error("router weight matrix has " + std::to_string(weights.size()) +
                " entries, expected " + std::to_string(expected));
  }
  for (double x : weights) {
    if (!std::isfinite(x)) throw Error("non-finite router weight");
  }
  router_weights_[layer] = std::move(weights);
}

ToyExpertSet::ToyExpertSet(const ModelArch& arch, int hidden_dim,
                           std::uint64_t seed)
    : hidden_dim_(hidden_dim), experts_per_layer_(arch.experts_per_layer) {
  arch.validate();
  if (hidden_dim <= 0) throw ConfigError("expert hidden_dim must be positive");
  matrices_.resize(static_cast<std::size_t>(arch.layers) *
                   arch.experts_per_layer);
  const std::size_t n = static_cast<std::size_t>(hidden_dim) * hidden_dim;
  for (std::size_t idx = 0; idx < matrices_.size(); ++idx) {
    auto& m = matrices_[idx];
    m.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = detail::range_double(detail::mix_keys(seed, kExpertStream, idx, i),
                                  -1.0, 1.0);
    }
  }
}

std::vector<double> ToyExpertSet::apply(int layer, int expert,
                                        std::span<const double> hidden) const {
  const std::size_t idx =
      static_cast<std::size_t>(layer) * experts_per_layer_ + expert;
  if (layer < 0 || expert < 0 || expert >= experts_per_layer_ ||
      idx >= matrices_.size()) {
    throw Error("expert (" + std::to_string(layer) + ", " +
                std::to_string(expert) + ") out of range");
  }
  if (static_cast<int>(hidden.size()) != hidden_dim_) {
    throw Error("hidden vector has length " + std::to_string(hidden.size()) +
                ", experts expect " + std::to_string(hidden_dim_));
  }
  const auto& m = matrices_[idx];
  std::vector<double> out(hidden_dim_, 0.0);
  for (int r = 0; r < hidden_dim_; ++r) {
    const double* row = &m[static_cast<std::size_t>(r) * hidden_dim_];
    double acc = 0.0;
    for (int c = 0; c < hidden_dim_; ++c) acc += row[c] * hidden[c];
    out[r] = acc;
  }
  return out;
}

void ToyExpertSet::set_weights(int layer, int expert,
                               std::vector<double> weights) {
  const std::size_t idx =
      static_cast<std::size_t>(layer) * experts_per_layer_ + expert;
  if (layer < 0 || expert < 0 || expert >= experts_per_layer_ ||
      idx >= matrices_.size()) {
    throw Error("expert (" + std::to_string(layer) + ", " +
                std::to_string(expert) + ") out of range");
  }
  const std::size_t n = static_cast<std::size_t>(hidden_dim_) * hidden_dim_;
  if (weights.size() != n) {
    throw Error("expert matrix has " + std::to_string(weights.size()) +
                " entries, expected " + std::to_string(n));
  }
  matrices_[idx] = std::move(weights);
}

std::vector<double> toy_moe_forward(const SyntheticRouter& router,
                                    const ToyExpertSet& experts, int layer,
                                    std::span<const double> hidden) {
  const TopK pick =
      select_topk(router.gate(layer, hidden), router.arch().top_k);
  std::vector<double> y(router.hidden_dim(), 0.0);
  for (std::size_t i = 0; i < pick.experts.size(); ++i) {
    const std::vector<double> out = experts.apply(layer, pick.experts[i], hidden);
    for (int c = 0; c < router.hidden_dim(); ++c) y[c] += pick.weights[i] * out[c];
  }
  for (double v : y) {
    if (!std::isfinite(v)) throw Error("non-finite MoE output");
  }
  return y;
}

}  // namespace moestress
