#include "vaest/fusion.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace vaest {

namespace {

TensorPtr uniform_init(Rng& rng, Shape shape, std::size_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return Tensor::create(shape, rng.uniform_vec(shape_size(shape), -bound, bound), true);
}

}  // namespace

AttentionParams AttentionParams::init(Rng& rng, std::size_t hidden, std::size_t heads) {
  if (heads == 0 || hidden % heads != 0) {
    throw std::invalid_argument("attention: hidden " + std::to_string(hidden) +
                                " not divisible by " + std::to_string(heads) + " heads");
  }
  AttentionParams p;
  p.heads = heads;
  p.w_q = uniform_init(rng, {hidden, hidden}, hidden);
  p.w_k = uniform_init(rng, {hidden, hidden}, hidden);
  p.w_v = uniform_init(rng, {hidden, hidden}, hidden);
  p.b_q = uniform_init(rng, {hidden}, hidden);
  p.b_k = uniform_init(rng, {hidden}, hidden);
  p.b_v = uniform_init(rng, {hidden}, hidden);
  return p;
}

GateParams GateParams::init(Rng& rng, std::size_t hidden) {
  GateParams p;
  p.w = uniform_init(rng, {2 * hidden, hidden}, 2 * hidden);
  p.b = uniform_init(rng, {hidden}, 2 * hidden);
  return p;
}

HeadParams HeadParams::init(Rng& rng, std::size_t hidden, std::size_t mid) {
  if (mid == 0) mid = hidden / 2;
  HeadParams p;
  p.w1 = uniform_init(rng, {hidden, mid}, hidden);
  p.b1 = uniform_init(rng, {mid}, hidden);
  p.w2 = uniform_init(rng, {mid, 2}, mid);
  p.b2 = uniform_init(rng, {2}, mid);
  return p;
}

FusionParams FusionParams::init(Rng& rng, std::size_t hidden, std::size_t heads) {
  FusionParams p;
  p.attention = AttentionParams::init(rng, hidden, heads);
  p.gate = GateParams::init(rng, hidden);
  return p;
}

const char* fusion_mode_name(FusionMode mode) {
  switch (mode) {
    case FusionMode::attention_only: return "attention_only";
    case FusionMode::gated_only: return "gated_only";
    case FusionMode::hierarchical: return "hierarchical";
  }
  throw std::logic_error("fusion: unknown mode");
}

FusionMode parse_fusion_mode(const std::string& name) {
  if (name == "attention_only") return FusionMode::attention_only;
  if (name == "gated_only") return FusionMode::gated_only;
  if (name == "hierarchical") return FusionMode::hierarchical;
  throw std::invalid_argument("fusion: unknown mode \"" + name + "\"");
}

TensorPtr cross_modal_attention(Graph& g, const TensorPtr& h_v, const TensorPtr& h_a,
                                const AttentionParams& params) {
  const std::size_t hidden = params.w_q->shape()[0];
  if (h_v->rank() != 2 || h_a->rank() != 2 || h_v->shape()[1] != hidden ||
      h_a->shape()[1] != hidden) {
    throw std::invalid_argument("attention: inputs " + shape_str(h_v->shape()) + " and " +
                                shape_str(h_a->shape()) + " do not match hidden dimension " +
                                std::to_string(hidden));
  }
  const std::size_t dh = hidden / params.heads;
  auto q = g.add(g.matmul(h_v, params.w_q), params.b_q);
  auto k = g.add(g.matmul(h_a, params.w_k), params.b_k);
  auto v = g.add(g.matmul(h_a, params.w_v), params.b_v);
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<TensorPtr> heads;
  heads.reserve(params.heads);
  for (std::size_t h = 0; h < params.heads; ++h) {
    auto qh = g.slice_cols(q, h * dh, (h + 1) * dh);
    auto kh = g.slice_cols(k, h * dh, (h + 1) * dh);
    auto vh = g.slice_cols(v, h * dh, (h + 1) * dh);
    auto weights = g.softmax(g.scale(g.matmul(qh, g.transpose(kh)), inv_scale));
    heads.push_back(g.matmul(weights, vh));
  }
  return g.concat_cols(heads);
}

TensorPtr gated_fusion(Graph& g, const TensorPtr& f_attn, const TensorPtr& h_v,
                       const GateParams& params) {
  if (f_attn->shape() != h_v->shape() || f_attn->rank() != 2 ||
      2 * f_attn->shape()[1] != params.w->shape()[0]) {
    throw std::invalid_argument("gate: inputs " + shape_str(f_attn->shape()) + " and " +
                                shape_str(h_v->shape()) + " do not fit gate weight " +
                                shape_str(params.w->shape()));
  }
  auto gate = g.sigmoid(g.add(g.matmul(g.concat_cols({f_attn, h_v}), params.w), params.b));
  auto ones = Tensor::full(f_attn->shape(), 1.0);
  return g.add(g.mul(gate, f_attn), g.mul(g.sub(ones, gate), h_v));
}

TensorPtr fuse(Graph& g, const TensorPtr& h_v, const TensorPtr& h_a, FusionMode mode,
               const FusionParams& params) {
  switch (mode) {
    case FusionMode::attention_only:
      return cross_modal_attention(g, h_v, h_a, params.attention);
    case FusionMode::hierarchical:
      return gated_fusion(g, cross_modal_attention(g, h_v, h_a, params.attention), h_v,
                          params.gate);
    case FusionMode::gated_only: {
      if (h_a->rank() != 2 || h_a->shape()[1] != h_v->shape()[1]) {
        throw std::invalid_argument("fuse: audio " + shape_str(h_a->shape()) +
                                    " does not match visual " + shape_str(h_v->shape()));
      }
      const std::size_t t_a = h_a->shape()[0], t_v = h_v->shape()[0];
      auto pooled = g.matmul(Tensor::full({1, t_a}, 1.0 / static_cast<double>(t_a)), h_a);
      auto tiled = g.matmul(Tensor::full({t_v, 1}, 1.0), pooled);
      return gated_fusion(g, tiled, h_v, params.gate);
    }
  }
  throw std::logic_error("fuse: unknown mode");
}

TensorPtr regress_va(Graph& g, const TensorPtr& fused, const HeadParams& params) {
  if (fused->rank() != 2 || fused->shape()[1] != params.w1->shape()[0]) {
    throw std::invalid_argument("head: input " + shape_str(fused->shape()) +
                                " does not match weight " + shape_str(params.w1->shape()));
  }
  auto h = g.relu(g.add(g.matmul(fused, params.w1), params.b1));
  return g.tanh(g.add(g.matmul(h, params.w2), params.b2));
}

}  // namespace vaest
