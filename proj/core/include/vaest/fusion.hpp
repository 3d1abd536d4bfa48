#pragma once

#include <cstddef>
#include <string>

#include "vaest/graph.hpp"
#include "vaest/rng.hpp"
#include "vaest/tensor.hpp"

namespace vaest {

struct AttentionParams {
  std::size_t heads = 4;
  TensorPtr w_q, w_k, w_v;  // H x H
  TensorPtr b_q, b_k, b_v;  // H

  static AttentionParams init(Rng& rng, std::size_t hidden, std::size_t heads = 4);
};

struct GateParams {
  TensorPtr w;  // 2H x H
  TensorPtr b;  // H

  static GateParams init(Rng& rng, std::size_t hidden);
};

struct HeadParams {
  TensorPtr w1, b1;  // H x M, relu
  TensorPtr w2, b2;  // M x 2, tanh

  static HeadParams init(Rng& rng, std::size_t hidden, std::size_t mid = 0);
};

enum class FusionMode { attention_only, gated_only, hierarchical };

const char* fusion_mode_name(FusionMode mode);
FusionMode parse_fusion_mode(const std::string& name);

struct FusionParams {
  AttentionParams attention;
  GateParams gate;

  static FusionParams init(Rng& rng, std::size_t hidden, std::size_t heads = 4);
};

// Multi-head attention with the visual sequence as query and the audio
// sequence as key and value. Query and key/value lengths may differ.
TensorPtr cross_modal_attention(Graph& g, const TensorPtr& h_v, const TensorPtr& h_a,
                                const AttentionParams& params);

// g = sigmoid(W [f_attn; h_v] + b); output g*f_attn + (1-g)*h_v, per coordinate.
TensorPtr gated_fusion(Graph& g, const TensorPtr& f_attn, const TensorPtr& h_v,
                       const GateParams& params);

// hierarchical: gated_fusion(cross_modal_attention(h_v, h_a), h_v).
// attention_only: the attention output alone.
// gated_only: h_a mean-pooled over time, broadcast to the visual length, gated.
TensorPtr fuse(Graph& g, const TensorPtr& h_v, const TensorPtr& h_a, FusionMode mode,
               const FusionParams& params);

// Per-frame (valence, arousal) prediction in [-1, 1]^2.
TensorPtr regress_va(Graph& g, const TensorPtr& fused, const HeadParams& params);

}  // namespace vaest
