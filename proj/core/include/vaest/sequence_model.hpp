#pragma once

#include <cstddef>
#include <vector>

#include "vaest/graph.hpp"
#include "vaest/rng.hpp"
#include "vaest/tensor.hpp"

namespace vaest {

struct ProjectionParams {
  TensorPtr weight;  // D_in x H
  TensorPtr bias;    // H

  static ProjectionParams init(Rng& rng, std::size_t d_in, std::size_t hidden);
};

// Row-wise affine map into the common hidden space; no temporal mixing.
TensorPtr project(Graph& g, const TensorPtr& features, const ProjectionParams& params);

struct GruDirection {
  TensorPtr w_z, w_r, w_n;  // input x hidden
  TensorPtr u_z, u_r, u_n;  // hidden x hidden
  TensorPtr b_z, b_r, b_n;  // hidden
};

struct GruParams {
  std::size_t input = 0;
  std::size_t hidden = 0;  // per direction; concatenated output is 2x this
  GruDirection fwd, bwd;

  // hidden_total must be even; each direction gets half.
  static GruParams init(Rng& rng, std::size_t input, std::size_t hidden_total);
};

// Bidirectional GRU. Output row t is [forward h_t, backward h_t].
TensorPtr bigru_forward(Graph& g, const TensorPtr& seq, const GruParams& params);

struct TcnBlock {
  TensorPtr w1, b1;  // [k x C_in x C_out], [C_out]
  TensorPtr w2, b2;  // [k x C_out x C_out], [C_out]
  std::size_t dilation = 1;
  TensorPtr res_w;   // C_in x C_out when the block changes width, else null
};

struct TcnParams {
  std::size_t kernel = 3;
  std::vector<TcnBlock> blocks;

  static TcnParams init(Rng& rng, std::size_t channels, std::size_t kernel = 3,
                        const std::vector<std::size_t>& dilations = {1, 2, 4, 8});
  std::size_t receptive_field() const;  // 1 + sum over blocks of 2(k-1)d
};

// Stacked causal residual blocks: x + relu(conv2(relu(conv1(x)))).
// Output row t depends only on input rows <= t.
TensorPtr tcn_forward(Graph& g, const TensorPtr& seq, const TcnParams& params);

}  // namespace vaest
