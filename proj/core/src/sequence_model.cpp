#include "vaest/sequence_model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace vaest {

namespace {

TensorPtr uniform_init(Rng& rng, Shape shape, std::size_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return Tensor::create(shape, rng.uniform_vec(shape_size(shape), -bound, bound), true);
}

GruDirection init_direction(Rng& rng, std::size_t input, std::size_t hidden) {
  GruDirection d;
  d.w_z = uniform_init(rng, {input, hidden}, input);
  d.w_r = uniform_init(rng, {input, hidden}, input);
  d.w_n = uniform_init(rng, {input, hidden}, input);
  d.u_z = uniform_init(rng, {hidden, hidden}, hidden);
  d.u_r = uniform_init(rng, {hidden, hidden}, hidden);
  d.u_n = uniform_init(rng, {hidden, hidden}, hidden);
  d.b_z = uniform_init(rng, {hidden}, hidden);
  d.b_r = uniform_init(rng, {hidden}, hidden);
  d.b_n = uniform_init(rng, {hidden}, hidden);
  return d;
}

// One GRU direction over the full sequence. `reverse` walks the input back to
// front while still writing output row t for input row t.
std::vector<TensorPtr> gru_direction(Graph& g, const TensorPtr& seq, const GruDirection& p,
                                     std::size_t hidden, bool reverse) {
  const std::size_t t_len = seq->shape()[0];
  // Input-side projections for the whole sequence at once.
  auto px_z = g.add(g.matmul(seq, p.w_z), p.b_z);
  auto px_r = g.add(g.matmul(seq, p.w_r), p.b_r);
  auto px_n = g.add(g.matmul(seq, p.w_n), p.b_n);
  auto u_zr = g.concat_cols({p.u_z, p.u_r});

  auto ones = Tensor::full({1, hidden}, 1.0);
  TensorPtr h = Tensor::zeros({1, hidden});
  std::vector<TensorPtr> out(t_len);
  for (std::size_t step = 0; step < t_len; ++step) {
    const std::size_t t = reverse ? t_len - 1 - step : step;
    auto rec = g.matmul(h, u_zr);  // [1 x 2h]
    auto z = g.sigmoid(g.add(g.slice_rows(px_z, t, t + 1), g.slice_cols(rec, 0, hidden)));
    auto r = g.sigmoid(g.add(g.slice_rows(px_r, t, t + 1), g.slice_cols(rec, hidden, 2 * hidden)));
    auto n = g.tanh(g.add(g.slice_rows(px_n, t, t + 1), g.matmul(g.mul(r, h), p.u_n)));
    h = g.add(g.mul(g.sub(ones, z), n), g.mul(z, h));
    out[t] = h;
  }
  return out;
}

}  // namespace

ProjectionParams ProjectionParams::init(Rng& rng, std::size_t d_in, std::size_t hidden) {
  ProjectionParams p;
  p.weight = uniform_init(rng, {d_in, hidden}, d_in);
  p.bias = uniform_init(rng, {hidden}, d_in);
  return p;
}

TensorPtr project(Graph& g, const TensorPtr& features, const ProjectionParams& params) {
  if (features->rank() != 2 || features->shape()[1] != params.weight->shape()[0]) {
    throw std::invalid_argument("project: features " + shape_str(features->shape()) +
                                " do not match weight " + shape_str(params.weight->shape()));
  }
  return g.add(g.matmul(features, params.weight), params.bias);
}

GruParams GruParams::init(Rng& rng, std::size_t input, std::size_t hidden_total) {
  if (hidden_total == 0 || hidden_total % 2 != 0) {
    throw std::invalid_argument("gru: bidirectional hidden size must be even, got " +
                                std::to_string(hidden_total));
  }
  GruParams p;
  p.input = input;
  p.hidden = hidden_total / 2;
  p.fwd = init_direction(rng, input, p.hidden);
  p.bwd = init_direction(rng, input, p.hidden);
  return p;
}

TensorPtr bigru_forward(Graph& g, const TensorPtr& seq, const GruParams& params) {
  if (seq->rank() != 2 || seq->shape()[1] != params.input) {
    throw std::invalid_argument("gru: sequence " + shape_str(seq->shape()) +
                                " does not match input dimension " +
                                std::to_string(params.input));
  }
  auto f = gru_direction(g, seq, params.fwd, params.hidden, false);
  auto b = gru_direction(g, seq, params.bwd, params.hidden, true);
  return g.concat_cols({g.concat_rows(f), g.concat_rows(b)});
}

TcnParams TcnParams::init(Rng& rng, std::size_t channels, std::size_t kernel,
                          const std::vector<std::size_t>& dilations) {
  if (kernel == 0 || channels == 0 || dilations.empty()) {
    throw std::invalid_argument("tcn: kernel, channels, and dilations must be non-empty");
  }
  TcnParams p;
  p.kernel = kernel;
  for (std::size_t d : dilations) {
    TcnBlock blk;
    blk.dilation = d;
    blk.w1 = uniform_init(rng, {kernel, channels, channels}, kernel * channels);
    blk.b1 = uniform_init(rng, {channels}, kernel * channels);
    blk.w2 = uniform_init(rng, {kernel, channels, channels}, kernel * channels);
    blk.b2 = uniform_init(rng, {channels}, kernel * channels);
    p.blocks.push_back(std::move(blk));
  }
  return p;
}

std::size_t TcnParams::receptive_field() const {
  std::size_t rf = 1;
  for (const auto& b : blocks) rf += 2 * (kernel - 1) * b.dilation;
  return rf;
}

TensorPtr tcn_forward(Graph& g, const TensorPtr& seq, const TcnParams& params) {
  if (seq->rank() != 2) {
    throw std::invalid_argument("tcn: expected rank-2 sequence, got " + shape_str(seq->shape()));
  }
  TensorPtr x = seq;
  for (const auto& blk : params.blocks) {
    if (blk.w1->shape()[1] != x->shape()[1]) {
      throw std::invalid_argument("tcn: block input width " + shape_str(blk.w1->shape()) +
                                  " does not match sequence " + shape_str(x->shape()));
    }
    auto h = g.relu(g.causal_dilated_conv1d(x, blk.w1, blk.b1, blk.dilation));
    h = g.relu(g.causal_dilated_conv1d(h, blk.w2, blk.b2, blk.dilation));
    auto res = blk.res_w ? g.matmul(x, blk.res_w) : x;
    x = g.add(res, h);
  }
  return x;
}

}  // namespace vaest
