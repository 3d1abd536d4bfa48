#pragma once

#include <functional>
#include <vector>

#include "vaest/tensor.hpp"

namespace vaest {

// Reverse-mode tape. Each primitive computes its output eagerly and, when
// recording is on and any input requires grad, pushes one backward node.
// Insertion order is a topological order, so backward() is a single reverse
// sweep that visits each node exactly once. The tape is cleared after
// backward(); a graph and its tensors belong to one worker at a time.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const { return grad_enabled_; }
  void set_grad_enabled(bool enabled) { grad_enabled_ = enabled; }
  std::size_t node_count() const { return tape_.size(); }

  // a [m x k] * b [k x n] -> [m x n]
  TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
  TensorPtr transpose(const TensorPtr& a);
  // Same shape, or b a rank-1 row vector broadcast over the rows of a.
  TensorPtr add(const TensorPtr& a, const TensorPtr& b);
  TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
  // Same shape, or either operand a scalar broadcast over the other.
  TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
  // Same shape, or scalar divisor. Rejects non-finite quotients.
  TensorPtr div(const TensorPtr& a, const TensorPtr& b);
  TensorPtr scale(const TensorPtr& a, double factor);
  TensorPtr concat_cols(const std::vector<TensorPtr>& parts);
  TensorPtr concat_rows(const std::vector<TensorPtr>& parts);
  TensorPtr slice_rows(const TensorPtr& a, std::size_t begin, std::size_t end);
  TensorPtr slice_cols(const TensorPtr& a, std::size_t begin, std::size_t end);
  TensorPtr sigmoid(const TensorPtr& a);
  TensorPtr tanh(const TensorPtr& a);
  TensorPtr relu(const TensorPtr& a);
  TensorPtr exp(const TensorPtr& a);
  // Rejects non-positive inputs (non-finite output).
  TensorPtr log(const TensorPtr& a);
  TensorPtr square(const TensorPtr& a);
  TensorPtr sqrt(const TensorPtr& a);
  // Row-wise softmax over the last dimension, max-subtracted.
  TensorPtr softmax(const TensorPtr& a);
  TensorPtr sum(const TensorPtr& a);
  TensorPtr mean(const TensorPtr& a);
  // x [T x C_in], w [k x C_in x C_out], b [C_out]. Causal: out[t] sees
  // x[t], x[t-d], ..., x[t-(k-1)d], zero-padded on the left.
  TensorPtr causal_dilated_conv1d(const TensorPtr& x, const TensorPtr& w,
                                  const TensorPtr& b, std::size_t dilation);

  // Seeds d(loss)/d(loss) = 1, replays the tape in reverse, accumulating
  // into the grad buffer of every requires-grad tensor reachable from loss,
  // then discards the tape.
  void backward(const TensorPtr& loss);
  void clear() { tape_.clear(); }

 private:
  struct Node {
    std::function<void()> apply;
  };

  using BackwardFn = std::function<void(const Tensor& out)>;
  TensorPtr record(Shape shape, std::vector<double> data,
                   const std::vector<TensorPtr>& inputs, BackwardFn backward);

  std::vector<Node> tape_;
  bool grad_enabled_ = true;
};

}  // namespace vaest
