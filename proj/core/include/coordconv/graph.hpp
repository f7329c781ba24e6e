#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "coordconv/tensor.hpp"

namespace coordconv {

// Reverse-mode tape. Ops append one backward closure each as they execute,
// so the list is already a valid topological order; backward() walks it in
// reverse once, accumulating into Tensor grad buffers, then frees the tape.
// A graph records exactly one forward pass and supports exactly one
// backward pass.
template <class T>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  void record(std::function<void()> backward_fn) {
    if (consumed_) throw std::logic_error("Graph: cannot record after backward");
    nodes_.push_back(std::move(backward_fn));
  }

  size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  void backward(Tensor<T>& loss) {
    if (consumed_) throw std::logic_error("Graph: backward called twice");
    if (loss.numel() != 1) throw std::invalid_argument("Graph::backward: loss must be scalar");
    consumed_ = true;
    if (loss.requires_grad()) loss.grad()[0] += T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    nodes_.clear();
    nodes_.shrink_to_fit();
  }

 private:
  std::vector<std::function<void()>> nodes_;
  bool consumed_ = false;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace coordconv
