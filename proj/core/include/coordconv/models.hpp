#pragma once

#include <string>
#include <vector>

#include "coordconv/ops.hpp"

namespace coordconv {

enum class LayerKind {
  conv,
  deconv,
  coordconv,
  dense,
  maxpool2,
  globalpool,
  batchnorm,
  act_relu,
  act_tanh,
  act_sigmoid,
};

struct LayerSpec {
  LayerKind kind{};
  int k = 0;
  int stride = 1;
  Padding padding = Padding::same;
  int c_out = 0;  // conv-family output channels, or dense units
  bool bias = true;
  CoordSpec coords{};  // coordconv only
};

// onehot feeds the example's center map (the regression input); image feeds
// the painted square (kept for pipelines that read the rendered canvas).
enum class InputMode { coords_1x1, coords_tiled, onehot, image };
enum class OutputHead { logits4096, coords2, image64 };

struct Architecture {
  std::string name;
  InputMode input_mode{};
  std::vector<LayerSpec> layers;
  OutputHead output_head{};

  // Compact single-line rendering for manifests, e.g.
  // "3x3,16 - MP 2x2 - 3x3,16 - FC 2" (activations omitted).
  std::string text() const;
};

struct BuildHyper {
  int fs = 2;        // deconv filter size
  int c = 1;         // deconv channel multiplier
  bool with_r = false;  // extra r channel for coordconv layers
};

// Families: CC-CLS, DECONV-CLS, CONV-REG-U, CONV-REG-Q, CC-REG,
// DECONV-REN, CC-REN. Throws on unknown name or hyper out of range.
Architecture build_architecture(const std::string& name, const BuildHyper& hyper = {});

const std::vector<std::string>& architecture_names();

// Exact count of trainable scalars (weights, biases, batch-norm gamma/beta).
int64_t param_count(const Architecture& arch);

// Walks the layer list from the canonical input shape for a given batch size
// and returns every intermediate shape (input first, head output last).
// Throws if any layer or the output head is inconsistent.
std::vector<Shape> infer_shapes(const Architecture& arch, int64_t batch);

}  // namespace coordconv
