#include "coordconv/models.hpp"

#include <sstream>

#include "coordconv/dataset.hpp"

namespace coordconv {

namespace {

LayerSpec conv_l(int k, int c, int stride = 1) {
  LayerSpec l;
  l.kind = LayerKind::conv;
  l.k = k;
  l.stride = stride;
  l.c_out = c;
  return l;
}

LayerSpec deconv_l(int k, int c) {
  LayerSpec l;
  l.kind = LayerKind::deconv;
  l.k = k;
  l.stride = 2;
  l.c_out = c;
  return l;
}

LayerSpec coordconv_l(int k, int c, bool with_r) {
  LayerSpec l;
  l.kind = LayerKind::coordconv;
  l.k = k;
  l.c_out = c;
  l.coords.with_r = with_r;
  return l;
}

LayerSpec dense_l(int u) {
  LayerSpec l;
  l.kind = LayerKind::dense;
  l.c_out = u;
  return l;
}

LayerSpec simple(LayerKind kind) {
  LayerSpec l;
  l.kind = kind;
  return l;
}

void check_range(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

std::vector<LayerSpec> deconv_stack(int fs, int c) {
  // channel plan 64c,64c,64c,32c,32c,1; six stride-2 layers take the 1x1
  // input to the full 64x64 canvas
  std::vector<LayerSpec> layers;
  for (int ch : {64 * c, 64 * c, 64 * c, 32 * c, 32 * c}) {
    layers.push_back(deconv_l(fs, ch));
    layers.push_back(simple(LayerKind::act_relu));
  }
  layers.push_back(deconv_l(fs, 1));
  return layers;
}

}  // namespace

const std::vector<std::string>& architecture_names() {
  static const std::vector<std::string> names = {
      "CC-CLS", "DECONV-CLS", "CONV-REG-U", "CONV-REG-Q", "CC-REG", "DECONV-REN", "CC-REN"};
  return names;
}

Architecture build_architecture(const std::string& name, const BuildHyper& hyper) {
  Architecture a;
  a.name = name;
  auto relu = [] { return simple(LayerKind::act_relu); };

  if (name == "CC-CLS") {
    a.input_mode = InputMode::coords_tiled;
    a.output_head = OutputHead::logits4096;
    a.layers = {coordconv_l(1, 32, hyper.with_r),
                relu(),
                conv_l(1, 32),
                relu(),
                conv_l(1, 64),
                relu(),
                conv_l(1, 64),
                relu(),
                conv_l(1, 1)};
  } else if (name == "DECONV-CLS") {
    check_range(hyper.fs >= 2 && hyper.fs <= 4, "DECONV-CLS: fs must be in {2,3,4}");
    check_range(hyper.c >= 1 && hyper.c <= 3, "DECONV-CLS: c must be in {1,2,3}");
    a.input_mode = InputMode::coords_1x1;
    a.output_head = OutputHead::logits4096;
    a.layers = deconv_stack(hyper.fs, hyper.c);
  } else if (name == "CONV-REG-U") {
    a.input_mode = InputMode::onehot;
    a.output_head = OutputHead::coords2;
    a.layers = {conv_l(3, 16), relu(), simple(LayerKind::maxpool2),
                conv_l(3, 16), relu(), simple(LayerKind::maxpool2),
                conv_l(3, 16), relu(), simple(LayerKind::maxpool2),
                conv_l(3, 16), relu(),
                dense_l(64),   relu(),
                dense_l(2)};
  } else if (name == "CONV-REG-Q") {
    a.input_mode = InputMode::onehot;
    a.output_head = OutputHead::coords2;
    a.layers = {conv_l(5, 16, 2), relu(),
                conv_l(1, 16), simple(LayerKind::batchnorm), relu(),
                conv_l(3, 16), relu(),
                conv_l(3, 16, 2), relu(),
                conv_l(3, 16, 2), simple(LayerKind::batchnorm), relu(),
                conv_l(3, 16, 2), relu(),
                conv_l(1, 16), relu(),
                conv_l(3, 16, 2), relu(),
                conv_l(3, 2),
                simple(LayerKind::globalpool)};
  } else if (name == "CC-REG") {
    a.input_mode = InputMode::onehot;
    a.output_head = OutputHead::coords2;
    a.layers = {coordconv_l(1, 8, hyper.with_r),
                relu(),
                conv_l(1, 8),
                relu(),
                conv_l(1, 8),
                relu(),
                conv_l(3, 8),
                relu(),
                conv_l(3, 2),
                simple(LayerKind::globalpool)};
  } else if (name == "DECONV-REN") {
    check_range(hyper.fs >= 2 && hyper.fs <= 4, "DECONV-REN: fs must be in {2,3,4}");
    check_range(hyper.c >= 2 && hyper.c <= 3, "DECONV-REN: c must be in {2,3}");
    a.input_mode = InputMode::coords_1x1;
    a.output_head = OutputHead::image64;
    a.layers = deconv_stack(hyper.fs, hyper.c);
  } else if (name == "CC-REN") {
    a.input_mode = InputMode::coords_tiled;
    a.output_head = OutputHead::image64;
    a.layers = {coordconv_l(1, 32, hyper.with_r),
                relu(),
                conv_l(1, 32),
                relu(),
                conv_l(1, 64),
                relu(),
                conv_l(3, 8),
                relu(),
                conv_l(3, 16),
                relu(),
                conv_l(1, 1)};
  } else {
    throw std::invalid_argument("unknown architecture: " + name);
  }
  infer_shapes(a, 2);  // builders never hand out inconsistent layer lists
  return a;
}

std::vector<Shape> infer_shapes(const Architecture& arch, int64_t batch) {
  std::vector<Shape> shapes;
  Shape cur;
  switch (arch.input_mode) {
    case InputMode::coords_1x1: cur = {batch, 1, 1, 2}; break;
    case InputMode::coords_tiled: cur = {batch, kCanvas, kCanvas, 2}; break;
    case InputMode::onehot:
    case InputMode::image: cur = {batch, kCanvas, kCanvas, 1}; break;
  }
  shapes.push_back(cur);

  auto conv_out = [](int64_t e, int k, int s, Padding p) -> int64_t {
    if (p == Padding::same) return (e + s - 1) / s;
    if (e < k) throw std::invalid_argument("infer_shapes: extent below kernel size");
    return (e - k) / s + 1;
  };

  for (const LayerSpec& l : arch.layers) {
    switch (l.kind) {
      case LayerKind::conv:
      case LayerKind::coordconv: {
        if (cur.rank() != 4) throw std::invalid_argument("infer_shapes: conv needs rank-4 input");
        cur = {cur[0], conv_out(cur[1], l.k, l.stride, l.padding),
               conv_out(cur[2], l.k, l.stride, l.padding), l.c_out};
        break;
      }
      case LayerKind::deconv: {
        if (cur.rank() != 4) throw std::invalid_argument("infer_shapes: deconv needs rank-4 input");
        cur = {cur[0], cur[1] * l.stride, cur[2] * l.stride, l.c_out};
        break;
      }
      case LayerKind::maxpool2: {
        if (cur.rank() != 4 || cur[1] % 2 || cur[2] % 2)
          throw std::invalid_argument("infer_shapes: maxpool2 needs even rank-4 extents");
        cur = {cur[0], cur[1] / 2, cur[2] / 2, cur[3]};
        break;
      }
      case LayerKind::globalpool: {
        if (cur.rank() != 4) throw std::invalid_argument("infer_shapes: globalpool needs rank 4");
        cur = {cur[0], cur[3]};
        break;
      }
      case LayerKind::dense: {
        // implicit flatten of whatever precedes it
        cur = {cur[0], static_cast<int64_t>(l.c_out)};
        break;
      }
      case LayerKind::batchnorm:
      case LayerKind::act_relu:
      case LayerKind::act_tanh:
      case LayerKind::act_sigmoid:
        break;
    }
    shapes.push_back(cur);
  }

  switch (arch.output_head) {
    case OutputHead::logits4096:
      if (!(cur == Shape{batch, kCanvas, kCanvas, 1}))
        throw std::invalid_argument("infer_shapes: logits head needs [n,64,64,1], got " + cur.str());
      shapes.push_back({batch, int64_t(kCanvas) * kCanvas});
      break;
    case OutputHead::coords2:
      if (!(cur == Shape{batch, 2}))
        throw std::invalid_argument("infer_shapes: coords head needs [n,2], got " + cur.str());
      break;
    case OutputHead::image64:
      if (!(cur == Shape{batch, kCanvas, kCanvas, 1}))
        throw std::invalid_argument("infer_shapes: image head needs [n,64,64,1], got " + cur.str());
      break;
  }
  return shapes;
}

int64_t param_count(const Architecture& arch) {
  std::vector<Shape> shapes = infer_shapes(arch, 1);
  int64_t total = 0;
  for (size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& l = arch.layers[i];
    const Shape& in = shapes[i];
    switch (l.kind) {
      case LayerKind::conv:
      case LayerKind::deconv:
        total += int64_t(l.k) * l.k * in[3] * l.c_out + (l.bias ? l.c_out : 0);
        break;
      case LayerKind::coordconv:
        total += int64_t(l.k) * l.k * (in[3] + l.coords.extra_channels()) * l.c_out +
                 (l.bias ? l.c_out : 0);
        break;
      case LayerKind::dense:
        total += (in.numel() / in[0]) * l.c_out + (l.bias ? l.c_out : 0);
        break;
      case LayerKind::batchnorm:
        total += 2 * in[3];
        break;
      default:
        break;
    }
  }
  return total;
}

std::string Architecture::text() const {
  std::ostringstream os;
  bool first = true;
  auto emit = [&](const std::string& s) {
    if (!first) os << " - ";
    os << s;
    first = false;
  };
  for (const LayerSpec& l : layers) {
    std::ostringstream e;
    switch (l.kind) {
      case LayerKind::conv:
        e << l.k << 'x' << l.k;
        if (l.stride != 1) e << "(S" << l.stride << ')';
        e << ',' << l.c_out;
        emit(e.str());
        break;
      case LayerKind::deconv:
        e << "DC " << l.k << 'x' << l.k << "(S" << l.stride << ")," << l.c_out;
        emit(e.str());
        break;
      case LayerKind::coordconv:
        e << "CC" << (l.coords.with_r ? "+r " : " ") << l.k << 'x' << l.k;
        if (l.stride != 1) e << "(S" << l.stride << ')';
        e << ',' << l.c_out;
        emit(e.str());
        break;
      case LayerKind::dense:
        e << "FC " << l.c_out;
        emit(e.str());
        break;
      case LayerKind::maxpool2: emit("MP 2x2"); break;
      case LayerKind::globalpool: emit("GP"); break;
      case LayerKind::batchnorm: emit("BN"); break;
      case LayerKind::act_relu:
      case LayerKind::act_tanh:
      case LayerKind::act_sigmoid:
        break;  // activations are implied, as in the long-form tables
    }
  }
  return os.str();
}

}  // namespace coordconv
