#include "coordconv/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>
#include <thread>

#include "coordconv/runtime.hpp"

namespace coordconv {

Task task_for_head(OutputHead head) {
  switch (head) {
    case OutputHead::logits4096: return Task::cls;
    case OutputHead::coords2: return Task::reg;
    case OutputHead::image64: return Task::ren;
  }
  throw std::logic_error("task_for_head");
}

std::string task_name(Task t) {
  switch (t) {
    case Task::cls: return "cls";
    case Task::reg: return "reg";
    case Task::ren: return "ren";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (!(lr > 0)) throw std::invalid_argument("TrainConfig: lr must be > 0");
  if (epochs < 1 || epochs > 1000) throw std::invalid_argument("TrainConfig: epochs must be in [1,1000]");
  if (batch_size != 16 && batch_size != 32)
    throw std::invalid_argument("TrainConfig: batch_size must be 16 or 32");
  if (weight_decay < 0) throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
  if (eval_stride < 1) throw std::invalid_argument("TrainConfig: eval_stride must be >= 1");
}

double lr_at(int epoch, const TrainConfig& config) {
  double lr = config.lr;
  for (int m : config.lr_drop_epochs)
    if (epoch >= m) lr *= config.lr_drop_factor;
  return lr;
}

// ---- Adam ----

template <class T>
void adam_step(const std::vector<Tensor<T>*>& params, AdamState<T>& state,
               const TrainConfig& config, double lr_now) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(static_cast<size_t>(params[i]->numel()), T(0));
      state.v[i].assign(static_cast<size_t>(params[i]->numel()), T(0));
    }
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: state size mismatch");
  state.t += 1;
  double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  T b1 = static_cast<T>(config.beta1), b2 = static_cast<T>(config.beta2);
  T one_m_b1 = static_cast<T>(1.0 - config.beta1), one_m_b2 = static_cast<T>(1.0 - config.beta2);
  T inv_bc1 = static_cast<T>(1.0 / bc1), inv_bc2 = static_cast<T>(1.0 / bc2);
  T lr = static_cast<T>(lr_now), eps = static_cast<T>(config.eps);
  T decay = static_cast<T>(1.0 - lr_now * config.weight_decay);
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& p = *params[i];
    if (static_cast<int64_t>(state.m[i].size()) != p.numel())
      throw std::invalid_argument("adam_step: state shape mismatch");
    const T* gp = p.grad();
    if (!gp) throw std::invalid_argument("adam_step: parameter has no gradient");
    T* pp = p.data();
    T* m = state.m[i].data();
    T* v = state.v[i].data();
    for (int64_t j = 0, n = p.numel(); j < n; ++j) {
      T gj = gp[j];
      m[j] = b1 * m[j] + one_m_b1 * gj;
      v[j] = b2 * v[j] + one_m_b2 * gj * gj;
      T mhat = m[j] * inv_bc1;
      T vhat = v[j] * inv_bc2;
      pp[j] -= lr * mhat / (std::sqrt(vhat) + eps);
      pp[j] *= decay;  // decoupled weight decay, after the Adam update
    }
  }
}

template void adam_step<float>(const std::vector<Tensor<float>*>&, AdamState<float>&,
                               const TrainConfig&, double);
template void adam_step<double>(const std::vector<Tensor<double>*>&, AdamState<double>&,
                                const TrainConfig&, double);

// ---- metrics ----

double accuracy(const Tensor<float>& logits, const std::vector<int>& targets) {
  int64_t n = logits.shape()[0], k = logits.shape()[1];
  const float* p = logits.data();
  int64_t correct = 0;
  for (int64_t r = 0; r < n; ++r) {
    const float* row = p + r * k;
    int64_t arg = 0;
    for (int64_t j = 1; j < k; ++j)
      if (row[j] > row[arg]) arg = j;
    if (arg == targets[static_cast<size_t>(r)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

double iou(const float* prob, const float* target, int64_t count, double threshold) {
  int64_t inter = 0, uni = 0;
  for (int64_t i = 0; i < count; ++i) {
    bool p = prob[i] > threshold;
    bool t = target[i] > 0.5f;
    inter += p && t;
    uni += p || t;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double pixel_error(const Tensor<float>& pred, const Tensor<float>& target) {
  int64_t n = pred.shape()[0];
  const float* pp = pred.data();
  const float* pt = target.data();
  double acc = 0;
  for (int64_t r = 0; r < n; ++r) {
    double dx = static_cast<double>(pp[r * 2]) - static_cast<double>(pt[r * 2]);
    double dy = static_cast<double>(pp[r * 2 + 1]) - static_cast<double>(pt[r * 2 + 1]);
    acc += std::sqrt(dx * dx + dy * dy) * ((kCanvas - 1) / 2.0);
  }
  return acc / static_cast<double>(n);
}

// ---- model ----

namespace {

template <class T>
Tensor<T> glorot(Shape shape, int64_t fan_in, int64_t fan_out, Rng& rng) {
  T bound = static_cast<T>(std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
  return Tensor<T>::uniform(std::move(shape), -bound, bound, rng);
}

}  // namespace

template <class T>
Model<T>::Model(const Architecture& a, uint64_t seed) : arch(a) {
  std::vector<Shape> shapes = infer_shapes(arch, 1);
  Rng init = Rng(seed).stream(kStreamInit);
  layers.resize(arch.layers.size());
  for (size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& l = arch.layers[i];
    const Shape& in = shapes[i];
    Rng rng = init.stream(i);
    LayerState& st = layers[i];
    switch (l.kind) {
      case LayerKind::conv: {
        int64_t cin = in[3];
        st.w = glorot<T>({l.k, l.k, cin, l.c_out}, int64_t(l.k) * l.k * cin,
                         int64_t(l.k) * l.k * l.c_out, rng);
        if (l.bias) st.b = Tensor<T>({l.c_out});
        break;
      }
      case LayerKind::coordconv: {
        int64_t cin = in[3] + l.coords.extra_channels();
        st.w = glorot<T>({l.k, l.k, cin, l.c_out}, int64_t(l.k) * l.k * cin,
                         int64_t(l.k) * l.k * l.c_out, rng);
        if (l.bias) st.b = Tensor<T>({l.c_out});
        break;
      }
      case LayerKind::deconv: {
        int64_t cin = in[3];
        st.w = glorot<T>({l.k, l.k, l.c_out, cin}, int64_t(l.k) * l.k * cin,
                         int64_t(l.k) * l.k * l.c_out, rng);
        if (l.bias) st.b = Tensor<T>({l.c_out});
        break;
      }
      case LayerKind::dense: {
        int64_t f = in.numel() / in[0];
        st.w = glorot<T>({f, l.c_out}, f, l.c_out, rng);
        if (l.bias) st.b = Tensor<T>({l.c_out});
        break;
      }
      case LayerKind::batchnorm:
        st.bn = BatchNormState<T>::make(in[3]);
        break;
      default:
        break;
    }
    if (st.w.defined()) st.w.set_requires_grad(true);
    if (st.b.defined()) st.b.set_requires_grad(true);
    if (st.bn.gamma.defined()) {
      st.bn.gamma.set_requires_grad(true);
      st.bn.beta.set_requires_grad(true);
    }
  }
}

template <class T>
Tensor<T> Model<T>::forward(Graph<T>* g, const Tensor<T>& input, bool training) {
  Tensor<T> cur = input;
  for (size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& l = arch.layers[i];
    LayerState& st = layers[i];
    switch (l.kind) {
      case LayerKind::conv: {
        ConvSpec spec{l.k, l.stride, l.padding, 0, l.c_out, l.bias};
        cur = conv2d(g, cur, st.w, st.b, spec);
        break;
      }
      case LayerKind::coordconv: {
        ConvSpec spec{l.k, l.stride, l.padding, 0, l.c_out, l.bias};
        cur = coord_conv(g, cur, st.w, st.b, spec, l.coords);
        break;
      }
      case LayerKind::deconv: {
        ConvSpec spec{l.k, l.stride, l.padding, 0, l.c_out, l.bias};
        cur = conv2d_transpose(g, cur, st.w, st.b, spec);
        break;
      }
      case LayerKind::dense: {
        if (cur.shape().rank() != 2) cur = cur.reshape({cur.shape()[0], cur.numel() / cur.shape()[0]});
        cur = dense(g, cur, st.w, st.b);
        break;
      }
      case LayerKind::maxpool2: cur = max_pool2(g, cur); break;
      // Max, not mean: the regression heads paint the answer at one spatial
      // position, and a selection readout keeps that value intact wherever
      // the position lands; averaging dilutes it by the canvas area and ties
      // the output to position-dependent background activity.
      case LayerKind::globalpool: cur = global_max_pool(g, cur); break;
      case LayerKind::batchnorm: cur = batch_norm(g, cur, st.bn, training); break;
      case LayerKind::act_relu: cur = relu(g, cur); break;
      case LayerKind::act_tanh: cur = tanh_act(g, cur); break;
      case LayerKind::act_sigmoid: cur = sigmoid(g, cur); break;
    }
  }
  if (arch.output_head == OutputHead::logits4096)
    cur = cur.reshape({cur.shape()[0], int64_t(kCanvas) * kCanvas});
  return cur;
}

template <class T>
std::vector<Tensor<T>*> Model<T>::parameters() {
  std::vector<Tensor<T>*> out;
  for (LayerState& st : layers) {
    if (st.w.defined()) out.push_back(&st.w);
    if (st.b.defined()) out.push_back(&st.b);
    if (st.bn.gamma.defined()) {
      out.push_back(&st.bn.gamma);
      out.push_back(&st.bn.beta);
    }
  }
  return out;
}

template <class T>
std::vector<std::pair<std::string, Tensor<T>>> Model<T>::named_tensors() {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  for (size_t i = 0; i < layers.size(); ++i) {
    std::string prefix = "L" + std::to_string(i);
    LayerState& st = layers[i];
    if (st.w.defined()) out.emplace_back(prefix + ".w", st.w);
    if (st.b.defined()) out.emplace_back(prefix + ".b", st.b);
    if (st.bn.gamma.defined()) {
      out.emplace_back(prefix + ".bn.gamma", st.bn.gamma);
      out.emplace_back(prefix + ".bn.beta", st.bn.beta);
      out.emplace_back(prefix + ".bn.running_mean", st.bn.running_mean);
      out.emplace_back(prefix + ".bn.running_var", st.bn.running_var);
    }
  }
  return out;
}

template <class T>
void Model<T>::load_named(const std::vector<std::pair<std::string, Tensor<T>>>& entries) {
  auto own = named_tensors();
  if (own.size() != entries.size())
    throw std::invalid_argument("Model::load_named: entry count mismatch");
  for (size_t i = 0; i < own.size(); ++i) {
    if (own[i].first != entries[i].first)
      throw std::invalid_argument("Model::load_named: name mismatch at " + entries[i].first);
    if (!(own[i].second.shape() == entries[i].second.shape()))
      throw std::invalid_argument("Model::load_named: shape mismatch at " + entries[i].first);
    std::memcpy(own[i].second.data(), entries[i].second.data(),
                static_cast<size_t>(own[i].second.numel()) * sizeof(T));
  }
}

template struct Model<float>;
template struct Model<double>;

// ---- data materialization ----

Tensor<float> build_inputs(const Architecture& arch, const Dataset& ds,
                           const std::vector<uint16_t>& indices) {
  int64_t n = static_cast<int64_t>(indices.size());
  switch (arch.input_mode) {
    case InputMode::coords_1x1: {
      Tensor<float> t({n, 1, 1, 2});
      float* p = t.data();
      for (int64_t r = 0; r < n; ++r) {
        const Example& e = ds[indices[static_cast<size_t>(r)]];
        p[r * 2] = norm_coord<float>(e.x);
        p[r * 2 + 1] = norm_coord<float>(e.y);
      }
      return t;
    }
    case InputMode::coords_tiled: {
      Tensor<float> t({n, kCanvas, kCanvas, 2});
      float* p = t.data();
      for (int64_t r = 0; r < n; ++r) {
        const Example& e = ds[indices[static_cast<size_t>(r)]];
        float cx = norm_coord<float>(e.x), cy = norm_coord<float>(e.y);
        float* img = p + r * kCanvas * kCanvas * 2;
        for (int64_t s = 0; s < kCanvas * kCanvas; ++s) {
          img[s * 2] = cx;
          img[s * 2 + 1] = cy;
        }
      }
      return t;
    }
    case InputMode::onehot: {
      Tensor<float> t({n, kCanvas, kCanvas, 1});
      float* p = t.data();
      for (int64_t r = 0; r < n; ++r)
        ds[indices[static_cast<size_t>(r)]].write_onehot(p + r * kCanvas * kCanvas);
      return t;
    }
    case InputMode::image: {
      Tensor<float> t({n, kCanvas, kCanvas, 1});
      float* p = t.data();
      for (int64_t r = 0; r < n; ++r)
        ds[indices[static_cast<size_t>(r)]].write_image(p + r * kCanvas * kCanvas);
      return t;
    }
  }
  throw std::logic_error("build_inputs");
}

std::vector<int> build_cls_targets(const Dataset& ds, const std::vector<uint16_t>& indices) {
  std::vector<int> t(indices.size());
  for (size_t i = 0; i < indices.size(); ++i) {
    const Example& e = ds[indices[i]];
    t[i] = int(e.y) * kCanvas + int(e.x);
  }
  return t;
}

Tensor<float> build_reg_targets(const Dataset& ds, const std::vector<uint16_t>& indices) {
  int64_t n = static_cast<int64_t>(indices.size());
  Tensor<float> t({n, 2});
  float* p = t.data();
  for (int64_t r = 0; r < n; ++r) {
    const Example& e = ds[indices[static_cast<size_t>(r)]];
    p[r * 2] = norm_coord<float>(e.x);
    p[r * 2 + 1] = norm_coord<float>(e.y);
  }
  return t;
}

Tensor<float> build_ren_targets(const Dataset& ds, const std::vector<uint16_t>& indices) {
  int64_t n = static_cast<int64_t>(indices.size());
  Tensor<float> t({n, kCanvas, kCanvas, 1});
  float* p = t.data();
  for (int64_t r = 0; r < n; ++r)
    ds[indices[static_cast<size_t>(r)]].write_image(p + r * kCanvas * kCanvas);
  return t;
}

// ---- training ----

namespace {

struct EvalData {
  Tensor<float> inputs;
  std::vector<int> cls_targets;
  Tensor<float> dense_targets;  // reg or ren
};

EvalData build_eval_data(Task task, const Architecture& arch, const Dataset& ds,
                         const std::vector<uint16_t>& indices) {
  EvalData d;
  d.inputs = build_inputs(arch, ds, indices);
  switch (task) {
    case Task::cls: d.cls_targets = build_cls_targets(ds, indices); break;
    case Task::reg: d.dense_targets = build_reg_targets(ds, indices); break;
    case Task::ren: d.dense_targets = build_ren_targets(ds, indices); break;
  }
  return d;
}

Tensor<float> slice_rows(const Tensor<float>& src, const std::vector<int64_t>& order,
                         int64_t begin, int64_t end) {
  int64_t per = src.numel() / src.shape()[0];
  std::vector<int64_t> dims = src.shape().dims();
  dims[0] = end - begin;
  Tensor<float> out{Shape(dims)};
  for (int64_t r = begin; r < end; ++r)
    std::memcpy(out.data() + (r - begin) * per, src.data() + order[static_cast<size_t>(r)] * per,
                static_cast<size_t>(per) * sizeof(float));
  return out;
}

struct EvalResult {
  double loss = 0;
  double metric = 0;  // accuracy, iou, or pixel error by task
};

EvalResult evaluate(Task task, Model<float>& model, const EvalData& data) {
  int64_t n = data.inputs.shape()[0];
  int64_t chunk = 128;
  double loss_acc = 0;
  double metric_acc = 0;
  std::vector<int64_t> ident(static_cast<size_t>(n));
  std::iota(ident.begin(), ident.end(), 0);
  for (int64_t b0 = 0; b0 < n; b0 += chunk) {
    int64_t b1 = std::min(n, b0 + chunk);
    Tensor<float> bx = slice_rows(data.inputs, ident, b0, b1);
    Tensor<float> out = model.forward(nullptr, bx, /*training=*/false);
    int64_t bn = b1 - b0;
    switch (task) {
      case Task::cls: {
        std::vector<int> bt(data.cls_targets.begin() + b0, data.cls_targets.begin() + b1);
        loss_acc += static_cast<double>(softmax_xent<float>(nullptr, out, bt).item()) * bn;
        metric_acc += accuracy(out, bt) * bn;
        break;
      }
      case Task::reg: {
        Tensor<float> bt = slice_rows(data.dense_targets, ident, b0, b1);
        loss_acc += static_cast<double>(mse_loss<float>(nullptr, out, bt).item()) * bn;
        metric_acc += pixel_error(out, bt) * bn;
        break;
      }
      case Task::ren: {
        Tensor<float> bt = slice_rows(data.dense_targets, ident, b0, b1);
        loss_acc += static_cast<double>(sigmoid_xent_pixelwise<float>(nullptr, out, bt).item()) * bn;
        // per-example IOU on sigmoid probabilities; prob > 0.5 <=> logit > 0
        int64_t per = out.numel() / bn;
        for (int64_t r = 0; r < bn; ++r) {
          std::vector<float> prob(static_cast<size_t>(per));
          const float* logit = out.data() + r * per;
          for (int64_t i = 0; i < per; ++i)
            prob[static_cast<size_t>(i)] = logit[i] > 0 ? 1.0f : 0.0f;
          metric_acc += iou(prob.data(), bt.data() + r * per, per);
        }
        break;
      }
    }
  }
  EvalResult res;
  res.loss = loss_acc / static_cast<double>(n);
  res.metric = metric_acc / static_cast<double>(n);
  return res;
}

void fill_metric(Task task, MetricsRecord& rec, bool test, double value) {
  double* slot = nullptr;
  switch (task) {
    case Task::cls: slot = test ? &rec.test_accuracy : &rec.train_accuracy; break;
    case Task::ren: slot = test ? &rec.test_iou : &rec.train_iou; break;
    case Task::reg: slot = test ? &rec.test_pixel_error : &rec.train_pixel_error; break;
  }
  *slot = value;
}

}  // namespace

double metric_of(Task task, const MetricsRecord& rec, bool test) {
  switch (task) {
    case Task::cls: return test ? rec.test_accuracy : rec.train_accuracy;
    case Task::ren: return test ? rec.test_iou : rec.train_iou;
    case Task::reg: return test ? rec.test_pixel_error : rec.train_pixel_error;
  }
  return 0;
}

bool metric_better(Task task, double a, double b) {
  if (std::isnan(a)) return false;
  if (std::isnan(b)) return true;
  return task == Task::reg ? a < b : a > b;
}

bool metric_perfect(Task task, double train_metric) {
  if (task == Task::reg) return false;
  return train_metric == 1.0;
}

TrainRun train_task(Task task, const Architecture& arch, const Dataset& ds, const Split& split,
                    const TrainConfig& config,
                    const std::function<void(const MetricsRecord&)>& on_eval) {
  config.validate();
  if (task_for_head(arch.output_head) != task)
    throw std::invalid_argument("train_task: architecture head does not match task");

  TrainRun run{TrainResult{}, Model<float>(arch, config.seed)};
  Model<float>& model = run.model;
  TrainResult& result = run.result;

  EvalData train_data = build_eval_data(task, arch, ds, split.train);
  EvalData test_data = build_eval_data(task, arch, ds, split.test);

  std::vector<Tensor<float>*> params = model.parameters();
  AdamState<float> adam;
  Rng shuffle_root = Rng(config.seed).stream(kStreamShuffle);

  int64_t n_train = static_cast<int64_t>(split.train.size());
  std::vector<int64_t> order(static_cast<size_t>(n_train));
  auto started = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  };

  int perfect_streak = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double lr_now = lr_at(epoch, config);
    std::iota(order.begin(), order.end(), 0);
    Rng erng = shuffle_root.stream(static_cast<uint64_t>(epoch));
    erng.shuffle(order.begin(), order.end());

    bool diverged = false;
    std::string divergence_note;
    for (int64_t b0 = 0; b0 < n_train && !diverged; b0 += config.batch_size) {
      int64_t b1 = std::min(n_train, b0 + config.batch_size);
      Tensor<float> bx = slice_rows(train_data.inputs, order, b0, b1);
      try {
        Graph<float> g;
        Tensor<float> out = model.forward(&g, bx, /*training=*/true);
        Tensor<float> loss;
        switch (task) {
          case Task::cls: {
            std::vector<int> bt(static_cast<size_t>(b1 - b0));
            for (int64_t r = b0; r < b1; ++r)
              bt[static_cast<size_t>(r - b0)] =
                  train_data.cls_targets[static_cast<size_t>(order[static_cast<size_t>(r)])];
            loss = softmax_xent(&g, out, bt);
            break;
          }
          case Task::reg:
            loss = mse_loss(&g, out, slice_rows(train_data.dense_targets, order, b0, b1));
            break;
          case Task::ren:
            loss = sigmoid_xent_pixelwise(&g, out, slice_rows(train_data.dense_targets, order, b0, b1));
            break;
        }
        if (!std::isfinite(static_cast<double>(loss.item()))) {
          diverged = true;
          divergence_note = "non-finite loss";
        } else {
          for (Tensor<float>* p : params) p->zero_grad();
          g.backward(loss);
          adam_step(params, adam, config, lr_now);
        }
      } catch (const NonFiniteError& e) {
        diverged = true;
        divergence_note = e.what();
      }
    }

    if (diverged) {
      result.status = RunStatus::diverged;
      result.message = "diverged at epoch " + std::to_string(epoch) + ": " + divergence_note;
      result.epochs_run = epoch;
      break;
    }
    result.epochs_run = epoch + 1;

    bool last = epoch + 1 == config.epochs;
    if (epoch % config.eval_stride == 0 || last) {
      MetricsRecord rec;
      rec.epoch = epoch;
      EvalResult tr = evaluate(task, model, train_data);
      EvalResult te = evaluate(task, model, test_data);
      rec.train_loss = tr.loss;
      rec.test_loss = te.loss;
      fill_metric(task, rec, false, tr.metric);
      fill_metric(task, rec, true, te.metric);
      rec.wall_clock_s = elapsed();
      result.history.push_back(rec);
      if (on_eval) on_eval(rec);

      if (metric_better(task, te.metric, result.best_test_metric)) {
        result.best_test_metric = te.metric;
        result.best_epoch = epoch;
      }
      if (config.early_stop && metric_perfect(task, tr.metric)) {
        if (++perfect_streak >= config.early_stop_patience) break;
      } else {
        perfect_streak = 0;
      }
    }
  }

  result.wall_clock_s = elapsed();
  if (!result.history.empty()) {
    const MetricsRecord& fin = result.history.back();
    result.final_train_metric = metric_of(task, fin, false);
    result.final_test_metric = metric_of(task, fin, true);
  }
  return run;
}

// ---- sweep ----

std::vector<SweepRow> sweep(Task task, const std::vector<SweepPoint>& grid, const Dataset& ds,
                            int jobs) {
  std::vector<SweepRow> rows(grid.size());
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= grid.size()) return;
      const SweepPoint& pt = grid[i];
      SweepRow& row = rows[i];
      row.point = pt;
      Architecture arch = build_architecture(pt.family, pt.hyper);
      row.params = param_count(arch);
      Split split = make_split(pt.split, pt.split_seed);
      row.result = train_task(task, arch, ds, split, pt.config).result;
    }
  };
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  std::stable_sort(rows.begin(), rows.end(), [task](const SweepRow& a, const SweepRow& b) {
    return metric_better(task, a.result.best_test_metric, b.result.best_test_metric);
  });
  return rows;
}

// ---- CSV ----

namespace {

std::string fmt_double(double v, const char* spec = "%.9g") {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

}  // namespace

std::string metrics_csv(const std::vector<MetricsRecord>& history, bool zero_wall) {
  std::string out = "epoch,split,loss,accuracy,iou,pixel_error,wall_clock_s\n";
  for (const MetricsRecord& r : history) {
    double wall = zero_wall ? 0.0 : r.wall_clock_s;
    out += std::to_string(r.epoch) + ",train," + fmt_double(r.train_loss) + "," +
           fmt_double(r.train_accuracy) + "," + fmt_double(r.train_iou) + "," +
           fmt_double(r.train_pixel_error) + "," + fmt_double(wall, "%.3f") + "\n";
    out += std::to_string(r.epoch) + ",test," + fmt_double(r.test_loss) + "," +
           fmt_double(r.test_accuracy) + "," + fmt_double(r.test_iou) + "," +
           fmt_double(r.test_pixel_error) + "," + fmt_double(wall, "%.3f") + "\n";
  }
  return out;
}

std::string sweep_csv(Task task, const std::vector<SweepRow>& rows, bool zero_wall) {
  std::string out =
      "family,fs,c,with_r,params,split,split_seed,lr,wd,batch,epochs,seed,status,epochs_run,"
      "final_train_metric,final_test_metric,best_test_metric,best_epoch,wall_clock_s\n";
  (void)task;
  for (const SweepRow& r : rows) {
    const SweepPoint& p = r.point;
    out += p.family + "," + std::to_string(p.hyper.fs) + "," + std::to_string(p.hyper.c) + "," +
           (p.hyper.with_r ? "1" : "0") + "," + std::to_string(r.params) + "," +
           (p.split == SplitKind::uniform ? "uniform" : "quadrant") + "," +
           std::to_string(p.split_seed) + "," + fmt_double(p.config.lr) + "," +
           fmt_double(p.config.weight_decay) + "," + std::to_string(p.config.batch_size) + "," +
           std::to_string(p.config.epochs) + "," + std::to_string(p.config.seed) + "," +
           (r.result.status == RunStatus::ok ? "ok" : "diverged") + "," +
           std::to_string(r.result.epochs_run) + "," + fmt_double(r.result.final_train_metric) +
           "," + fmt_double(r.result.final_test_metric) + "," +
           fmt_double(r.result.best_test_metric) + "," + std::to_string(r.result.best_epoch) + "," +
           fmt_double(zero_wall ? 0.0 : r.result.wall_clock_s, "%.3f") + "\n";
  }
  return out;
}

}  // namespace coordconv
