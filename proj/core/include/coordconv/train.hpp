#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "coordconv/dataset.hpp"
#include "coordconv/models.hpp"

namespace coordconv {

enum class Task { cls, reg, ren };

Task task_for_head(OutputHead head);
std::string task_name(Task t);

struct TrainConfig {
  double lr = 0.005;
  double weight_decay = 0.0;  // decoupled: p <- p - lr*wd*p after the Adam update
  int batch_size = 16;        // 16 or 32
  int epochs = 100;           // at most 1000
  uint64_t seed = 1;
  int eval_stride = 1;        // evaluate every k-th epoch (and always the last)
  bool early_stop = true;     // stop once train metric is perfect 10 evals in a row
  int early_stop_patience = 10;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<int> lr_drop_epochs = {200, 400, 600, 800};
  double lr_drop_factor = 0.1;

  void validate() const;
};

// lr * factor^(milestones passed). Epochs are 0-based; epoch 200 is after
// the first drop.
double lr_at(int epoch, const TrainConfig& config);

// Metrics not applicable to the task stay NaN and render as empty CSV cells.
struct MetricsRecord {
  int epoch = 0;
  double train_loss = 0, test_loss = 0;
  double train_accuracy = std::numeric_limits<double>::quiet_NaN();
  double test_accuracy = std::numeric_limits<double>::quiet_NaN();
  double train_iou = std::numeric_limits<double>::quiet_NaN();
  double test_iou = std::numeric_limits<double>::quiet_NaN();
  double train_pixel_error = std::numeric_limits<double>::quiet_NaN();
  double test_pixel_error = std::numeric_limits<double>::quiet_NaN();
  double wall_clock_s = 0;
};

template <class T>
struct AdamState {
  std::vector<std::vector<T>> m, v;
  int64_t t = 0;
};

// One Adam step with bias correction, reading gradients from the params'
// grad buffers; decoupled weight decay applied after the update using the
// same scheduled lr.
template <class T>
void adam_step(const std::vector<Tensor<T>*>& params, AdamState<T>& state,
               const TrainConfig& config, double lr_now);

// ---- metrics ----
double accuracy(const Tensor<float>& logits, const std::vector<int>& targets);
// prob and target are single h*w maps; empty-union convention: both empty -> 1.
double iou(const float* prob, const float* target, int64_t count, double threshold = 0.5);
// pred/target [n,2] in normalized coordinates; mean euclidean distance in pixels.
double pixel_error(const Tensor<float>& pred, const Tensor<float>& target);

// ---- runtime model ----
template <class T>
struct Model {
  explicit Model(const Architecture& arch, uint64_t seed);

  Tensor<T> forward(Graph<T>* g, const Tensor<T>& input, bool training);
  std::vector<Tensor<T>*> parameters();
  // Parameters plus batch-norm running stats, in checkpoint order.
  std::vector<std::pair<std::string, Tensor<T>>> named_tensors();
  void load_named(const std::vector<std::pair<std::string, Tensor<T>>>& entries);

  Architecture arch;
  struct LayerState {
    Tensor<T> w, b;
    BatchNormState<T> bn;
  };
  std::vector<LayerState> layers;
};

enum class RunStatus { ok, diverged };

struct TrainResult {
  RunStatus status = RunStatus::ok;
  std::string message;             // divergence diagnostics
  std::vector<MetricsRecord> history;
  int epochs_run = 0;
  double wall_clock_s = 0;
  double final_train_metric = std::numeric_limits<double>::quiet_NaN();
  double final_test_metric = std::numeric_limits<double>::quiet_NaN();
  double best_test_metric = std::numeric_limits<double>::quiet_NaN();
  int best_epoch = -1;
};

// Full training loop for one run. Evaluates train and test subsets in eval
// mode on the eval_stride cadence (always the first and last epoch), tracks
// best-by-test-metric, and reports divergence instead of throwing. on_eval,
// if set, sees each metrics record as it is appended.
struct TrainRun {
  TrainResult result;
  Model<float> model;
};
TrainRun train_task(Task task, const Architecture& arch, const Dataset& ds, const Split& split,
                    const TrainConfig& config,
                    const std::function<void(const MetricsRecord&)>& on_eval = {});

// Model input/target builders (by architecture input mode / task).
Tensor<float> build_inputs(const Architecture& arch, const Dataset& ds,
                           const std::vector<uint16_t>& indices);
std::vector<int> build_cls_targets(const Dataset& ds, const std::vector<uint16_t>& indices);
Tensor<float> build_reg_targets(const Dataset& ds, const std::vector<uint16_t>& indices);
Tensor<float> build_ren_targets(const Dataset& ds, const std::vector<uint16_t>& indices);

// ---- sweep ----
struct SweepPoint {
  std::string family;
  BuildHyper hyper;
  SplitKind split = SplitKind::uniform;
  uint32_t split_seed = 1;
  TrainConfig config;
};

struct SweepRow {
  SweepPoint point;
  int64_t params = 0;
  TrainResult result;
};

// One train_task per point, optionally on worker threads (jobs > 1). Rows
// come back ranked by best test metric (ties: grid order).
std::vector<SweepRow> sweep(Task task, const std::vector<SweepPoint>& grid, const Dataset& ds,
                            int jobs = 1);

// ---- CSV emission ----
// Schema: epoch,split,loss,accuracy,iou,pixel_error,wall_clock_s with two
// rows per record. zero_wall replaces wall-clock readings with 0 so reruns
// byte-compare equal.
std::string metrics_csv(const std::vector<MetricsRecord>& history, bool zero_wall = false);
std::string sweep_csv(Task task, const std::vector<SweepRow>& rows, bool zero_wall = false);

double metric_of(Task task, const MetricsRecord& rec, bool test);
bool metric_better(Task task, double a, double b);  // true if a beats b
bool metric_perfect(Task task, double train_metric);

}  // namespace coordconv
