#include <cstdio>
#include <string>

#include "common.hpp"
#include "coordconv/io.hpp"
#include "coordconv/models.hpp"
#include "coordconv/train.hpp"

namespace lab {

using namespace coordconv;

namespace {

void print_eval_row(Task task, const MetricsRecord& rec) {
  double train_m = metric_of(task, rec, false);
  double test_m = metric_of(task, rec, true);
  std::printf("epoch %4d  train_loss %11.6f  test_loss %11.6f  train %9.4f  test %9.4f\n",
              rec.epoch, rec.train_loss, rec.test_loss, train_m, test_m);
  std::fflush(stdout);
}

const char* metric_name(Task task) {
  switch (task) {
    case Task::cls: return "accuracy";
    case Task::reg: return "pixel error";
    case Task::ren: return "IOU";
  }
  return "?";
}

}  // namespace

int cmd_train(RunOptions opt, const std::string& command_line) {
  Task task = parse_task(opt.task);
  SplitKind kind = parse_split(opt.split);
  opt.train.validate();  // invalid values throw with the accepted ranges

  BuildHyper hyper{opt.fs, opt.c, opt.with_r};
  Architecture arch = build_architecture(opt.family, hyper);

  DataBundle data = acquire_dataset(opt.dataset_path);
  Split split = make_split(kind, opt.split_seed);
  ensure_dir(opt.out_dir);

  std::printf("model:   %s  (%lld params)\n", arch.name.c_str(),
              static_cast<long long>(param_count(arch)));
  std::printf("layers:  %s\n", arch.text().c_str());
  std::printf("task:    %s (%s)   split: %s (train %zu / test %zu)\n", opt.task.c_str(),
              metric_name(task), opt.split.c_str(), split.train.size(), split.test.size());
  std::printf("config:  lr %g  wd %g  batch %d  epochs %d  seed %llu\n", opt.train.lr,
              opt.train.weight_decay, opt.train.batch_size, opt.train.epochs,
              static_cast<unsigned long long>(opt.train.seed));
  std::printf("dataset: %s (sha1 %s)\n", data.source.c_str(), data.sha1.c_str());
  std::fflush(stdout);

  TrainRun run = train_task(task, arch, data.ds, split, opt.train,
                            [&](const MetricsRecord& rec) { print_eval_row(task, rec); });
  const TrainResult& result = run.result;

  write_text_file(join_path(opt.out_dir, "metrics.csv"), metrics_csv(result.history));
  save_checkpoint(join_path(opt.out_dir, "model.ckpt"), run.model.named_tensors());
  write_manifest(opt.out_dir, command_line, options_json(opt), data, arch, result,
                 {"metrics.csv", "model.ckpt", "manifest.json"});

  if (result.status == RunStatus::diverged) {
    std::fprintf(stderr, "diverged: %s\n", result.message.c_str());
    return kExitDiverged;
  }
  std::printf("done in %.1fs  (%d epochs)  final %s: train %.4f test %.4f  best test %.4f\n",
              result.wall_clock_s, result.epochs_run, metric_name(task),
              result.final_train_metric, result.final_test_metric, result.best_test_metric);
  return kExitOk;
}

}  // namespace lab
