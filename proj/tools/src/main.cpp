#include <CLI11.hpp>
#include <cstdio>
#include <string>
#include <vector>

#include "common.hpp"
#include "coordconv/runtime.hpp"

namespace lab {

int cmd_dataset(const std::string& out_dir);
int cmd_train(RunOptions opt, const std::string& command_line);
int cmd_sweep(const std::string& task, const std::string& family, const std::string& grid_path,
              const std::string& dataset_path, const std::string& out_path, int jobs,
              bool zero_wall);
int cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_dir,
               const std::string& window);
int cmd_selftest(const std::string& out_dir, uint64_t seed);

}  // namespace lab

int main(int argc, char** argv) {
  using namespace lab;

  CLI::App app{
      "Square-on-canvas coordinate-transform lab: dataset generation, single training runs, "
      "hyperparameter sweeps, report rendering, and a built-in self test."};
  app.require_subcommand(1);

  int threads = 0;
  app.add_option("--threads", threads, "Cap kernel worker threads (overrides COORDCONV_LAB_THREADS)")
      ->check(CLI::PositiveNumber);

  // ---- dataset ----
  auto* ds_cmd = app.add_subcommand(
      "dataset", "Generate the dataset file, both canonical splits, and split sum images");
  std::string ds_out = "data";
  ds_cmd->add_option("--out", ds_out, "Output directory")->capture_default_str();

  // ---- train ----
  auto* tr_cmd = app.add_subcommand("train", "Train one model and write metrics/checkpoint/manifest");
  RunOptions opt;
  std::string config_path;
  tr_cmd->add_option("task", opt.task, "Task: cls, reg, or ren");
  tr_cmd->add_option("family", opt.family, "Architecture family (e.g. CC-CLS, DECONV-CLS)");
  tr_cmd->add_option("split", opt.split, "Split: uniform or quadrant");
  tr_cmd->add_option("--fs", opt.fs, "Deconv filter size")->capture_default_str();
  tr_cmd->add_option("--c", opt.c, "Deconv channel multiplier")->capture_default_str();
  tr_cmd->add_flag("--with-r", opt.with_r, "Add the radial coordinate channel");
  tr_cmd->add_option("--split-seed", opt.split_seed, "Uniform split shuffle seed")
      ->capture_default_str();
  tr_cmd->add_option("--dataset", opt.dataset_path, "Dataset file (omit to generate in memory)");
  tr_cmd->add_option("--out", opt.out_dir, "Run output directory")->capture_default_str();
  tr_cmd->add_option("--lr", opt.train.lr, "Learning rate")->capture_default_str();
  tr_cmd->add_option("--wd", opt.train.weight_decay, "Decoupled weight decay")
      ->capture_default_str();
  tr_cmd->add_option("--batch", opt.train.batch_size, "Batch size (16 or 32)")
      ->capture_default_str();
  tr_cmd->add_option("--epochs", opt.train.epochs, "Epochs (1..1000)")->capture_default_str();
  tr_cmd->add_option("--seed", opt.train.seed, "Training seed")->capture_default_str();
  tr_cmd->add_option("--eval-stride", opt.train.eval_stride, "Evaluate every k-th epoch")
      ->capture_default_str();
  tr_cmd->add_flag("--early-stop,!--no-early-stop", opt.train.early_stop,
                   "Stop once the train metric stays perfect");
  tr_cmd->add_option("--config", config_path, "JSON config file; explicit flags override it");

  // ---- sweep ----
  auto* sw_cmd = app.add_subcommand("sweep", "Run a hyperparameter grid and write a ranked CSV");
  std::string sw_task = "cls", sw_family = "CC-CLS", sw_grid, sw_dataset, sw_out = "sweep.csv";
  int sw_jobs = 1;
  bool sw_zero_wall = false;
  sw_cmd->add_option("task", sw_task, "Task: cls, reg, or ren")->required();
  sw_cmd->add_option("family", sw_family, "Default architecture family for grid points")
      ->required();
  sw_cmd->add_option("grid", sw_grid, "Grid JSON file")->required();
  sw_cmd->add_option("--dataset", sw_dataset, "Dataset file (omit to generate in memory)");
  sw_cmd->add_option("--out", sw_out, "Ranked results CSV path")->capture_default_str();
  sw_cmd->add_option("--jobs", sw_jobs, "Concurrent runs")->check(CLI::PositiveNumber)
      ->capture_default_str();
  sw_cmd->add_flag("--zero-wall", sw_zero_wall,
                   "Write 0 for wall-clock cells so reruns compare byte-identical");

  // ---- report ----
  auto* rp_cmd = app.add_subcommand(
      "report", "Compare completed runs: table, CSV, and prediction/logit images");
  std::vector<std::string> rp_runs;
  std::string rp_out = "report", rp_window;
  rp_cmd->add_option("runs", rp_runs, "Run directories (with manifest.json)")->required();
  rp_cmd->add_option("--out", rp_out, "Report output directory")->capture_default_str();
  rp_cmd->add_option("--window", rp_window,
                     "Center window x0:x1,y0:y1 for per-example logit maps (omit to skip)");

  // ---- selftest ----
  auto* st_cmd = app.add_subcommand(
      "selftest", "Gradient checks, oracle equivalences, and a determinism micro-train");
  std::string st_out = "selftest";
  uint64_t st_seed = 1;
  st_cmd->add_option("--out", st_out, "Self-test output directory")->capture_default_str();
  st_cmd->add_option("--seed", st_seed, "Micro-train seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (threads > 0) coordconv::set_max_threads(threads);

  try {
    if (*ds_cmd) return cmd_dataset(ds_out);
    if (*tr_cmd) {
      if (!config_path.empty()) {
        // Config keys mirror the flags; only flags absent from the command
        // line take their value from the file.
        std::vector<std::string> passed;
        auto mark = [&](const char* flag, const char* key) {
          if (tr_cmd->count(flag) > 0) passed.push_back(key);
        };
        mark("task", "task");
        mark("family", "family");
        mark("split", "split");
        mark("--fs", "fs");
        mark("--c", "c");
        mark("--with-r", "with_r");
        mark("--split-seed", "split_seed");
        mark("--dataset", "dataset");
        mark("--out", "out");
        mark("--lr", "lr");
        mark("--wd", "weight_decay");
        mark("--batch", "batch_size");
        mark("--epochs", "epochs");
        mark("--seed", "seed");
        mark("--eval-stride", "eval_stride");
        mark("--early-stop", "early_stop");
        merge_config_file(config_path, passed, opt);
      }
      return cmd_train(std::move(opt), quote_command_line(argc, argv));
    }
    if (*sw_cmd)
      return cmd_sweep(sw_task, sw_family, sw_grid, sw_dataset, sw_out, sw_jobs, sw_zero_wall);
    if (*rp_cmd) return cmd_report(rp_runs, rp_out, rp_window);
    if (*st_cmd) return cmd_selftest(st_out, st_seed);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return kExitUsage;
}
