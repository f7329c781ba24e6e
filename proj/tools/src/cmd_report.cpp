#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "common.hpp"
#include "coordconv/dataset.hpp"
#include "coordconv/io.hpp"
#include "coordconv/models.hpp"
#include "coordconv/train.hpp"

namespace lab {

using namespace coordconv;
using nlohmann::json;

namespace {

struct Window {
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;
  bool active = false;
  int count() const { return active ? (x1 - x0 + 1) * (y1 - y0 + 1) : 0; }
};

Window parse_window(const std::string& text) {
  Window w;
  if (text.empty()) return w;
  if (std::sscanf(text.c_str(), "%d:%d,%d:%d", &w.x0, &w.x1, &w.y0, &w.y1) != 4)
    throw UsageError("window must be x0:x1,y0:y1 (got '" + text + "')");
  if (w.x0 > w.x1 || w.y0 > w.y1 || w.x0 < kCenterMin || w.y0 < kCenterMin ||
      w.x1 > kCenterMax || w.y1 > kCenterMax)
    throw UsageError("window ranges must be increasing and within the center grid [4, 59]");
  w.active = true;
  if (w.count() > 128)
    throw UsageError("window selects " + std::to_string(w.count()) +
                     " examples; shrink it to at most 128");
  return w;
}

double json_metric(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

std::string run_name(const std::string& dir) {
  std::filesystem::path p(dir);
  std::string name = p.filename().string();
  if (name.empty()) name = p.parent_path().filename().string();
  return name.empty() ? dir : name;
}

// Per-pixel sums of the model's predictions over one index subset.
// cls: softmax probabilities over the 4096 center classes.
// ren: sigmoid paint probabilities per pixel.
// reg: count of examples whose predicted center rounds to the pixel.
std::vector<float> prediction_sum(Task task, Model<float>& model, const Architecture& arch,
                                  const Dataset& ds, const std::vector<uint16_t>& indices) {
  std::vector<float> map(static_cast<size_t>(kCanvas) * kCanvas, 0.0f);
  constexpr size_t kChunk = 64;
  for (size_t at = 0; at < indices.size(); at += kChunk) {
    std::vector<uint16_t> chunk(indices.begin() + static_cast<int64_t>(at),
                                indices.begin() + static_cast<int64_t>(
                                                      std::min(at + kChunk, indices.size())));
    Tensor<float> inputs = build_inputs(arch, ds, chunk);
    Tensor<float> out = model.forward(nullptr, inputs, false);
    int64_t n = static_cast<int64_t>(chunk.size());
    int64_t per = out.numel() / n;
    for (int64_t i = 0; i < n; ++i) {
      const float* row = out.data() + i * per;
      if (task == Task::cls) {
        float hi = *std::max_element(row, row + per);
        double denom = 0;
        for (int64_t p = 0; p < per; ++p) denom += std::exp(static_cast<double>(row[p]) - hi);
        for (int64_t p = 0; p < per; ++p)
          map[static_cast<size_t>(p)] +=
              static_cast<float>(std::exp(static_cast<double>(row[p]) - hi) / denom);
      } else if (task == Task::ren) {
        for (int64_t p = 0; p < per; ++p)
          map[static_cast<size_t>(p)] +=
              static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(row[p]))));
      } else {
        // row = (x, y) in normalized [-1, 1] coordinates
        auto to_pixel = [](float v) {
          int p = static_cast<int>(std::lround((static_cast<double>(v) + 1.0) * (kCanvas - 1) / 2.0));
          return std::clamp(p, 0, kCanvas - 1);
        };
        map[static_cast<size_t>(to_pixel(row[1])) * kCanvas + to_pixel(row[0])] += 1.0f;
      }
    }
  }
  return map;
}

}  // namespace

int cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_dir,
               const std::string& window_text) {
  if (run_dirs.empty()) throw UsageError("report needs at least one run directory");
  Window window = parse_window(window_text);
  ensure_dir(out_dir);

  // ---- comparison table from manifests (metrics.csv must exist too) ----
  std::vector<json> manifests;
  for (const std::string& dir : run_dirs) {
    try {
      manifests.push_back(json::parse(read_text_file(join_path(dir, "manifest.json"))));
    } catch (const json::exception& e) {
      throw std::runtime_error("bad manifest in " + dir + ": " + e.what());
    }
    read_text_file(join_path(dir, "metrics.csv"));  // throws if the run has no metrics
  }

  std::string csv =
      "run,family,params,task,split,status,epochs_run,final_train_metric,final_test_metric,"
      "best_test_metric,wall_clock_s\n";
  std::printf("%-20s %-12s %9s %5s %9s %-8s %7s %12s %12s %12s %9s\n", "run", "family", "params",
              "task", "split", "status", "epochs", "final_train", "final_test", "best_test",
              "wall_s");
  for (size_t r = 0; r < run_dirs.size(); ++r) {
    const std::string& dir = run_dirs[r];
    const json& m = manifests[r];
    const json& cfg = m.at("config");
    const json& out = m.at("outcome");
    std::string name = run_name(dir);
    std::string family = m.at("architecture").at("name").get<std::string>();
    long long params = m.at("architecture").at("params").get<long long>();
    double ft = json_metric(out.at("final_train_metric"));
    double fe = json_metric(out.at("final_test_metric"));
    double be = json_metric(out.at("best_test_metric"));
    char row[512];
    std::snprintf(row, sizeof(row), "%s,%s,%lld,%s,%s,%s,%d,%.6f,%.6f,%.6f,%.3f\n", name.c_str(),
                  family.c_str(), params, cfg.at("task").get<std::string>().c_str(),
                  cfg.at("split").get<std::string>().c_str(),
                  out.at("status").get<std::string>().c_str(), out.at("epochs_run").get<int>(),
                  ft, fe, be, out.at("wall_clock_s").get<double>());
    csv += row;
    std::printf("%-20s %-12s %9lld %5s %9s %-8s %7d %12.4f %12.4f %12.4f %9.1f\n", name.c_str(),
                family.c_str(), params, cfg.at("task").get<std::string>().c_str(),
                cfg.at("split").get<std::string>().c_str(),
                out.at("status").get<std::string>().c_str(), out.at("epochs_run").get<int>(), ft,
                fe, be, out.at("wall_clock_s").get<double>());
  }
  write_text_file(join_path(out_dir, "report.csv"), csv);

  // ---- prediction-sum images and optional per-example logit maps ----
  std::map<std::string, DataBundle> datasets;  // keyed by source path ("" = generated)
  for (size_t r = 0; r < run_dirs.size(); ++r) {
    const json& cfg = manifests[r].at("config");
    Task task = parse_task(cfg.at("task").get<std::string>());
    BuildHyper hyper{cfg.at("fs").get<int>(), cfg.at("c").get<int>(),
                     cfg.at("with_r").get<bool>()};
    Architecture arch = build_architecture(cfg.at("family").get<std::string>(), hyper);
    Model<float> model(arch, cfg.at("seed").get<uint64_t>());
    model.load_named(load_checkpoint<float>(join_path(run_dirs[r], "model.ckpt")));

    std::string source = cfg.value("dataset", "");
    auto it = datasets.find(source);
    if (it == datasets.end()) it = datasets.emplace(source, acquire_dataset(source)).first;
    const DataBundle& data = it->second;
    std::string recorded = manifests[r].at("dataset").at("sha1").get<std::string>();
    if (recorded != data.sha1)
      std::fprintf(stderr, "warning: %s: dataset sha1 %s differs from manifest's %s\n",
                   run_dirs[r].c_str(), data.sha1.c_str(), recorded.c_str());

    Split split = make_split(parse_split(cfg.at("split").get<std::string>()),
                             cfg.at("split_seed").get<uint32_t>());
    std::string name = run_name(run_dirs[r]);
    for (bool test : {false, true}) {
      const std::vector<uint16_t>& subset = test ? split.test : split.train;
      std::vector<float> map = prediction_sum(task, model, arch, data.ds, subset);
      std::string path =
          join_path(out_dir, name + (test ? "_test_pred.pgm" : "_train_pred.pgm"));
      write_pgm(path, map.data(), kCanvas, kCanvas);
      std::printf("image: %s\n", path.c_str());
    }

    if (!window.active) continue;
    if (task == Task::reg) {
      std::printf("note: %s is a coordinate-output run; it has no per-pixel logits to map\n",
                  name.c_str());
      continue;
    }
    for (int y = window.y0; y <= window.y1; ++y) {
      for (int x = window.x0; x <= window.x1; ++x) {
        uint16_t idx = static_cast<uint16_t>((y - kCenterMin) * kCenterGrid + (x - kCenterMin));
        bool in_test = std::binary_search(split.test.begin(), split.test.end(), idx);
        Tensor<float> inputs = build_inputs(arch, data.ds, {idx});
        Tensor<float> out = model.forward(nullptr, inputs, false);
        char file[128];
        std::snprintf(file, sizeof(file), "%s_logit_y%02d_x%02d_%s.pgm", name.c_str(), y, x,
                      in_test ? "test" : "train");
        write_pgm(join_path(out_dir, file), out.data(), kCanvas, kCanvas);
      }
    }
    std::printf("logit maps: %d for %s (window x %d:%d, y %d:%d)\n", window.count(), name.c_str(),
                window.x0, window.x1, window.y0, window.y1);
  }
  return kExitOk;
}

}  // namespace lab
