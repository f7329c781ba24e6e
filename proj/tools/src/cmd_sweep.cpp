#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "common.hpp"
#include "coordconv/io.hpp"
#include "coordconv/train.hpp"

namespace lab {

using namespace coordconv;
using nlohmann::json;

namespace {

// Grid keys in canonical expansion order (later keys vary fastest).
const char* const kGridKeys[] = {"family",     "fs",         "c",      "with_r", "split",
                                 "split_seed", "lr",         "weight_decay", "batch_size",
                                 "epochs",     "seed",       "eval_stride",  "early_stop"};

std::string canonical_key(const std::string& key) {
  if (key == "wd") return "weight_decay";
  if (key == "batch") return "batch_size";
  for (const char* k : kGridKeys)
    if (key == k) return key;
  throw UsageError("unknown grid key '" + key + "'");
}

void apply_key(SweepPoint& pt, const std::string& key, const json& v) {
  try {
    if (key == "family") pt.family = v.get<std::string>();
    else if (key == "fs") pt.hyper.fs = v.get<int>();
    else if (key == "c") pt.hyper.c = v.get<int>();
    else if (key == "with_r") pt.hyper.with_r = v.get<bool>();
    else if (key == "split") pt.split = parse_split(v.get<std::string>());
    else if (key == "split_seed") pt.split_seed = v.get<uint32_t>();
    else if (key == "lr") pt.config.lr = v.get<double>();
    else if (key == "weight_decay") pt.config.weight_decay = v.get<double>();
    else if (key == "batch_size") pt.config.batch_size = v.get<int>();
    else if (key == "epochs") pt.config.epochs = v.get<int>();
    else if (key == "seed") pt.config.seed = v.get<uint64_t>();
    else if (key == "eval_stride") pt.config.eval_stride = v.get<int>();
    else if (key == "early_stop") pt.config.early_stop = v.get<bool>();
  } catch (const json::exception& e) {
    throw UsageError("grid key '" + key + "': " + e.what());
  }
}

// Two shapes: {"points": [{..overrides..}, ...]} runs exactly those points;
// otherwise every key maps to a value or list and the grid is the cartesian
// product over the canonical key order. "points": [] is the empty grid.
std::vector<SweepPoint> parse_grid(const json& j, const std::string& default_family) {
  if (!j.is_object()) throw UsageError("grid file must hold a JSON object");
  SweepPoint base;
  base.family = default_family;

  std::vector<SweepPoint> grid;
  if (j.contains("points")) {
    if (j.size() != 1) throw UsageError("grid with 'points' must not hold other keys");
    const json& pts = j.at("points");
    if (!pts.is_array()) throw UsageError("grid 'points' must be an array");
    for (const json& p : pts) {
      if (!p.is_object()) throw UsageError("grid points must be objects");
      SweepPoint pt = base;
      for (const auto& [key, value] : p.items()) apply_key(pt, canonical_key(key), value);
      grid.push_back(std::move(pt));
    }
    return grid;
  }

  // Cartesian form: normalize to (canonical key, value list) pairs. An
  // unknown key throws from canonical_key; an empty list makes the grid
  // empty; an object with no keys is a single all-defaults point.
  std::vector<std::pair<std::string, std::vector<json>>> axes;
  for (const char* k : kGridKeys) {
    bool present = false;
    std::vector<json> values;
    for (const auto& [key, value] : j.items()) {
      if (canonical_key(key) != k) continue;
      present = true;
      if (value.is_array())
        values.insert(values.end(), value.begin(), value.end());
      else
        values.push_back(value);
    }
    if (present) axes.emplace_back(k, std::move(values));
  }

  size_t total = 1;
  for (const auto& [key, values] : axes) total *= values.size();
  if (total == 0) return grid;

  std::vector<size_t> idx(axes.size(), 0);
  for (size_t i = 0; i < total; ++i) {
    SweepPoint pt = base;
    for (size_t a = 0; a < axes.size(); ++a) apply_key(pt, axes[a].first, axes[a].second[idx[a]]);
    grid.push_back(std::move(pt));
    for (size_t a = axes.size(); a-- > 0;) {  // last key varies fastest
      if (++idx[a] < axes[a].second.size()) break;
      idx[a] = 0;
    }
  }
  return grid;
}

}  // namespace

int cmd_sweep(const std::string& task_name, const std::string& family,
              const std::string& grid_path, const std::string& dataset_path,
              const std::string& out_path, int jobs, bool zero_wall) {
  Task task = parse_task(task_name);

  json j;
  try {
    std::ifstream in(grid_path);
    if (!in) throw UsageError("cannot open grid file " + grid_path);
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("malformed grid file " + grid_path + ": " + e.what());
  }
  std::vector<SweepPoint> grid = parse_grid(j, family);
  for (const SweepPoint& pt : grid) pt.config.validate();

  if (grid.empty()) {
    write_text_file(out_path, sweep_csv(task, {}, zero_wall));
    std::printf("empty grid: wrote header-only %s\n", out_path.c_str());
    return kExitOk;
  }

  DataBundle data = acquire_dataset(dataset_path);
  std::printf("sweep:   %zu runs (%s, default family %s, jobs %d)\n", grid.size(),
              task_name.c_str(), family.c_str(), jobs);
  std::printf("dataset: %s (sha1 %s)\n", data.source.c_str(), data.sha1.c_str());
  std::fflush(stdout);

  std::vector<SweepRow> rows = sweep(task, grid, data.ds, jobs);
  write_text_file(out_path, sweep_csv(task, rows, zero_wall));

  std::printf("%-12s %4s %2s %2s %9s %9s  %6s %6s %6s  %-8s %12s %12s\n", "family", "fs", "c",
              "r", "params", "split", "lr", "wd", "batch", "status", "final_test", "best_test");
  for (const SweepRow& r : rows) {
    const SweepPoint& p = r.point;
    std::printf("%-12s %4d %2d %2d %9lld %9s  %6g %6g %6d  %-8s %12.4f %12.4f\n",
                p.family.c_str(), p.hyper.fs, p.hyper.c, p.hyper.with_r ? 1 : 0,
                static_cast<long long>(r.params),
                p.split == SplitKind::uniform ? "uniform" : "quadrant", p.config.lr,
                p.config.weight_decay, p.config.batch_size,
                r.result.status == RunStatus::ok ? "ok" : "diverged", r.result.final_test_metric,
                r.result.best_test_metric);
  }
  std::printf("wrote %s (%zu rows)\n", out_path.c_str(), rows.size());
  return kExitOk;
}

}  // namespace lab
