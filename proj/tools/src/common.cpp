#include "common.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "coordconv/io.hpp"

namespace lab {

using nlohmann::json;

coordconv::Task parse_task(const std::string& name) {
  if (name == "cls") return coordconv::Task::cls;
  if (name == "reg") return coordconv::Task::reg;
  if (name == "ren") return coordconv::Task::ren;
  throw UsageError("unknown task '" + name + "' (expected cls, reg, or ren)");
}

coordconv::SplitKind parse_split(const std::string& name) {
  if (name == "uniform") return coordconv::SplitKind::uniform;
  if (name == "quadrant") return coordconv::SplitKind::quadrant;
  throw UsageError("unknown split '" + name + "' (expected uniform or quadrant)");
}

namespace {

bool was_passed(const std::vector<std::string>& passed, const std::string& key) {
  return std::find(passed.begin(), passed.end(), key) != passed.end();
}

template <class T>
void take(const json& j, const char* key, const std::vector<std::string>& passed, T& into) {
  if (j.contains(key) && !was_passed(passed, key)) into = j.at(key).get<T>();
}

}  // namespace

void merge_config_file(const std::string& path, const std::vector<std::string>& passed,
                       RunOptions& opt) {
  json j;
  try {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file " + path);
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("malformed config file " + path + ": " + e.what());
  }
  if (!j.is_object()) throw UsageError("config file " + path + " must hold a JSON object");

  take(j, "task", passed, opt.task);
  take(j, "family", passed, opt.family);
  take(j, "fs", passed, opt.fs);
  take(j, "c", passed, opt.c);
  take(j, "with_r", passed, opt.with_r);
  take(j, "split", passed, opt.split);
  take(j, "split_seed", passed, opt.split_seed);
  take(j, "dataset", passed, opt.dataset_path);
  take(j, "out", passed, opt.out_dir);
  take(j, "lr", passed, opt.train.lr);
  take(j, "weight_decay", passed, opt.train.weight_decay);
  take(j, "batch_size", passed, opt.train.batch_size);
  take(j, "epochs", passed, opt.train.epochs);
  take(j, "seed", passed, opt.train.seed);
  take(j, "eval_stride", passed, opt.train.eval_stride);
  take(j, "early_stop", passed, opt.train.early_stop);
}

json options_json(const RunOptions& opt) {
  return json{{"task", opt.task},
              {"family", opt.family},
              {"fs", opt.fs},
              {"c", opt.c},
              {"with_r", opt.with_r},
              {"split", opt.split},
              {"split_seed", opt.split_seed},
              {"dataset", opt.dataset_path},
              {"out", opt.out_dir},
              {"lr", opt.train.lr},
              {"weight_decay", opt.train.weight_decay},
              {"batch_size", opt.train.batch_size},
              {"epochs", opt.train.epochs},
              {"seed", opt.train.seed},
              {"eval_stride", opt.train.eval_stride},
              {"early_stop", opt.train.early_stop}};
}

DataBundle acquire_dataset(const std::string& path) {
  namespace fs = std::filesystem;
  if (!path.empty() && fs::exists(path)) {
    coordconv::Dataset ds = coordconv::load_dataset(path);
    std::string sha1 = coordconv::git_blob_sha1_file(path);
    return DataBundle{std::move(ds), path, sha1};
  }
  if (!path.empty()) throw UsageError("dataset file not found: " + path);
  coordconv::Dataset ds = coordconv::Dataset::generate();
  std::vector<uint8_t> bytes = coordconv::serialize_dataset(ds);
  std::string sha1 = coordconv::git_blob_sha1(bytes);
  return DataBundle{std::move(ds), "(generated)", sha1};
}

void ensure_dir(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) throw std::runtime_error("cannot create directory " + path + ": " + ec.message());
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

void write_manifest(const std::string& out_dir, const std::string& command_line,
                    const json& config, const DataBundle& data,
                    const coordconv::Architecture& arch, const coordconv::TrainResult& result,
                    const std::vector<std::string>& artifacts) {
  auto metric_or_null = [](double v) {
    return std::isnan(v) ? json(nullptr) : json(v);
  };
  json m{{"command_line", command_line},
         {"config", config},
         {"dataset", {{"source", data.source}, {"sha1", data.sha1}}},
         {"architecture",
          {{"name", arch.name},
           {"text", arch.text()},
           {"params", coordconv::param_count(arch)}}},
         {"seed", config.value("seed", uint64_t{0})},
         {"outcome",
          {{"status", result.status == coordconv::RunStatus::ok ? "ok" : "diverged"},
           {"message", result.message},
           {"epochs_run", result.epochs_run},
           {"wall_clock_s", result.wall_clock_s},
           {"final_train_metric", metric_or_null(result.final_train_metric)},
           {"final_test_metric", metric_or_null(result.final_test_metric)},
           {"best_test_metric", metric_or_null(result.best_test_metric)},
           {"best_epoch", result.best_epoch}}},
         {"artifacts", artifacts}};
  coordconv::write_text_file(join_path(out_dir, "manifest.json"), m.dump(2) + "\n");
}

std::string quote_command_line(int argc, const char* const* argv) {
  std::string line;
  for (int i = 0; i < argc; ++i) {
    if (i) line += ' ';
    std::string a = argv[i];
    if (a.find_first_of(" \t\"'") == std::string::npos) {
      line += a;
    } else {
      line += '"';
      for (char ch : a) {
        if (ch == '"' || ch == '\\') line += '\\';
        line += ch;
      }
      line += '"';
    }
  }
  return line;
}

}  // namespace lab
