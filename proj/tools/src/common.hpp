#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "coordconv/dataset.hpp"
#include "coordconv/models.hpp"
#include "coordconv/train.hpp"

namespace lab {

// Usage-level problems (bad flag combinations, malformed inputs) exit 2.
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitSelftest = 4;

// Everything a single run needs; doubles as the manifest's config snapshot.
struct RunOptions {
  std::string task = "cls";
  std::string family = "CC-CLS";
  int fs = 2;
  int c = 1;
  bool with_r = false;
  std::string split = "uniform";
  uint32_t split_seed = 1;
  std::string dataset_path;  // empty -> generate in memory
  std::string out_dir = "run";
  coordconv::TrainConfig train;
};

coordconv::Task parse_task(const std::string& name);
coordconv::SplitKind parse_split(const std::string& name);

// Applies config-file values for every flag the user did not pass on the
// command line (flags override the file).
void merge_config_file(const std::string& path, const std::vector<std::string>& passed,
                       RunOptions& opt);

nlohmann::json options_json(const RunOptions& opt);

struct DataBundle {
  coordconv::Dataset ds;
  std::string source;  // file path or "(generated)"
  std::string sha1;    // git-blob hash of the serialized bytes
};
DataBundle acquire_dataset(const std::string& path);

void ensure_dir(const std::string& path);
std::string join_path(const std::string& dir, const std::string& name);

// manifest.json for one completed run; artifact paths are relative to the
// run directory.
void write_manifest(const std::string& out_dir, const std::string& command_line,
                    const nlohmann::json& config, const DataBundle& data,
                    const coordconv::Architecture& arch, const coordconv::TrainResult& result,
                    const std::vector<std::string>& artifacts);

std::string quote_command_line(int argc, const char* const* argv);

}  // namespace lab
