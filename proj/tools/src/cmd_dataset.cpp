#include <cstdio>
#include <string>

#include "common.hpp"
#include "coordconv/dataset.hpp"
#include "coordconv/io.hpp"

namespace lab {

using namespace coordconv;

// Writes the dataset file, the two canonical splits, and per-split pixelwise
// sum images (train/test x onehot/image for each split kind).
int cmd_dataset(const std::string& out_dir) {
  ensure_dir(out_dir);

  Dataset ds = Dataset::generate();
  std::string ds_path = join_path(out_dir, "dataset.nsclevr");
  save_dataset(ds_path, ds);
  std::string sha1 = git_blob_sha1_file(ds_path);
  std::printf("dataset: %s (%zu examples, sha1 %s)\n", ds_path.c_str(), ds.size(), sha1.c_str());

  const struct {
    SplitKind kind;
    const char* name;
  } kinds[] = {{SplitKind::uniform, "uniform"}, {SplitKind::quadrant, "quadrant"}};

  for (const auto& sk : kinds) {
    Split split = make_split(sk.kind, 1);
    std::string split_path = join_path(out_dir, std::string(sk.name) + ".split");
    save_split(split_path, split);
    std::printf("split:   %s (train %zu / test %zu)\n", split_path.c_str(), split.train.size(),
                split.test.size());

    SumImages sums = split_sum_images(ds, split);
    const struct {
      const std::vector<float>* img;
      const char* tag;
    } maps[] = {{&sums.train_onehot, "train_onehot"},
                {&sums.train_image, "train_image"},
                {&sums.test_onehot, "test_onehot"},
                {&sums.test_image, "test_image"}};
    for (const auto& m : maps) {
      std::string path = join_path(out_dir, std::string("sum_") + sk.name + "_" + m.tag + ".pgm");
      write_pgm(path, m.img->data(), kCanvas, kCanvas);
      std::printf("image:   %s\n", path.c_str());
    }
  }
  return kExitOk;
}

}  // namespace lab
