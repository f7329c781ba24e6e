#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "coordconv/io.hpp"
#include "oracles.hpp"

using namespace coordconv;

namespace {

std::filesystem::path tmp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("coordconv_test_" + name);
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("tensor records serialize to the frozen byte layout") {
  Tensor<float> t = Tensor<float>::from({2}, {1.0f, 2.0f});
  std::ostringstream os(std::ios::binary);
  write_tensor(os, t);
  static const uint8_t kExpect[] = {
      'T',  'N',  'S',  'R',  '1',         // magic
      0x01, 0x00, 0x00, 0x00,              // rank
      0x02, 0x00, 0x00, 0x00,              // extent
      0x00,                                // dtype f32
      0x00, 0x00, 0x80, 0x3f,              // 1.0f
      0x00, 0x00, 0x00, 0x40,              // 2.0f
  };
  REQUIRE(os.str().size() == sizeof(kExpect));
  CHECK(std::memcmp(os.str().data(), kExpect, sizeof(kExpect)) == 0);

  Tensor<double> d = Tensor<double>::from({1}, {0.0});
  std::ostringstream os2(std::ios::binary);
  write_tensor(os2, d);
  CHECK(os2.str().substr(0, 5) == "TNSR1");
  CHECK(os2.str()[13] == '\x01');  // dtype f64
}

TEST_CASE("tensors roundtrip through streams and files") {
  std::mt19937 gen(7);
  Tensor<float> t = oracle::random_tensor<float>({2, 3, 4, 5}, gen);
  std::stringstream ss(std::ios::binary | std::ios::in | std::ios::out);
  write_tensor(ss, t);
  Tensor<float> back = read_tensor<float>(ss);
  REQUIRE(back.shape() == t.shape());
  CHECK(std::memcmp(back.data(), t.data(), sizeof(float) * 120) == 0);

  Tensor<double> d = oracle::random_tensor<double>({7}, gen);
  auto path = tmp_path("roundtrip.tnsr");
  save_tensor(path.string(), d);
  Tensor<double> dback = load_tensor<double>(path.string());
  REQUIRE(dback.shape() == d.shape());
  CHECK(std::memcmp(dback.data(), d.data(), sizeof(double) * 7) == 0);
  std::filesystem::remove(path);
}

TEST_CASE("tensor reads reject bad magic, dtype mismatch, and truncation") {
  Tensor<float> t = Tensor<float>::from({2, 2}, {1, 2, 3, 4});
  std::ostringstream os(std::ios::binary);
  write_tensor(os, t);
  std::string bytes = os.str();

  {
    std::istringstream is("XNSR1" + bytes.substr(5), std::ios::binary);
    CHECK_THROWS_AS(read_tensor<float>(is), std::runtime_error);
  }
  {
    std::istringstream is(bytes, std::ios::binary);
    CHECK_THROWS_AS(read_tensor<double>(is), std::runtime_error);
  }
  {
    std::istringstream is(bytes.substr(0, bytes.size() - 3), std::ios::binary);
    CHECK_THROWS_AS(read_tensor<float>(is), std::runtime_error);
  }
  {
    auto path = tmp_path("truncated.tnsr");
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()) - 1);
    out.close();
    CHECK_THROWS_AS(load_tensor<float>(path.string()), std::runtime_error);
    std::filesystem::remove(path);
  }
}

TEST_CASE("the dataset file roundtrips and regenerates byte-identically") {
  Dataset ds = Dataset::generate();
  std::vector<uint8_t> a = serialize_dataset(ds);
  CHECK(a.size() == 8 + 4 + 3136 * (2 + 512 + 512));
  std::vector<uint8_t> b = serialize_dataset(Dataset::generate());
  REQUIRE(a == b);

  auto path = tmp_path("dataset.bin");
  save_dataset(path.string(), ds);
  Dataset back = load_dataset(path.string());
  REQUIRE(back.size() == ds.size());
  for (size_t i = 0; i < ds.size(); i += 131) {
    CHECK(back[i].x == ds[i].x);
    CHECK(back[i].y == ds[i].y);
    CHECK(back[i].onehot == ds[i].onehot);
    CHECK(back[i].image == ds[i].image);
  }
  CHECK(serialize_dataset(back) == a);
  std::filesystem::remove(path);
}

TEST_CASE("splits roundtrip with kind, seed, and both index lists") {
  Dataset ds = Dataset::generate();
  for (SplitKind kind : {SplitKind::uniform, SplitKind::quadrant}) {
    Split s = make_split(kind, 42);
    auto path = tmp_path("split.bin");
    save_split(path.string(), s);
    Split back = load_split(path.string());
    CHECK(back.kind == s.kind);
    CHECK(back.seed == s.seed);
    CHECK(back.train == s.train);
    CHECK(back.test == s.test);
    std::filesystem::remove(path);
  }
}

TEST_CASE("PGM export writes a P5 header and scales as documented") {
  float img[12] = {0.0f, 0.25f, 0.5f, 1.0f, 2.0f, -1.0f, 0.75f, 0.1f, 0.9f, 0.3f, 0.6f, 0.2f};
  auto path = tmp_path("img.pgm");

  write_pgm(path.string(), img, 3, 4, /*normalize=*/false);
  std::string bytes = file_bytes(path);
  const std::string header = "P5\n4 3\n255\n";
  REQUIRE(bytes.substr(0, header.size()) == header);
  REQUIRE(bytes.size() == header.size() + 12);
  const auto* px = reinterpret_cast<const uint8_t*>(bytes.data() + header.size());
  CHECK(px[0] == 0);
  CHECK(px[3] == 255);
  CHECK(px[4] == 255);  // clamped from 2.0
  CHECK(px[5] == 0);    // clamped from -1.0
  CHECK(px[2] == 128);  // round(0.5 * 255 + 0.5)

  // min-max normalization maps the extremes to 0 and 255
  float ramp[4] = {10.0f, 11.0f, 12.0f, 14.0f};
  write_pgm(path.string(), ramp, 1, 4, /*normalize=*/true);
  bytes = file_bytes(path);
  px = reinterpret_cast<const uint8_t*>(bytes.data() + std::string("P5\n4 1\n255\n").size());
  CHECK(px[0] == 0);
  CHECK(px[3] == 255);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoints keep names, order, and exact values") {
  std::mt19937 gen(11);
  std::vector<std::pair<std::string, Tensor<float>>> entries;
  entries.emplace_back("L0.w", oracle::random_tensor<float>({3, 3, 2, 4}, gen));
  entries.emplace_back("L0.b", oracle::random_tensor<float>({4}, gen));
  entries.emplace_back("L1.bn.running_mean", oracle::random_tensor<float>({4}, gen));
  auto path = tmp_path("ckpt.bin");
  save_checkpoint(path.string(), entries);
  auto back = load_checkpoint<float>(path.string());
  REQUIRE(back.size() == entries.size());
  for (size_t i = 0; i < entries.size(); ++i) {
    CHECK(back[i].first == entries[i].first);
    REQUIRE(back[i].second.shape() == entries[i].second.shape());
    CHECK(std::memcmp(back[i].second.data(), entries[i].second.data(),
                      sizeof(float) * static_cast<size_t>(entries[i].second.numel())) == 0);
  }
  std::filesystem::remove(path);
}

TEST_CASE("content ids match git hash-object") {
  CHECK(git_blob_sha1({}) == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  const uint8_t abc[3] = {'a', 'b', 'c'};
  CHECK(git_blob_sha1(std::span<const uint8_t>(abc, 3)) ==
        "f2ba8f84ab5c1bce84a7b441cb1959cfc7093b7f");

  auto path = tmp_path("blob.bin");
  write_text_file(path.string(), "abc");
  CHECK(git_blob_sha1_file(path.string()) == "f2ba8f84ab5c1bce84a7b441cb1959cfc7093b7f");
  std::filesystem::remove(path);
}

TEST_CASE("text files roundtrip including embedded newlines") {
  auto path = tmp_path("note.txt");
  const std::string content = "line one\nline two\n\ttab";
  write_text_file(path.string(), content);
  CHECK(read_text_file(path.string()) == content);
  std::filesystem::remove(path);
}
