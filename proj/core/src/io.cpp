#include "coordconv/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace coordconv {

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 24));
}

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

struct Cursor {
  const uint8_t* p;
  size_t left;
  void need(size_t n, const char* what) const {
    if (left < n) throw std::runtime_error(std::string("truncated input reading ") + what);
  }
  void skip(size_t n) {
    p += n;
    left -= n;
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
    skip(4);
    return v;
  }
  uint16_t u16(const char* what) {
    need(2, what);
    uint16_t v = static_cast<uint16_t>(uint32_t(p[0]) | uint32_t(p[1]) << 8);
    skip(2);
    return v;
  }
  uint8_t u8(const char* what) {
    need(1, what);
    uint8_t v = p[0];
    skip(1);
    return v;
  }
  void expect_magic(const char* magic) {
    size_t n = std::strlen(magic);
    need(n, "magic");
    if (std::memcmp(p, magic, n) != 0)
      throw std::runtime_error(std::string("bad magic, expected ") + magic);
    skip(n);
  }
};

void put_magic(std::vector<uint8_t>& out, const char* magic) {
  out.insert(out.end(), magic, magic + std::strlen(magic));
}

std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  f.seekg(0, std::ios::end);
  std::streamoff size = f.tellg();
  f.seekg(0);
  std::vector<uint8_t> bytes(static_cast<size_t>(size));
  if (size > 0) f.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!f) throw std::runtime_error("short read on " + path);
  return bytes;
}

void write_file_bytes(const std::string& path, const uint8_t* data, size_t size) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!f) throw std::runtime_error("short write on " + path);
}

}  // namespace

// ---- tensors ----

template <class T>
void write_tensor(std::vector<uint8_t>& out, const Tensor<T>& t) {
  if (!t.defined()) throw std::invalid_argument("write_tensor: undefined tensor");
  put_magic(out, "TNSR1");
  put_u32(out, static_cast<uint32_t>(t.shape().rank()));
  for (int i = 0; i < t.shape().rank(); ++i)
    put_u32(out, static_cast<uint32_t>(t.shape()[i]));
  out.push_back(static_cast<uint8_t>(dtype_of<T>::value));
  size_t bytes = static_cast<size_t>(t.numel()) * sizeof(T);
  size_t at = out.size();
  out.resize(at + bytes);
  std::memcpy(out.data() + at, t.data(), bytes);  // little-endian host assumed for raw payload
}

template <class T>
Tensor<T> read_tensor(const uint8_t*& data, size_t& size) {
  Cursor c{data, size};
  c.expect_magic("TNSR1");
  uint32_t rank = c.u32("rank");
  if (rank == 0 || rank > 8) throw std::runtime_error("tensor rank out of range");
  std::vector<int64_t> dims(rank);
  for (uint32_t i = 0; i < rank; ++i) dims[i] = c.u32("extent");
  uint8_t code = c.u8("dtype");
  if (code != static_cast<uint8_t>(dtype_of<T>::value))
    throw std::runtime_error("tensor dtype mismatch");
  Shape shape{dims};
  size_t bytes = static_cast<size_t>(shape.numel()) * sizeof(T);
  c.need(bytes, "tensor payload");
  Tensor<T> t{shape};
  std::memcpy(t.data(), c.p, bytes);
  c.skip(bytes);
  data = c.p;
  size = c.left;
  return t;
}

template <class T>
void save_tensor(const std::string& path, const Tensor<T>& t) {
  std::vector<uint8_t> out;
  write_tensor(out, t);
  write_file_bytes(path, out.data(), out.size());
}

template <class T>
Tensor<T> load_tensor(const std::string& path) {
  std::vector<uint8_t> bytes = read_file_bytes(path);
  const uint8_t* p = bytes.data();
  size_t left = bytes.size();
  Tensor<T> t = read_tensor<T>(p, left);
  if (left != 0) throw std::runtime_error("trailing bytes in " + path);
  return t;
}

template <class T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
  std::vector<uint8_t> out;
  write_tensor(out, t);
  os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!os) throw std::runtime_error("tensor write failed");
}

// Consumes exactly one record so several can share a stream.
template <class T>
Tensor<T> read_tensor(std::istream& is) {
  auto take = [&is](void* dst, size_t n, const char* what) {
    is.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(is.gcount()) != n)
      throw std::runtime_error(std::string("truncated tensor record at ") + what);
  };
  auto take_u32 = [&take](const char* what) {
    uint8_t b[4];
    take(b, 4, what);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
  };
  char magic[5];
  take(magic, 5, "magic");
  if (std::memcmp(magic, "TNSR1", 5) != 0) throw std::runtime_error("bad tensor magic");
  uint32_t rank = take_u32("rank");
  if (rank == 0 || rank > 8) throw std::runtime_error("tensor rank out of range");
  std::vector<int64_t> dims(rank);
  for (uint32_t i = 0; i < rank; ++i) dims[i] = take_u32("extent");
  uint8_t code;
  take(&code, 1, "dtype");
  if (code != static_cast<uint8_t>(dtype_of<T>::value))
    throw std::runtime_error("tensor dtype mismatch");
  Tensor<T> t{Shape{dims}};
  take(t.data(), static_cast<size_t>(t.numel()) * sizeof(T), "payload");
  return t;
}

template void write_tensor<float>(std::vector<uint8_t>&, const Tensor<float>&);
template void write_tensor<double>(std::vector<uint8_t>&, const Tensor<double>&);
template Tensor<float> read_tensor<float>(const uint8_t*&, size_t&);
template Tensor<double> read_tensor<double>(const uint8_t*&, size_t&);
template void write_tensor<float>(std::ostream&, const Tensor<float>&);
template void write_tensor<double>(std::ostream&, const Tensor<double>&);
template Tensor<float> read_tensor<float>(std::istream&);
template Tensor<double> read_tensor<double>(std::istream&);
template void save_tensor<float>(const std::string&, const Tensor<float>&);
template void save_tensor<double>(const std::string&, const Tensor<double>&);
template Tensor<float> load_tensor<float>(const std::string&);
template Tensor<double> load_tensor<double>(const std::string&);

// ---- dataset ----

std::vector<uint8_t> serialize_dataset(const Dataset& ds) {
  std::vector<uint8_t> out;
  put_magic(out, "NSCLEVR1");
  put_u32(out, static_cast<uint32_t>(ds.size()));
  for (size_t i = 0; i < ds.size(); ++i) {
    const Example& e = ds[i];
    out.push_back(e.x);
    out.push_back(e.y);
    out.insert(out.end(), e.onehot.begin(), e.onehot.end());
    out.insert(out.end(), e.image.begin(), e.image.end());
  }
  return out;
}

void save_dataset(const std::string& path, const Dataset& ds) {
  std::vector<uint8_t> out = serialize_dataset(ds);
  write_file_bytes(path, out.data(), out.size());
}

Dataset load_dataset(const std::string& path) {
  std::vector<uint8_t> bytes = read_file_bytes(path);
  Cursor c{bytes.data(), bytes.size()};
  c.expect_magic("NSCLEVR1");
  uint32_t count = c.u32("count");
  std::vector<Example> examples(count);
  for (uint32_t i = 0; i < count; ++i) {
    Example& e = examples[i];
    e.x = c.u8("x");
    e.y = c.u8("y");
    c.need(e.onehot.size(), "onehot");
    std::memcpy(e.onehot.data(), c.p, e.onehot.size());
    c.skip(e.onehot.size());
    c.need(e.image.size(), "image");
    std::memcpy(e.image.data(), c.p, e.image.size());
    c.skip(e.image.size());
  }
  if (c.left != 0) throw std::runtime_error("trailing bytes in " + path);
  return Dataset::from_examples(std::move(examples));
}

// ---- splits ----

void save_split(const std::string& path, const Split& split) {
  std::vector<uint8_t> out;
  put_magic(out, "SPLIT1");
  out.push_back(static_cast<uint8_t>(split.kind));
  put_u32(out, split.seed);
  put_u32(out, static_cast<uint32_t>(split.train.size()));
  put_u32(out, static_cast<uint32_t>(split.test.size()));
  for (uint16_t v : split.train) put_u16(out, v);
  for (uint16_t v : split.test) put_u16(out, v);
  write_file_bytes(path, out.data(), out.size());
}

Split load_split(const std::string& path) {
  std::vector<uint8_t> bytes = read_file_bytes(path);
  Cursor c{bytes.data(), bytes.size()};
  c.expect_magic("SPLIT1");
  uint8_t kind = c.u8("kind");
  if (kind > 1) throw std::runtime_error("unknown split kind");
  Split s;
  s.kind = static_cast<SplitKind>(kind);
  s.seed = c.u32("seed");
  uint32_t ntrain = c.u32("train count");
  uint32_t ntest = c.u32("test count");
  s.train.resize(ntrain);
  s.test.resize(ntest);
  for (uint32_t i = 0; i < ntrain; ++i) s.train[i] = c.u16("train index");
  for (uint32_t i = 0; i < ntest; ++i) s.test[i] = c.u16("test index");
  if (c.left != 0) throw std::runtime_error("trailing bytes in " + path);
  return s;
}

// ---- PGM ----

void write_pgm(const std::string& path, const float* img, int h, int w, bool normalize) {
  float lo = 0.0f, hi = 1.0f;
  if (normalize) {
    lo = img[0];
    hi = img[0];
    for (int i = 1; i < h * w; ++i) {
      lo = std::min(lo, img[i]);
      hi = std::max(hi, img[i]);
    }
  }
  float range = hi - lo;
  std::string header = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + static_cast<size_t>(h) * w);
  for (int i = 0; i < h * w; ++i) {
    float v = range > 0 ? (img[i] - lo) / range : 0.0f;
    v = std::clamp(v, 0.0f, 1.0f);
    out.push_back(static_cast<uint8_t>(v * 255.0f + 0.5f));
  }
  write_file_bytes(path, out.data(), out.size());
}

// ---- checkpoints ----

template <class T>
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor<T>>>& entries) {
  std::vector<uint8_t> out;
  put_magic(out, "CKPT1");
  put_u32(out, static_cast<uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    if (name.size() > 0xFFFF) throw std::invalid_argument("checkpoint entry name too long");
    put_u16(out, static_cast<uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    write_tensor(out, t);
  }
  write_file_bytes(path, out.data(), out.size());
}

template <class T>
std::vector<std::pair<std::string, Tensor<T>>> load_checkpoint(const std::string& path) {
  std::vector<uint8_t> bytes = read_file_bytes(path);
  Cursor c{bytes.data(), bytes.size()};
  c.expect_magic("CKPT1");
  uint32_t count = c.u32("count");
  std::vector<std::pair<std::string, Tensor<T>>> entries;
  entries.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    uint16_t len = c.u16("name length");
    c.need(len, "name");
    std::string name(reinterpret_cast<const char*>(c.p), len);
    c.skip(len);
    Tensor<T> t = read_tensor<T>(c.p, c.left);
    entries.emplace_back(std::move(name), std::move(t));
  }
  if (c.left != 0) throw std::runtime_error("trailing bytes in " + path);
  return entries;
}

template void save_checkpoint<float>(const std::string&,
                                     const std::vector<std::pair<std::string, Tensor<float>>>&);
template void save_checkpoint<double>(const std::string&,
                                      const std::vector<std::pair<std::string, Tensor<double>>>&);
template std::vector<std::pair<std::string, Tensor<float>>> load_checkpoint<float>(
    const std::string&);
template std::vector<std::pair<std::string, Tensor<double>>> load_checkpoint<double>(
    const std::string&);

// ---- hashing ----

std::string git_blob_sha1(std::span<const uint8_t> bytes) {
  std::string header = "blob " + std::to_string(bytes.size());
  header.push_back('\0');
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int digest_len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw std::runtime_error("EVP_MD_CTX_new failed");
  bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
            EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
            (bytes.empty() || EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) == 1) &&
            EVP_DigestFinal_ex(ctx, digest, &digest_len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("SHA-1 computation failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(digest_len * 2);
  for (unsigned int i = 0; i < digest_len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

std::string git_blob_sha1_file(const std::string& path) {
  std::vector<uint8_t> bytes = read_file_bytes(path);
  return git_blob_sha1(std::span<const uint8_t>(bytes.data(), bytes.size()));
}

std::string read_text_file(const std::string& path) {
  std::vector<uint8_t> bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

void write_text_file(const std::string& path, const std::string& text) {
  write_file_bytes(path, reinterpret_cast<const uint8_t*>(text.data()), text.size());
}

}  // namespace coordconv
