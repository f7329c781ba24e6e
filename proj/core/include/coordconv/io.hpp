#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "coordconv/dataset.hpp"
#include "coordconv/tensor.hpp"

// Binary formats (all integers little-endian):
//   TNSR1     "TNSR1" | u32 rank | u32 extent[rank] | u8 dtype (0 f32, 1 f64) | raw values
//   NSCLEVR1  "NSCLEVR1" | u32 count | per example: u8 x, u8 y,
//             512B onehot bits, 512B image bits (pixel p = row*64+col at
//             byte p>>3, bit p&7, LSB first)
//   SPLIT1    "SPLIT1" | u8 kind | u32 seed | u32 n_train | u32 n_test |
//             u16 train indices | u16 test indices
//   CKPT1     "CKPT1" | u32 count | per entry: u16 name length, name bytes,
//             TNSR1 record
// PGM export is binary P5, maxval 255.

namespace coordconv {

template <class T>
void write_tensor(std::ostream& os, const Tensor<T>& t);
template <class T>
Tensor<T> read_tensor(std::istream& is);  // throws on bad magic or dtype mismatch

template <class T>
void save_tensor(const std::string& path, const Tensor<T>& t);
template <class T>
Tensor<T> load_tensor(const std::string& path);

std::vector<uint8_t> serialize_dataset(const Dataset& ds);
void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

void save_split(const std::string& path, const Split& split);
Split load_split(const std::string& path);

// img is h*w row-major. normalize=true min-max scales to [0,255]; otherwise
// values are clamped to [0,1] then scaled.
void write_pgm(const std::string& path, const float* img, int h, int w, bool normalize = true);

template <class T>
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor<T>>>& entries);
template <class T>
std::vector<std::pair<std::string, Tensor<T>>> load_checkpoint(const std::string& path);

// Hex SHA-1 of "blob <size>\0<bytes>" — the same content id `git hash-object`
// assigns the file.
std::string git_blob_sha1(std::span<const uint8_t> bytes);
std::string git_blob_sha1_file(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace coordconv
