#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssgan/tensor.hpp"

namespace ssgan::data {

enum class Split { Train, Test };

std::string to_string(Split s);
Split parse_split(const std::string& s);

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Immutable image collection. Pixels are NHWC floats in [-1, 1].
struct Dataset {
  std::string name;
  Split split = Split::Train;
  TensorF images;      // [N, H, W, C]
  Labels labels;       // empty when unlabeled, otherwise one per image
  int num_classes = 0;
  std::string version;  // content hash

  int64_t size() const { return images.empty() ? 0 : images.dim(0); }
  int64_t image_size() const { return images.dim(1); }
  int64_t channels() const { return images.dim(3); }
  bool labeled() const { return !labels.empty(); }
  Shape image_shape() const { return {images.dim(1), images.dim(2), images.dim(3)}; }

  // Rows in the given order; the version is recomputed.
  Dataset subset(const std::vector<int64_t>& rows, const std::string& suffix = "") const;
};

// SHA-256 over shape, pixels and labels.
std::string content_hash(const TensorF& images, const Labels& labels);

// Throws DataError unless pixels lie in [-1, 1] and labels in [0, num_classes).
void validate(const Dataset& ds);

inline constexpr int64_t kCifarRecordBytes = 3073;
inline constexpr int64_t kCifarRecordsPerFile = 10000;

// Files expected under root (or root/cifar-10-batches-bin) for a split.
std::vector<std::string> cifar10_files(Split split);

// Standard CIFAR-10 binary archive: 1 label byte + 3072 channel-planar pixel
// bytes per record; pixel p maps to p / 127.5 - 1.
Dataset load_cifar10(const std::filesystem::path& root, Split split);

// Decodes a buffer of CIFAR-10 records (exposed for tests and fixtures).
Dataset decode_cifar10(const std::vector<uint8_t>& bytes, const std::string& name, Split split);

inline constexpr int kMaxShapeClasses = 10;

// Procedural glyphs with a canonical upright orientation, none invariant under
// a quarter turn. Class i has floor(n/k) or floor(n/k)+1 members (exactly n/k
// when k divides n); position, scale, stroke width and colors are random.
Dataset make_synthetic_shapes(int64_t n, int64_t size, uint64_t seed, int num_classes = kMaxShapeClasses,
                              Split split = Split::Train);

// Directory container: manifest.json + images.bin (float32 LE) + labels.bin (int32 LE).
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

struct Batch {
  TensorF images;
  Labels labels;  // empty for unlabeled datasets
  std::vector<int64_t> rows;
  int64_t epoch = 0;
  int64_t index = 0;  // batch index within the epoch
};

// Epoch-wise shuffled batches. The permutation of epoch e depends only on
// (seed, e); the trailing partial batch is dropped.
class BatchStream {
 public:
  BatchStream(const Dataset& ds, int64_t batch_size, uint64_t seed);

  Batch next();
  int64_t batches_per_epoch() const { return batches_per_epoch_; }
  int64_t epoch() const { return epoch_; }
  int64_t position() const { return position_; }
  // Resumes at batch `position` of `epoch`.
  void seek(int64_t epoch, int64_t position);

  static std::vector<int64_t> permutation(int64_t n, uint64_t seed, int64_t epoch);

 private:
  const Dataset* ds_;
  int64_t batch_size_;
  uint64_t seed_;
  int64_t batches_per_epoch_;
  int64_t epoch_ = 0;
  int64_t position_ = 0;
  std::vector<int64_t> order_;
};

// Gathers rows of an NHWC tensor.
TensorF gather_images(const TensorF& images, const std::vector<int64_t>& rows);

}  // namespace ssgan::data
