#include "ssgan/data.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

#include "ssgan/hash.hpp"
#include "ssgan/random.hpp"

namespace ssgan::data {

namespace fs = std::filesystem;

std::string to_string(Split s) { return s == Split::Train ? "train" : "test"; }

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  throw DataError("unknown split '" + s + "' (expected train or test)");
}

std::string content_hash(const TensorF& images, const Labels& labels) {
  Sha256 h;
  for (int64_t d : images.shape()) h.update(&d, sizeof d);
  h.update(images.data(), sizeof(float) * static_cast<size_t>(images.size()));
  const int64_t nl = static_cast<int64_t>(labels.size());
  h.update(&nl, sizeof nl);
  h.update(labels.data(), sizeof(int32_t) * labels.size());
  return h.digest();
}

void validate(const Dataset& ds) {
  if (ds.images.rank() != 4) throw DataError(ds.name + ": images must be [N,H,W,C], got " + shape_str(ds.images.shape()));
  for (int64_t i = 0; i < ds.images.size(); ++i) {
    const float p = ds.images[i];
    if (!(p >= -1.0f && p <= 1.0f)) throw DataError(ds.name + ": pixel " + std::to_string(p) + " outside [-1,1]");
  }
  if (ds.labeled()) {
    if (static_cast<int64_t>(ds.labels.size()) != ds.size())
      throw DataError(ds.name + ": " + std::to_string(ds.labels.size()) + " labels for " +
                      std::to_string(ds.size()) + " images");
    for (int32_t l : ds.labels)
      if (l < 0 || l >= ds.num_classes)
        throw DataError(ds.name + ": label " + std::to_string(l) + " outside [0," + std::to_string(ds.num_classes) + ")");
  }
}

TensorF gather_images(const TensorF& images, const std::vector<int64_t>& rows) {
  Shape shape = images.shape();
  const int64_t per = images.size() / shape[0];
  shape[0] = static_cast<int64_t>(rows.size());
  TensorF out(shape);
  for (size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= images.dim(0)) throw std::out_of_range("gather_images: row out of range");
    std::memcpy(out.data() + static_cast<int64_t>(r) * per, images.data() + rows[r] * per, sizeof(float) * per);
  }
  return out;
}

Dataset Dataset::subset(const std::vector<int64_t>& rows, const std::string& suffix) const {
  Dataset out;
  out.name = name + suffix;
  out.split = split;
  out.num_classes = num_classes;
  out.images = gather_images(images, rows);
  if (labeled()) {
    out.labels.reserve(rows.size());
    for (int64_t r : rows) out.labels.push_back(labels[static_cast<size_t>(r)]);
  }
  out.version = content_hash(out.images, out.labels);
  return out;
}

std::vector<std::string> cifar10_files(Split split) {
  if (split == Split::Test) return {"test_batch.bin"};
  return {"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin", "data_batch_5.bin"};
}

Dataset decode_cifar10(const std::vector<uint8_t>& bytes, const std::string& name, Split split) {
  if (bytes.empty() || bytes.size() % kCifarRecordBytes != 0)
    throw DataError(name + ": size " + std::to_string(bytes.size()) + " is not a multiple of the " +
                    std::to_string(kCifarRecordBytes) + "-byte record");
  const int64_t n = static_cast<int64_t>(bytes.size()) / kCifarRecordBytes;
  Dataset ds;
  ds.name = name;
  ds.split = split;
  ds.num_classes = 10;
  ds.images = TensorF({n, 32, 32, 3});
  ds.labels.resize(static_cast<size_t>(n));
  for (int64_t r = 0; r < n; ++r) {
    const uint8_t* rec = bytes.data() + r * kCifarRecordBytes;
    if (rec[0] > 9) throw DataError(name + ": record " + std::to_string(r) + " has label byte " + std::to_string(rec[0]));
    ds.labels[static_cast<size_t>(r)] = rec[0];
    float* img = ds.images.data() + r * 3072;
    for (int c = 0; c < 3; ++c)
      for (int p = 0; p < 1024; ++p) img[p * 3 + c] = static_cast<float>(rec[1 + c * 1024 + p] / 127.5 - 1.0);
  }
  ds.version = content_hash(ds.images, ds.labels);
  return ds;
}

Dataset load_cifar10(const fs::path& root, Split split) {
  const auto files = cifar10_files(split);
  fs::path dir = root;
  if (!fs::exists(dir / files[0]) && fs::exists(root / "cifar-10-batches-bin" / files[0]))
    dir = root / "cifar-10-batches-bin";
  std::string listing;
  for (const auto& f : files) listing += " " + f;
  std::vector<uint8_t> bytes;
  for (const auto& f : files) {
    const fs::path path = dir / f;
    std::ifstream in(path, std::ios::binary);
    if (!in)
      throw DataError("CIFAR-10 " + to_string(split) + " split: cannot open " + path.string() +
                      "; expected files under " + root.string() + ":" + listing);
    std::vector<uint8_t> chunk((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (static_cast<int64_t>(chunk.size()) != kCifarRecordsPerFile * kCifarRecordBytes)
      throw DataError("CIFAR-10 file " + path.string() + " is corrupt: " + std::to_string(chunk.size()) +
                      " bytes, expected " + std::to_string(kCifarRecordsPerFile * kCifarRecordBytes));
    bytes.insert(bytes.end(), chunk.begin(), chunk.end());
  }
  return decode_cifar10(bytes, "cifar10-" + to_string(split), split);
}

namespace {

struct Segment {
  float x0, y0, x1, y1;
};

// Glyph strokes in a [-1,1]^2 box, x to the right and y downwards.
const std::array<std::vector<Segment>, kMaxShapeClasses>& glyphs() {
  static const std::array<std::vector<Segment>, kMaxShapeClasses> table{{
      {{-0.5f, -1, -0.5f, 1}, {-0.5f, -1, 0.6f, -1}, {-0.5f, 0, 0.3f, 0}},                           // F
      {{-0.5f, -1, -0.5f, 1}, {-0.5f, 1, 0.6f, 1}},                                                  // L
      {{-0.5f, -1, -0.5f, 1}, {-0.5f, -1, 0.5f, -1}, {0.5f, -1, 0.5f, 0}, {0.5f, 0, -0.5f, 0}},      // P
      {{-0.7f, -1, 0.7f, -1}, {0, -1, 0, 1}},                                                        // T
      {{-0.6f, -1, 0.6f, -1}, {0.6f, -1, -0.2f, 1}},                                                 // 7
      {{0, 1, 0, -1}, {0, -1, -0.6f, -0.4f}, {0, -1, 0.6f, -0.4f}},                                  // arrow
      {{0.4f, -1, 0.4f, 0.6f}, {0.4f, 0.6f, 0, 1}, {0, 1, -0.5f, 0.6f}},                             // J
      {{0.3f, -1, 0.3f, 1}, {0.3f, -1, -0.6f, 0.3f}, {-0.6f, 0.3f, 0.7f, 0.3f}},                     // 4
      {{-0.5f, -1, -0.5f, 1}, {-0.5f, -1, 0.6f, -1}, {-0.5f, 0, 0.4f, 0}, {-0.5f, 1, 0.6f, 1}},      // E
      {{-0.6f, -1, 0, 0}, {0.6f, -1, 0, 0}, {0, 0, 0, 1}},                                           // Y
  }};
  return table;
}

float segment_distance(float px, float py, const Segment& s) {
  const float dx = s.x1 - s.x0, dy = s.y1 - s.y0;
  const float len2 = dx * dx + dy * dy;
  float t = len2 > 0 ? ((px - s.x0) * dx + (py - s.y0) * dy) / len2 : 0.0f;
  t = std::clamp(t, 0.0f, 1.0f);
  const float ex = px - (s.x0 + t * dx), ey = py - (s.y0 + t * dy);
  return std::sqrt(ex * ex + ey * ey);
}

void render_glyph(float* img, int64_t size, const std::vector<Segment>& strokes, Rng& rng) {
  const double half = size / 2.0;
  const double scale = rng.uniform(0.5, 0.8) * half;  // pixels per glyph unit
  const double slack = half - scale - 1.0;
  const double cx = half + rng.uniform(-slack, slack), cy = half + rng.uniform(-slack, slack);
  const double width = rng.uniform(0.05, 0.09) * size;
  std::array<float, 3> fg{}, bg{};
  for (int c = 0; c < 3; ++c) {
    fg[c] = static_cast<float>(rng.uniform(0.3, 1.0));
    bg[c] = static_cast<float>(rng.uniform(-1.0, -0.4));
  }
  for (int64_t y = 0; y < size; ++y)
    for (int64_t x = 0; x < size; ++x) {
      const float gx = static_cast<float>((x + 0.5 - cx) / scale), gy = static_cast<float>((y + 0.5 - cy) / scale);
      float d = 1e9f;
      for (const auto& s : strokes) d = std::min(d, segment_distance(gx, gy, s));
      const float cover = std::clamp(static_cast<float>(width / 2 - d * scale + 0.5), 0.0f, 1.0f);
      for (int c = 0; c < 3; ++c) {
        const float noise = static_cast<float>(rng.normal() * 0.03);
        img[(y * size + x) * 3 + c] = std::clamp(bg[c] + cover * (fg[c] - bg[c]) + noise, -1.0f, 1.0f);
      }
    }
}

}  // namespace

Dataset make_synthetic_shapes(int64_t n, int64_t size, uint64_t seed, int num_classes, Split split) {
  if (n < 1) throw DataError("synthetic shapes: n must be positive");
  if (size < 4 || size % 4 != 0) throw DataError("synthetic shapes: size must be a positive multiple of 4");
  if (num_classes < 2 || num_classes > kMaxShapeClasses)
    throw DataError("synthetic shapes: num_classes must be in [2," + std::to_string(kMaxShapeClasses) + "]");
  Rng rng(derive_seed(seed, "synthetic-shapes"));
  Labels labels(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) labels[static_cast<size_t>(i)] = static_cast<int32_t>(i % num_classes);
  for (int64_t i = n - 1; i > 0; --i) std::swap(labels[static_cast<size_t>(i)], labels[static_cast<size_t>(rng.uniform_int(0, i))]);

  Dataset ds;
  ds.name = "shapes" + std::to_string(size) + "-" + std::to_string(seed);
  ds.split = split;
  ds.num_classes = num_classes;
  ds.images = TensorF({n, size, size, 3});
  for (int64_t i = 0; i < n; ++i)
    render_glyph(ds.images.data() + i * size * size * 3, size, glyphs()[static_cast<size_t>(labels[static_cast<size_t>(i)])], rng);
  ds.labels = std::move(labels);
  ds.version = content_hash(ds.images, ds.labels);
  return ds;
}

void save_dataset(const Dataset& ds, const fs::path& dir) {
  validate(ds);
  fs::create_directories(dir);
  nlohmann::json manifest{{"format", "ssgan-dataset"},
                          {"format_version", 1},
                          {"name", ds.name},
                          {"split", to_string(ds.split)},
                          {"shape", ds.images.shape()},
                          {"num_classes", ds.num_classes},
                          {"labeled", ds.labeled()},
                          {"version", ds.version}};
  auto write = [&](const fs::path& p, const void* data, size_t bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
    if (!out) throw DataError("cannot write " + p.string());
  };
  write(dir / "images.bin", ds.images.data(), sizeof(float) * static_cast<size_t>(ds.images.size()));
  write(dir / "labels.bin", ds.labels.data(), sizeof(int32_t) * ds.labels.size());
  const std::string text = manifest.dump(2) + "\n";
  write(dir / "manifest.json", text.data(), text.size());
}

Dataset load_dataset(const fs::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw DataError("no dataset manifest at " + (dir / "manifest.json").string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(mf);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed dataset manifest in " + dir.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "ssgan-dataset") throw DataError(dir.string() + " is not a dataset container");
  Dataset ds;
  ds.name = manifest.at("name").get<std::string>();
  ds.split = parse_split(manifest.at("split").get<std::string>());
  ds.num_classes = manifest.at("num_classes").get<int>();
  ds.images = TensorF(manifest.at("shape").get<Shape>());
  auto read = [&](const fs::path& p, void* data, size_t bytes) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot open " + p.string());
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(bytes));
    if (!in || in.peek() != std::char_traits<char>::eof()) throw DataError(p.string() + " has the wrong size");
  };
  read(dir / "images.bin", ds.images.data(), sizeof(float) * static_cast<size_t>(ds.images.size()));
  if (manifest.at("labeled").get<bool>()) {
    ds.labels.resize(static_cast<size_t>(ds.images.dim(0)));
    read(dir / "labels.bin", ds.labels.data(), sizeof(int32_t) * ds.labels.size());
  }
  ds.version = content_hash(ds.images, ds.labels);
  if (ds.version != manifest.at("version").get<std::string>())
    throw DataError("dataset " + dir.string() + " does not match its manifest hash");
  validate(ds);
  return ds;
}

BatchStream::BatchStream(const Dataset& ds, int64_t batch_size, uint64_t seed)
    : ds_(&ds), batch_size_(batch_size), seed_(seed) {
  if (batch_size < 1) throw DataError("batch size must be positive");
  if (batch_size > ds.size())
    throw DataError("batch size " + std::to_string(batch_size) + " exceeds dataset size " + std::to_string(ds.size()));
  batches_per_epoch_ = ds.size() / batch_size;
  order_ = permutation(ds.size(), seed_, 0);
}

std::vector<int64_t> BatchStream::permutation(int64_t n, uint64_t seed, int64_t epoch) {
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  Rng rng(derive_seed(seed, "epoch-" + std::to_string(epoch)));
  for (int64_t i = n - 1; i > 0; --i) std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(rng.uniform_int(0, i))]);
  return order;
}

void BatchStream::seek(int64_t epoch, int64_t position) {
  if (epoch < 0 || position < 0 || position > batches_per_epoch_) throw DataError("batch stream: invalid seek");
  if (epoch != epoch_) order_ = permutation(ds_->size(), seed_, epoch);
  epoch_ = epoch;
  position_ = position;
}

Batch BatchStream::next() {
  if (position_ == batches_per_epoch_) seek(epoch_ + 1, 0);
  Batch b;
  b.epoch = epoch_;
  b.index = position_;
  const auto begin = order_.begin() + position_ * batch_size_;
  b.rows.assign(begin, begin + batch_size_);
  b.images = gather_images(ds_->images, b.rows);
  if (ds_->labeled())
    for (int64_t r : b.rows) b.labels.push_back(ds_->labels[static_cast<size_t>(r)]);
  ++position_;
  return b;
}

}  // namespace ssgan::data
