#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <set>

#include "ssgan/data.hpp"
#include "test_support.hpp"

using namespace ssgan;
using namespace ssgan::data;
using ssgan::testing::TempDir;

namespace {

// Records with label r % 10 and pixel bytes (r + c * 7 + p) % 256.
std::vector<uint8_t> fake_cifar_records(int64_t n) {
  std::vector<uint8_t> bytes(static_cast<size_t>(n * kCifarRecordBytes));
  for (int64_t r = 0; r < n; ++r) {
    uint8_t* rec = bytes.data() + r * kCifarRecordBytes;
    rec[0] = static_cast<uint8_t>(r % 10);
    for (int c = 0; c < 3; ++c)
      for (int p = 0; p < 1024; ++p) rec[1 + c * 1024 + p] = static_cast<uint8_t>((r + c * 7 + p) % 256);
  }
  return bytes;
}

void write_bytes(const std::filesystem::path& p, const std::vector<uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

TEST(Cifar10, DecodesChannelPlanarRecords) {
  const auto ds = decode_cifar10(fake_cifar_records(3), "fixture", Split::Test);
  ASSERT_EQ(ds.images.shape(), (Shape{3, 32, 32, 3}));
  EXPECT_EQ(ds.labels, (Labels{0, 1, 2}));
  // Pixel (y, x) of channel c sits at byte 1 + c*1024 + y*32 + x.
  for (int64_t r = 0; r < 3; ++r)
    for (int64_t y : {0, 5, 31})
      for (int64_t x : {0, 17, 31})
        for (int64_t c = 0; c < 3; ++c) {
          const int byte = static_cast<int>((r + c * 7 + y * 32 + x) % 256);
          EXPECT_FLOAT_EQ(ds.images.at({r, y, x, c}), static_cast<float>(byte / 127.5 - 1.0));
        }
}

TEST(Cifar10, PixelEndpointsMapToUnitRange) {
  auto bytes = fake_cifar_records(1);
  bytes[1] = 255;
  bytes[2] = 0;
  const auto ds = decode_cifar10(bytes, "fixture", Split::Test);
  EXPECT_EQ(ds.images[0], 1.0f);
  EXPECT_EQ(ds.images[3], -1.0f);
}

TEST(Cifar10, TestSplitHasTenThousandRecordsAndTenClasses) {
  TempDir dir;
  std::filesystem::create_directories(dir / "cifar-10-batches-bin");
  write_bytes(dir / "cifar-10-batches-bin" / "test_batch.bin", fake_cifar_records(kCifarRecordsPerFile));
  const auto ds = load_cifar10(dir.path(), Split::Test);
  EXPECT_EQ(ds.size(), 10000);
  EXPECT_EQ(ds.num_classes, 10);
  EXPECT_EQ(std::set<int32_t>(ds.labels.begin(), ds.labels.end()).size(), 10u);
  EXPECT_GE(ds.labels[0], 0);
  EXPECT_LE(ds.labels[0], 9);
  EXPECT_NO_THROW(validate(ds));
}

TEST(Cifar10, MissingArchiveListsExpectedFiles) {
  TempDir dir;
  try {
    load_cifar10(dir.path(), Split::Train);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    for (const auto& f : cifar10_files(Split::Train)) EXPECT_NE(msg.find(f), std::string::npos) << msg;
  }
}

TEST(Cifar10, TruncatedFileIsCorrupt) {
  TempDir dir;
  write_bytes(dir / "test_batch.bin", fake_cifar_records(10));
  EXPECT_THROW(load_cifar10(dir.path(), Split::Test), DataError);
}

TEST(Cifar10, BadLabelByteRejected) {
  auto bytes = fake_cifar_records(2);
  bytes[kCifarRecordBytes] = 12;
  EXPECT_THROW(decode_cifar10(bytes, "fixture", Split::Test), DataError);
}

TEST(Cifar10, ExpectedFileLayout) {
  EXPECT_EQ(cifar10_files(Split::Train).size(), 5u);
  EXPECT_EQ(cifar10_files(Split::Test), (std::vector<std::string>{"test_batch.bin"}));
}

TEST(SyntheticShapes, RegenerationIsBitIdentical) {
  const auto a = make_synthetic_shapes(1000, 16, 42);
  const auto b = make_synthetic_shapes(1000, 16, 42);
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.version, b.version);
  EXPECT_NE(make_synthetic_shapes(1000, 16, 43).version, a.version);
}

TEST(SyntheticShapes, ExactClassBalance) {
  const auto ds = make_synthetic_shapes(1000, 16, 1);
  std::map<int32_t, int> count;
  for (int32_t l : ds.labels) ++count[l];
  ASSERT_EQ(count.size(), 10u);
  for (const auto& [label, c] : count) EXPECT_EQ(c, 100) << label;
  const auto five = make_synthetic_shapes(60, 8, 1, 5);
  std::map<int32_t, int> c5;
  for (int32_t l : five.labels) ++c5[l];
  for (const auto& [label, c] : c5) EXPECT_EQ(c, 12);
}

TEST(SyntheticShapes, PixelsInRangeAndShapeMatches) {
  const auto ds = make_synthetic_shapes(50, 32, 2);
  EXPECT_EQ(ds.images.shape(), (Shape{50, 32, 32, 3}));
  EXPECT_NO_THROW(validate(ds));
}

TEST(SyntheticShapes, GlyphsAreNotQuarterTurnSymmetric) {
  // A class mean image differs from its own quarter-turned version.
  const auto ds = make_synthetic_shapes(2000, 16, 3);
  for (int k = 0; k < 10; ++k) {
    std::vector<double> mean(16 * 16, 0.0);
    int n = 0;
    for (int64_t i = 0; i < ds.size(); ++i) {
      if (ds.labels[static_cast<size_t>(i)] != k) continue;
      ++n;
      for (int64_t p = 0; p < 256; ++p) mean[static_cast<size_t>(p)] += ds.images[i * 768 + p * 3];
    }
    double diff = 0;
    for (int64_t y = 0; y < 16; ++y)
      for (int64_t x = 0; x < 16; ++x) diff += std::abs(mean[y * 16 + x] - mean[x * 16 + (15 - y)]) / n;
    EXPECT_GT(diff / 256, 0.02) << "class " << k;
  }
}

TEST(SyntheticShapes, RejectsSizeNotDivisibleByFour) {
  EXPECT_THROW(make_synthetic_shapes(10, 10, 0), DataError);
  EXPECT_THROW(make_synthetic_shapes(10, 16, 0, 11), DataError);
}

TEST(BatchStream, FifteenBatchesPerEpochForThousandBySixtyFour) {
  const auto ds = make_synthetic_shapes(1000, 8, 4);
  BatchStream s(ds, 64, 9);
  EXPECT_EQ(s.batches_per_epoch(), 15);
  std::set<int64_t> seen;
  for (int i = 0; i < 15; ++i) {
    const auto b = s.next();
    EXPECT_EQ(b.epoch, 0);
    EXPECT_EQ(b.images.dim(0), 64);
    seen.insert(b.rows.begin(), b.rows.end());
  }
  EXPECT_EQ(seen.size(), 960u);
  EXPECT_EQ(s.next().epoch, 1);
}

TEST(BatchStream, SameSeedSameSequence) {
  const auto ds = make_synthetic_shapes(200, 8, 5);
  BatchStream a(ds, 32, 7), b(ds, 32, 7);
  for (int i = 0; i < 20; ++i) {
    const auto x = a.next(), y = b.next();
    EXPECT_EQ(x.rows, y.rows);
    EXPECT_EQ(x.images, y.images);
    EXPECT_EQ(x.labels, y.labels);
  }
}

TEST(BatchStream, EpochsUseDifferentPermutations) {
  EXPECT_NE(BatchStream::permutation(100, 3, 0), BatchStream::permutation(100, 3, 1));
  EXPECT_NE(BatchStream::permutation(100, 3, 0), BatchStream::permutation(100, 4, 0));
  auto p = BatchStream::permutation(100, 3, 5);
  std::sort(p.begin(), p.end());
  for (int64_t i = 0; i < 100; ++i) EXPECT_EQ(p[static_cast<size_t>(i)], i);
}

TEST(BatchStream, SeekResumesExactly) {
  const auto ds = make_synthetic_shapes(100, 8, 6);
  BatchStream a(ds, 16, 1);
  for (int i = 0; i < 9; ++i) a.next();
  BatchStream b(ds, 16, 1);
  b.seek(a.epoch(), a.position());
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.next().rows, b.next().rows);
}

TEST(BatchStream, BatchLargerThanDatasetRejected) {
  const auto ds = make_synthetic_shapes(10, 8, 7);
  EXPECT_THROW(BatchStream(ds, 11, 0), DataError);
}

TEST(DatasetContainer, RoundTripPreservesContentAndHash) {
  TempDir dir;
  const auto ds = make_synthetic_shapes(40, 8, 8);
  save_dataset(ds, dir / "shapes");
  const auto back = load_dataset(dir / "shapes");
  EXPECT_EQ(back.images, ds.images);
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(back.version, ds.version);
  EXPECT_EQ(back.name, ds.name);
}

TEST(DatasetContainer, TamperedBlobDetected) {
  TempDir dir;
  save_dataset(make_synthetic_shapes(8, 8, 9), dir / "d");
  {
    std::fstream f(dir / "d" / "images.bin", std::ios::in | std::ios::out | std::ios::binary);
    const float v = 0.123f;
    f.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  EXPECT_THROW(load_dataset(dir / "d"), DataError);
}

TEST(Dataset, SubsetSplitsAreDisjointByIndex) {
  const auto ds = make_synthetic_shapes(20, 8, 10);
  std::vector<int64_t> a{0, 1, 2, 3, 4}, b{5, 6, 7};
  const auto sa = ds.subset(a), sb = ds.subset(b);
  EXPECT_EQ(sa.size(), 5);
  EXPECT_EQ(sb.labels[0], ds.labels[5]);
  EXPECT_NE(sa.version, sb.version);
}

TEST(Dataset, ValidateRejectsOutOfRangePixels) {
  auto ds = make_synthetic_shapes(4, 8, 11);
  ds.images[0] = 1.5f;
  EXPECT_THROW(validate(ds), DataError);
}

}  // namespace
