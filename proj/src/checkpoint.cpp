#include "ssgan/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "ssgan/hash.hpp"

namespace ssgan::checkpoint {

namespace fs = std::filesystem;

namespace {

enum class DType : uint8_t { F32 = 1, F64 = 2 };

template <typename V>
void put(std::string& out, V value) {
  out.append(reinterpret_cast<const char*>(&value), sizeof value);
}

template <typename T>
void put_array(std::string& out, const std::string& name, const Tensor<T>& t, DType dtype) {
  put<uint32_t>(out, static_cast<uint32_t>(name.size()));
  out += name;
  put<uint8_t>(out, static_cast<uint8_t>(dtype));
  put<uint32_t>(out, static_cast<uint32_t>(t.rank()));
  for (int64_t d : t.shape()) put<int64_t>(out, d);
  out.append(reinterpret_cast<const char*>(t.data()), sizeof(T) * static_cast<size_t>(t.size()));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& path) : bytes_(bytes), path_(path) {}

  template <typename V>
  V get() {
    V value;
    std::memcpy(&value, take(sizeof value), sizeof value);
    return value;
  }
  const char* take(size_t n) {
    if (pos_ + n > end_) throw CheckpointError(path_ + ": truncated archive");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  void limit(size_t end) { end_ = end; }
  bool done() const { return pos_ == end_; }

 private:
  const std::string& bytes_;
  std::string path_;
  size_t pos_ = 0;
  size_t end_ = 0;
};

template <typename T>
Tensor<T> read_tensor(Reader& r) {
  const uint32_t rank = r.get<uint32_t>();
  Shape shape(rank);
  for (auto& d : shape) d = r.get<int64_t>();
  Tensor<T> t(shape);
  std::memcpy(t.data(), r.take(sizeof(T) * static_cast<size_t>(t.size())), sizeof(T) * static_cast<size_t>(t.size()));
  return t;
}

constexpr size_t kDigestChars = 64;

}  // namespace

const TensorF& Archive::tensor(const std::string& name) const {
  auto it = f32.find(name);
  if (it == f32.end()) throw CheckpointError("checkpoint has no array '" + name + "'");
  return it->second;
}

void save(const Archive& archive, const fs::path& path) {
  std::string out(kMagic, sizeof kMagic);
  put<uint32_t>(out, kFormatVersion);
  const std::string manifest = archive.manifest.dump();
  put<uint64_t>(out, manifest.size());
  out += manifest;
  put<uint64_t>(out, archive.f32.size() + archive.f64.size());
  for (const auto& [name, t] : archive.f32) put_array(out, name, t, DType::F32);
  for (const auto& [name, t] : archive.f64) put_array(out, name, t, DType::F64);
  out += sha256_hex(out);

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    f.flush();
    if (!f) throw CheckpointError("cannot write checkpoint " + tmp.string());
  }
  fs::rename(tmp, path);
}

Archive load(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("checkpoint not found: " + path.string());
  std::ostringstream buf;
  buf << f.rdbuf();
  const std::string bytes = buf.str();
  const std::string where = path.string();
  if (bytes.size() < sizeof kMagic + kDigestChars || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw CheckpointError(where + " is not a checkpoint archive");
  const size_t body = bytes.size() - kDigestChars;
  if (sha256_hex(std::string_view(bytes.data(), body)) != bytes.substr(body))
    throw CheckpointError(where + ": checksum mismatch (file corrupt)");

  Reader r(bytes, where);
  r.limit(body);
  r.take(sizeof kMagic);
  const uint32_t version = r.get<uint32_t>();
  if (version != kFormatVersion)
    throw CheckpointError(where + ": unsupported format version " + std::to_string(version));
  Archive a;
  const uint64_t mlen = r.get<uint64_t>();
  a.manifest = nlohmann::json::parse(std::string(r.take(mlen), mlen));
  const uint64_t count = r.get<uint64_t>();
  for (uint64_t i = 0; i < count; ++i) {
    const uint32_t nlen = r.get<uint32_t>();
    std::string name(r.take(nlen), nlen);
    const auto dtype = static_cast<DType>(r.get<uint8_t>());
    if (dtype == DType::F32)
      a.f32.emplace(std::move(name), read_tensor<float>(r));
    else if (dtype == DType::F64)
      a.f64.emplace(std::move(name), read_tensor<double>(r));
    else
      throw CheckpointError(where + ": unknown dtype for array '" + name + "'");
  }
  if (!r.done()) throw CheckpointError(where + ": trailing bytes after arrays");
  return a;
}

void store(Archive& archive, const nn::ParamRegistry<float>& registry) {
  for (const auto& p : registry.parameters()) archive.f32[p.name] = p.var.value();
  for (const auto& b : registry.buffers()) archive.f32[b.name] = b.var.value();
}

void restore(const Archive& archive, nn::ParamRegistry<float>& registry) {
  auto assign = [&](nn::NamedVar<float>& nv) {
    const TensorF& t = archive.tensor(nv.name);
    if (t.shape() != nv.var.shape())
      throw CheckpointError("array '" + nv.name + "' has shape " + shape_str(t.shape()) + ", model expects " +
                            shape_str(nv.var.shape()));
    nv.var.mutable_value() = t;
  };
  for (auto& p : registry.parameters()) assign(p);
  for (auto& b : registry.buffers()) assign(b);
}

std::string registry_hash(const nn::ParamRegistry<float>& registry) {
  Sha256 h;
  auto add = [&](const nn::NamedVar<float>& nv) {
    h.update(nv.name);
    for (int64_t d : nv.var.shape()) h.update(&d, sizeof d);
    h.update(nv.var.value().data(), sizeof(float) * static_cast<size_t>(nv.var.size()));
  };
  for (const auto& p : registry.parameters()) add(p);
  for (const auto& b : registry.buffers()) add(b);
  return h.digest();
}

}  // namespace ssgan::checkpoint
