#include "ssgan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ssgan/checkpoint.hpp"
#include "ssgan/hash.hpp"
#include "ssgan/kernels.hpp"
#include "ssgan/ops.hpp"
#include "ssgan/optim.hpp"
#include "ssgan/random.hpp"

namespace ssgan::metrics {

GaussianStats gaussian_stats(const TensorD& features) {
  if (features.rank() != 2) throw ShapeError("gaussian_stats: expected [N,F], got " + shape_str(features.shape()));
  const int64_t n = features.dim(0), f = features.dim(1);
  if (n < 2) throw std::invalid_argument("gaussian_stats: need at least 2 samples, got " + std::to_string(n));
  GaussianStats s;
  s.mu = Eigen::VectorXd::Zero(f);
  for (int64_t r = 0; r < n; ++r)
    for (int64_t j = 0; j < f; ++j) s.mu(j) += features[r * f + j];
  s.mu /= static_cast<double>(n);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> cov(f, f);
  kernels::covariance(features.data(), s.mu.data(), n, f, cov.data());
  s.sigma = (cov + cov.transpose()) / 2.0;
  return s;
}

Eigen::MatrixXd matrix_sqrt_spd(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("matrix_sqrt_spd: matrix is not square");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  if (asym > kSymmetryTolerance * scale)
    throw std::invalid_argument("matrix_sqrt_spd: matrix is not symmetric (max |a - a^T| = " + std::to_string(asym) + ")");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
  if (eig.info() != Eigen::Success) throw std::runtime_error("matrix_sqrt_spd: eigendecomposition failed");
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

double frechet_distance(const GaussianStats& x, const GaussianStats& g) {
  if (x.mu.size() != g.mu.size() || x.sigma.rows() != g.sigma.rows())
    throw std::invalid_argument("frechet_distance: feature dimensions differ (" + std::to_string(x.mu.size()) +
                                " vs " + std::to_string(g.mu.size()) + ")");
  const Eigen::MatrixXd root_x = matrix_sqrt_spd(x.sigma);
  Eigen::MatrixXd inner = root_x * g.sigma * root_x;
  inner = (inner + inner.transpose()) / 2.0;
  const double cross = matrix_sqrt_spd(inner).trace();
  const double d = (x.mu - g.mu).squaredNorm() + x.sigma.trace() + g.sigma.trace() - 2.0 * cross;
  if (d < 0 && d > -1e-6) return 0.0;
  return d;
}

FeatureExtractor::FeatureExtractor(const ExtractorSpec& spec)
    : spec_(spec), reg_(derive_seed(spec.seed, "feature-extractor")) {
  if (spec.image_size < 4 || spec.channels < 1 || spec.num_classes < 2 || spec.embed_dim < 1 || spec.width < 1)
    throw std::invalid_argument("feature extractor: invalid spec");
  int64_t size = spec.image_size, in = spec.channels, out = spec.width;
  convs_.emplace_back(reg_, "fx.conv0", in, out, 3, 1, 1, false);
  strides_.push_back(1);
  in = out;
  for (int i = 1; size > 4; ++i) {
    if (size % 2 != 0) throw std::invalid_argument("feature extractor: image size must halve down to 4");
    out = std::min<int64_t>(in * 2, 4 * spec.width);
    convs_.emplace_back(reg_, "fx.conv" + std::to_string(i), in, out, 3, 2, 1, false);
    strides_.push_back(2);
    size /= 2;
    in = out;
  }
  dense_ = nn::Linear<float>(reg_, "fx.dense", size * size * in, spec.embed_dim, false);
  head_ = nn::Linear<float>(reg_, "fx.head", spec.embed_dim, spec.num_classes, false);
}

ag::VarF FeatureExtractor::embedding(const ag::VarF& x) const {
  ag::VarF h = x;
  for (const auto& c : convs_) h = ops::relu(c(h));
  return ops::relu(dense_(ops::reshape(h, {h.dim(0), h.size() / h.dim(0)})));
}

ag::VarF FeatureExtractor::logits(const ag::VarF& x) const { return head_(embedding(x)); }

void FeatureExtractor::check_images(const TensorF& images) const {
  if (images.rank() != 4 || images.dim(1) != spec_.image_size || images.dim(2) != spec_.image_size ||
      images.dim(3) != spec_.channels)
    throw ShapeError("feature extractor expects [N," + std::to_string(spec_.image_size) + "," +
                     std::to_string(spec_.image_size) + "," + std::to_string(spec_.channels) + "], got " +
                     shape_str(images.shape()));
  for (int64_t i = 0; i < images.size(); ++i)
    if (!(images[i] >= -1.0f && images[i] <= 1.0f))
      throw std::invalid_argument("feature extractor: pixel value " + std::to_string(images[i]) +
                                  " outside [-1,1]; images must use the [-1,1] convention");
}

void FeatureExtractor::fit(const data::Dataset& ds, const ExtractorTraining& cfg, const Progress& progress) {
  if (frozen_) throw std::logic_error("feature extractor is frozen");
  if (!ds.labeled()) throw std::invalid_argument("feature extractor training needs labels");
  check_images(ds.images);
  optim::Adam<float> adam(reg_.parameters(), optim::AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  data::BatchStream stream(ds, std::min(cfg.batch_size, ds.size()), cfg.seed);
  for (int64_t e = 0; e < cfg.epochs; ++e) {
    double loss_sum = 0;
    int64_t hits = 0, seen = 0;
    for (int64_t b = 0; b < stream.batches_per_epoch(); ++b) {
      const auto batch = stream.next();
      const auto out = logits(ag::VarF(batch.images));
      const auto loss = ops::scale(ops::mean(ops::log_softmax_pick(out, batch.labels)), -1.0f);
      ag::backward(loss);
      adam.step();
      loss_sum += loss.item();
      const int64_t k = out.dim(1);
      for (int64_t r = 0; r < out.dim(0); ++r) {
        const float* row = out.value().data() + r * k;
        hits += (std::max_element(row, row + k) - row) == batch.labels[static_cast<size_t>(r)];
      }
      seen += out.dim(0);
    }
    if (progress) progress(e, loss_sum / stream.batches_per_epoch(), static_cast<double>(hits) / seen);
  }
}

TensorD FeatureExtractor::embed(const TensorF& images, int64_t batch) const {
  check_images(images);
  ag::NoGradGuard no_grad;
  const int64_t n = images.dim(0), per = images.size() / std::max<int64_t>(n, 1);
  TensorD out({n, spec_.embed_dim});
  for (int64_t start = 0; start < n; start += batch) {
    const int64_t m = std::min(batch, n - start);
    TensorF chunk({m, spec_.image_size, spec_.image_size, spec_.channels},
                  std::vector<float>(images.data() + start * per, images.data() + (start + m) * per));
    const TensorF e = embedding(ag::VarF(std::move(chunk))).value();
    for (int64_t i = 0; i < e.size(); ++i) out[start * spec_.embed_dim + i] = e[i];
  }
  return out;
}

double FeatureExtractor::accuracy(const data::Dataset& ds) const {
  if (!ds.labeled()) throw std::invalid_argument("accuracy needs labels");
  check_images(ds.images);
  ag::NoGradGuard no_grad;
  const int64_t n = ds.size(), per = ds.images.size() / n, batch = 250;
  int64_t hits = 0;
  for (int64_t start = 0; start < n; start += batch) {
    const int64_t m = std::min(batch, n - start);
    TensorF chunk({m, spec_.image_size, spec_.image_size, spec_.channels},
                  std::vector<float>(ds.images.data() + start * per, ds.images.data() + (start + m) * per));
    const TensorF l = logits(ag::VarF(std::move(chunk))).value();
    const int64_t k = l.dim(1);
    for (int64_t r = 0; r < m; ++r) {
      const float* row = l.data() + r * k;
      hits += (std::max_element(row, row + k) - row) == ds.labels[static_cast<size_t>(start + r)];
    }
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

namespace {
nlohmann::json spec_json(const ExtractorSpec& s) {
  return {{"image_size", s.image_size}, {"channels", s.channels}, {"num_classes", s.num_classes},
          {"width", s.width},           {"embed_dim", s.embed_dim}, {"seed", s.seed}};
}
}  // namespace

std::string FeatureExtractor::hash() const {
  return sha256_hex(spec_json(spec_).dump() + checkpoint::registry_hash(reg_));
}

void FeatureExtractor::save(const std::filesystem::path& path) const {
  checkpoint::Archive a;
  a.manifest = {{"kind", "feature_extractor"}, {"spec", spec_json(spec_)}, {"hash", hash()}, {"frozen", frozen_}};
  checkpoint::store(a, reg_);
  checkpoint::save(a, path);
}

FeatureExtractor FeatureExtractor::load(const std::filesystem::path& path) {
  const auto a = checkpoint::load(path);
  if (a.manifest.value("kind", "") != "feature_extractor")
    throw checkpoint::CheckpointError(path.string() + " is not a feature extractor checkpoint");
  const auto& j = a.manifest.at("spec");
  ExtractorSpec spec;
  spec.image_size = j.at("image_size");
  spec.channels = j.at("channels");
  spec.num_classes = j.at("num_classes");
  spec.width = j.at("width");
  spec.embed_dim = j.at("embed_dim");
  spec.seed = j.at("seed");
  FeatureExtractor fx(spec);
  checkpoint::restore(a, fx.reg_);
  fx.frozen_ = a.manifest.value("frozen", true);
  if (fx.hash() != a.manifest.at("hash").get<std::string>())
    throw checkpoint::CheckpointError(path.string() + ": extractor content hash mismatch");
  return fx;
}

FidResult compute_fid(const GaussianStats& real, int64_t n_real, const TensorF& fake, const FeatureExtractor& extractor) {
  if (!extractor.frozen()) throw std::logic_error("compute_fid: feature extractor must be frozen");
  if (n_real < 2 || fake.rank() != 4 || fake.dim(0) < 2)
    throw std::invalid_argument("compute_fid: need at least 2 samples on each side");
  FidResult r;
  r.fid = frechet_distance(real, gaussian_stats(extractor.embed(fake)));
  r.n_real = n_real;
  r.n_fake = fake.dim(0);
  r.extractor_hash = extractor.hash();
  return r;
}

FidResult compute_fid(const TensorF& real, const TensorF& fake, const FeatureExtractor& extractor) {
  if (!extractor.frozen()) throw std::logic_error("compute_fid: feature extractor must be frozen");
  if (real.rank() != 4 || real.dim(0) < 2) throw std::invalid_argument("compute_fid: need at least 2 real samples");
  return compute_fid(gaussian_stats(extractor.embed(real)), real.dim(0), fake, extractor);
}

}  // namespace ssgan::metrics
