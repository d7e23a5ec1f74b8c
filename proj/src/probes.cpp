#include "ssgan/probes.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "ssgan/checkpoint.hpp"
#include "ssgan/config.hpp"
#include "ssgan/random.hpp"

namespace ssgan::probes {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

TensorF extract_block_features(const models::Discriminator<float>& disc, const TensorF& images,
                               const std::string& block, int64_t batch) {
  const auto names = disc.block_names();
  const auto it = std::find(names.begin(), names.end(), block);
  if (it == names.end()) {
    std::string valid;
    for (const auto& n : names) valid += (valid.empty() ? "" : ", ") + n;
    throw std::invalid_argument("unknown block '" + block + "' (valid: " + valid + ")");
  }
  const auto index = static_cast<size_t>(it - names.begin());
  const Shape per = disc.block_info()[index].shape;
  const int64_t n = images.dim(0);
  const int64_t image_elems = images.size() / std::max<int64_t>(n, 1);
  const int64_t feat_elems = per[0] * per[1] * per[2];
  TensorF out({n, per[0], per[1], per[2]});

  ag::NoGradGuard no_grad;
  for (int64_t start = 0; start < n; start += batch) {
    const int64_t take = std::min(batch, n - start);
    TensorF x({take, images.dim(1), images.dim(2), images.dim(3)});
    std::copy(images.data() + start * image_elems, images.data() + (start + take) * image_elems, x.data());
    const Labels dummy(static_cast<size_t>(take), 0);
    models::DiscriminatorRequest<float> req;
    req.blocks = true;
    if (disc.has_projection()) req.labels = &dummy;
    const auto result = disc.forward(ag::VarF(x), req);
    const TensorF& f = result.blocks[index].value();
    std::copy(f.data(), f.data() + take * feat_elems, out.data() + start * feat_elems);
  }
  return out;
}

int64_t pooled_grid(int64_t h, int64_t w, int64_t c, int64_t target_dim) {
  if (h != w) throw ShapeError("pool_features expects square feature maps");
  if (c < 1 || target_dim < c)
    throw std::invalid_argument("target_dim " + std::to_string(target_dim) + " is below the channel count " +
                                std::to_string(c));
  int64_t s = 1;
  while ((s + 1) * (s + 1) * c <= target_dim) ++s;
  return std::min(s, h);
}

TensorF pool_features(const TensorF& features, int64_t target_dim) {
  if (features.rank() != 4) throw ShapeError("pool_features expects [N,h,w,c], got " + shape_str(features.shape()));
  const int64_t n = features.dim(0), h = features.dim(1), w = features.dim(2), c = features.dim(3);
  const int64_t s = pooled_grid(h, w, c, target_dim);
  TensorF out({n, s * s * c});
  auto lo = [](int64_t i, int64_t size, int64_t bins) { return (i * size) / bins; };
  auto hi = [](int64_t i, int64_t size, int64_t bins) { return ((i + 1) * size + bins - 1) / bins; };
#pragma omp parallel for schedule(static) if (n > 64)
  for (int64_t b = 0; b < n; ++b) {
    const float* src = features.data() + b * h * w * c;
    float* dst = out.data() + b * s * s * c;
    for (int64_t i = 0; i < s; ++i)
      for (int64_t j = 0; j < s; ++j)
        for (int64_t k = 0; k < c; ++k) {
          float m = -std::numeric_limits<float>::infinity();
          for (int64_t y = lo(i, h, s); y < hi(i, h, s); ++y)
            for (int64_t x = lo(j, w, s); x < hi(j, w, s); ++x) m = std::max(m, src[(y * w + x) * c + k]);
          dst[(i * s + j) * c + k] = m;
        }
  }
  return out;
}

namespace {

ConstRowMap as_matrix(const TensorF& features) {
  if (features.rank() != 2) throw ShapeError("probe features must be [N,F], got " + shape_str(features.shape()));
  return ConstRowMap(features.data(), features.dim(0), features.dim(1));
}

void check_labels(const TensorF& features, const Labels& labels, int num_classes) {
  if (static_cast<int64_t>(labels.size()) != features.dim(0))
    throw std::invalid_argument("probe: one label per feature row");
  for (int32_t l : labels)
    if (l < 0 || l >= num_classes) throw std::out_of_range("probe label " + std::to_string(l) + " out of range");
}

RowMatrix standardized_rows(const LinearProbe& p, const ConstRowMap& x, const std::vector<int64_t>& rows) {
  RowMatrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (size_t r = 0; r < rows.size(); ++r)
    out.row(static_cast<Eigen::Index>(r)) =
        (x.row(rows[r]) - p.mean.transpose()).cwiseProduct(p.inv_std.transpose());
  return out;
}

}  // namespace

Eigen::MatrixXf LinearProbe::logits(const TensorF& features) const {
  const auto x = as_matrix(features);
  if (x.cols() != weight.rows()) throw ShapeError("probe feature width does not match the trained probe");
  std::vector<int64_t> rows(static_cast<size_t>(x.rows()));
  std::iota(rows.begin(), rows.end(), 0);
  Eigen::MatrixXf out = standardized_rows(*this, x, rows) * weight;
  out.rowwise() += bias.transpose();
  return out;
}

std::vector<int32_t> LinearProbe::predict(const TensorF& features) const {
  const Eigen::MatrixXf z = logits(features);
  std::vector<int32_t> out(static_cast<size_t>(z.rows()));
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    Eigen::Index best = 0;
    z.row(r).maxCoeff(&best);
    out[static_cast<size_t>(r)] = static_cast<int32_t>(best);
  }
  return out;
}

double LinearProbe::accuracy(const TensorF& features, const Labels& labels) const {
  const auto pred = predict(features);
  if (pred.size() != labels.size()) throw std::invalid_argument("probe accuracy: one label per row");
  if (pred.empty()) return 0.0;
  int64_t hits = 0;
  for (size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

LinearProbe train_probe(const TensorF& features, const Labels& labels, int num_classes, const ProbeConfig& cfg,
                        double lr) {
  check_labels(features, labels, num_classes);
  const auto x = as_matrix(features);
  const int64_t n = x.rows(), f = x.cols();
  if (n == 0) throw std::invalid_argument("probe: no training rows");
  LinearProbe p;
  p.mean = x.colwise().mean().transpose();
  p.inv_std.resize(f);
  for (int64_t j = 0; j < f; ++j) {
    const double sd = std::sqrt((x.col(j).array() - p.mean(j)).square().mean());
    p.inv_std(j) = sd > 1e-6 ? static_cast<float>(1.0 / sd) : 0.0f;
  }
  p.weight = Eigen::MatrixXf::Zero(f, num_classes);
  p.bias = Eigen::VectorXf::Zero(num_classes);
  Eigen::MatrixXf vel_w = Eigen::MatrixXf::Zero(f, num_classes);
  Eigen::VectorXf vel_b = Eigen::VectorXf::Zero(num_classes);

  const int64_t batch = std::min(cfg.batch_size, n);
  for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const float rate =
        static_cast<float>(lr * std::pow(cfg.decay_factor, static_cast<double>(epoch / std::max<int64_t>(cfg.decay_every, 1))));
    const auto order = data::BatchStream::permutation(n, derive_seed(cfg.seed, "probe"), epoch);
    for (int64_t start = 0; start < n; start += batch) {
      const int64_t take = std::min(batch, n - start);
      const std::vector<int64_t> rows(order.begin() + start, order.begin() + start + take);
      const RowMatrix xb = standardized_rows(p, x, rows);
      Eigen::MatrixXf z = xb * p.weight;
      z.rowwise() += p.bias.transpose();
      for (Eigen::Index r = 0; r < z.rows(); ++r) {
        const float m = z.row(r).maxCoeff();
        z.row(r) = (z.row(r).array() - m).exp();
        z.row(r) /= z.row(r).sum();
        z(r, labels[static_cast<size_t>(rows[static_cast<size_t>(r)])]) -= 1.0f;
      }
      z /= static_cast<float>(take);
      const float mu = static_cast<float>(cfg.momentum);
      vel_w = mu * vel_w + xb.transpose() * z;
      vel_b = mu * vel_b + z.colwise().sum().transpose();
      p.weight -= rate * vel_w;
      p.bias -= rate * vel_b;
    }
  }
  return p;
}

ProbeFit fit_linear_probe(const TensorF& train_features, const Labels& train_labels, const TensorF& test_features,
                          const Labels& test_labels, int num_classes, const ProbeConfig& cfg) {
  check_labels(train_features, train_labels, num_classes);
  check_labels(test_features, test_labels, num_classes);
  std::vector<bool> present(static_cast<size_t>(num_classes), false);
  for (int32_t l : train_labels) present[static_cast<size_t>(l)] = true;
  if (std::count(present.begin(), present.end(), true) < 2)
    throw std::invalid_argument("linear probe needs at least two classes in the training labels");
  if (cfg.validation_fraction <= 0 || cfg.validation_fraction >= 1)
    throw std::invalid_argument("validation_fraction must lie in (0, 1)");

  const int64_t n = train_features.dim(0), f = train_features.dim(1);
  const auto order = data::BatchStream::permutation(n, derive_seed(cfg.seed, "probe-split"), 0);
  const auto n_val = std::max<int64_t>(1, static_cast<int64_t>(std::llround(cfg.validation_fraction * n)));
  auto gather = [&](int64_t from, int64_t to, TensorF& feats, Labels& labels) {
    feats = TensorF({to - from, f});
    labels.clear();
    for (int64_t i = from; i < to; ++i) {
      const int64_t r = order[static_cast<size_t>(i)];
      std::copy(train_features.data() + r * f, train_features.data() + (r + 1) * f, feats.data() + (i - from) * f);
      labels.push_back(train_labels[static_cast<size_t>(r)]);
    }
  };
  TensorF val_x, fit_x;
  Labels val_y, fit_y;
  gather(0, n_val, val_x, val_y);
  gather(n_val, n, fit_x, fit_y);

  std::vector<double> candidates = cfg.lr_candidates;
  if (candidates.empty()) candidates.push_back(cfg.lr);
  double best_lr = candidates.front(), best_val = -1;
  for (double lr : candidates) {
    const double acc = train_probe(fit_x, fit_y, num_classes, cfg, lr).accuracy(val_x, val_y);
    if (acc > best_val) {
      best_val = acc;
      best_lr = lr;
    }
  }
  ProbeFit out{train_probe(train_features, train_labels, num_classes, cfg, best_lr), {}};
  out.result.top1 = out.probe.accuracy(test_features, test_labels);
  out.result.validation_top1 = best_val;
  out.result.lr = best_lr;
  out.result.feature_dim = f;
  return out;
}

std::vector<ProbeResult> probe_all_blocks(const models::Discriminator<float>& disc, const data::Dataset& train,
                                          const data::Dataset& test, const ProbeConfig& cfg, int64_t step) {
  if (!train.labeled() || !test.labeled()) throw data::DataError("linear probes need labeled train and test splits");
  const int k = std::max(train.num_classes, test.num_classes);
  std::vector<ProbeResult> out;
  for (const auto& block : disc.block_names()) {
    const TensorF tr = pool_features(extract_block_features(disc, train.images, block), cfg.target_dim);
    const TensorF te = pool_features(extract_block_features(disc, test.images, block), cfg.target_dim);
    auto fit = fit_linear_probe(tr, train.labels, te, test.labels, k, cfg);
    fit.result.block = block;
    fit.result.step = step;
    out.push_back(fit.result);
  }
  return out;
}

LoadedDiscriminator load_discriminator(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw checkpoint::CheckpointError("checkpoint " + path.string() + " not found");
  const auto archive = checkpoint::load(path);
  if (archive.manifest.value("kind", "") != "train_state")
    throw checkpoint::CheckpointError(path.string() + " is not a training checkpoint");
  const SsGANConfig cfg = config_from_json(archive.manifest.at("config"));
  LoadedDiscriminator out{models::Discriminator<float>(cfg.model_config(archive.manifest.at("labeled").get<bool>())),
                          cfg.variant, cfg.seed, archive.manifest.at("step").get<int64_t>(), config_hash(cfg)};
  checkpoint::restore(archive, out.disc.registry());
  return out;
}

std::vector<ProbeRow> aggregate(const std::vector<std::vector<ProbeResult>>& per_seed,
                                const std::vector<uint64_t>& seeds, const std::string& variant,
                                const std::string& config_hash) {
  if (seeds.size() != per_seed.size()) throw std::invalid_argument("aggregate: one seed per result list");
  std::string seed_list;
  for (uint64_t s : seeds) seed_list += (seed_list.empty() ? "" : ";") + std::to_string(s);
  std::map<std::pair<int64_t, std::string>, std::vector<double>> groups;
  std::vector<std::pair<int64_t, std::string>> order;
  for (const auto& run : per_seed)
    for (const auto& r : run) {
      const auto key = std::make_pair(r.step, r.block);
      if (!groups.count(key)) order.push_back(key);
      groups[key].push_back(r.top1);
    }
  std::vector<ProbeRow> rows;
  for (const auto& key : order) {
    const auto& v = groups[key];
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    rows.push_back({key.second, variant, key.first, mean, sd, static_cast<int64_t>(v.size()), seed_list, config_hash});
  }
  return rows;
}

std::string probe_csv(const std::vector<ProbeRow>& rows) {
  std::ostringstream os;
  os << "block,variant,step,top1_mean,top1_std,seeds,seed_list,config_hash\n" << std::setprecision(6);
  for (const auto& r : rows)
    os << r.block << ',' << r.variant << ',' << r.step << ',' << r.top1_mean << ',' << r.top1_std << ',' << r.seeds
       << ',' << r.seed_list << ',' << r.config_hash << '\n';
  return os.str();
}

}  // namespace ssgan::probes
