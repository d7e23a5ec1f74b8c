#include "ssgan/forgetting.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "ssgan/losses.hpp"
#include "ssgan/ops.hpp"
#include "ssgan/optim.hpp"
#include "ssgan/rotation.hpp"

namespace ssgan::forgetting {

using VF = ag::VarF;

int TaskSchedule::task_at(int64_t step) const {
  if (step < 0) throw std::invalid_argument("negative step");
  return static_cast<int>((step / steps_per_task) % num_classes);
}

std::vector<int64_t> TaskSchedule::switch_steps() const {
  std::vector<int64_t> out;
  for (int64_t s = steps_per_task; s <= length(); s += steps_per_task) out.push_back(s);
  return out;
}

std::vector<int64_t> TaskSchedule::cycle_steps() const {
  std::vector<int64_t> out;
  for (int64_t c = 1; c <= cycles; ++c) out.push_back(c * cycle_length());
  return out;
}

void TaskSchedule::validate() const {
  if (num_classes < 2) throw std::invalid_argument("task schedule needs at least two classes");
  if (steps_per_task < 1 || cycles < 1) throw std::invalid_argument("steps_per_task and cycles must be >= 1");
}

TaskStream::TaskStream(const data::Dataset& ds, TaskSchedule schedule, int64_t batch_size, uint64_t seed)
    : ds_(&ds), schedule_(schedule), batch_size_(batch_size), seed_(seed) {
  schedule_.validate();
  if (!ds.labeled()) throw data::DataError("task stream needs a labeled dataset");
  if (ds.num_classes < schedule_.num_classes)
    throw data::DataError("dataset has " + std::to_string(ds.num_classes) + " classes, schedule needs " +
                          std::to_string(schedule_.num_classes));
  if (batch_size < 2 || batch_size % 2 != 0) throw std::invalid_argument("task batch size must be even");
  by_class_.resize(static_cast<size_t>(schedule_.num_classes));
  for (int64_t i = 0; i < ds.size(); ++i) {
    const int32_t l = ds.labels[static_cast<size_t>(i)];
    if (l < schedule_.num_classes) by_class_[static_cast<size_t>(l)].push_back(i);
  }
  for (int c = 0; c < schedule_.num_classes; ++c)
    if (static_cast<int64_t>(by_class_[static_cast<size_t>(c)].size()) < batch_size / 2)
      throw data::DataError("class " + std::to_string(c) + " has " +
                            std::to_string(by_class_[static_cast<size_t>(c)].size()) +
                            " images, fewer than half a batch (" + std::to_string(batch_size / 2) + ")");
}

namespace {

// k distinct draws from pool (partial Fisher-Yates on a copy).
std::vector<int64_t> sample_distinct(std::vector<int64_t> pool, int64_t k, Rng& rng) {
  for (int64_t i = 0; i < k; ++i) {
    const int64_t j = rng.uniform_int(i, static_cast<int64_t>(pool.size()) - 1);
    std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
  }
  pool.resize(static_cast<size_t>(k));
  return pool;
}

}  // namespace

TaskBatch TaskStream::batch_at(int64_t step) const {
  const int task = schedule_.task_at(step);
  Rng rng(derive_seed(seed_, "task-step-" + std::to_string(step)));
  const int64_t half = batch_size_ / 2;
  std::vector<int64_t> rows = sample_distinct(by_class_[static_cast<size_t>(task)], half, rng);
  std::vector<int64_t> negatives;
  for (int c = 0; c < schedule_.num_classes; ++c)
    if (c != task) negatives.insert(negatives.end(), by_class_[static_cast<size_t>(c)].begin(),
                                    by_class_[static_cast<size_t>(c)].end());
  const auto neg = sample_distinct(std::move(negatives), half, rng);
  rows.insert(rows.end(), neg.begin(), neg.end());
  Labels targets(static_cast<size_t>(batch_size_), 0);
  std::fill(targets.begin(), targets.begin() + half, 1);
  for (int64_t i = batch_size_ - 1; i > 0; --i) {
    const int64_t j = rng.uniform_int(0, i);
    std::swap(rows[static_cast<size_t>(i)], rows[static_cast<size_t>(j)]);
    std::swap(targets[static_cast<size_t>(i)], targets[static_cast<size_t>(j)]);
  }
  TensorF images = data::gather_images(ds_->images, rows);
  return {std::move(images), std::move(targets), std::move(rows), task, step};
}

std::string to_string(ClassifierVariant v) { return v == ClassifierVariant::Vanilla ? "vanilla" : "with_selfsup"; }

ClassifierVariant parse_classifier_variant(const std::string& s) {
  if (s == "vanilla") return ClassifierVariant::Vanilla;
  if (s == "with_selfsup") return ClassifierVariant::WithSelfSup;
  throw std::invalid_argument("unknown forgetting variant '" + s + "' (expected vanilla or with_selfsup)");
}

Classifier::Classifier(int64_t channels, int64_t width, uint64_t seed) : reg_(seed) {
  const int64_t widths[] = {width, 2 * width, 2 * width, 4 * width};
  const int64_t strides[] = {1, 2, 2, 2};
  int64_t in = channels;
  for (int i = 0; i < 4; ++i) {
    convs_.emplace_back(reg_, "cls.conv" + std::to_string(i), in, widths[i], 3, strides[i], 1, false);
    in = widths[i];
  }
  binary_ = nn::Linear<float>(reg_, "cls.binary", in, 1, false);
  rotation_ = nn::Linear<float>(reg_, "cls.rotation", in, 4, false);
}

VF Classifier::features(const VF& x) const {
  VF h = x;
  for (const auto& c : convs_) h = ops::relu(c(h));
  const float inv_area = 1.0f / static_cast<float>(h.dim(1) * h.dim(2));
  return ops::scale(ops::global_sum_pool(h), inv_area);
}

VF Classifier::binary_logit(const VF& f) const { return binary_(f); }
VF Classifier::rotation_logits(const VF& f) const { return rotation_(f); }

namespace {

struct EvalPool {
  TensorF images;
  Labels targets;
};

EvalPool make_eval_pool(const data::Dataset& eval, int task, int num_classes, int64_t per_class, uint64_t seed) {
  std::vector<int64_t> pos, neg;
  for (int64_t i = 0; i < eval.size(); ++i) {
    const int32_t l = eval.labels[static_cast<size_t>(i)];
    if (l == task)
      pos.push_back(i);
    else if (l < num_classes)
      neg.push_back(i);
  }
  Rng rng(derive_seed(seed, "eval-task-" + std::to_string(task)));
  const int64_t n = std::min<int64_t>({per_class, static_cast<int64_t>(pos.size()), static_cast<int64_t>(neg.size())});
  if (n < 1) throw data::DataError("evaluation split has no images for task " + std::to_string(task));
  auto rows = sample_distinct(std::move(pos), n, rng);
  const auto negs = sample_distinct(std::move(neg), n, rng);
  rows.insert(rows.end(), negs.begin(), negs.end());
  Labels targets(static_cast<size_t>(2 * n), 0);
  std::fill(targets.begin(), targets.begin() + n, 1);
  return {data::gather_images(eval.images, rows), std::move(targets)};
}

double binary_accuracy(const Classifier& model, const EvalPool& pool) {
  ag::NoGradGuard no_grad;
  const int64_t n = pool.images.dim(0);
  const int64_t chunk = 256;
  int64_t hits = 0;
  for (int64_t start = 0; start < n; start += chunk) {
    std::vector<int64_t> rows;
    for (int64_t i = start; i < std::min(n, start + chunk); ++i) rows.push_back(i);
    const TensorF logits = model.binary_logit(model.features(VF(data::gather_images(pool.images, rows)))).value();
    for (size_t r = 0; r < rows.size(); ++r)
      hits += (logits[static_cast<int64_t>(r)] > 0.0f) == (pool.targets[static_cast<size_t>(rows[r])] == 1);
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

// -mean(log sigmoid(s * logit)) with s = +1 for positives and -1 otherwise.
VF binary_cross_entropy(const VF& logits, const Labels& targets) {
  TensorF sign({static_cast<int64_t>(targets.size()), 1});
  for (size_t i = 0; i < targets.size(); ++i) sign[static_cast<int64_t>(i)] = targets[i] ? 1.0f : -1.0f;
  return ops::scale(ops::mean(ops::log_sigmoid(ops::mul_const(logits, sign))), -1.0f);
}

}  // namespace

AccuracyTrace run_forgetting_experiment(ClassifierVariant variant, const data::Dataset& train,
                                        const data::Dataset& eval, const ForgettingConfig& cfg) {
  if (cfg.eval_interval < 1) throw std::invalid_argument("eval_interval must be >= 1");
  if (variant == ClassifierVariant::WithSelfSup && cfg.batch_size % 4 != 0)
    throw rotation::BatchSizeError("self-supervised batches must be divisible by 4");
  if (!eval.labeled()) throw data::DataError("forgetting evaluation split needs labels");
  TaskStream stream(train, cfg.schedule, cfg.batch_size, derive_seed(cfg.seed, "tasks"));
  Classifier model(train.channels(), cfg.width, derive_seed(cfg.seed, "classifier"));
  optim::Adam<float> adam(model.registry().parameters(), optim::AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});

  std::vector<EvalPool> pools;
  for (int t = 0; t < cfg.schedule.num_classes; ++t)
    pools.push_back(make_eval_pool(eval, t, cfg.schedule.num_classes, cfg.eval_per_class, cfg.seed));

  AccuracyTrace trace;
  trace.variant = variant;
  trace.seed = cfg.seed;
  trace.schedule = cfg.schedule;
  trace.switch_steps = cfg.schedule.switch_steps();
  trace.cycle_steps = cfg.schedule.cycle_steps();
  auto record = [&](int64_t step) {
    const int task = cfg.schedule.task_at(step);
    trace.rows.push_back({step, task, binary_accuracy(model, pools[static_cast<size_t>(task)])});
  };

  const int64_t total = cfg.schedule.length() + std::max<int64_t>(cfg.return_window, 0);
  record(0);
  for (int64_t step = 0; step < total; ++step) {
    const TaskBatch b = stream.batch_at(step);
    VF loss = binary_cross_entropy(model.binary_logit(model.features(VF(b.images))), b.targets);
    if (variant == ClassifierVariant::WithSelfSup) {
      const auto rb = rotation::make_rotation_batch(b.images, rotation::Source::Real);
      VF rot = model.rotation_logits(model.features(VF(rb.images)));
      loss = ops::sub(loss, ops::scale(losses::rotation_term(rot, rb.labels), static_cast<float>(cfg.beta)));
    }
    if (!std::isfinite(loss.item())) {
      trace.aborted = true;
      trace.error = "non-finite loss at step " + std::to_string(step);
      return trace;
    }
    ag::backward(loss);
    adam.step();
    if ((step + 1) % cfg.eval_interval == 0) record(step + 1);
  }
  return trace;
}

std::vector<double> post_switch_accuracy(const AccuracyTrace& trace, int64_t window) {
  std::vector<double> out;
  for (int64_t s : trace.switch_steps) {
    double sum = 0;
    int64_t n = 0;
    for (const auto& r : trace.rows)
      if (r.step >= s && r.step < s + window) {
        sum += r.accuracy;
        ++n;
      }
    if (n > 0) out.push_back(sum / static_cast<double>(n));
  }
  return out;
}

double final_task_accuracy(const AccuracyTrace& trace) {
  const auto& sch = trace.schedule;
  const int64_t end = sch.length();
  const int64_t start = end - sch.steps_per_task;
  double sum = 0;
  int64_t n = 0;
  for (const auto& r : trace.rows)
    if (r.step >= start && r.step < end) {
      sum += r.accuracy;
      ++n;
    }
  if (n == 0) throw std::invalid_argument("trace has no evaluations of the final task");
  return sum / static_cast<double>(n);
}

std::string trace_csv(const std::vector<AccuracyTrace>& traces) {
  std::ostringstream os;
  os << "variant,seed,step,task_id,accuracy,task_switch,cycle_end\n" << std::setprecision(6);
  for (const auto& t : traces)
    for (const auto& r : t.rows) {
      const bool sw = std::find(t.switch_steps.begin(), t.switch_steps.end(), r.step) != t.switch_steps.end();
      const bool cyc = std::find(t.cycle_steps.begin(), t.cycle_steps.end(), r.step) != t.cycle_steps.end();
      os << to_string(t.variant) << ',' << t.seed << ',' << r.step << ',' << r.task << ',' << r.accuracy << ','
         << sw << ',' << cyc << '\n';
    }
  return os.str();
}

}  // namespace ssgan::forgetting
