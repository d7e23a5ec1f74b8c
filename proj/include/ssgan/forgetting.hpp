#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssgan/data.hpp"
#include "ssgan/layers.hpp"
#include "ssgan/random.hpp"

namespace ssgan::forgetting {

// Task at step s is (s / steps_per_task) mod num_classes.
struct TaskSchedule {
  int num_classes = 10;
  int64_t steps_per_task = 1000;
  int64_t cycles = 1;

  int task_at(int64_t step) const;
  int64_t cycle_length() const { return steps_per_task * num_classes; }
  int64_t length() const { return cycle_length() * cycles; }
  // Steps at which the task changes: steps_per_task, 2 * steps_per_task, ..., length().
  std::vector<int64_t> switch_steps() const;
  std::vector<int64_t> cycle_steps() const;
  void validate() const;
};

struct TaskBatch {
  TensorF images;
  Labels targets;  // 1 for the scheduled class, 0 otherwise
  std::vector<int64_t> rows;  // dataset rows, aligned with targets
  int task = 0;
  int64_t step = 0;
};

// Balanced 1-vs-all batches: half drawn from the scheduled class, half
// uniformly from the other classes, in a shuffled order.
class TaskStream {
 public:
  TaskStream(const data::Dataset& ds, TaskSchedule schedule, int64_t batch_size, uint64_t seed);
  TaskBatch batch_at(int64_t step) const;
  const TaskSchedule& schedule() const { return schedule_; }

 private:
  const data::Dataset* ds_;
  TaskSchedule schedule_;
  int64_t batch_size_;
  uint64_t seed_;
  std::vector<std::vector<int64_t>> by_class_;
};

enum class ClassifierVariant { Vanilla, WithSelfSup };
std::string to_string(ClassifierVariant v);
ClassifierVariant parse_classifier_variant(const std::string& s);

struct ForgettingConfig {
  TaskSchedule schedule;
  int64_t batch_size = 64;
  int64_t width = 32;          // channels of the first conv; later layers use 2x and 4x
  double lr = 2e-4;
  double beta = 1.0;           // rotation loss weight for WithSelfSup
  int64_t eval_interval = 50;
  int64_t eval_per_class = 200;  // positives per task in the evaluation pool
  int64_t return_window = 100;   // steps trained past the end of the last cycle
  uint64_t seed = 0;
};

// Four 3x3 conv layers (strides 1, 2, 2, 2) with ReLU, mean pooling, a
// binary head and a rotation head.
class Classifier {
 public:
  Classifier(int64_t channels, int64_t width, uint64_t seed);
  ag::VarF features(const ag::VarF& x) const;
  ag::VarF binary_logit(const ag::VarF& features) const;    // [N, 1]
  ag::VarF rotation_logits(const ag::VarF& features) const;  // [N, 4]
  nn::ParamRegistry<float>& registry() { return reg_; }

 private:
  nn::ParamRegistry<float> reg_;
  std::vector<nn::Conv2d<float>> convs_;
  nn::Linear<float> binary_, rotation_;
};

struct TraceRow {
  int64_t step = 0;
  int task = 0;
  double accuracy = 0;
};

struct AccuracyTrace {
  ClassifierVariant variant = ClassifierVariant::Vanilla;
  uint64_t seed = 0;
  TaskSchedule schedule;
  std::vector<TraceRow> rows;
  std::vector<int64_t> switch_steps;
  std::vector<int64_t> cycle_steps;
  bool aborted = false;
  std::string error;
};

// Trains online over the task stream, recording current-task accuracy on a
// held-out pool every eval_interval steps (and at step 0).
AccuracyTrace run_forgetting_experiment(ClassifierVariant variant, const data::Dataset& train,
                                        const data::Dataset& eval, const ForgettingConfig& cfg);

// Mean accuracy over evaluations in [switch, switch + window), per switch.
std::vector<double> post_switch_accuracy(const AccuracyTrace& trace, int64_t window = 100);
// Mean accuracy over the evaluations of the last task of the last cycle.
double final_task_accuracy(const AccuracyTrace& trace);

std::string trace_csv(const std::vector<AccuracyTrace>& traces);

}  // namespace ssgan::forgetting
