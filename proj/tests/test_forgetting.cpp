#include <gtest/gtest.h>

#include "ssgan/forgetting.hpp"
#include "ssgan/rotation.hpp"

namespace ssgan::forgetting {
namespace {

TEST(Schedule, TaskIndexFollowsTheStepCounter) {
  const TaskSchedule s;
  EXPECT_EQ(s.task_at(0), 0);
  EXPECT_EQ(s.task_at(999), 0);
  EXPECT_EQ(s.task_at(1000), 1);
  EXPECT_EQ(s.task_at(9999), 9);
  EXPECT_EQ(s.task_at(10000), 0);
  EXPECT_EQ(s.cycle_length(), 10000);
}

TEST(Schedule, IsPeriodicWithTheCycleLength) {
  TaskSchedule s;
  s.steps_per_task = 7;
  s.num_classes = 5;
  for (int64_t t = 0; t < 200; ++t) EXPECT_EQ(s.task_at(t), s.task_at(t + s.cycle_length()));
}

TEST(Schedule, MarkersSitAtMultiplesOfTheTaskLength) {
  TaskSchedule s;
  s.cycles = 2;
  const auto sw = s.switch_steps();
  ASSERT_EQ(sw.size(), 20u);
  for (size_t i = 0; i < sw.size(); ++i) EXPECT_EQ(sw[i], 1000 * static_cast<int64_t>(i + 1));
  EXPECT_EQ(s.cycle_steps(), (std::vector<int64_t>{10000, 20000}));
}

class ShapesTasks : public ::testing::Test {
 protected:
  ShapesTasks() : train_(data::make_synthetic_shapes(600, 8, 1)), eval_(data::make_synthetic_shapes(300, 8, 2)) {}
  data::Dataset train_, eval_;
};

TEST_F(ShapesTasks, EveryBatchIsExactlyHalfPositive) {
  TaskSchedule s;
  s.steps_per_task = 3;
  TaskStream stream(train_, s, 16, 5);
  for (int64_t step = 0; step < 60; ++step) {
    const auto b = stream.batch_at(step);
    EXPECT_EQ(b.task, s.task_at(step));
    ASSERT_EQ(b.targets.size(), 16u);
    EXPECT_EQ(std::count(b.targets.begin(), b.targets.end(), 1), 8);
    for (size_t i = 0; i < b.rows.size(); ++i) {
      const bool positive = train_.labels[static_cast<size_t>(b.rows[i])] == b.task;
      EXPECT_EQ(positive, b.targets[i] == 1);
    }
    EXPECT_EQ(b.images.dim(0), 16);
  }
}

TEST_F(ShapesTasks, BatchesAreDeterministicPerStep) {
  TaskSchedule s;
  TaskStream a(train_, s, 16, 5), b(train_, s, 16, 5);
  EXPECT_EQ(a.batch_at(123).rows, b.batch_at(123).rows);
  EXPECT_NE(a.batch_at(123).rows, a.batch_at(124).rows);
}

TEST_F(ShapesTasks, TooFewSamplesIsAnError) {
  const auto small = data::make_synthetic_shapes(40, 8, 3);
  EXPECT_THROW(TaskStream(small, TaskSchedule{}, 16, 0), data::DataError);
  const auto four = data::make_synthetic_shapes(400, 8, 3, 4);
  EXPECT_THROW(TaskStream(four, TaskSchedule{}, 16, 0), data::DataError);
  EXPECT_THROW(TaskStream(train_, TaskSchedule{}, 15, 0), std::invalid_argument);
}

ForgettingConfig tiny() {
  ForgettingConfig c;
  c.schedule.steps_per_task = 4;
  c.schedule.num_classes = 10;
  c.batch_size = 16;
  c.width = 4;
  c.eval_interval = 2;
  c.eval_per_class = 10;
  c.return_window = 4;
  c.seed = 1;
  return c;
}

TEST_F(ShapesTasks, TraceCoversTheScheduleAndStaysInRange) {
  const auto cfg = tiny();
  for (auto v : {ClassifierVariant::Vanilla, ClassifierVariant::WithSelfSup}) {
    const auto t = run_forgetting_experiment(v, train_, eval_, cfg);
    EXPECT_FALSE(t.aborted);
    ASSERT_EQ(t.rows.size(), static_cast<size_t>((40 + 4) / 2 + 1));
    for (size_t i = 0; i < t.rows.size(); ++i) {
      EXPECT_EQ(t.rows[i].step, static_cast<int64_t>(2 * i));
      EXPECT_EQ(t.rows[i].task, cfg.schedule.task_at(t.rows[i].step));
      EXPECT_GE(t.rows[i].accuracy, 0.0);
      EXPECT_LE(t.rows[i].accuracy, 1.0);
    }
    EXPECT_EQ(t.switch_steps.size(), 10u);
  }
}

TEST_F(ShapesTasks, RunsAreDeterministicAndVariantsDiffer) {
  const auto cfg = tiny();
  const auto a = run_forgetting_experiment(ClassifierVariant::Vanilla, train_, eval_, cfg);
  const auto b = run_forgetting_experiment(ClassifierVariant::Vanilla, train_, eval_, cfg);
  const auto c = run_forgetting_experiment(ClassifierVariant::WithSelfSup, train_, eval_, cfg);
  EXPECT_EQ(trace_csv({a}), trace_csv({b}));
  std::string ca = trace_csv({a}), cc = trace_csv({c});
  ca = ca.substr(ca.find('\n'));
  cc = cc.substr(cc.find('\n'));
  EXPECT_NE(ca.substr(ca.find(',') + 1), cc.substr(cc.find(',') + 1));
}

TEST_F(ShapesTasks, SelfSupervisedVariantNeedsBatchesDivisibleByFour) {
  auto cfg = tiny();
  cfg.batch_size = 18;
  EXPECT_THROW(run_forgetting_experiment(ClassifierVariant::WithSelfSup, train_, eval_, cfg),
               rotation::BatchSizeError);
}

TEST(TraceAnalysis, PostSwitchAndFinalTaskMeans) {
  AccuracyTrace t;
  t.schedule.num_classes = 2;
  t.schedule.steps_per_task = 100;
  t.switch_steps = t.schedule.switch_steps();
  t.cycle_steps = t.schedule.cycle_steps();
  for (int64_t s = 0; s <= 250; s += 50)
    t.rows.push_back({s, t.schedule.task_at(s), s == 100 ? 0.4 : (s == 150 ? 0.6 : (s == 200 ? 0.5 : 0.9))});
  const auto post = post_switch_accuracy(t, 100);
  ASSERT_EQ(post.size(), 2u);
  EXPECT_DOUBLE_EQ(post[0], 0.5);   // steps 100, 150
  EXPECT_DOUBLE_EQ(post[1], 0.7);   // steps 200, 250
  EXPECT_DOUBLE_EQ(final_task_accuracy(t), 0.5);  // task 1 of the last cycle: steps 100, 150
}

TEST(TraceAnalysis, CsvCarriesMarkers) {
  AccuracyTrace t;
  t.schedule.num_classes = 2;
  t.schedule.steps_per_task = 10;
  t.switch_steps = t.schedule.switch_steps();
  t.cycle_steps = t.schedule.cycle_steps();
  t.rows = {{0, 0, 0.5}, {10, 1, 0.6}, {20, 0, 0.7}};
  const auto csv = trace_csv({t});
  EXPECT_NE(csv.find("vanilla,0,10,1,0.6,1,0\n"), std::string::npos);
  EXPECT_NE(csv.find("vanilla,0,20,0,0.7,1,1\n"), std::string::npos);
  EXPECT_NE(csv.find("vanilla,0,0,0,0.5,0,0\n"), std::string::npos);
}

TEST(Variants, ParseRoundTrip) {
  EXPECT_EQ(parse_classifier_variant("vanilla"), ClassifierVariant::Vanilla);
  EXPECT_EQ(parse_classifier_variant(to_string(ClassifierVariant::WithSelfSup)), ClassifierVariant::WithSelfSup);
  EXPECT_THROW(parse_classifier_variant("both"), std::invalid_argument);
}

}  // namespace
}  // namespace ssgan::forgetting
