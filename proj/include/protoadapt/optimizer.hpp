// Copyright 2026 The protoadapt Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "protoadapt/embedcache.hpp"

namespace protoadapt {

enum class OptimizerKind { kGradientDescent, kAdam };
enum class LrSchedule { kConstant, kCosine };

[[nodiscard]] std::string to_string(OptimizerKind kind);
[[nodiscard]] std::string to_string(LrSchedule schedule);
[[nodiscard]] OptimizerKind parse_optimizer(const std::string& s);
[[nodiscard]] LrSchedule parse_schedule(const std::string& s);

// Learning rate for step `step` of `total_steps` (0-based). Cosine decays from
// base_lr towards zero over the run.
[[nodiscard]] double scheduled_lr(LrSchedule schedule, double base_lr, long step, long total_steps);

// Bias-corrected adaptive-moment update without weight decay.
class AdamOptimizer {
 public:
  struct Params {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
  };

  AdamOptimizer(Eigen::Index rows, Eigen::Index cols);
  AdamOptimizer(Eigen::Index rows, Eigen::Index cols, Params params);

  void step(Matrix& parameters, const Matrix& gradient, double learning_rate);
  [[nodiscard]] long step_count() const { return step_; }

 private:
  Params params_;
  Matrix first_moment_;
  Matrix second_moment_;
  long step_ = 0;
};

}  // namespace protoadapt
