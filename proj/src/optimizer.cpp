// Copyright 2026 The protoadapt Authors.
// SPDX-License-Identifier: Apache-2.0

#include "protoadapt/optimizer.hpp"

#include <cmath>
#include <numbers>

#include "protoadapt/error.hpp"

namespace protoadapt {

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kAdam ? "adam" : "sgd";
}

std::string to_string(LrSchedule schedule) {
  return schedule == LrSchedule::kCosine ? "cosine" : "constant";
}

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::kAdam;
  if (s == "sgd") return OptimizerKind::kGradientDescent;
  throw ValidationError("optimizer must be 'adam' or 'sgd', got '" + s + "'");
}

LrSchedule parse_schedule(const std::string& s) {
  if (s == "cosine") return LrSchedule::kCosine;
  if (s == "constant") return LrSchedule::kConstant;
  throw ValidationError("lr schedule must be 'cosine' or 'constant', got '" + s + "'");
}

double scheduled_lr(LrSchedule schedule, double base_lr, long step, long total_steps) {
  if (schedule == LrSchedule::kConstant || total_steps <= 0) return base_lr;
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
  return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamOptimizer::AdamOptimizer(Eigen::Index rows, Eigen::Index cols)
    : AdamOptimizer(rows, cols, Params{}) {}

AdamOptimizer::AdamOptimizer(Eigen::Index rows, Eigen::Index cols, Params params)
    : params_(params),
      first_moment_(Matrix::Zero(rows, cols)),
      second_moment_(Matrix::Zero(rows, cols)) {}

void AdamOptimizer::step(Matrix& parameters, const Matrix& gradient, double learning_rate) {
  ++step_;
  first_moment_ = params_.beta1 * first_moment_ + (1.0 - params_.beta1) * gradient;
  second_moment_ =
      params_.beta2 * second_moment_ + (1.0 - params_.beta2) * gradient.cwiseAbs2();
  const double correction1 = 1.0 - std::pow(params_.beta1, static_cast<double>(step_));
  const double correction2 = 1.0 - std::pow(params_.beta2, static_cast<double>(step_));
  parameters.array() -= learning_rate * (first_moment_.array() / correction1) /
                        ((second_moment_.array() / correction2).sqrt() + params_.epsilon);
}

}  // namespace protoadapt
