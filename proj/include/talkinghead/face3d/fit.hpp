#pragma once

#include <vector>

#include "talkinghead/face3d/types.hpp"

namespace th::face3d {

struct FitOptions {
  int max_iterations = 200;
  double identity_weight = 1e-3;    // on ||alpha||^2
  double expression_weight = 1e-3;  // on ||beta||^2
  double texture_weight = 1e-2;     // on ||delta||^2 (geometry does not constrain delta)
  double tolerance = 1e-12;
  double initial_depth = 0.0;       // 0: estimate from landmark spread
};

struct FitResult {
  CoefficientSet coefficients;
  double rmse_px = 0.0;
  int iterations = 0;
  bool converged = false;
  bool warning = false;  // set when the iteration budget ran out
};

/// Regularized nonlinear least squares of projected landmark vertices against 2D landmarks.
/// landmarks: L x 2 pixels; vertex_ids: the model vertex paired with each landmark.
FitResult fit_to_landmarks(const Eigen::Matrix<double, Eigen::Dynamic, 2>& landmarks,
                           const std::vector<int>& vertex_ids, const FaceBasis& basis, const Camera& camera,
                           const FitOptions& options = {});

}  // namespace th::face3d
