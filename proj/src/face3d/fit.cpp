#include "talkinghead/face3d/fit.hpp"

#include <cmath>
#include <limits>

#include "talkinghead/error.hpp"
#include "talkinghead/face3d/model.hpp"

namespace th::face3d {

namespace {

struct Problem {
  Eigen::Matrix<double, Eigen::Dynamic, 2> landmarks;
  Eigen::MatrixXd mean;    // L x 3
  Eigen::MatrixXd id_rows;   // 3L x D_id
  Eigen::MatrixXd exp_rows;  // 3L x D_exp
  Camera camera;
  int d_id = 0;
  int d_exp = 0;
  double sqrt_wid = 0;
  double sqrt_wexp = 0;

  [[nodiscard]] int landmark_count() const { return static_cast<int>(landmarks.rows()); }
  [[nodiscard]] int param_count() const { return 6 + d_id + d_exp; }
  [[nodiscard]] int residual_count() const { return 2 * landmark_count() + d_id + d_exp; }

  [[nodiscard]] Eigen::VectorXd residuals(const Eigen::VectorXd& x) const {
    const Eigen::Vector3d angles = x.segment<3>(0);
    const Eigen::Vector3d trans = x.segment<3>(3);
    const Eigen::VectorXd alpha = x.segment(6, d_id);
    const Eigen::VectorXd beta = x.segment(6 + d_id, d_exp);
    const Eigen::VectorXd offs = id_rows * alpha + exp_rows * beta;
    const Eigen::Matrix3d r = rotation_matrix(angles);
    Eigen::VectorXd res(residual_count());
    for (int l = 0; l < landmark_count(); ++l) {
      const Eigen::Vector3d v = mean.row(l).transpose() + offs.segment<3>(3 * l);
      const Eigen::Vector3d c = r * v + trans;
      const double z = std::max(c.z(), 1e-6);
      res[2 * l] = camera.principal.x() + camera.focal * c.x() / z - landmarks(l, 0);
      res[2 * l + 1] = camera.principal.y() - camera.focal * c.y() / z - landmarks(l, 1);
    }
    res.segment(2 * landmark_count(), d_id) = sqrt_wid * alpha;
    res.segment(2 * landmark_count() + d_id, d_exp) = sqrt_wexp * beta;
    return res;
  }

  [[nodiscard]] Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const {
    Eigen::MatrixXd j(residual_count(), param_count());
    Eigen::VectorXd xp = x, xm = x;
    for (int k = 0; k < param_count(); ++k) {
      const double h = 1e-6 * std::max(1.0, std::abs(x[k]));
      xp[k] = x[k] + h;
      xm[k] = x[k] - h;
      j.col(k) = (residuals(xp) - residuals(xm)) / (2.0 * h);
      xp[k] = xm[k] = x[k];
    }
    return j;
  }
};

}  // namespace

FitResult fit_to_landmarks(const Eigen::Matrix<double, Eigen::Dynamic, 2>& landmarks,
                           const std::vector<int>& vertex_ids, const FaceBasis& basis, const Camera& camera,
                           const FitOptions& options) {
  const auto count = static_cast<int>(landmarks.rows());
  if (count < 6) throw PreconditionError("fit_to_landmarks needs at least 6 landmark correspondences");
  if (static_cast<int>(vertex_ids.size()) != count)
    throw ConfigError("fit_to_landmarks: one vertex id per landmark is required");
  camera.validate();
  const BasisDims dims = basis.dims();

  Problem prob;
  prob.landmarks = landmarks;
  prob.camera = camera;
  prob.d_id = dims.id;
  prob.d_exp = dims.exp;
  prob.sqrt_wid = std::sqrt(options.identity_weight);
  prob.sqrt_wexp = std::sqrt(options.expression_weight);
  prob.mean.resize(count, 3);
  prob.id_rows.resize(3 * count, dims.id);
  prob.exp_rows.resize(3 * count, dims.exp);
  for (int l = 0; l < count; ++l) {
    const int v = vertex_ids[static_cast<std::size_t>(l)];
    if (v < 0 || v >= basis.vertex_count()) throw ConfigError("fit_to_landmarks: vertex id out of range");
    prob.mean.row(l) = basis.mean_shape.segment<3>(3 * v).transpose();
    prob.id_rows.middleRows(3 * l, 3) = basis.id.middleRows(3 * v, 3);
    prob.exp_rows.middleRows(3 * l, 3) = basis.exp.middleRows(3 * v, 3);
  }

  // Initial pose: frontal, depth from the ratio of model to image spread.
  Eigen::VectorXd x = Eigen::VectorXd::Zero(prob.param_count());
  const Eigen::RowVector2d centroid = landmarks.colwise().mean();
  const Eigen::RowVector3d model_centroid = prob.mean.colwise().mean();
  const double px_spread = std::sqrt((landmarks.rowwise() - centroid).squaredNorm() / count);
  const double model_spread =
      std::sqrt((prob.mean.leftCols<2>().rowwise() - model_centroid.head<2>()).squaredNorm() / count);
  double tz = options.initial_depth > 0 ? options.initial_depth
                                        : camera.focal * model_spread / std::max(px_spread, 1e-9) - model_centroid.z();
  if (!(tz > 0)) tz = 5.0;
  const double zc = tz + model_centroid.z();
  x[3] = (centroid.x() - camera.principal.x()) * zc / camera.focal - model_centroid.x();
  x[4] = -(centroid.y() - camera.principal.y()) * zc / camera.focal - model_centroid.y();
  x[5] = tz;

  Eigen::VectorXd r = prob.residuals(x);
  double cost = r.squaredNorm();
  double lambda = 1e-3;
  FitResult result;
  int it = 0;
  for (; it < options.max_iterations; ++it) {
    const Eigen::MatrixXd j = prob.jacobian(x);
    const Eigen::MatrixXd jtj = j.transpose() * j;
    const Eigen::VectorXd g = j.transpose() * r;
    if (g.lpNorm<Eigen::Infinity>() < 1e-12) {
      result.converged = true;
      break;
    }
    bool improved = false;
    for (int attempt = 0; attempt < 12; ++attempt) {
      Eigen::MatrixXd a = jtj;
      a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-9);
      const Eigen::VectorXd dx = a.ldlt().solve(-g);
      const Eigen::VectorXd xn = x + dx;
      const Eigen::VectorXd rn = prob.residuals(xn);
      const double cn = rn.squaredNorm();
      if (std::isfinite(cn) && cn < cost) {
        const double rel = (cost - cn) / std::max(cost, 1e-300);
        x = xn;
        r = rn;
        cost = cn;
        lambda = std::max(lambda / 3.0, 1e-12);
        improved = true;
        if (rel < options.tolerance || dx.norm() < 1e-12 * (1.0 + x.norm())) result.converged = true;
        break;
      }
      lambda *= 4.0;
    }
    if (!improved) {
      // No descent direction left at any damping: a local minimum.
      result.converged = true;
      break;
    }
    if (result.converged) break;
  }
  result.iterations = it;
  if (!result.converged) {
    result.warning = true;
    warn("fit_to_landmarks: iteration budget exhausted; returning best-so-far estimate");
  }

  result.coefficients = CoefficientSet::zeros(dims);
  result.coefficients.pose.angles = x.segment<3>(0);
  for (int i = 0; i < 3; ++i) result.coefficients.pose.angles[i] = wrap_angle(result.coefficients.pose.angles[i]);
  result.coefficients.pose.translation = x.segment<3>(3);
  result.coefficients.alpha = x.segment(6, dims.id);
  result.coefficients.beta = x.segment(6 + dims.id, dims.exp);
  result.rmse_px = std::sqrt(r.head(2 * count).squaredNorm() / count);
  return result;
}

}  // namespace th::face3d
