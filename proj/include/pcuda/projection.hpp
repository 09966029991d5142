#pragma once

// Two-component PCA of encoder features for visual inspection of domain
// alignment.

#include <algorithm>
#include <cmath>
#include <ostream>
#include <vector>

#include <Eigen/Dense>

#include "pcuda/error.hpp"
#include "pcuda/model.hpp"
#include "pcuda/textio.hpp"

namespace pcuda {

struct PcaResult {
  Eigen::MatrixXd coords;            // [n × 2]
  Eigen::MatrixXd components;        // [d × 2], unit columns
  Eigen::Vector2d explained;         // variance along each component
  double total_variance = 0.0;       // trace of the covariance
};

/// Projects rows of `x` onto the top two principal directions. Each
/// component's largest-magnitude entry is made positive so results are
/// reproducible.
inline PcaResult pca2(const Eigen::MatrixXd& x) {
  if (x.rows() < 3) throw ValueError("pca: need at least 3 samples, got " + std::to_string(x.rows()));
  if (x.cols() < 1) throw ValueError("pca: features are empty");
  const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
  const double total = cov.trace();
  if (!(total > 1e-15)) throw ValueError("pca: features have zero variance");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw ValueError("pca: eigen-decomposition failed");
  const Eigen::Index d = cov.rows();
  PcaResult r;
  r.components = Eigen::MatrixXd::Zero(d, 2);
  r.explained.setZero();
  for (Eigen::Index k = 0; k < std::min<Eigen::Index>(2, d); ++k) {
    Eigen::VectorXd v = solver.eigenvectors().col(d - 1 - k);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    r.components.col(k) = v;
    r.explained(k) = std::max(0.0, solver.eigenvalues()(d - 1 - k));
  }
  r.coords = centered * r.components;
  r.total_variance = total;
  return r;
}

/// Encoder features for every cloud, row-stacked.
inline Eigen::MatrixXd encoder_features(const ModelParams& params, const std::vector<PointCloud>& clouds,
                                        std::size_t batch_size = 64) {
  const std::size_t d = params.config().feature_dim;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(clouds.size()), static_cast<Eigen::Index>(d));
  for (std::size_t first = 0; first < clouds.size(); first += batch_size) {
    const std::size_t n = std::min(batch_size, clouds.size() - first);
    const Tensor f = encode(params, CloudBatch::from(std::span<const PointCloud>(clouds.data() + first, n)));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j)
        out(static_cast<Eigen::Index>(first + i), static_cast<Eigen::Index>(j)) = f.at(i, j);
  }
  return out;
}

struct ProjectedSample {
  std::string domain;
  std::size_t label;
};

inline void write_projection_csv(std::ostream& out, const PcaResult& r, const std::vector<ProjectedSample>& rows) {
  if (rows.size() != static_cast<std::size_t>(r.coords.rows()))
    throw ShapeError("projection: " + std::to_string(rows.size()) + " labels for " +
                     std::to_string(r.coords.rows()) + " points");
  out << "index,domain,label,pc1,pc2\n";
  for (std::size_t i = 0; i < rows.size(); ++i)
    out << i << ',' << rows[i].domain << ',' << rows[i].label << ','
        << textio::format_double(r.coords(static_cast<Eigen::Index>(i), 0)) << ','
        << textio::format_double(r.coords(static_cast<Eigen::Index>(i), 1)) << '\n';
}

}  // namespace pcuda
