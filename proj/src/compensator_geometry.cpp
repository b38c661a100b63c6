#include "elastocal/compensator_geometry.hpp"

#include "elastocal/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace elastocal {

namespace {

[[noreturn]] void degenerate(const std::string& what) {
  throw Error(ErrorCategory::degenerate_data, what);
}

void check_trace(const MarkerTrace& trace, double min_span) {
  if (trace.samples.size() < 3) {
    degenerate("trace '" + trace.marker_id + "' needs at least 3 samples");
  }
  double lo = trace.samples.front().q2, hi = lo;
  std::vector<double> q2s;
  for (const auto& s : trace.samples) {
    if (!s.position.allFinite() || !std::isfinite(s.q2)) {
      degenerate("trace '" + trace.marker_id + "' has non-finite samples");
    }
    lo = std::min(lo, s.q2);
    hi = std::max(hi, s.q2);
    q2s.push_back(s.q2);
  }
  std::sort(q2s.begin(), q2s.end());
  const auto distinct = std::unique(q2s.begin(), q2s.end(),
                                    [](double x, double y) { return std::abs(x - y) < 1e-9; }) -
                        q2s.begin();
  if (distinct < 3) degenerate("trace '" + trace.marker_id + "' needs 3 distinct q2 values");
  if (hi - lo < min_span) degenerate("trace '" + trace.marker_id + "' q2 span too small");
}

struct PivotSolve {
  PivotFit fit;
  double rss = 0.0;
  std::size_t dof = 0;
};

PivotSolve solve_pivot(std::span<const MarkerTrace> traces) {
  if (traces.empty()) degenerate("pivot fit needs at least one trace");
  Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
  Eigen::Vector3d b = Eigen::Vector3d::Zero();
  Eigen::Vector3d sum_all = Eigen::Vector3d::Zero();
  std::size_t count = 0;
  std::vector<Eigen::Vector3d> means;
  for (const auto& trace : traces) {
    check_trace(trace, 0.0);
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    double mean_sq = 0.0;
    for (const auto& s : trace.samples) {
      mean += s.position;
      mean_sq += s.position.squaredNorm();
    }
    const double m = static_cast<double>(trace.samples.size());
    mean /= m;
    mean_sq /= m;
    for (const auto& s : trace.samples) {
      const Eigen::Vector3d ph = s.position - mean;
      const double sh = s.position.squaredNorm() - mean_sq;
      A += ph * ph.transpose();
      b += sh * ph;
      sum_all += s.position;
      ++count;
    }
    means.push_back(mean);
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (!(sv[1] > 1e-12 * std::max(sv[0], 1e-300))) degenerate("pivot samples are collinear");

  PivotSolve out;
  const Eigen::Vector3d n = svd.matrixV().col(2);
  // (I - n n^T) A^-1 restricted to the two in-plane singular directions; this
  // is identical to the full inverse form whenever A is invertible and stays
  // defined when noiseless coplanar data make A rank 2.
  Eigen::Vector3d in_plane = Eigen::Vector3d::Zero();
  for (int k = 0; k < 2; ++k) {
    const Eigen::Vector3d v = svd.matrixV().col(k);
    in_plane += v * (v.dot(b) / sv[k]);
  }
  out.fit.p0 = 0.5 * in_plane + n * n.dot(sum_all / static_cast<double>(count));
  out.fit.normal = n;

  std::size_t samples = 0;
  for (std::size_t j = 0; j < traces.size(); ++j) {
    std::vector<double> radii;
    for (const auto& s : traces[j].samples) {
      const Eigen::Vector3d d = s.position - out.fit.p0;
      radii.push_back((d - n * n.dot(d)).norm());
    }
    double r_mean = 0.0;
    for (double r : radii) r_mean += r;
    r_mean /= static_cast<double>(radii.size());
    for (std::size_t i = 0; i < radii.size(); ++i) {
      const double axial = n.dot(traces[j].samples[i].position - means[j]);
      out.rss += (radii[i] - r_mean) * (radii[i] - r_mean) + axial * axial;
      ++samples;
    }
  }
  out.fit.residual_rms = std::sqrt(out.rss / static_cast<double>(samples));
  const std::size_t params = 4 + 2 * traces.size();
  out.dof = 2 * samples > params ? 2 * samples - params : 0;
  return out;
}

struct GeometryEstimate {
  LinkLengthFit link;
  PivotSolve pivot;
  Eigen::Vector3d normal;
  double a_x = 0.0;
  double a_y = 0.0;
};

GeometryEstimate estimate(const MarkerTrace& p1, std::span<const MarkerTrace> p0s,
                          SpringConvention convention) {
  GeometryEstimate e;
  e.link = fit_link_length(p1);
  e.pivot = solve_pivot(p0s);
  Eigen::Vector3d n = e.pivot.fit.normal;
  if (n.dot(e.link.rotation.col(2)) < 0.0) n = -n;
  Eigen::Vector3d x = e.link.rotation.col(0);
  x = (x - n * n.dot(x)).normalized();
  const Eigen::Vector3d y = n.cross(x);
  const Eigen::Vector3d d = convention == SpringConvention::plus ? e.link.center - e.pivot.fit.p0
                                                                 : e.pivot.fit.p0 - e.link.center;
  e.normal = n;
  e.a_x = x.dot(d);
  e.a_y = y.dot(d);
  return e;
}

}  // namespace

LinkLengthFit fit_link_length(const MarkerTrace& trace) {
  check_trace(trace, std::numbers::pi / 6.0 - 1e-12);
  const std::size_t m = trace.samples.size();
  std::vector<Eigen::Vector3d> u(m);
  Eigen::Vector3d u_mean = Eigen::Vector3d::Zero(), p_mean = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < m; ++i) {
    u[i] = {std::cos(trace.samples[i].q2), std::sin(trace.samples[i].q2), 0.0};
    u_mean += u[i];
    p_mean += trace.samples[i].position;
  }
  u_mean /= static_cast<double>(m);
  p_mean /= static_cast<double>(m);

  Eigen::Matrix3d cross = Eigen::Matrix3d::Zero();
  double uu = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const Eigen::Vector3d uh = u[i] - u_mean;
    cross += uh * (trace.samples[i].position - p_mean).transpose();
    uu += uh.squaredNorm();
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (!(sv[1] > 1e-12 * std::max(sv[0], 1e-300))) {
    degenerate("P1 cross-covariance is rank deficient");
  }
  Eigen::Matrix3d V = svd.matrixV();
  if ((V * svd.matrixU().transpose()).determinant() < 0.0) V.col(2) *= -1.0;

  LinkLengthFit fit;
  fit.rotation = V * svd.matrixU().transpose();
  double num = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    num += (trace.samples[i].position - p_mean).dot(fit.rotation * (u[i] - u_mean));
  }
  fit.L = num / uu;
  fit.center = p_mean - fit.L * fit.rotation * u_mean;
  double rss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    rss += (trace.samples[i].position - fit.center - fit.L * fit.rotation * u[i]).squaredNorm();
  }
  fit.residual_rms = std::sqrt(rss / static_cast<double>(m));
  return fit;
}

PivotFit fit_pivot_point(std::span<const MarkerTrace> traces) { return solve_pivot(traces).fit; }

BalanceResidual marker_balance_residual(std::span<const MarkerTrace> traces) {
  BalanceResidual r;
  for (const auto& t : traces) {
    r.r_cos += t.radius * std::cos(t.phase);
    r.r_sin += t.radius * std::sin(t.phase);
  }
  return r;
}

GeometryFitResult identify_compensator_geometry(const MarkerTrace& trace_p1,
                                                std::span<const MarkerTrace> traces_p0,
                                                SpringConvention convention) {
  const GeometryEstimate e = estimate(trace_p1, traces_p0, convention);

  GeometryFitResult out;
  out.L = e.link.L;
  out.a_x = e.a_x;
  out.a_y = e.a_y;
  out.p0 = e.pivot.fit.p0;
  out.center = e.link.center;
  out.rotation = e.link.rotation;
  out.plane_normal = e.normal;

  const std::size_t m1 = trace_p1.samples.size();
  const double rss_p1 = e.link.residual_rms * e.link.residual_rms * static_cast<double>(m1);
  const std::size_t dof_p1 = 3 * m1 > 7 ? 3 * m1 - 7 : 0;
  std::size_t n_p0 = 0;
  for (const auto& t : traces_p0) n_p0 += t.samples.size();
  out.residual_rms = std::sqrt((rss_p1 + e.pivot.rss) / static_cast<double>(m1 + n_p0));

  // Linearized covariance: sensitivity of (L, a_x, a_y) to every measured
  // coordinate by central differences, scaled by the pooled residual variance.
  const std::size_t dof = dof_p1 + e.pivot.dof;
  if (dof == 0) return out;
  const double sigma2 = (rss_p1 + e.pivot.rss) / static_cast<double>(dof);
  constexpr double h = 1e-7;
  MarkerTrace p1 = trace_p1;
  std::vector<MarkerTrace> p0s(traces_p0.begin(), traces_p0.end());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  auto accumulate = [&](Eigen::Vector3d& coordinate_owner, int axis) {
    const double saved = coordinate_owner[axis];
    coordinate_owner[axis] = saved + h;
    const GeometryEstimate up = estimate(p1, p0s, convention);
    coordinate_owner[axis] = saved - h;
    const GeometryEstimate dn = estimate(p1, p0s, convention);
    coordinate_owner[axis] = saved;
    const Eigen::Vector3d g((up.link.L - dn.link.L) / (2 * h), (up.a_x - dn.a_x) / (2 * h),
                            (up.a_y - dn.a_y) / (2 * h));
    cov += g * g.transpose();
  };
  for (auto& s : p1.samples) {
    for (int axis = 0; axis < 3; ++axis) accumulate(s.position, axis);
  }
  for (auto& t : p0s) {
    for (auto& s : t.samples) {
      for (int axis = 0; axis < 3; ++axis) accumulate(s.position, axis);
    }
  }
  cov *= sigma2;
  out.ci_half_widths = 3.0 * cov.diagonal().cwiseSqrt();
  return out;
}

}  // namespace elastocal
