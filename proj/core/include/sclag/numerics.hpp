#pragma once

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace sclag {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Limit of g(R) as R -> infinity from samples at geometrically spaced radii,
/// assuming g(R) = L + c R^{-p} + ...  Also reports an estimated convergence
/// rate and the relative stability of the extrapolation.
struct RayLimit {
  double value = 0;
  double rate = 0;        // fitted decay exponent p (0 when not identifiable)
  double stability = 0;   // relative spread of successive estimates
  bool converged = false;
};

RayLimit ray_limit(const std::function<double(double)>& g,
                   std::span<const double> radii, double rel_tol = 1e-6);

/// Default boundary-extrapolation radii {1e3, 1e4, 1e5}.
std::vector<double> default_radii();

/// Least-squares slope of log|y| vs log x (decay/growth exponent fit).
struct SlopeFit {
  double slope = 0;
  double intercept = 0;
  double residual = 0;  // rms residual in log space
  int used = 0;         // points with |y| above floor
};
SlopeFit fit_log_slope(std::span<const double> x, std::span<const double> y,
                       double floor = 1e-300);

/// Numerical rank with the threshold sigma > tol * sigma_max.
int svd_rank(const Mat& m, double tol = 1e-8);

/// Signature (#pos - #neg) and rank of a symmetric matrix, eigenvalues
/// below tol * max|lambda| counting as zero.
struct Signature {
  int positive = 0, negative = 0, zero = 0;
  int rank() const { return positive + negative; }
  int sgn() const { return positive - negative; }
};
Signature symmetric_signature(const Mat& m, double tol = 1e-8);

/// Central finite-difference gradient/Jacobian with one Richardson step.
Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& p, double h = 1e-5);
Mat fd_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& p, double h = 1e-5);

/// Damped Newton for F(u) = 0 with least-squares (pseudoinverse) steps.
struct NewtonResult {
  Vec point;
  double residual = 0;
  int iterations = 0;
  bool converged = false;
};
NewtonResult newton_solve(const std::function<Vec(const Vec&)>& F,
                          const std::function<Mat(const Vec&)>& J, Vec start,
                          double tol = 1e-12, int max_iter = 50);

/// Quasi-uniform points on S^{n-1}; n == 1 gives {+1, -1}.
std::vector<Vec> sphere_directions(int n, int count, unsigned seed = 12345);

/// Orthonormal basis of the tangent space of S^{n-1} at unit vector w.
std::vector<Vec> tangent_basis(const Vec& w);

/// theta(u) = normalize(w0 + sum u_a tau_a): a chart of S^{n-1} around w0.
Vec sphere_chart(const Vec& w0, const std::vector<Vec>& tau, const Vec& u);

/// Compensated pairwise summation in a fixed order.
double pairwise_sum(std::span<const double> v);

/// Deterministic parallel map-reduce: applies fn(i) for i in [0, n) using
/// `threads` workers and sums the results in index order.
double parallel_sum(int n, const std::function<double(int)>& fn, int threads);
void parallel_for(int n, const std::function<void(int)>& fn, int threads);

/// Gauss-Legendre nodes/weights on [-1, 1].
struct GaussRule {
  std::vector<double> nodes, weights;
};
const GaussRule& gauss_rule(int n);  // n in {4, 8, 16, 32}

/// Gauss-Kronrod 7/15 pair on [-1, 1]: 15 nodes, embedded 7-point Gauss
/// weights (zero on the Kronrod-only nodes).
struct GaussKronrod {
  std::array<double, 15> nodes, wk, wg;
};
const GaussKronrod& gk15();

/// Symmetric Hausdorff distance between two point clouds.
double hausdorff(const std::vector<Vec>& a, const std::vector<Vec>& b);

/// Number of hardware threads honoring the SCLAG_THREADS environment variable.
int default_threads();

}  // namespace sclag
