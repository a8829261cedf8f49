#include "eki/tomo.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

namespace eki {

Vector PhantomImage::flatten() const {
  Vector out(static_cast<Index>(d) * d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) out[static_cast<Index>(i) * d + j] = pixels(i, j);
  return out;
}

namespace {

struct Ellipse {
  double intensity, a, b, x0, y0, phi_deg;
};

// Modified Shepp-Logan table (intensities sum to values in [0, 1]).
constexpr Ellipse kSheppLogan[] = {
    {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},
    {-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0},
    {-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0},
    {-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0},
    {0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0},
    {0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0},
    {0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0},
    {0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0},
    {0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0},
    {0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0},
};

double phantom_value(double x, double y) {
  double v = 0.0;
  for (const Ellipse& e : kSheppLogan) {
    const double phi = e.phi_deg * M_PI / 180.0;
    const double dx = x - e.x0;
    const double dy = y - e.y0;
    const double xr = dx * std::cos(phi) + dy * std::sin(phi);
    const double yr = -dx * std::sin(phi) + dy * std::cos(phi);
    if ((xr * xr) / (e.a * e.a) + (yr * yr) / (e.b * e.b) <= 1.0)
      v += e.intensity;
  }
  // Exact cancellations (1.0 - 0.8 - 0.2) land a few ulps below zero.
  return std::max(v, 0.0);
}

}  // namespace

PhantomImage shepp_logan(int d) {
  if (d < 8) throw std::invalid_argument("shepp_logan: d must be >= 8");
  PhantomImage img;
  img.d = d;
  img.pixels.resize(d, d);
  for (int i = 0; i < d; ++i) {
    const double y = 1.0 - (2.0 * i + 1.0) / d;  // row 0 at the top
    for (int j = 0; j < d; ++j) {
      const double x = -1.0 + (2.0 * j + 1.0) / d;
      img.pixels(i, j) = phantom_value(x, y);
    }
  }
  return img;
}

RadonGeometry RadonGeometry::standard(int d) {
  RadonGeometry g;
  g.d = d;
  g.n_angles = d;
  g.n_detectors = static_cast<int>(std::lround(1.42 * d));
  return g;
}

namespace {

constexpr double kSqrt2 = 1.4142135623730951;

struct RadonPlan {
  int d = 0;
  int n_angles = 0;
  int n_detectors = 0;
  int samples_per_ray = 0;
  double step = 0.0;
  std::vector<double> cos_t, sin_t;
};

RadonPlan make_plan(const RadonGeometry& geom) {
  RadonPlan plan;
  plan.d = geom.d;
  plan.n_angles = geom.n_angles;
  plan.n_detectors = geom.n_detectors;
  plan.samples_per_ray = 2 * geom.d;
  plan.step = 2.0 * kSqrt2 / plan.samples_per_ray;
  plan.cos_t.resize(geom.n_angles);
  plan.sin_t.resize(geom.n_angles);
  for (int a = 0; a < geom.n_angles; ++a) {
    const double theta = M_PI * a / geom.n_angles;
    plan.cos_t[a] = std::cos(theta);
    plan.sin_t[a] = std::sin(theta);
  }
  return plan;
}

// Enumerates the bilinear interpolation weights of every sample point on one
// ray. Forward and adjoint share this enumeration, so the adjoint is the
// exact transpose of the forward by construction.
template <typename Visit>
void for_each_ray_weight(const RadonPlan& plan, int angle, int det,
                         Visit&& visit) {
  const int d = plan.d;
  const double ct = plan.cos_t[angle];
  const double st = plan.sin_t[angle];
  const double t =
      ((det + 0.5) / plan.n_detectors) * 2.0 * kSqrt2 - kSqrt2;  // bin center
  for (int q = 0; q < plan.samples_per_ray; ++q) {
    const double s = -kSqrt2 + (q + 0.5) * plan.step;
    // Ray through t * (cos, sin) with direction (-sin, cos).
    const double x = t * ct - s * st;
    const double y = t * st + s * ct;
    // Continuous pixel coordinates; pixel centers at half-integers.
    const double col = (x + 1.0) * d / 2.0 - 0.5;
    const double row = (1.0 - y) * d / 2.0 - 0.5;
    const int c0 = static_cast<int>(std::floor(col));
    const int r0 = static_cast<int>(std::floor(row));
    const double fc = col - c0;
    const double fr = row - r0;
    const double w[4] = {(1.0 - fr) * (1.0 - fc), (1.0 - fr) * fc,
                         fr * (1.0 - fc), fr * fc};
    const int rr[4] = {r0, r0, r0 + 1, r0 + 1};
    const int cc[4] = {c0, c0 + 1, c0, c0 + 1};
    for (int m = 0; m < 4; ++m) {
      if (rr[m] < 0 || rr[m] >= d || cc[m] < 0 || cc[m] >= d) continue;
      visit(static_cast<Index>(rr[m]) * d + cc[m], w[m] * plan.step);
    }
  }
}

}  // namespace

LinearMap radon_operator(const RadonGeometry& geom) {
  if (geom.d < 2 || geom.n_angles < 1 || geom.n_detectors < 1)
    throw std::invalid_argument("radon_operator: invalid geometry");
  auto plan = std::make_shared<const RadonPlan>(make_plan(geom));

  LinearMap op;
  op.domain_dim = geom.domain_dim();
  op.range_dim = geom.range_dim();
  op.forward = [plan](const Vector& img) -> Vector {
    Vector sino = Vector::Zero(
        static_cast<Index>(plan->n_angles) * plan->n_detectors);
    for (int a = 0; a < plan->n_angles; ++a) {
      for (int t = 0; t < plan->n_detectors; ++t) {
        double acc = 0.0;
        for_each_ray_weight(*plan, a, t, [&](Index pix, double w) {
          acc += w * img[pix];
        });
        sino[static_cast<Index>(a) * plan->n_detectors + t] = acc;
      }
    }
    return sino;
  };
  op.adjoint = [plan](const Vector& sino) -> Vector {
    Vector img = Vector::Zero(static_cast<Index>(plan->d) * plan->d);
    for (int a = 0; a < plan->n_angles; ++a) {
      for (int t = 0; t < plan->n_detectors; ++t) {
        const double v = sino[static_cast<Index>(a) * plan->n_detectors + t];
        if (v == 0.0) continue;
        for_each_ray_weight(*plan, a, t, [&](Index pix, double w) {
          img[pix] += w * v;
        });
      }
    }
    return img;
  };
  return op;
}

Matrix ou_matrix(int d, double h) {
  if (d < 1) throw std::invalid_argument("ou_matrix: d must be >= 1");
  if (!(h > 0.0)) throw std::invalid_argument("ou_matrix: h must be > 0");
  const Index n = static_cast<Index>(d) * d;
  const double denom = d > 1 ? static_cast<double>(d - 1) : 1.0;
  Matrix q(n, 2);
  for (Index i = 0; i < n; ++i) {
    q(i, 0) = static_cast<double>(i % d) / denom;
    q(i, 1) = static_cast<double>(i / d) / denom;
  }
  Matrix c0(n, n);
  const double inv_h2 = 1.0 / (h * h);
  for (Index i = 0; i < n; ++i) {
    c0(i, i) = 1.0;
    for (Index j = i + 1; j < n; ++j) {
      const double dx = q(i, 0) - q(j, 0);
      const double dy = q(i, 1) - q(j, 1);
      const double v = std::exp(-std::sqrt(dx * dx + dy * dy) * inv_h2);
      c0(i, j) = v;
      c0(j, i) = v;
    }
  }
  return c0;
}

SpdOperator ou_covariance(int d, double h) {
  return spd_dense(ou_matrix(d, h));
}

NoisyData make_noisy_data(const Vector& y, double snr, GaussianSampler& rng) {
  if (y.norm() == 0.0)
    throw std::invalid_argument("make_noisy_data: y must be nonzero");
  if (!(snr > 0.0))
    throw std::invalid_argument("make_noisy_data: snr must be > 0");

  Vector xi_s = rng.normal_vector(y.size());
  while (xi_s.norm() == 0.0) xi_s = rng.normal_vector(y.size());

  const Vector xi = (y.norm() / (snr * xi_s.norm())) * xi_s;
  const double scale = xi.norm();  // equals |y| / snr

  NoisyData out;
  out.scale = scale;
  out.y_hat = (y + xi) / scale;
  out.delta = (out.y_hat - y / scale).norm();  // 1 up to rounding
  return out;
}

ErrorMetrics metrics(const Vector& x, const Vector& x_star,
                     const Vector* x_tik) {
  const double star_norm = x_star.norm();
  if (star_norm == 0.0)
    throw std::invalid_argument("metrics: x_star must be nonzero");
  ErrorMetrics out;
  out.e_rel = (x - x_star).norm() / star_norm;
  if (x_tik) out.e_app = (x - *x_tik).norm() / star_norm;
  return out;
}

}  // namespace eki
