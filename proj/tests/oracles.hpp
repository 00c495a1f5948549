#pragma once

// Independent reference implementations used by the unit and acceptance tests.
// Written out by hand, no Eigen, no library code.

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

namespace oracle {

// 2-state Kalman filter with scalar measurement, every product expanded.
struct Kf {
  double a11, a12, a21, a22;
  double c1, c2;
  double q11, q12, q21, q22;
  double r;
};

struct KfState {
  double x1, x2;
  double p11, p12, p21, p22;
};

inline KfState kf_step(const KfState& s, double z, const Kf& k) {
  // predict
  const double xp1 = k.a11 * s.x1 + k.a12 * s.x2;
  const double xp2 = k.a21 * s.x1 + k.a22 * s.x2;
  // A P
  const double ap11 = k.a11 * s.p11 + k.a12 * s.p21;
  const double ap12 = k.a11 * s.p12 + k.a12 * s.p22;
  const double ap21 = k.a21 * s.p11 + k.a22 * s.p21;
  const double ap22 = k.a21 * s.p12 + k.a22 * s.p22;
  // (A P) A^T + Q
  const double m11 = ap11 * k.a11 + ap12 * k.a12 + k.q11;
  const double m12 = ap11 * k.a21 + ap12 * k.a22 + k.q12;
  const double m21 = ap21 * k.a11 + ap22 * k.a12 + k.q21;
  const double m22 = ap21 * k.a21 + ap22 * k.a22 + k.q22;
  // gain
  const double pc1 = m11 * k.c1 + m12 * k.c2;
  const double pc2 = m21 * k.c1 + m22 * k.c2;
  const double sden = k.c1 * pc1 + k.c2 * pc2 + k.r;
  const double g1 = pc1 / sden;
  const double g2 = pc2 / sden;
  const double innov = z - (k.c1 * xp1 + k.c2 * xp2);
  KfState o;
  o.x1 = xp1 + g1 * innov;
  o.x2 = xp2 + g2 * innov;
  // (I - g c) M
  o.p11 = (1.0 - g1 * k.c1) * m11 - g1 * k.c2 * m21;
  o.p12 = (1.0 - g1 * k.c1) * m12 - g1 * k.c2 * m22;
  o.p21 = -g2 * k.c1 * m11 + (1.0 - g2 * k.c2) * m21;
  o.p22 = -g2 * k.c1 * m12 + (1.0 - g2 * k.c2) * m22;
  return o;
}

// Fine-step pendulum with Coulomb friction, stiction and a hard stop at phi = 0.
// Plain explicit stepping, independent of the library integrator.
struct Pendulum {
  double inertia;      // kg m^2
  double mgr;          // N m
  double mu_s, mu_k;   // friction coefficients
  double radius;       // m
  double stiffness;    // N/mm
  double thickness;    // mm
  double pad;          // mm per finger
  double rate_ref;     // deg/s
  double omega_eps;    // deg/s
  bool clamp = true;
};

// Grip width over time: w0 until t_apply, then slews toward w1 at `slew` mm/s.
struct WidthSchedule {
  double w0, w1, t_apply, slew;
  double at(double t) const {
    if (t < t_apply) return w0;
    const double moved = slew * (t - t_apply);
    if (w1 >= w0) return std::min(w1, w0 + moved);
    return std::max(w1, w0 - moved);
  }
};

struct PendulumResult {
  double alpha_deg, omega_deg_s;
};

inline PendulumResult integrate_pendulum(const Pendulum& p, const WidthSchedule& ws, double phi0_deg,
                                         double duration, double h) {
  const double d2r = std::numbers::pi / 180.0;
  double phi = phi0_deg * d2r;
  double w = 0.0;  // -dphi/dt, rad/s
  bool rest = true;
  const long n = std::lround(duration / h);
  for (long i = 0; i < n; ++i) {
    const double t = i * h;
    const double gap = ws.at(t) - 2.0 * p.pad;
    const double normal = p.stiffness * std::max(0.0, p.thickness - gap);
    const double cap_s = 2.0 * p.mu_s * normal * p.radius;
    const double cap_k = 2.0 * p.mu_k * normal * p.radius;
    const double tg = p.mgr * std::sin(phi);
    if (rest) {
      if (std::abs(tg) <= cap_s) continue;
      rest = false;
      w = 0.0;
    }
    const double fric = cap_k * (1.0 + std::abs(w) / d2r / p.rate_ref);
    double wn;
    if (w == 0.0) {
      const double net = std::abs(tg) - fric;
      wn = net > 0.0 ? std::copysign(net * h / p.inertia, tg) : 0.0;
    } else {
      wn = w + h * tg / p.inertia - std::copysign(h * fric / p.inertia, w);
      if (wn * w < 0.0 && std::abs(tg) <= fric) wn = 0.0;
    }
    w = wn;
    phi -= h * w;
    if (p.clamp && phi < 0.0) {
      phi = 0.0;
      w = 0.0;
      rest = true;
      continue;
    }
    if (std::abs(w) / d2r < p.omega_eps && std::abs(p.mgr * std::sin(phi)) <= cap_s) {
      w = 0.0;
      rest = true;
    }
  }
  return {phi0_deg - phi / d2r, w / d2r};
}

// Direct weighted sum with the truncated window renormalised at the edges.
inline std::vector<double> triangular(const std::vector<double>& x, int window) {
  const int c = (window + 1) / 2;
  const int half = window / 2;
  const int n = static_cast<int>(x.size());
  std::vector<double> out(x.size());
  for (int i = 0; i < n; ++i) {
    double num = 0.0, den = 0.0;
    for (int k = -half; k <= half; ++k) {
      const int j = i + k;
      if (j < 0 || j >= n) continue;
      const double wk = c - std::abs(k);
      num += wk * x[static_cast<std::size_t>(j)];
      den += wk;
    }
    out[static_cast<std::size_t>(i)] = num / den;
  }
  return out;
}

}  // namespace oracle
