#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gtp/error.hpp"

namespace gtp {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double norm() const { return std::hypot(x, y); }
};

inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

/// 3x3 projective map from image (pixel) to world (meter) coordinates.
class Homography {
 public:
  Homography() { m_ = {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}}; }
  explicit Homography(const std::array<std::array<double, 3>, 3>& m) : m_(m) {}

  static Homography identity() { return Homography(); }

  static Homography diag(double a, double b, double c) {
    Homography h;
    h.m_ = {{{a, 0, 0}, {0, b, 0}, {0, 0, c}}};
    return h;
  }

  /// Plain-text format: 3 lines of 3 whitespace-separated numbers.
  static Homography from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open homography file: " + path);
    std::array<std::array<double, 3>, 3> m;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        if (!(f >> m[r][c])) throw DataError("homography file needs 9 numbers: " + path);
    return Homography(m);
  }

  void to_file(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write homography file: " + path);
    f.precision(17);
    for (int r = 0; r < 3; ++r) f << m_[r][0] << " " << m_[r][1] << " " << m_[r][2] << "\n";
  }

  double at(int r, int c) const { return m_[r][c]; }
  double& at(int r, int c) { return m_[r][c]; }

  double det() const {
    return m_[0][0] * (m_[1][1] * m_[2][2] - m_[1][2] * m_[2][1]) -
           m_[0][1] * (m_[1][0] * m_[2][2] - m_[1][2] * m_[2][0]) +
           m_[0][2] * (m_[1][0] * m_[2][1] - m_[1][1] * m_[2][0]);
  }

  bool invertible() const { return std::fabs(det()) > 1e-12; }

  Homography inverse() const {
    const double d = det();
    if (std::fabs(d) <= 1e-12) throw NumericError("homography is not invertible");
    const auto& a = m_;
    std::array<std::array<double, 3>, 3> inv;
    inv[0][0] = (a[1][1] * a[2][2] - a[1][2] * a[2][1]) / d;
    inv[0][1] = (a[0][2] * a[2][1] - a[0][1] * a[2][2]) / d;
    inv[0][2] = (a[0][1] * a[1][2] - a[0][2] * a[1][1]) / d;
    inv[1][0] = (a[1][2] * a[2][0] - a[1][0] * a[2][2]) / d;
    inv[1][1] = (a[0][0] * a[2][2] - a[0][2] * a[2][0]) / d;
    inv[1][2] = (a[0][2] * a[1][0] - a[0][0] * a[1][2]) / d;
    inv[2][0] = (a[1][0] * a[2][1] - a[1][1] * a[2][0]) / d;
    inv[2][1] = (a[0][1] * a[2][0] - a[0][0] * a[2][1]) / d;
    inv[2][2] = (a[0][0] * a[1][1] - a[0][1] * a[1][0]) / d;
    return Homography(inv);
  }

  /// Apply with perspective division.
  Vec2 apply(Vec2 p) const {
    const double X = m_[0][0] * p.x + m_[0][1] * p.y + m_[0][2];
    const double Y = m_[1][0] * p.x + m_[1][1] * p.y + m_[1][2];
    const double W = m_[2][0] * p.x + m_[2][1] * p.y + m_[2][2];
    if (std::fabs(W) < 1e-12) throw NumericError("degenerate projection (w ~ 0)");
    return {X / W, Y / W};
  }

 private:
  std::array<std::array<double, 3>, 3> m_;
};

inline Vec2 image_to_world(const Homography& h, Vec2 pixel) { return h.apply(pixel); }
inline Vec2 world_to_image(const Homography& h, Vec2 world) { return h.inverse().apply(world); }

/// Convex quadrilateral in world coordinates. Destination regions keep their
/// four corners rather than an axis-aligned box so that rigid motions of a
/// scene stay exactly representable.
struct Quad {
  std::array<Vec2, 4> corners;

  static Quad from_box(double x0, double y0, double x1, double y1) {
    return Quad{{Vec2{x0, y0}, Vec2{x1, y0}, Vec2{x1, y1}, Vec2{x0, y1}}};
  }

  Vec2 center() const {
    Vec2 s;
    for (Vec2 c : corners) s = s + c;
    return s * 0.25;
  }

  bool contains(Vec2 p) const {
    // Same-side test, tolerant of either winding; boundary counts as inside.
    int pos = 0, neg = 0;
    for (int i = 0; i < 4; ++i) {
      const Vec2 a = corners[i];
      const Vec2 b = corners[(i + 1) % 4];
      const double cr = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
      if (cr > 1e-12) ++pos;
      if (cr < -1e-12) ++neg;
    }
    return pos == 0 || neg == 0;
  }

  double distance_to(Vec2 p) const {
    if (contains(p)) return 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 4; ++i) {
      best = std::min(best, segment_distance(corners[i], corners[(i + 1) % 4], p));
    }
    return best;
  }

  static double segment_distance(Vec2 a, Vec2 b, Vec2 p) {
    const Vec2 ab = b - a;
    const double len2 = ab.x * ab.x + ab.y * ab.y;
    double t = len2 > 0.0 ? ((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return distance(p, a + ab * t);
  }
};

/// Rigid agent-centric frame: rooted at the last observed position, rotated
/// so the overall past direction q_tobs -> q_1 maps onto (-1, 0).
class AgentFrame {
 public:
  AgentFrame() : AgentFrame({0, 0}, 0.0) {}
  AgentFrame(Vec2 root, double rotation)
      : root_(root), rotation_(rotation), c_(std::cos(rotation)), s_(std::sin(rotation)) {}

  static AgentFrame identity() { return AgentFrame(); }

  Vec2 root() const { return root_; }
  double rotation() const { return rotation_; }

  Vec2 to_frame(Vec2 world) const {
    const Vec2 d = world - root_;
    return {c_ * d.x - s_ * d.y, s_ * d.x + c_ * d.y};
  }

  Vec2 from_frame(Vec2 local) const {
    return Vec2{c_ * local.x + s_ * local.y, -s_ * local.x + c_ * local.y} + root_;
  }

 private:
  Vec2 root_;
  double rotation_;
  double c_, s_;
};

/// Builds the frame from an observed window. If q_1 coincides with the root,
/// the most recent pair of distinct points supplies the direction; a fully
/// stationary window gets rotation 0.
inline AgentFrame build_agent_frame(std::span<const Vec2> X, double eps = 1e-6) {
  if (X.size() < 2) throw ContractError("agent frame needs at least 2 observed points");
  const Vec2 root = X.back();
  Vec2 dir = X.front() - root;
  if (dir.norm() < eps) {
    bool found = false;
    for (int j = static_cast<int>(X.size()) - 1; j >= 1 && !found; --j) {
      for (int i = j - 1; i >= 0; --i) {
        const Vec2 d = X[i] - X[j];
        if (d.norm() >= eps) {
          dir = d;
          found = true;
          break;
        }
      }
    }
    if (!found) return AgentFrame(root, 0.0);
  }
  const double rotation = M_PI - std::atan2(dir.y, dir.x);
  return AgentFrame(root, rotation);
}

/// Agent-frame destination attributes: box extent and the angular interval
/// the region subtends from the agent.
struct DestinationFeatureVec {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
  double theta_min = 0, theta_max = 0;

  std::array<double, 6> as_array() const {
    return {x_min, y_min, x_max, y_max, theta_min, theta_max};
  }
};

namespace detail {

/// Smallest circular interval covering the given angles. Returns
/// {theta_min, theta_max} with theta_min in (-pi, pi] and
/// theta_max = theta_min + width (width <= 2*pi). Ties prefer the interval
/// containing angle 0, then the lowest starting angle.
inline std::pair<double, double> covering_angle_interval(std::vector<double> angles) {
  std::sort(angles.begin(), angles.end());
  const size_t n = angles.size();
  double best_gap = -1.0;
  size_t best_i = 0;
  bool best_contains_zero = false;
  for (size_t i = 0; i < n; ++i) {
    const double next = (i + 1 < n) ? angles[i + 1] : angles[0] + 2.0 * M_PI;
    const double gap = next - angles[i];
    const double lo = (i + 1 < n) ? angles[i + 1] : angles[0];
    // Candidate interval after this gap is [lo, lo + (2*pi - gap)].
    const double width = 2.0 * M_PI - gap;
    const double unwrapped_hi = lo + width;
    const bool contains_zero =
        (lo <= 0.0 && 0.0 <= unwrapped_hi) || (lo <= 2.0 * M_PI && 2.0 * M_PI <= unwrapped_hi);
    if (gap > best_gap + 1e-15 ||
        (std::fabs(gap - best_gap) <= 1e-15 &&
         ((contains_zero && !best_contains_zero) ||
          (contains_zero == best_contains_zero && lo < angles[(best_i + 1) % n])))) {
      best_gap = gap;
      best_i = i;
      best_contains_zero = contains_zero;
    }
  }
  const double lo = angles[(best_i + 1) % n];
  const double width = 2.0 * M_PI - best_gap;
  return {lo, lo + width};
}

}  // namespace detail

/// Transforms the region's four corners into the agent frame and reduces
/// them to (x_min, y_min, x_max, y_max, theta_min, theta_max). A region that
/// contains the frame root subtends the full circle: (-pi, pi].
inline DestinationFeatureVec destination_features(const AgentFrame& f, const Quad& region,
                                                  bool* full_circle = nullptr) {
  DestinationFeatureVec d;
  std::array<Vec2, 4> local;
  for (int i = 0; i < 4; ++i) local[i] = f.to_frame(region.corners[i]);
  d.x_min = d.x_max = local[0].x;
  d.y_min = d.y_max = local[0].y;
  for (int i = 1; i < 4; ++i) {
    d.x_min = std::min(d.x_min, local[i].x);
    d.x_max = std::max(d.x_max, local[i].x);
    d.y_min = std::min(d.y_min, local[i].y);
    d.y_max = std::max(d.y_max, local[i].y);
  }
  if (region.contains(f.root())) {
    d.theta_min = -M_PI;
    d.theta_max = M_PI;
    if (full_circle) *full_circle = true;
    return d;
  }
  if (full_circle) *full_circle = false;
  std::vector<double> angles;
  angles.reserve(4);
  for (const Vec2& p : local) angles.push_back(std::atan2(p.y, p.x));
  auto [lo, hi] = detail::covering_angle_interval(std::move(angles));
  d.theta_min = lo;
  d.theta_max = hi;
  return d;
}

}  // namespace gtp
