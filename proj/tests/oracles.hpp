#pragma once

// Independent reference computations used by the unit and acceptance tests.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "evade/mlp.hpp"
#include "evade/rng.hpp"
#include "evade/ssm.hpp"
#include "evade/stats.hpp"
#include "evade/trajectory.hpp"

namespace oracle {

// ---------------------------------------------------------------- geometry

struct Contact {
  double time = 0.0;      // end of the first step with overlap
  double step = 1e-3;
  evade::ssm::ConflictKind face = evade::ssm::ConflictKind::None;
  bool corner = false;    // both extents started overlapping in the same step
};

/// Two equal rectangles moving at constant velocity. They overlap when the
/// centre offsets are below the full length and width. Returns the first
/// overlapping step of a fixed-step sweep.
inline std::optional<Contact> rectangle_sweep(const evade::ssm::PairState& p,
                                              const evade::ssm::VehicleDims& d,
                                              double horizon = 60.0, double dt = 1e-3) {
  const double rel_lon = p.v_lon - p.v0_lon;
  const double rel_lat = p.v_lat - p.v0_lat;
  auto dx = [&](double t) { return p.s0_lon - rel_lon * t; };
  auto dy = [&](double t) { return p.s0_lat - rel_lat * t; };
  auto lon_overlap = [&](double t) { return std::abs(dx(t)) < d.length; };
  auto lat_overlap = [&](double t) { return std::abs(dy(t)) < d.width; };
  const auto steps = static_cast<std::int64_t>(std::llround(horizon / dt));
  for (std::int64_t k = 1; k <= steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    if (!(lon_overlap(t) && lat_overlap(t))) continue;
    const double prev = static_cast<double>(k - 1) * dt;
    Contact c;
    c.time = t;
    c.step = dt;
    if (lat_overlap(prev) && !lon_overlap(prev)) {
      c.face = evade::ssm::ConflictKind::RearEnd;
    } else if (lon_overlap(prev) && !lat_overlap(prev)) {
      c.face = evade::ssm::ConflictKind::Sideswipe;
    } else {
      c.corner = true;
    }
    return c;
  }
  return std::nullopt;
}

inline bool overlapping(const evade::ssm::PairState& p, const evade::ssm::VehicleDims& d) {
  return std::abs(p.s0_lon) < d.length && std::abs(p.s0_lat) < d.width;
}

/// Random non-overlapping pair with a bias towards closing motion.
inline evade::ssm::PairState random_pair(evade::Rng& rng, const evade::ssm::VehicleDims& d) {
  for (;;) {
    evade::ssm::PairState p;
    p.s0_lon = rng.uniform(0.0, 50.0);
    p.s0_lat = rng.uniform(-5.0, 5.0);
    p.v_lon = rng.uniform(10.0, 30.0);
    p.v0_lon = p.v_lon - rng.uniform(-3.0, 8.0);
    p.v_lat = rng.uniform(-1.0, 1.0);
    p.v0_lat = rng.uniform(-1.0, 1.0);
    if (!overlapping(p, d)) return p;
  }
}

// ------------------------------------------------------------- gradients

/// Central-difference gradient of L = sum(weights .* net(x)) with respect to
/// every parameter and input, compared against Mlp::backward. Parameters
/// whose perturbation flips a ReLU are skipped (the function has a kink
/// there). Returns the largest relative error.
struct GradientCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

inline double weighted_output(const evade::nn::Mlp& net, const Eigen::MatrixXd& x,
                              const Eigen::MatrixXd& w) {
  return net.forward(x, nullptr).cwiseProduct(w).sum();
}

inline std::vector<bool> relu_pattern(const evade::nn::Mlp& net, const Eigen::MatrixXd& x) {
  evade::nn::ForwardCache cache;
  net.forward(x, &cache);
  std::vector<bool> out;
  for (std::size_t k = 0; k + 1 < cache.pre.size(); ++k)
    for (Eigen::Index i = 0; i < cache.pre[k].size(); ++i) out.push_back(cache.pre[k](i) > 0.0);
  return out;
}

inline double rel_error(double a, double b) {
  return std::abs(a - b) / std::max(std::abs(a) + std::abs(b), 1e-7);
}

inline GradientCheck check_gradients(evade::nn::Mlp net, const Eigen::MatrixXd& x,
                                     const Eigen::MatrixXd& w, double h = 1e-5) {
  evade::nn::ForwardCache cache;
  net.forward(x, &cache);
  const evade::nn::Gradients g = net.backward(cache, w);
  const std::vector<bool> base = relu_pattern(net, x);
  GradientCheck out;
  auto probe = [&](double& value, double analytic, auto&& pattern_at) {
    const double saved = value;
    value = saved + h;
    const double up = weighted_output(net, x, w);
    const bool same_up = pattern_at() == base;
    value = saved - h;
    const double down = weighted_output(net, x, w);
    const bool same_down = pattern_at() == base;
    value = saved;
    if (!same_up || !same_down) {
      ++out.skipped;
      return;
    }
    const double numeric = (up - down) / (2.0 * h);
    out.max_rel_error = std::max(out.max_rel_error, rel_error(analytic, numeric));
    ++out.checked;
  };
  for (std::size_t k = 0; k < net.layers().size(); ++k) {
    auto& layer = net.layers()[k];
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j)
        probe(layer.weight(i, j), g.layers[k].weight(i, j), [&] { return relu_pattern(net, x); });
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i)
      probe(layer.bias(i), g.layers[k].bias(i), [&] { return relu_pattern(net, x); });
  }
  Eigen::MatrixXd xi = x;
  for (Eigen::Index i = 0; i < xi.rows(); ++i) {
    for (Eigen::Index j = 0; j < xi.cols(); ++j) {
      const double saved = xi(i, j);
      xi(i, j) = saved + h;
      const double up = weighted_output(net, xi, w);
      const bool same_up = relu_pattern(net, xi) == base;
      xi(i, j) = saved - h;
      const double down = weighted_output(net, xi, w);
      const bool same_down = relu_pattern(net, xi) == base;
      xi(i, j) = saved;
      if (!same_up || !same_down) {
        ++out.skipped;
        continue;
      }
      out.max_rel_error = std::max(out.max_rel_error, rel_error(g.input(i, j), (up - down) / (2.0 * h)));
      ++out.checked;
    }
  }
  return out;
}

// ------------------------------------------------------------ trajectories

/// A straight single-lane trip: the ego holds its lane, the leader is dead
/// ahead and the range follows `ranges`. Ego and leader speeds are constant
/// per record so ttc_2d = range / closing.
inline std::vector<evade::traj::DerivedRecord> following_trace(
    const std::vector<double>& ttcs, double closing = 2.0, std::int64_t t0 = 1000) {
  std::vector<evade::traj::DerivedRecord> out;
  const evade::ssm::VehicleDims dims;
  for (std::size_t i = 0; i < ttcs.size(); ++i) {
    evade::traj::DerivedRecord d;
    d.raw.device = 1;
    d.raw.trip = 1;
    d.raw.time_cs = t0 + 10 * static_cast<std::int64_t>(i);
    d.raw.obstacle_id = 7;
    d.raw.gps_speed = 20.0;
    d.raw.range_rate = -closing;
    d.raw.range_lon = ttcs[i] * closing;
    d.raw.lane_dist_left = -1.8;
    d.raw.lane_dist_right = 1.8;
    d.v0_lon = d.raw.gps_speed + d.raw.range_rate;
    d.s0_lon = d.raw.range_lon + dims.length;
    d.ttc = evade::ssm::ttc_2d(d.pair_state(), dims);
    out.push_back(d);
  }
  return out;
}


// ------------------------------------------------------------------ sweeps

struct SweepFixture {
  std::vector<evade::stats::RiskPoint> points;
  std::vector<evade::stats::Site> sites;
};

/// Rear-end risk points on 30 segments. With ttc < 3.3 as the risk test the
/// per-segment risk rate is exactly (2 * crashes + 5) / 400, an affine image
/// of the crash rate. Points at 3.15 s enter one step earlier and points at
/// 3.35 s and beyond one step later, both in random numbers, so every other
/// threshold breaks the affine relation.
inline SweepFixture affine_sweep_fixture(std::uint64_t seed = 1) {
  evade::Rng rng(seed);
  SweepFixture f;
  auto point = [&](const std::string& seg, std::optional<double> ttc) {
    evade::stats::RiskPoint p;
    p.segment_id = seg;
    if (ttc) {
      p.ttc.lon = ttc;
      p.ttc.combined = ttc;
      p.ttc.kind = evade::ssm::ConflictKind::RearEnd;
    }
    f.points.push_back(p);
  };
  for (int i = 0; i < 30; ++i) {
    const std::string seg = "S" + std::to_string(i);
    const auto crashes = static_cast<std::int64_t>(rng.below(51));
    f.sites.push_back({seg, 10000.0, crashes, static_cast<std::int64_t>(rng.below(20))});
    const auto early = static_cast<int>(rng.below(6));
    const int at = static_cast<int>(2 * crashes + 5) - early;
    const auto late = static_cast<int>(rng.below(40));
    int used = 0;
    for (int k = 0; k < early; ++k, ++used) point(seg, 3.15);
    for (int k = 0; k < at; ++k, ++used) point(seg, 3.25);
    for (int k = 0; k < late; ++k, ++used) point(seg, rng.uniform(3.35, 9.95));
    for (; used < 400; ++used) point(seg, std::nullopt);
  }
  return f;
}

}  // namespace oracle
