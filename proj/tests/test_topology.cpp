#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "asvplan/errors.hpp"
#include "asvplan/rng.hpp"
#include "asvplan/topology.hpp"

using namespace asvplan;
using namespace asvplan::topology;

namespace {

VesselState make_state(double x, double y, double heading_deg, double speed,
                       double t = 0.0) {
  VesselState s;
  s.t = t;
  s.pos = {x, y};
  s.heading_deg = heading_deg;
  s.speed_mps = speed;
  return s;
}

// Constant-velocity propagation oracle: dense sampling, no reuse of the
// track-pair machinery beyond plain state stepping.
TrackPair propagate_cv(const VesselState& ego0, const VesselState& obs0,
                       double dt, double duration) {
  TrackPair pair;
  pair.dt = dt;
  const Vec2 ve = ego0.velocity();
  const Vec2 vo = obs0.velocity();
  const int steps = static_cast<int>(std::round(duration / dt));
  for (int k = 0; k <= steps; ++k) {
    VesselState e = ego0;
    VesselState o = obs0;
    e.t = ego0.t + k * dt;
    o.t = obs0.t + k * dt;
    e.pos = ego0.pos + ve * (k * dt);
    o.pos = obs0.pos + vo * (k * dt);
    pair.ego.push_back(e);
    pair.obs.push_back(o);
  }
  return pair;
}

// Fig-3 state pair used across multiple checks.
const VesselState kFig3Ego = make_state(-30.0, 0.0, 90.0, 2.5);
const VesselState kFig3Obs = make_state(0.0, 20.0, 225.0, 3.0);

// Brute-force closest approach by dense scanning.
void brute_force_cpa(const VesselState& ego, const VesselState& obs, double dt,
                     double horizon, double* best_t, double* best_d) {
  const Vec2 ve = ego.velocity();
  const Vec2 vo = obs.velocity();
  *best_t = 0.0;
  *best_d = norm(obs.pos - ego.pos);
  for (double t = 0.0; t <= horizon; t += dt) {
    const double d = norm((obs.pos + vo * t) - (ego.pos + ve * t));
    if (d < *best_d) {
      *best_d = d;
      *best_t = t;
    }
  }
}

// Independent side oracle for CV encounters: the LOS at closest approach is
// perpendicular to the relative velocity, and its orientation relative to
// v_rel fixes the geometric passing side.
PassingSide side_at_cpa_oracle(const VesselState& ego, const VesselState& obs) {
  const Vec2 lambda0 = obs.pos - ego.pos;
  const Vec2 v_rel = obs.velocity() - ego.velocity();
  const double v2 = norm_sq(v_rel);
  if (v2 == 0.0) return PassingSide::kUndetermined;
  const double tcpa = -dot(lambda0, v_rel) / v2;
  const Vec2 lambda_cpa = lambda0 + v_rel * tcpa;
  const double c = cross(lambda_cpa, v_rel);
  if (c > 0.0) return PassingSide::kLeft;
  if (c < 0.0) return PassingSide::kRight;
  return PassingSide::kUndetermined;
}

}  // namespace

TEST_CASE("los_vector basic and Fig-3 poses") {
  CHECK(los_vector(make_state(0, 0, 0, 0), make_state(10, 0, 0, 0)).x == 10.0);
  CHECK(los_vector(make_state(0, 0, 0, 0), make_state(10, 0, 0, 0)).y == 0.0);

  const Vec2 fig3 = los_vector(kFig3Ego, kFig3Obs);
  CHECK(fig3.x == doctest::Approx(30.0));
  CHECK(fig3.y == doctest::Approx(20.0));

  const Vec2 zero = los_vector(kFig3Ego, kFig3Ego);
  CHECK(zero.x == 0.0);
  CHECK(zero.y == 0.0);
}

TEST_CASE("winding_increment quarter turns and branch") {
  CHECK(winding_increment({1, 0}, {1, 0}) == doctest::Approx(0.0));
  CHECK(winding_increment({1, 0}, {0, 1}) == doctest::Approx(kPi / 2));
  CHECK(winding_increment({1, 0}, {0, -1}) == doctest::Approx(-kPi / 2));

  // Near-antipodal from below: approaches the -pi side of the branch.
  for (double eps : {1e-3, 1e-6, 1e-9}) {
    const double inc = winding_increment({1, 0}, {-1, -eps});
    CHECK(inc < 0.0);
    CHECK(inc == doctest::Approx(-(kPi - eps)).epsilon(1e-6));
  }
  // Exact antipodal lands on +pi per the (-pi, pi] contract.
  CHECK(winding_increment({1, 0}, {-1, 0}) == doctest::Approx(kPi));

  CHECK_THROWS_AS(winding_increment({0, 0}, {1, 0}), ZeroLosVector);
  CHECK_THROWS_AS(winding_increment({1, 0}, {0, 0}), ZeroLosVector);
}

TEST_CASE("winding_increment antisymmetry") {
  Rng rng(42);
  for (int i = 0; i < 500; ++i) {
    const Vec2 a{rng.uniform(-10, 10), rng.uniform(-10, 10)};
    const Vec2 b{rng.uniform(-10, 10), rng.uniform(-10, 10)};
    if (norm(a) < 1e-6 || norm(b) < 1e-6) continue;
    const double ab = winding_increment(a, b);
    if (std::abs(ab) < kPi - 1e-12) {
      CHECK(winding_increment(b, a) == doctest::Approx(-ab).epsilon(1e-12));
    }
  }
}

TEST_CASE("collision course keeps winding at zero for every prefix") {
  // Obstacle dead ahead on an exact intercept: LOS direction is constant.
  const auto ego = make_state(0, 0, 0, 2.0);
  const auto obs = make_state(0, 100, 180.0, 2.0);
  const auto pair = propagate_cv(ego, obs, 1.0, 20.0);
  for (std::size_t k = 1; k < pair.size(); ++k) {
    CHECK(std::abs(winding_angle(pair, k)) < 1e-9);
  }
}

TEST_CASE("Fig-3 scenario winding sign and action comparison") {
  // Sign precheck via relative-velocity cross products.
  const Vec2 lambda = los_vector(kFig3Ego, kFig3Obs);
  const Vec2 v_rel_90 = kFig3Obs.velocity() - kFig3Ego.velocity();
  CHECK(cross(lambda, v_rel_90) == doctest::Approx(28.79).epsilon(1e-3));

  VesselState ego135 = kFig3Ego;
  ego135.heading_deg = 135.0;
  const Vec2 v_rel_135 = kFig3Obs.velocity() - ego135.velocity();
  CHECK(cross(lambda, v_rel_135) == doctest::Approx(67.23).epsilon(1e-3));

  // Brute-force CV propagation at dt = 0.1 s. Both actions are compared over
  // the same horizon (both tracks still closing at 6 s), where the faster
  // LOS rotation of the 135-degree action shows up as a larger angle.
  double tcpa90 = 0, d90 = 0;
  brute_force_cpa(kFig3Ego, kFig3Obs, 0.001, 60.0, &tcpa90, &d90);
  const auto pair90 = propagate_cv(kFig3Ego, kFig3Obs, 0.1, tcpa90);
  const double w90_cpa = winding_angle(pair90, pair90.size() - 1);
  CHECK(w90_cpa > 0.0);  // left passing

  double tcpa135 = 0, d135 = 0;
  brute_force_cpa(ego135, kFig3Obs, 0.001, 60.0, &tcpa135, &d135);
  const auto pair135 = propagate_cv(ego135, kFig3Obs, 0.1, tcpa135);
  CHECK(winding_angle(pair135, pair135.size() - 1) > 0.0);

  // Over one planning step the 135-degree action rotates the LOS faster, in
  // proportion to the cross products above.
  const auto common90 = propagate_cv(kFig3Ego, kFig3Obs, 0.1, 1.0);
  const auto common135 = propagate_cv(ego135, kFig3Obs, 0.1, 1.0);
  const double w90 = winding_angle(common90, common90.size() - 1);
  const double w135 = winding_angle(common135, common135.size() - 1);
  CHECK(w90 > 0.0);
  CHECK(w135 > w90);
}

TEST_CASE("winding_number normalization") {
  // winding_angle = +pi corresponds to +0.5 turns: quarter-circle steps.
  TrackPair pair;
  pair.dt = 1.0;
  const int quarter_steps = 8;
  for (int k = 0; k <= quarter_steps; ++k) {
    const double a = kPi * k / quarter_steps;
    pair.ego.push_back(make_state(0, 0, 0, 0, k));
    pair.obs.push_back(make_state(10 * std::cos(a), 10 * std::sin(a), 0, 0, k));
  }
  CHECK(winding_number(pair, pair.size() - 1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(winding_number(pair, 0) == doctest::Approx(0.0));

  // Full counter-clockwise orbit of the obstacle around a fixed ego.
  TrackPair orbit;
  orbit.dt = 1.0;
  const int n = 64;
  for (int k = 0; k <= n; ++k) {
    const double a = kTwoPi * k / n;
    orbit.ego.push_back(make_state(3, -2, 0, 0, k));
    orbit.obs.push_back(make_state(3 + 5 * std::cos(a), -2 + 5 * std::sin(a), 0, 0, k));
  }
  CHECK(winding_number(orbit, orbit.size() - 1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("label_passing sign convention and reflection") {
  // Obstacle crossing from the ego's right bow to left stern while the ego
  // runs north: counter-clockwise LOS sweep, LEFT label.
  const auto ego = make_state(0, 0, 0, 1.0);
  const auto obs = make_state(30, 41.3, 270.0, 2.9);
  const auto pair = propagate_cv(ego, obs, 1.0, 30.0);
  const auto label = label_passing(pair);
  CHECK(label.side == PassingSide::kLeft);
  CHECK(label.winding_angle_rad > 0.0);

  // Mirror both tracks across the y axis: sides swap, winding negates.
  TrackPair mirrored = pair;
  for (auto& s : mirrored.ego) { s.pos.x = -s.pos.x; s.heading_deg = wrap360(-s.heading_deg); }
  for (auto& s : mirrored.obs) { s.pos.x = -s.pos.x; s.heading_deg = wrap360(-s.heading_deg); }
  const auto mlabel = label_passing(mirrored);
  CHECK(mlabel.side == PassingSide::kRight);
  CHECK(mlabel.winding_angle_rad == doctest::Approx(-label.winding_angle_rad).epsilon(1e-12));
}

TEST_CASE("label_passing agrees with the side-at-CPA oracle on random CV encounters") {
  Rng rng(7);
  int checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto ego = make_state(rng.uniform(-20, 20), rng.uniform(-20, 20),
                                rng.uniform(0, 360), rng.uniform(0.5, 2.5));
    const double bearing = rng.uniform(0, 360);
    const double range = rng.uniform(25, 80);
    const Vec2 rel = heading_to_unit(bearing) * range;
    const auto obs = make_state(ego.pos.x + rel.x, ego.pos.y + rel.y,
                                rng.uniform(0, 360), rng.uniform(0.2, 2.0));
    const Vec2 v_rel = obs.velocity() - ego.velocity();
    if (norm(v_rel) < 0.1) continue;
    const double tcpa = -dot(rel, v_rel) / norm_sq(v_rel);
    if (tcpa < 5.0 || tcpa > 60.0) continue;

    const auto pair = propagate_cv(ego, obs, 1.0, tcpa + 20.0);
    const auto label = label_passing(pair, {1e9, 0.05});
    if (label.side == PassingSide::kUndetermined) continue;
    ++checked;
    CHECK(label.side == side_at_cpa_oracle(ego, obs));
  }
  CHECK(checked > 300);
}

TEST_CASE("frame invariance under rigid motions") {
  Rng rng(11);
  const auto base = propagate_cv(kFig3Ego, kFig3Obs, 0.5, 12.0);
  const double w0 = winding_angle(base, base.size() - 1);
  for (int trial = 0; trial < 100; ++trial) {
    const double a = rng.uniform(0, kTwoPi);
    const Vec2 pivot{rng.uniform(-100, 100), rng.uniform(-100, 100)};
    const Vec2 shift{rng.uniform(-100, 100), rng.uniform(-100, 100)};
    const double ca = std::cos(a), sa = std::sin(a);
    auto rigid = [&](VesselState s) {
      const Vec2 d = s.pos - pivot;
      s.pos = Vec2{pivot.x + ca * d.x - sa * d.y, pivot.y + sa * d.x + ca * d.y} + shift;
      return s;
    };
    TrackPair moved = base;
    for (auto& s : moved.ego) s = rigid(s);
    for (auto& s : moved.obs) s = rigid(s);
    CHECK(std::abs(winding_angle(moved, moved.size() - 1) - w0) < 1e-9);
  }
}

TEST_CASE("resampling invariance for smooth tracks") {
  const auto coarse = propagate_cv(kFig3Ego, kFig3Obs, 0.5, 12.0);
  const auto fine = propagate_cv(kFig3Ego, kFig3Obs, 0.25, 12.0);
  const double wc = winding_angle(coarse, coarse.size() - 1);
  const double wf = winding_angle(fine, fine.size() - 1);
  CHECK(std::abs(wc - wf) < 1e-6);
}

TEST_CASE("cpa_metrics trivial conventions") {
  // Identical velocities, 50 m apart.
  const auto ego = make_state(0, 0, 45, 2.0);
  const auto obs = make_state(30, 40, 45, 2.0);
  const auto cpa = cpa_metrics(ego, obs);
  CHECK(cpa.tcpa_s == 0.0);
  CHECK(cpa.dcpa_m == doctest::Approx(50.0));

  // Head-on reciprocal with the obstacle dead ahead.
  const auto e2 = make_state(0, 0, 0, 2.0);
  const auto o2 = make_state(0, 80, 180.0, 2.0);
  const auto c2 = cpa_metrics(e2, o2);
  CHECK(c2.dcpa_m == doctest::Approx(0.0));
  CHECK(c2.rel_bearing_deg == doctest::Approx(0.0));
  CHECK(c2.tcpa_s == doctest::Approx(20.0));
}

TEST_CASE("cpa_metrics matches brute-force search on Fig-3") {
  const auto cpa = cpa_metrics(kFig3Ego, kFig3Obs);
  double bt = 0, bd = 0;
  brute_force_cpa(kFig3Ego, kFig3Obs, 0.01, 120.0, &bt, &bd);
  CHECK(std::abs(cpa.tcpa_s - bt) < 0.05);
  CHECK(std::abs(cpa.dcpa_m - bd) < 0.05);
  CHECK(cpa.tcpa_s == doctest::Approx(7.0).epsilon(0.01));
  CHECK(cpa.dcpa_m == doctest::Approx(5.66).epsilon(0.01));
}

TEST_CASE("cpa_metrics oracle equivalence on random states") {
  Rng rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto ego = make_state(rng.uniform(-100, 100), rng.uniform(-100, 100),
                                rng.uniform(0, 360), rng.uniform(0, 2.5));
    const auto obs = make_state(rng.uniform(-100, 100), rng.uniform(-100, 100),
                                rng.uniform(0, 360), rng.uniform(0, 2.5));
    const auto cpa = cpa_metrics(ego, obs);
    double bt = 0, bd = 0;
    brute_force_cpa(ego, obs, 0.01, 300.0, &bt, &bd);
    if (cpa.tcpa_s > 299.0) continue;  // CPA beyond the scanned horizon
    CHECK(std::abs(cpa.dcpa_m - bd) < 0.05);
    CHECK(std::abs(cpa.tcpa_s - bt) < 0.05);
  }
}

TEST_CASE("clearance index precedence") {
  // Opening begins immediately after CPA.
  const auto ego = make_state(0, 0, 0, 2.0);
  const auto obs = make_state(20, 60, 180.0, 2.0);
  const auto pair = propagate_cv(ego, obs, 1.0, 40.0);
  const auto cpa = cpa_metrics(ego, obs);
  const std::size_t idx = clearance_index(pair, {1e9, 0.05});
  CHECK(idx >= static_cast<std::size_t>(std::floor(cpa.tcpa_s)));
  CHECK(idx <= static_cast<std::size_t>(std::ceil(cpa.tcpa_s)) + 1);

  // Sensor-range exit fires when the obstacle is outbound from the start.
  const auto obs_out = make_state(0, 90, 0.0, 3.0);
  const auto pair_out = propagate_cv(ego, obs_out, 1.0, 40.0);
  const std::size_t idx_out = clearance_index(pair_out, {100.0, 0.05});
  CHECK(idx_out <= 11);

  // No clearance, no range exit: falls back to the last sample.
  const auto obs_par = make_state(30, 0, 0.0, 2.0);
  const auto pair_par = propagate_cv(ego, obs_par, 1.0, 10.0);
  CHECK(clearance_index(pair_par, {1e9, 0.05}) == pair_par.size() - 1);
}
