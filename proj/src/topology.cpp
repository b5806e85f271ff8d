#include "asvplan/topology.hpp"

#include <cmath>

#include "asvplan/errors.hpp"

namespace asvplan::topology {

std::string to_string(PassingSide side) {
  switch (side) {
    case PassingSide::kLeft: return "LEFT";
    case PassingSide::kRight: return "RIGHT";
    default: return "UNDETERMINED";
  }
}

Vec2 los_vector(const VesselState& ego, const VesselState& obs) {
  return obs.pos - ego.pos;
}

double winding_increment(Vec2 lambda_t, Vec2 lambda_t1) {
  if (norm_sq(lambda_t) == 0.0 || norm_sq(lambda_t1) == 0.0) {
    throw ZeroLosVector("winding_increment: zero-length LOS vector");
  }
  double inc = std::atan2(cross(lambda_t, lambda_t1), dot(lambda_t, lambda_t1));
  if (inc <= -kPi) inc = kPi;  // atan2(-0, -x) branch; contract is (-pi, pi]
  return inc;
}

double winding_angle(const TrackPair& pair, std::size_t clearance_idx) {
  double sum = 0.0;
  for (std::size_t k = 0; k + 1 <= clearance_idx && k + 1 < pair.size(); ++k) {
    const Vec2 a = los_vector(pair.ego[k], pair.obs[k]);
    const Vec2 b = los_vector(pair.ego[k + 1], pair.obs[k + 1]);
    sum += winding_increment(a, b);
  }
  return sum;
}

double winding_number(const TrackPair& pair, std::size_t clearance_idx) {
  return winding_angle(pair, clearance_idx) / kTwoPi;
}

std::size_t clearance_index(const TrackPair& pair, const ClearanceConfig& cfg) {
  const std::size_t n = pair.size();
  if (n == 0) return 0;
  bool was_closing = false;
  for (std::size_t k = 0; k < n; ++k) {
    const Vec2 lambda = los_vector(pair.ego[k], pair.obs[k]);
    const Vec2 v_rel = pair.obs[k].velocity() - pair.ego[k].velocity();
    const bool closing = dot(lambda, v_rel) < 0.0;
    // TCPA hits zero at the closing-to-opening transition; a pair that was
    // never closing has no CPA to clear and falls through to range exit.
    if (k > 0 && was_closing && !closing) return k;
    if (k > 0 && norm(lambda) > cfg.sensor_range_m) return k;
    was_closing = closing;
  }
  return n - 1;
}

PassingLabel label_passing(const TrackPair& pair, const ClearanceConfig& cfg) {
  PassingLabel label;
  if (pair.size() == 0) return label;
  const std::size_t idx = clearance_index(pair, cfg);
  label.winding_angle_rad = winding_angle(pair, idx);
  if (label.winding_angle_rad > cfg.eps_w_rad) {
    label.side = PassingSide::kLeft;
  } else if (label.winding_angle_rad < -cfg.eps_w_rad) {
    label.side = PassingSide::kRight;
  } else {
    label.side = PassingSide::kUndetermined;
  }
  return label;
}

CpaResult cpa_metrics(const VesselState& ego, const VesselState& obs) {
  CpaResult out;
  const Vec2 lambda = los_vector(ego, obs);
  const Vec2 v_rel = obs.velocity() - ego.velocity();
  const double v2 = norm_sq(v_rel);
  double tcpa = 0.0;
  if (v2 > 0.0) tcpa = -dot(lambda, v_rel) / v2;
  if (tcpa < 0.0) tcpa = 0.0;
  out.tcpa_s = tcpa;
  out.dcpa_m = norm(lambda + v_rel * tcpa);
  out.rel_bearing_deg = wrap360(bearing_deg(lambda) - ego.heading_deg);
  return out;
}

}  // namespace asvplan::topology
