#pragma once
#include <cstddef>
#include <string>
#include <vector>

#include "asvplan/geometry.hpp"

namespace asvplan::topology {

// Pose, heading and speed of one vessel at one instant. Positions are local
// ENU meters (x east, y north); heading is degrees clockwise from north.
struct VesselState {
  double t{0.0};            // seconds
  Vec2 pos{};               // meters
  double heading_deg{0.0};  // [0, 360)
  double speed_mps{0.0};    // >= 0
  int id{0};
  double length_m{2.5};
  double beam_m{1.4};

  Vec2 velocity() const { return heading_to_unit(heading_deg) * speed_mps; }
};

// Time-aligned ego/obstacle track pair sampled at a uniform interval.
struct TrackPair {
  std::vector<VesselState> ego;
  std::vector<VesselState> obs;
  double dt{1.0};

  std::size_t size() const { return ego.size(); }
};

enum class PassingSide { kLeft, kRight, kUndetermined };

std::string to_string(PassingSide side);

struct PassingLabel {
  PassingSide side{PassingSide::kUndetermined};
  double winding_angle_rad{0.0};
};

struct CpaResult {
  double tcpa_s{0.0};         // clamped >= 0; 0 when opening or zero rel speed
  double dcpa_m{0.0};
  double rel_bearing_deg{0.0};  // clockwise from ego heading to LOS, [0, 360)
};

// Clearance-index selection: first sample where the obstacle has started to
// open (instantaneous TCPA = 0), else the first sample beyond sensor range,
// else the last sample. The winding dead-band eps_w absorbs noise on
// near-collision geometry where the sign is not meaningful.
struct ClearanceConfig {
  double sensor_range_m{100.0};
  double eps_w_rad{0.05};
};

// Ego -> obstacle line-of-sight displacement in the global frame.
Vec2 los_vector(const VesselState& ego, const VesselState& obs);

// Signed LOS rotation from lambda_t to lambda_t1, in (-pi, pi].
// Positive = counter-clockwise sweep = progress toward a left passing.
double winding_increment(Vec2 lambda_t, Vec2 lambda_t1);

// Signed sum of winding increments over consecutive LOS vectors up to
// clearance_index (inclusive endpoint of the summed arc).
double winding_angle(const TrackPair& pair, std::size_t clearance_index);

// winding_angle / 2*pi, so one full counter-clockwise orbit counts +1.
double winding_number(const TrackPair& pair, std::size_t clearance_index);

std::size_t clearance_index(const TrackPair& pair, const ClearanceConfig& cfg = {});

PassingLabel label_passing(const TrackPair& pair, const ClearanceConfig& cfg = {});

// Closed-form constant-velocity CPA from a single state pair.
CpaResult cpa_metrics(const VesselState& ego, const VesselState& obs);

}  // namespace asvplan::topology
