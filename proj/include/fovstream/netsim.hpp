#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fovstream/perception.hpp"
#include "fovstream/scene.hpp"
#include "fovstream/scheduler.hpp"

namespace fovstream {

// The single place where byte and rate units are fixed.
namespace units {
inline constexpr double kKB = 1024.0;      // bytes
inline constexpr double kMbps = 1.0e6;     // bits per second
inline constexpr double kBitsPerByte = 8.0;
}  // namespace units

inline constexpr double kDefaultTick = 1.0 / 90.0;  // s
inline constexpr double kArrivalTolerance = 1e-9;   // s

struct NetworkProfile {
  std::string name = "4g";
  double bandwidth_bps = 40.0 * units::kMbps;  // +inf allowed
  double uplink_latency_s = 0.0;
  double downlink_latency_s = 0.0;
  uint64_t packet_size = uint64_t(100 * units::kKB);
  uint64_t backlog_cap = 0;  // bytes; 0 = one second of bandwidth

  void validate() const;
  uint64_t tick_budget(double tick) const;
  uint64_t effective_backlog_cap() const;
};

/// "3g" (2 Mbps), "4g" (40 Mbps), "5g" (67 Mbps), "inf".
NetworkProfile profile_preset(const std::string& name);
NetworkProfile load_profile(const std::filesystem::path& path);
void to_json(nlohmann::json& j, const NetworkProfile& p);
void from_json(const nlohmann::json& j, NetworkProfile& p);

/// One unit's upgrade landing at the edge.
struct Delivery {
  int unit = 0;
  int from_level = 0;
  int to_level = 0;
  uint64_t bytes = 0;
  double send_time = 0.0;
  double arrival_time = 0.0;
};

struct Packet {
  uint64_t bytes = 0;
  double send_time = 0.0;
  double arrival_time = 0.0;
};

/// FIFO serializing link. Packet k of a plan finishes serializing after the bytes up to and
/// including it have left; an upgrade lands with the packet carrying its last byte.
class Link {
 public:
  explicit Link(const NetworkProfile& profile) : profile_(profile) {}

  std::vector<Delivery> transmit(const UpdatePlan& plan, double send_time, std::vector<Packet>* packets = nullptr);
  /// Bytes queued but not yet serialized at `now`.
  uint64_t backlog(double now) const;
  double busy_until() const { return busy_until_; }

 private:
  NetworkProfile profile_;
  double busy_until_ = 0.0;
};

/// Transmission of one plan over an idle link.
std::vector<Delivery> transmit(const UpdatePlan& plan, const NetworkProfile& profile, double send_time,
                               std::vector<Packet>* packets = nullptr);

enum class Backend { analytic, neural, uniform, ecc_only };
std::string backend_name(Backend b);
Backend parse_backend(const std::string& name);

class MlpModel;

/// Remaining-deficit measure tracked per tick.
///  - adaptive: sum over visible units of the fixation-mode sensitivities of every step still
///    missing at the edge, evaluated at the true gaze (footprint-weighted E - lambda P)
///  - static: sum over pixels of E times the number of missing levels of the covering unit
enum class QualityProxy { adaptive, static_deficit };

struct SimConfig {
  NetworkProfile profile;
  RetinaParams retina;
  DisplayParams display;
  PerceptionParams perception;
  BandSpec bands;
  RenderOptions render;
  Backend backend = Backend::analytic;
  const MlpModel* model = nullptr;  // neural backend only
  double tick = kDefaultTick;
  double duration = 0.0;          // s; <= 0 runs to the end of the trace
  double quality_threshold = 0.5; // fraction of the initial deficit
  bool stop_at_threshold = false;
  bool record_states = false;
  bool track_popping = true;
  QualityProxy proxy = QualityProxy::adaptive;
};

struct TickRecord {
  int64_t tick = 0;
  double time = 0.0;
  double cloud_sample_time = 0.0;
  GazeMode cloud_mode = GazeMode::fixation;
  GazeMode true_mode = GazeMode::fixation;
  uint64_t budget = 0;
  uint64_t backlog = 0;
  bool stall = false;
  uint64_t plan_bytes = 0;
  int plan_units = 0;
  uint64_t bytes_sent = 0;     // cumulative
  uint64_t bytes_arrived = 0;  // cumulative
  int arrivals = 0;
  double quality = 0.0;        // remaining deficit after this tick's arrivals
  double popping = 0.0;        // popping of this tick's arrivals (fixation ticks only)
  int visible_units = 0;
  int edge_levels_sum = 0;
};

struct SessionSummary {
  int64_t ticks = 0;
  uint64_t bytes_sent = 0;
  uint64_t bytes_arrived = 0;
  uint64_t budget_total = 0;
  double popping_tally = 0.0;
  double initial_quality = 0.0;
  double final_quality = 0.0;
  std::optional<double> time_to_threshold;  // s, interpolated between ticks; unset if never reached
  int stalls = 0;
};

struct SessionTimeline {
  std::vector<TickRecord> ticks;
  std::vector<Delivery> deliveries;
  std::vector<UpdatePlan> plans;        // per tick
  std::vector<LoDState> edge_states;    // per tick, when recorded
  std::vector<LoDState> intended_states;
  SessionSummary summary;
};

/// Tick-driven replay: every tick the edge applies arrivals, then the cloud looks at the gaze
/// sample delayed by the uplink latency, scores steps from its intended state (edge state
/// plus in-flight upgrades) and sends a plan sized to U = bandwidth * tick - backlog.
SessionTimeline simulate_session(const GazeTrace& trace, const SceneAsset& asset, const SimConfig& config);

/// Fixation popping accumulated until cumulative arrived bytes reach `bytes`.
double popping_at_spend(const SessionTimeline& timeline, uint64_t bytes);

void write_timeline_csv(std::ostream& out, const SessionTimeline& timeline);
nlohmann::json summary_json(const SessionSummary& summary);

// --- traces -----------------------------------------------------------------------------

struct TraceParams {
  double duration = 30.0;   // s
  double rate = 90.0;       // Hz
  uint64_t seed = 1;
  double fixation_min = 0.2;  // s
  double fixation_max = 0.6;
  double saccade_speed = 300.0;  // mean deg/s during a saccade
  double gaze_extent = 0.85;     // fraction of the half field of view
  double jitter = 0.03;          // deg, fixational noise
  double orbit_radius = 80.0;
  double orbit_height = 130.0;
  double orbit_speed = 6.0;      // deg/s, sign and +-50% drawn per seed
  double orbit_phase = 0.0;      // deg, center of the starting azimuth
  double orbit_arc = 360.0;      // deg, starting azimuth drawn uniformly within this arc
  bool static_camera = false;
};

void to_json(nlohmann::json& j, const TraceParams& p);
void from_json(const nlohmann::json& j, TraceParams& p);

GazeTrace generate_trace(const TraceParams& params, const DisplayParams& display);

/// Columns: t,gaze_x,gaze_y,cam_px,cam_py,cam_pz,cam_fx,cam_fy,cam_fz,cam_ux,cam_uy,cam_uz.
void write_trace_csv(std::ostream& out, const GazeTrace& trace);
GazeTrace read_trace_csv(const std::filesystem::path& path);

}  // namespace fovstream
