#include "fovstream/netsim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fovstream/errors.hpp"
#include "fovstream/neural.hpp"

namespace fovstream {

// --- profiles ---------------------------------------------------------------------------

void NetworkProfile::validate() const {
  if (!(bandwidth_bps > 0.0)) throw ConfigError("profile: bandwidth must be > 0");
  if (!(uplink_latency_s >= 0.0) || !(downlink_latency_s >= 0.0) || !std::isfinite(uplink_latency_s) ||
      !std::isfinite(downlink_latency_s))
    throw ConfigError("profile: latencies must be finite and >= 0");
  if (packet_size == 0) throw ConfigError("profile: packet_size must be > 0");
}

uint64_t NetworkProfile::tick_budget(double tick) const {
  if (std::isinf(bandwidth_bps)) return std::numeric_limits<uint64_t>::max() / 4;
  return uint64_t(std::floor(bandwidth_bps * tick / units::kBitsPerByte));
}

uint64_t NetworkProfile::effective_backlog_cap() const {
  if (backlog_cap > 0) return backlog_cap;
  if (std::isinf(bandwidth_bps)) return std::numeric_limits<uint64_t>::max();
  return uint64_t(bandwidth_bps / units::kBitsPerByte);
}

NetworkProfile profile_preset(const std::string& name) {
  NetworkProfile p;
  p.name = name;
  if (name == "3g")
    p.bandwidth_bps = 2.0 * units::kMbps;
  else if (name == "4g")
    p.bandwidth_bps = 40.0 * units::kMbps;
  else if (name == "5g")
    p.bandwidth_bps = 67.0 * units::kMbps;
  else if (name == "inf")
    p.bandwidth_bps = std::numeric_limits<double>::infinity();
  else
    throw ConfigError("unknown network profile '" + name + "' (expected 3g, 4g, 5g or inf)");
  return p;
}

void to_json(nlohmann::json& j, const NetworkProfile& p) {
  j = nlohmann::json{{"name", p.name},
                     {"bandwidth_mbps", std::isinf(p.bandwidth_bps) ? nlohmann::json("inf")
                                                                     : nlohmann::json(p.bandwidth_bps / units::kMbps)},
                     {"uplink_latency_ms", p.uplink_latency_s * 1e3},
                     {"downlink_latency_ms", p.downlink_latency_s * 1e3},
                     {"packet_kb", double(p.packet_size) / units::kKB},
                     {"backlog_cap_bytes", p.backlog_cap}};
}

void from_json(const nlohmann::json& j, NetworkProfile& p) {
  if (j.contains("preset")) p = profile_preset(j.at("preset").get<std::string>());
  if (j.contains("name")) j.at("name").get_to(p.name);
  if (j.contains("bandwidth_mbps")) {
    const auto& b = j.at("bandwidth_mbps");
    p.bandwidth_bps = b.is_string() && b.get<std::string>() == "inf" ? std::numeric_limits<double>::infinity()
                                                                     : b.get<double>() * units::kMbps;
  }
  if (j.contains("uplink_latency_ms")) p.uplink_latency_s = j.at("uplink_latency_ms").get<double>() * 1e-3;
  if (j.contains("downlink_latency_ms")) p.downlink_latency_s = j.at("downlink_latency_ms").get<double>() * 1e-3;
  if (j.contains("packet_kb")) p.packet_size = uint64_t(std::llround(j.at("packet_kb").get<double>() * units::kKB));
  if (j.contains("backlog_cap_bytes")) j.at("backlog_cap_bytes").get_to(p.backlog_cap);
}

NetworkProfile load_profile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open profile " + path.string());
  NetworkProfile p;
  try {
    nlohmann::json j;
    in >> j;
    p = j.get<NetworkProfile>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  p.validate();
  return p;
}

// --- link -------------------------------------------------------------------------------

std::vector<Delivery> Link::transmit(const UpdatePlan& plan, double send_time, std::vector<Packet>* packets) {
  std::vector<Delivery> out;
  if (plan.total_bytes == 0) return out;
  const double start = std::max(send_time, busy_until_);
  const bool instant = std::isinf(profile_.bandwidth_bps);
  auto done_at = [&](uint64_t bytes_through) {
    return instant ? start : start + double(bytes_through) * units::kBitsPerByte / profile_.bandwidth_bps;
  };
  const uint64_t ps = profile_.packet_size;
  auto packet_end = [&](uint64_t k) { return std::min((k + 1) * ps, plan.total_bytes); };
  if (packets) {
    for (uint64_t k = 0; k * ps < plan.total_bytes; ++k) {
      const uint64_t end = packet_end(k);
      packets->push_back({end - k * ps, send_time, done_at(end) + profile_.downlink_latency_s});
    }
  }
  uint64_t cum = 0;
  for (const auto& e : plan.entries) {
    cum += e.bytes;
    const uint64_t k = (cum - 1) / ps;
    out.push_back({e.unit, e.from_level, e.to_level, e.bytes, send_time,
                   done_at(packet_end(k)) + profile_.downlink_latency_s});
  }
  busy_until_ = done_at(plan.total_bytes);
  return out;
}

uint64_t Link::backlog(double now) const {
  if (std::isinf(profile_.bandwidth_bps)) return 0;
  const double left = busy_until_ - now - kArrivalTolerance;
  if (left <= 0.0) return 0;
  return uint64_t(std::ceil(left * profile_.bandwidth_bps / units::kBitsPerByte));
}

std::vector<Delivery> transmit(const UpdatePlan& plan, const NetworkProfile& profile, double send_time,
                               std::vector<Packet>* packets) {
  Link link(profile);
  return link.transmit(plan, send_time, packets);
}

std::string backend_name(Backend b) {
  switch (b) {
    case Backend::analytic: return "analytic";
    case Backend::neural: return "neural";
    case Backend::uniform: return "uniform";
    case Backend::ecc_only: return "ecc-only";
  }
  return "?";
}

Backend parse_backend(const std::string& name) {
  if (name == "analytic" || name == "ours") return Backend::analytic;
  if (name == "neural") return Backend::neural;
  if (name == "uniform") return Backend::uniform;
  if (name == "ecc-only" || name == "ecc_only") return Backend::ecc_only;
  throw ConfigError("unknown backend '" + name + "' (expected analytic, neural, uniform or ecc-only)");
}

// --- session ----------------------------------------------------------------------------

namespace {

GazeState causal_state(const GazeTrace& trace, size_t i, double threshold) {
  if (i == 0) return {GazeMode::fixation, 0.0};
  return classify_causal(trace[i - 1], trace[i], threshold);
}

// Renderers keyed by camera; the cloud and the edge usually look through the same one.
class RendererCache {
 public:
  RendererCache(const SceneAsset& asset, const DisplayParams& display, const RenderOptions& options)
      : asset_(asset), display_(display), options_(options) {}

  const SceneRenderer& get(const Camera& cam) {
    for (auto& e : entries_)
      if (e.first == cam) return *e.second;
    if (entries_.size() >= 2) entries_.erase(entries_.begin());
    entries_.emplace_back(cam, std::make_unique<SceneRenderer>(asset_, display_, cam, options_));
    return *entries_.back().second;
  }

 private:
  const SceneAsset& asset_;
  DisplayParams display_;
  RenderOptions options_;
  std::vector<std::pair<Camera, std::unique_ptr<SceneRenderer>>> entries_;
};

}  // namespace

SessionTimeline simulate_session(const GazeTrace& trace, const SceneAsset& asset, const SimConfig& config) {
  if (trace.empty()) throw TraceError("simulate_session: empty trace");
  validate_trace(trace);
  asset.validate();
  config.profile.validate();
  if (!(config.tick > 0.0)) throw ConfigError("simulation tick must be > 0");
  if (config.backend == Backend::neural) {
    if (!config.model) throw ModelError("neural backend needs a model");
    if (config.model->scene_hash != scene_hash(asset)) throw ModelError("model was trained for a different scene");
    if (config.model->slot_count() != int(asset.slot_count())) throw ModelError("model slot count does not match the scene");
  }

  const PerceptualModel model(config.retina, config.display, config.perception, config.bands);
  PerceptionParams ecc_params = config.perception;
  ecc_params.lambda = 0.0;
  std::unique_ptr<PerceptualModel> ecc_model;
  if (config.backend == Backend::ecc_only)
    ecc_model = std::make_unique<PerceptualModel>(config.retina, config.display, ecc_params, config.bands);
  RendererCache renderers(asset, config.display, config.render);

  const double t0 = trace.front().timestamp;
  const double span = config.duration > 0.0 ? config.duration : trace.back().timestamp - t0;
  const int64_t n_ticks = std::max<int64_t>(1, int64_t(std::floor(span / config.tick + 1e-9)) + 1);
  const double threshold = config.perception.saccade_threshold;
  const int top = asset.level_count - 1;

  SessionTimeline tl;
  Link link(config.profile);
  LoDState edge = base_state(asset), intended = edge;
  std::vector<Delivery> pending;  // FIFO by arrival
  size_t next_pending = 0;
  uint64_t sent = 0, arrived = 0;
  const uint64_t per_tick = config.profile.tick_budget(config.tick);
  const uint64_t cap = config.profile.effective_backlog_cap();
  Vec2 cached_gaze{std::nan(""), 0.0};
  std::vector<double> static_true;

  for (int64_t t = 0; t < n_ticks; ++t) {
    TickRecord rec;
    rec.tick = t;
    rec.time = double(t) * config.tick;
    const size_t ti = sample_index_at(trace, t0 + rec.time);
    const GazeSample& truth = trace[ti];
    rec.true_mode = causal_state(trace, ti, threshold).mode;
    const SceneRenderer& edge_view = renderers.get(truth.camera);

    // 1. arrivals
    LoDState before_arrivals = edge;
    while (next_pending < pending.size() && pending[next_pending].arrival_time <= rec.time + kArrivalTolerance) {
      const Delivery& d = pending[next_pending++];
      edge[d.unit] = std::max(edge[d.unit], d.to_level);
      arrived += d.bytes;
      ++rec.arrivals;
    }
    if (!(truth.gaze == cached_gaze)) {
      static_true = model.static_field(truth.gaze);
      cached_gaze = truth.gaze;
    }
    Frame edge_frame = edge_view.render(edge);
    if (rec.arrivals > 0 && config.track_popping && rec.true_mode == GazeMode::fixation) {
      const Frame old_frame = edge_view.render(before_arrivals);
      const BandSet b0 = model.decompose(old_frame.luminance), b1 = model.decompose(edge_frame.luminance);
      const auto pop = model.popping_field(truth.gaze, b0, b1);
      for (size_t p = 0; p < pop.size(); ++p)
        if (old_frame.luminance.samples[p] != edge_frame.luminance.samples[p]) rec.popping += pop[p];
    }
    // 2. quality proxy
    std::vector<char> seen(asset.units.size(), 0);
    for (size_t p = 0; p < edge_frame.unit_ids.size(); ++p) {
      const int32_t id = edge_frame.unit_ids[p];
      if (id < 0) continue;
      if (config.proxy == QualityProxy::static_deficit) rec.quality += double(top - edge[id]) * static_true[p];
      if (!seen[id]) {
        seen[id] = 1;
        ++rec.visible_units;
      }
    }
    if (config.proxy == QualityProxy::adaptive) {
      SensitivityEvaluator ev(model, edge_view, edge, truth.gaze, {GazeMode::fixation, 0.0});
      for (size_t u = 0; u < asset.units.size(); ++u)
        if (seen[u])
          for (int l = edge[u]; l < top; ++l) rec.quality += ev.step_sensitivity(int(u), l);
    }
    for (int l : edge) rec.edge_levels_sum += l;
    rec.bytes_arrived = arrived;

    // 3. cloud planning
    const double cloud_t = t0 + rec.time - config.profile.uplink_latency_s;
    const size_t ci = sample_index_at(trace, cloud_t);
    const GazeSample& seen_sample = trace[ci];
    GazeState cloud_state = causal_state(trace, ci, threshold);
    rec.cloud_sample_time = seen_sample.timestamp;
    rec.backlog = link.backlog(rec.time);
    rec.stall = rec.backlog > cap;
    rec.budget = per_tick > rec.backlog ? per_tick - rec.backlog : 0;
    if (config.backend == Backend::ecc_only) cloud_state.mode = GazeMode::fixation;
    rec.cloud_mode = cloud_state.mode;

    UpdatePlan plan;
    if (rec.budget > 0 && !rec.stall) {
      const SceneRenderer& cloud_view = renderers.get(seen_sample.camera);
      switch (config.backend) {
        case Backend::analytic: {
          SensitivityEvaluator ev(model, cloud_view, intended, seen_sample.gaze, cloud_state);
          plan = plan_update(ev, asset, intended, rec.budget);
          break;
        }
        case Backend::ecc_only: {
          SensitivityEvaluator ev(*ecc_model, cloud_view, intended, seen_sample.gaze, cloud_state);
          plan = plan_update(ev, asset, intended, rec.budget);
          break;
        }
        case Backend::uniform: {
          UniformScorer sc(footprint_counts(cloud_view.render(intended), asset.units.size()));
          plan = plan_update(sc, asset, intended, rec.budget);
          break;
        }
        case Backend::neural: {
          const auto counts = footprint_counts(cloud_view.render(intended), asset.units.size());
          const auto pred = config.model->predict(featurize(seen_sample, cloud_state, config.display));
          std::vector<double> table(asset.slot_count());
          for (size_t u = 0; u < asset.units.size(); ++u)
            for (int l = 0; l < top; ++l) {
              const size_t s = slot_index(int(u), l, asset.level_count);
              table[s] = config.model->normalizer.denormalize(pred[s], counts[u]);
            }
          TableScorer sc(std::move(table), asset.level_count);
          plan = plan_update(sc, asset, intended, rec.budget);
          break;
        }
      }
    }
    if (config.record_states) {
      tl.edge_states.push_back(edge);
      tl.intended_states.push_back(intended);
    }
    intended = apply_plan(intended, plan);
    for (auto& d : link.transmit(plan, rec.time)) pending.push_back(d);
    sent += plan.total_bytes;
    rec.plan_bytes = plan.total_bytes;
    rec.plan_units = int(plan.entries.size());
    rec.bytes_sent = sent;
    tl.summary.budget_total += rec.budget;
    tl.plans.push_back(std::move(plan));
    tl.ticks.push_back(rec);

    if (t == 0) tl.summary.initial_quality = rec.quality;
    const double target = config.quality_threshold * tl.summary.initial_quality;
    if (!tl.summary.time_to_threshold && tl.summary.initial_quality > 0.0 && rec.quality <= target) {
      // linear crossing between the two ticks that bracket the target
      double crossing = rec.time;
      if (t > 0) {
        const double prev = tl.ticks[tl.ticks.size() - 2].quality;
        if (prev > rec.quality) crossing -= config.tick * (target - rec.quality) / (prev - rec.quality);
      }
      tl.summary.time_to_threshold = crossing;
    }
    if (config.stop_at_threshold && tl.summary.time_to_threshold) break;
  }
  tl.deliveries = pending;
  auto& s = tl.summary;
  s.ticks = int64_t(tl.ticks.size());
  s.bytes_sent = sent;
  s.bytes_arrived = arrived;
  s.final_quality = tl.ticks.back().quality;
  for (const auto& r : tl.ticks) {
    s.popping_tally += r.popping;
    s.stalls += r.stall ? 1 : 0;
  }
  return tl;
}

double popping_at_spend(const SessionTimeline& timeline, uint64_t bytes) {
  double tally = 0.0;
  for (const auto& r : timeline.ticks) {
    if (r.bytes_arrived > bytes) break;
    tally += r.popping;
  }
  return tally;
}

void write_timeline_csv(std::ostream& out, const SessionTimeline& tl) {
  out << "tick,time_s,cloud_sample_s,cloud_mode,true_mode,budget_bytes,backlog_bytes,stall,plan_bytes,plan_units,"
         "sent_bytes,arrived_bytes,arrivals,quality,popping,visible_units,edge_level_sum\n";
  char buf[64];
  for (const auto& r : tl.ticks) {
    out << r.tick << ',';
    std::snprintf(buf, sizeof buf, "%.9f,%.9f", r.time, r.cloud_sample_time);
    out << buf << ',' << (r.cloud_mode == GazeMode::saccade ? "saccade" : "fixation") << ','
        << (r.true_mode == GazeMode::saccade ? "saccade" : "fixation") << ',' << r.budget << ',' << r.backlog << ','
        << (r.stall ? 1 : 0) << ',' << r.plan_bytes << ',' << r.plan_units << ',' << r.bytes_sent << ','
        << r.bytes_arrived << ',' << r.arrivals << ',';
    std::snprintf(buf, sizeof buf, "%.17g,%.17g", r.quality, r.popping);
    out << buf << ',' << r.visible_units << ',' << r.edge_levels_sum << '\n';
  }
}

nlohmann::json summary_json(const SessionSummary& s) {
  nlohmann::json j{{"ticks", s.ticks},
                   {"bytes_sent", s.bytes_sent},
                   {"bytes_arrived", s.bytes_arrived},
                   {"budget_total", s.budget_total},
                   {"popping_tally", s.popping_tally},
                   {"initial_quality", s.initial_quality},
                   {"final_quality", s.final_quality},
                   {"stalls", s.stalls}};
  j["time_to_threshold_s"] = s.time_to_threshold ? nlohmann::json(*s.time_to_threshold) : nlohmann::json(nullptr);
  return j;
}

// --- traces -----------------------------------------------------------------------------

void to_json(nlohmann::json& j, const TraceParams& p) {
  j = nlohmann::json{{"duration_s", p.duration},       {"rate_hz", p.rate},
                     {"seed", p.seed},                 {"fixation_min_s", p.fixation_min},
                     {"fixation_max_s", p.fixation_max}, {"saccade_speed", p.saccade_speed},
                     {"gaze_extent", p.gaze_extent},   {"jitter_deg", p.jitter},
                     {"orbit_radius", p.orbit_radius}, {"orbit_height", p.orbit_height},
                     {"orbit_speed", p.orbit_speed},   {"orbit_phase_deg", p.orbit_phase},
                     {"orbit_arc_deg", p.orbit_arc},   {"static_camera", p.static_camera}};
}

void from_json(const nlohmann::json& j, TraceParams& p) {
  auto opt = [&](const char* k, auto& v) {
    if (j.contains(k)) j.at(k).get_to(v);
  };
  opt("duration_s", p.duration);
  opt("rate_hz", p.rate);
  opt("seed", p.seed);
  opt("fixation_min_s", p.fixation_min);
  opt("fixation_max_s", p.fixation_max);
  opt("saccade_speed", p.saccade_speed);
  opt("gaze_extent", p.gaze_extent);
  opt("jitter_deg", p.jitter);
  opt("orbit_radius", p.orbit_radius);
  opt("orbit_height", p.orbit_height);
  opt("orbit_speed", p.orbit_speed);
  opt("orbit_phase_deg", p.orbit_phase);
  opt("orbit_arc_deg", p.orbit_arc);
  opt("static_camera", p.static_camera);
}

GazeTrace generate_trace(const TraceParams& p, const DisplayParams& display) {
  if (!(p.duration > 0.0) || !(p.rate > 0.0)) throw ConfigError("trace: duration and rate must be > 0");
  if (!(p.fixation_max >= p.fixation_min) || !(p.fixation_min > 0.0)) throw ConfigError("trace: bad fixation range");
  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  const Vec2 half = display.screen_to_degrees(display.width, 0.0);
  auto target = [&] {
    return Vec2{(2.0 * uni(rng) - 1.0) * p.gaze_extent * half.x, (2.0 * uni(rng) - 1.0) * p.gaze_extent * half.y};
  };
  const double phase0 = (p.orbit_phase + (uni(rng) - 0.5) * p.orbit_arc) * std::numbers::pi / 180.0;
  const double dir = uni(rng) < 0.5 ? -1.0 : 1.0;
  const double orbit = p.static_camera ? 0.0 : dir * p.orbit_speed * (0.5 + uni(rng)) * std::numbers::pi / 180.0;
  const double bob = 0.15 * uni(rng);

  GazeTrace trace;
  const size_t n = size_t(std::floor(p.duration * p.rate)) + 1;
  Vec2 from = target(), to = from;
  double seg_start = 0.0, fix_end = p.fixation_min + (p.fixation_max - p.fixation_min) * uni(rng);
  double sac_end = fix_end;
  bool saccading = false;
  for (size_t i = 0; i < n; ++i) {
    const double t = double(i) / p.rate;
    if (!saccading && t >= fix_end) {
      from = to;
      to = target();
      saccading = true;
      seg_start = fix_end;
      sac_end = seg_start + std::max(length(to - from) / p.saccade_speed, 1.0 / p.rate);
    }
    if (saccading && t >= sac_end) {
      saccading = false;
      from = to;
      fix_end = sac_end + p.fixation_min + (p.fixation_max - p.fixation_min) * uni(rng);
    }
    Vec2 g;
    if (saccading) {
      const double s = (t - seg_start) / (sac_end - seg_start);
      const double e = s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);  // minimum-jerk profile
      g = from + (to - from) * e;
    } else {
      g = to + Vec2{noise(rng), noise(rng)} * p.jitter;
    }
    const double phi = phase0 + orbit * t;
    const double h = p.static_camera ? p.orbit_height * (1.0 + bob * std::sin(phase0))
                                     : p.orbit_height * (1.0 + bob * std::sin(0.3 * t + phase0));
    GazeSample s;
    s.timestamp = t;
    s.gaze = g;
    s.camera.position = {p.orbit_radius * std::cos(phi), h, p.orbit_radius * std::sin(phi)};
    s.camera.forward = normalized(Vec3{0.0, 0.0, 0.0} - s.camera.position);
    s.camera.up = normalized(cross(cross(s.camera.forward, Vec3{0.0, 1.0, 0.0}), s.camera.forward));
    trace.push_back(s);
  }
  return trace;
}

void write_trace_csv(std::ostream& out, const GazeTrace& trace) {
  out << "t,gaze_x,gaze_y,cam_px,cam_py,cam_pz,cam_fx,cam_fy,cam_fz,cam_ux,cam_uy,cam_uz\n";
  char buf[512];
  for (const auto& s : trace) {
    const auto& c = s.camera;
    std::snprintf(buf, sizeof buf,
                  "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", s.timestamp,
                  s.gaze.x, s.gaze.y, c.position.x, c.position.y, c.position.z, c.forward.x, c.forward.y,
                  c.forward.z, c.up.x, c.up.y, c.up.z);
    out << buf;
  }
}

GazeTrace read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trace " + path.string());
  GazeTrace trace;
  std::string line;
  bool header = false;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      if (line.rfind("t,", 0) != 0) throw TraceError(path.string() + ": missing column header");
      continue;
    }
    std::array<double, 12> v{};
    std::istringstream ls(line);
    std::string cell;
    int k = 0;
    while (std::getline(ls, cell, ',') && k < 12) {
      try {
        v[k++] = std::stod(cell);
      } catch (const std::exception&) {
        throw TraceError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
    }
    if (k != 12) throw TraceError(path.string() + ":" + std::to_string(lineno) + ": expected 12 columns");
    GazeSample s;
    s.timestamp = v[0];
    s.gaze = {v[1], v[2]};
    s.camera = {{v[3], v[4], v[5]}, {v[6], v[7], v[8]}, {v[9], v[10], v[11]}};
    trace.push_back(s);
  }
  if (trace.empty()) throw TraceError(path.string() + ": no samples");
  validate_trace(trace);
  return trace;
}

}  // namespace fovstream
