#include "fovstream/cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "fovstream/image_io.hpp"
#include "fovstream/scheduler.hpp"

namespace fovstream {

// --- config ------------------------------------------------------------------------------

namespace {

template <typename T>
void opt(const nlohmann::json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) it->get_to(out);
}

nlohmann::json terrain_json(const TerrainParams& t) {
  return {{"coarse_cells", t.coarse_cells}, {"extent", t.extent}, {"relief", t.relief},
          {"texture", t.texture},           {"seed", t.seed}};
}

void apply_terrain(const nlohmann::json& j, TerrainParams& t) {
  opt(j, "coarse_cells", t.coarse_cells);
  opt(j, "extent", t.extent);
  opt(j, "relief", t.relief);
  opt(j, "texture", t.texture);
  opt(j, "seed", t.seed);
}

nlohmann::json train_json(const TrainParams& t) {
  return {{"hidden", t.hidden},
          {"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"learning_rate", t.learning_rate},
          {"momentum", t.momentum},
          {"held_out_sequence", t.held_out_sequence},
          {"reduction", t.reduction == LossReduction::sum       ? "sum"
                        : t.reduction == LossReduction::per_row ? "per_row"
                                                                : "per_element"},
          {"mask_empty_slots", t.mask_empty_slots},
          {"init_output_bias", t.init_output_bias}};
}

void apply_train(const nlohmann::json& j, TrainParams& t) {
  opt(j, "hidden", t.hidden);
  opt(j, "epochs", t.epochs);
  opt(j, "batch_size", t.batch_size);
  opt(j, "learning_rate", t.learning_rate);
  opt(j, "momentum", t.momentum);
  opt(j, "held_out_sequence", t.held_out_sequence);
  opt(j, "mask_empty_slots", t.mask_empty_slots);
  opt(j, "init_output_bias", t.init_output_bias);
  if (auto it = j.find("reduction"); it != j.end()) {
    const auto s = it->get<std::string>();
    if (s == "sum")
      t.reduction = LossReduction::sum;
    else if (s == "per_row")
      t.reduction = LossReduction::per_row;
    else if (s == "per_element")
      t.reduction = LossReduction::per_element;
    else
      throw ConfigError("train.reduction must be sum, per_row or per_element");
  }
}

}  // namespace

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["layout_version"] = kOutputLayoutVersion;
  j["command"] = c.command;
  j["scene"] = c.scene;
  j["trace"] = c.trace;
  j["model"] = c.model;
  j["dataset"] = c.dataset;
  j["input"] = c.input;
  j["seed"] = c.seed;
  j["profile"] = c.profile;
  j["backend"] = backend_name(c.backend);
  j["retina"] = c.retina;
  j["display"] = c.display;
  j["perception"] = c.perception;
  j["bands"] = {{"count", c.bands.count}, {"top_frequency", c.bands.top_frequency}};
  j["render"] = c.render;
  j["terrain"] = terrain_json(c.terrain);
  j["levels"] = c.levels;
  j["heightfield_spacing"] = c.heightfield_spacing;
  j["trace_params"] = c.trace_params;
  j["dataset_traces"] = c.dataset_traces;
  j["dataset_sample_rate"] = c.dataset_params.sample_rate;
  j["train"] = train_json(c.train);
  j["sim"] = {{"tick_s", c.tick},
              {"duration_s", c.duration},
              {"quality_threshold", c.quality_threshold},
              {"stop_at_threshold", c.stop_at_threshold}};
  j["heatmap_tick"] = c.heatmap_tick;
  j["eval_timing_samples"] = c.eval_timing_samples;
  return j;
}

void apply_json(const nlohmann::json& j, RunConfig& c) {
  try {
    opt(j, "command", c.command);
    opt(j, "scene", c.scene);
    opt(j, "trace", c.trace);
    opt(j, "model", c.model);
    opt(j, "dataset", c.dataset);
    opt(j, "input", c.input);
    opt(j, "seed", c.seed);
    if (auto it = j.find("profile"); it != j.end()) {
      if (it->is_string())
        c.profile = profile_preset(it->get<std::string>());
      else
        from_json(*it, c.profile);
    }
    if (auto it = j.find("backend"); it != j.end()) c.backend = parse_backend(it->get<std::string>());
    if (auto it = j.find("retina"); it != j.end()) from_json(*it, c.retina);
    if (auto it = j.find("display"); it != j.end()) from_json(*it, c.display);
    if (auto it = j.find("perception"); it != j.end()) from_json(*it, c.perception);
    if (auto it = j.find("bands"); it != j.end()) {
      opt(*it, "count", c.bands.count);
      opt(*it, "top_frequency", c.bands.top_frequency);
    }
    if (auto it = j.find("render"); it != j.end()) from_json(*it, c.render);
    if (auto it = j.find("terrain"); it != j.end()) apply_terrain(*it, c.terrain);
    opt(j, "levels", c.levels);
    opt(j, "heightfield_spacing", c.heightfield_spacing);
    if (auto it = j.find("trace_params"); it != j.end()) from_json(*it, c.trace_params);
    opt(j, "dataset_traces", c.dataset_traces);
    opt(j, "dataset_sample_rate", c.dataset_params.sample_rate);
    if (auto it = j.find("train"); it != j.end()) apply_train(*it, c.train);
    if (auto it = j.find("sim"); it != j.end()) {
      opt(*it, "tick_s", c.tick);
      opt(*it, "duration_s", c.duration);
      opt(*it, "quality_threshold", c.quality_threshold);
      opt(*it, "stop_at_threshold", c.stop_at_threshold);
    }
    opt(j, "heatmap_tick", c.heatmap_tick);
    opt(j, "eval_timing_samples", c.eval_timing_samples);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

ExitCode exit_code_for(const std::exception& e) {
  if (dynamic_cast<const CLI::Error*>(&e)) return ExitCode::usage;
  if (dynamic_cast<const ConfigError*>(&e)) return ExitCode::config;
  if (dynamic_cast<const IoError*>(&e)) return ExitCode::io;
  if (dynamic_cast<const AssetError*>(&e)) return ExitCode::asset;
  if (dynamic_cast<const TraceError*>(&e)) return ExitCode::trace;
  if (dynamic_cast<const ModelError*>(&e)) return ExitCode::model;
  if (dynamic_cast<const DatasetError*>(&e)) return ExitCode::dataset;
  if (dynamic_cast<const DomainError*>(&e)) return ExitCode::domain;
  if (dynamic_cast<const StalePlanError*>(&e)) return ExitCode::stale_plan;
  if (dynamic_cast<const TrainingError*>(&e)) return ExitCode::training;
  return ExitCode::internal;
}

// --- commands ------------------------------------------------------------------------------

namespace {

namespace fs = std::filesystem;

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void echo_config(const fs::path& out, const RunConfig& c) { write_json(out / "config.json", to_json(c)); }

std::string require(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigError(std::string("missing required ") + flag);
  return value;
}

SceneAsset load_scene_checked(const RunConfig& c) {
  const std::string path = require(c.scene, "--scene");
  if (!fs::exists(path)) throw IoError("scene file not found: " + path);
  return load_scene(path);
}

GazeTrace load_trace_checked(const RunConfig& c) {
  const std::string path = require(c.trace, "--trace");
  if (!fs::exists(path)) throw IoError("trace file not found: " + path);
  return read_trace_csv(path);
}

void cmd_build(const RunConfig& c, const fs::path& out) {
  SceneAsset asset;
  const std::string in = c.input.empty() ? "terrain" : c.input;
  if (in == "terrain") {
    TerrainParams t = c.terrain;
    t.levels = c.levels;
    asset = build_lod_ladder(generate_terrain(t), c.levels);
  } else {
    const fs::path p(in);
    if (!fs::exists(p)) throw IoError("input not found: " + in);
    const std::string ext = p.extension().string();
    try {
      if (ext == ".pgm")
        asset = build_lod_ladder(heightfield_from_pgm(p, c.heightfield_spacing, c.terrain.relief), c.levels);
      else if (ext == ".obj")
        asset = build_lod_ladder(read_obj(p), c.levels);
      else
        throw ConfigError("unsupported input '" + in + "' (expected .pgm, .obj or terrain)");
    } catch (const AssetError& e) {
      throw AssetError(in + ": " + e.what());
    }
  }
  save_scene(out / "scene.fvsc", asset);
  echo_config(out, c);
  std::cout << "scene: " << asset.units.size() << " units x " << asset.level_count << " levels, "
            << asset.total_bytes() << " bytes -> " << (out / "scene.fvsc").string() << '\n';
}

void cmd_gen_trace(const RunConfig& c, const fs::path& out) {
  TraceParams p = c.trace_params;
  p.seed = c.seed;
  const GazeTrace trace = generate_trace(p, c.display);
  std::ofstream f(out / "trace.csv");
  if (!f) throw IoError("cannot write trace");
  f << "# " << nlohmann::json(p).dump() << '\n';
  write_trace_csv(f, trace);
  echo_config(out, c);
  std::cout << "trace: " << trace.size() << " samples -> " << (out / "trace.csv").string() << '\n';
}

PerceptualModel make_model(const RunConfig& c) {
  c.retina.validate();
  c.display.validate();
  c.perception.validate();
  return PerceptualModel(c.retina, c.display, c.perception, c.bands);
}

void cmd_dataset(const RunConfig& c, const fs::path& out) {
  const SceneAsset asset = load_scene_checked(c);
  const PerceptualModel model = make_model(c);
  std::vector<GazeTrace> traces;
  if (!c.trace.empty()) {
    traces.push_back(load_trace_checked(c));
  } else {
    if (c.dataset_traces <= 0) throw ConfigError("dataset_traces must be > 0");
    for (int i = 0; i < c.dataset_traces; ++i) {
      TraceParams p = c.trace_params;
      p.seed = c.seed * 1000003ULL + uint64_t(i);
      traces.push_back(generate_trace(p, c.display));
    }
  }
  const Dataset d = generate_dataset(asset, traces, model, c.render, c.dataset_params);
  save_dataset(out / "dataset", d);
  echo_config(out, c);
  std::cout << "dataset: " << d.size() << " samples x " << d.slot_count << " slots -> "
            << (out / "dataset").string() << '\n';
}

void cmd_train(const RunConfig& c, const fs::path& out) {
  const Dataset d = load_dataset(require(c.dataset, "--dataset"));
  TrainParams p = c.train;
  p.seed = c.seed;
  TrainReport rep;
  const MlpModel m = train_model(d, p, &rep);
  m.save(out / "model.fvnn");
  write_json(out / "train_report.json", {{"epoch_loss", rep.epoch_loss},
                                         {"test_mae", rep.test_mae},
                                         {"test_relative_mse", rep.test_relative_mse},
                                         {"train_rows", rep.train_rows},
                                         {"test_rows", rep.test_rows}});
  write_json(out / "timing.json", {{"train_seconds", rep.seconds}});
  echo_config(out, c);
  std::printf("train: %zu rows, held-out MAE %.6f, relative MSE %.4f%% (%.1f s)\n", rep.train_rows, rep.test_mae,
              100.0 * rep.test_relative_mse, rep.seconds);
}

void cmd_eval(const RunConfig& c, const fs::path& out) {
  const std::string model_path = require(c.model, "--model");
  if (!fs::exists(model_path)) throw ModelError("model file not found: " + model_path);
  const MlpModel m = MlpModel::load(model_path);
  const Dataset d = load_dataset(require(c.dataset, "--dataset"));
  const int held = c.train.held_out_sequence >= 0 ? c.train.held_out_sequence
                                                  : *std::max_element(d.sequence.begin(), d.sequence.end());
  const auto rows = d.rows(held, true);
  const EvalReport rep = evaluate_model(m, d, rows);

  // Per-slot relative error over the held-out rows.
  const size_t slots = size_t(d.slot_count);
  std::vector<double> err(slots, 0.0), ref(slots, 0.0);
  for (size_t r : rows) {
    FeatureVector f;
    for (int i = 0; i < kFeatureDim; ++i) f[i] = d.features[r * kFeatureDim + i];
    const auto pred = m.predict(f);
    for (size_t s = 0; s < slots; ++s) {
      const double a = d.sensitivities[r * slots + s];
      const double e = m.normalizer.denormalize(pred[s], d.pixel_counts[r * slots + s]) - a;
      err[s] += e * e;
      ref[s] += a * a;
    }
  }
  std::ofstream csv(out / "eval_slots.csv");
  csv << "slot,unit,level,sq_error,sq_reference,relative_mse\n";
  for (size_t s = 0; s < slots; ++s) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%.17g,%.17g,%.17g\n", s, s / size_t(d.level_count - 1),
                  s % size_t(d.level_count - 1), err[s], ref[s], ref[s] > 0.0 ? err[s] / ref[s] : 0.0);
    csv << buf;
  }
  write_json(out / "eval.json", {{"held_out_sequence", held},
                                 {"rows", rep.rows},
                                 {"mae", rep.mae},
                                 {"relative_mse", rep.relative_mse}});

  nlohmann::json timing{{"samples", 0}};
  if (!c.scene.empty() && c.eval_timing_samples > 0 && !rows.empty()) {
    const SceneAsset asset = load_scene_checked(c);
    if (scene_hash(asset) != m.scene_hash) throw ModelError("model was trained for a different scene");
    const PerceptualModel pm = make_model(c);
    const size_t n = std::min(rows.size(), size_t(c.eval_timing_samples));
    double analytic = 0.0, neural = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const size_t r = rows[i * rows.size() / n];
      FeatureVector f;
      for (int k = 0; k < kFeatureDim; ++k) f[k] = d.features[r * kFeatureDim + k];
      GazeSample s;
      s.camera = {{f[0], f[1], f[2]}, {f[3], f[4], f[5]}, {f[6], f[7], f[8]}};
      s.gaze = pm.display().screen_to_degrees(f[9] * pm.width(), f[10] * pm.height());
      const GazeState st{d.saccade[r] ? GazeMode::saccade : GazeMode::fixation, 0.0};
      const auto t0 = std::chrono::steady_clock::now();
      const SlotSweep sweep = analytic_slot_sweep(pm, asset, c.render, s, st);
      const auto t1 = std::chrono::steady_clock::now();
      const auto pred = m.predict(f);
      const auto t2 = std::chrono::steady_clock::now();
      analytic += std::chrono::duration<double>(t1 - t0).count();
      neural += std::chrono::duration<double>(t2 - t1).count();
      (void)sweep;
      (void)pred;
    }
    timing = {{"samples", n},
              {"analytic_ms", 1e3 * analytic / double(n)},
              {"neural_ms", 1e3 * neural / double(n)},
              {"speedup", analytic / neural}};
  }
  write_json(out / "timing.json", timing);
  echo_config(out, c);
  std::printf("eval: %zu held-out rows, MAE %.6f, relative MSE %.4f%%\n", rep.rows, rep.mae, 100.0 * rep.relative_mse);
  if (timing.contains("speedup"))
    std::printf("timing: analytic %.2f ms, neural %.2f ms per sample (%.1fx)\n", timing["analytic_ms"].get<double>(),
                timing["neural_ms"].get<double>(), timing["speedup"].get<double>());
}

SimConfig sim_config(const RunConfig& c) {
  SimConfig s;
  s.profile = c.profile;
  s.retina = c.retina;
  s.display = c.display;
  s.perception = c.perception;
  s.bands = c.bands;
  s.render = c.render;
  s.backend = c.backend;
  s.tick = c.tick;
  s.duration = c.duration;
  s.quality_threshold = c.quality_threshold;
  s.stop_at_threshold = c.stop_at_threshold;
  return s;
}

void cmd_simulate(const RunConfig& c, const fs::path& out) {
  const SceneAsset asset = load_scene_checked(c);
  const GazeTrace trace = load_trace_checked(c);
  SimConfig s = sim_config(c);
  std::optional<MlpModel> model;
  if (c.backend == Backend::neural) {
    const std::string path = require(c.model, "--model");
    if (!fs::exists(path)) throw ModelError("model file not found: " + path);
    model = MlpModel::load(path);
    s.model = &*model;
  }
  const SessionTimeline tl = simulate_session(trace, asset, s);
  const nlohmann::json config = to_json(c);
  {
    std::ofstream f(out / "timeline.csv");
    f << "# " << config.dump() << '\n';
    write_timeline_csv(f, tl);
  }
  {
    std::ofstream f(out / "plans.csv");
    write_plan_log_header(f);
    for (size_t t = 0; t < tl.plans.size(); ++t) append_plan_log(f, int64_t(t), tl.plans[t]);
  }
  nlohmann::json summary = summary_json(tl.summary);
  summary["backend"] = backend_name(c.backend);
  summary["profile"] = c.profile.name;
  std::vector<double> curve;
  for (const auto& r : tl.ticks) curve.push_back(r.quality);
  summary["quality_curve"] = curve;
  write_json(out / "summary.json", summary);
  echo_config(out, c);
  std::printf("simulate[%s, %s]: %lld ticks, %llu bytes sent, popping %.3f, time-to-threshold %s\n",
              backend_name(c.backend).c_str(), c.profile.name.c_str(), (long long)tl.summary.ticks,
              (unsigned long long)tl.summary.bytes_sent, tl.summary.popping_tally,
              tl.summary.time_to_threshold ? (std::to_string(*tl.summary.time_to_threshold) + " s").c_str() : "never");
}

void cmd_heatmap(const RunConfig& c, const fs::path& out) {
  const SceneAsset asset = load_scene_checked(c);
  const GazeTrace trace = load_trace_checked(c);
  if (c.heatmap_tick < 0) throw ConfigError("heatmap tick must be >= 0");
  SimConfig s = sim_config(c);
  s.duration = double(c.heatmap_tick) * c.tick;
  s.stop_at_threshold = false;
  s.record_states = true;
  s.track_popping = false;
  if (c.backend == Backend::neural) s.backend = Backend::analytic;
  const SessionTimeline tl = simulate_session(trace, asset, s);
  const int64_t tick = std::min<int64_t>(c.heatmap_tick, int64_t(tl.edge_states.size()) - 1);
  const LoDState after = tl.edge_states[size_t(tick)];
  const LoDState before = tick > 0 ? tl.edge_states[size_t(tick - 1)] : after;
  const GazeSample& g = trace[sample_index_at(trace, trace.front().timestamp + double(tick) * c.tick)];

  const PerceptualModel model = make_model(c);
  const SceneRenderer renderer(asset, c.display, g.camera, c.render);
  const Frame f0 = renderer.render(before), f1 = renderer.render(after);
  const BandSet b0 = model.decompose(f0.luminance), b1 = model.decompose(f1.luminance);
  const auto e = model.static_field(g.gaze);
  const auto p = model.popping_field(g.gaze, b0, b1);
  const auto fa = model.adaptive_importance(g.gaze, {GazeMode::fixation, 0.0}, b0, b1);
  const auto sa = model.adaptive_importance(g.gaze, {GazeMode::saccade, 0.0}, b0, b1);
  const int w = c.display.width, h = c.display.height;
  write_pgm(out / "frame.pgm", f1.luminance);
  write_pgm(out / "E.pgm", e, w, h);
  const double pmax = *std::max_element(p.begin(), p.end());
  write_pgm(out / "P.pgm", p, w, h, 0.0, pmax > 0.0 ? pmax : 1.0);
  write_pgm(out / "fixation_A.pgm", fa.values, w, h);
  const double smax = *std::max_element(sa.values.begin(), sa.values.end());
  write_pgm(out / "saccade_A.pgm", sa.values, w, h, 0.0, smax > 0.0 ? smax : 1.0);
  const ImportanceBounds bnd = model.bounds();
  write_json(out / "heatmap.json", {{"tick", tick},
                                    {"gaze_deg", {g.gaze.x, g.gaze.y}},
                                    {"gaze_px", {0.5 * w + g.gaze.x * c.display.pixels_per_degree,
                                                 0.5 * h - g.gaze.y * c.display.pixels_per_degree}},
                                    {"popping_max", pmax},
                                    {"bounds", {{"norm_lo", bnd.norm_lo}, {"norm_hi", bnd.norm_hi}}}});
  echo_config(out, c);
  std::cout << "heatmap: tick " << tick << " -> " << out.string() << '\n';
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"fovstream: gaze-contingent progressive asset streaming simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "fovstream 1.0");

  std::string config_path, out_dir = "out", profile_arg, backend_arg;
  std::optional<std::string> scene, trace, model, dataset, input;
  std::optional<uint64_t> seed;
  std::optional<double> lambda, omega, pedestal, latency_ms, bandwidth_mbps, packet_kb, duration, tick_s, threshold;
  std::optional<int> bands, levels, epochs, traces, heat_tick;
  bool stop = false, static_camera = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run config (e.g. an echoed config.json)");
    sub->add_option("--out", out_dir, "output directory (overridden by FOVSTREAM_OUT)");
    sub->add_option("--seed", seed, "seed");
  };
  auto perception = [&](CLI::App* sub) {
    sub->add_option("--lambda", lambda, "popping weight");
    sub->add_option("--omega", omega, "Weber offset");
    sub->add_option("--pedestal", pedestal, "static importance pedestal");
    sub->add_option("--bands", bands, "number of octave bands");
  };

  auto* build = app.add_subcommand("build", "build a LoD scene from a heightfield, mesh or the built-in terrain");
  common(build);
  build->add_option("--input", input, "heightfield .pgm, .obj mesh or 'terrain'");
  build->add_option("--levels", levels, "LoD levels");

  auto* gen = app.add_subcommand("gen-trace", "synthesize a gaze and camera trace");
  common(gen);
  gen->add_option("--duration", duration, "seconds");
  gen->add_flag("--static-camera", static_camera, "keep the camera still");

  auto* data = app.add_subcommand("dataset", "compute analytic training targets");
  common(data);
  perception(data);
  data->add_option("--scene", scene, "scene file");
  data->add_option("--trace", trace, "single trace (default: synthesize --traces traces)");
  data->add_option("--traces", traces, "number of synthesized traces");

  auto* train = app.add_subcommand("train", "train the neural surrogate");
  common(train);
  train->add_option("--dataset", dataset, "dataset directory");
  train->add_option("--epochs", epochs, "epochs");

  auto* eval = app.add_subcommand("eval", "held-out error and timing of a trained model");
  common(eval);
  perception(eval);
  eval->add_option("--model", model, "model file");
  eval->add_option("--dataset", dataset, "dataset directory");
  eval->add_option("--scene", scene, "scene file (enables timing)");

  auto* sim = app.add_subcommand("simulate", "replay a session through the simulated network");
  common(sim);
  perception(sim);
  sim->add_option("--scene", scene, "scene file");
  sim->add_option("--trace", trace, "trace CSV");
  sim->add_option("--profile", profile_arg, "3g | 4g | 5g | inf | profile JSON file");
  sim->add_option("--backend", backend_arg, "analytic | neural | uniform | ecc-only");
  sim->add_option("--model", model, "model file (neural backend)");
  sim->add_option("--latency-ms", latency_ms, "uplink latency");
  sim->add_option("--bandwidth-mbps", bandwidth_mbps, "bandwidth override");
  sim->add_option("--packet-kb", packet_kb, "packet size");
  sim->add_option("--duration", duration, "seconds of the trace to replay");
  sim->add_option("--tick", tick_s, "tick length, s");
  sim->add_option("--threshold", threshold, "quality threshold as a fraction of the initial deficit");
  sim->add_flag("--stop-at-threshold", stop, "end the run once the threshold is reached");

  auto* heat = app.add_subcommand("heatmap", "export E, P and adaptive importance images for one tick");
  common(heat);
  perception(heat);
  heat->add_option("--scene", scene, "scene file");
  heat->add_option("--trace", trace, "trace CSV");
  heat->add_option("--profile", profile_arg, "network profile");
  heat->add_option("--backend", backend_arg, "planner backend used to reach the tick");
  heat->add_option("--tick", heat_tick, "tick index");

  try {
    app.parse(argc, argv);
    CLI::App* cmd = app.get_subcommands().front();

    RunConfig c;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw IoError("cannot open config " + config_path);
      nlohmann::json j;
      try {
        in >> j;
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(config_path + ": " + e.what());
      }
      apply_json(j, c);
    }
    c.command = cmd->get_name();
    if (scene) c.scene = *scene;
    if (trace) c.trace = *trace;
    if (model) c.model = *model;
    if (dataset) c.dataset = *dataset;
    if (input) c.input = *input;
    if (seed) c.seed = *seed;
    if (!profile_arg.empty())
      c.profile = fs::exists(profile_arg) ? load_profile(profile_arg) : profile_preset(profile_arg);
    if (!backend_arg.empty()) c.backend = parse_backend(backend_arg);
    if (lambda) c.perception.lambda = *lambda;
    if (omega) c.perception.omega = *omega;
    if (pedestal) c.perception.pedestal = *pedestal;
    if (bands) c.bands.count = *bands;
    if (latency_ms) c.profile.uplink_latency_s = *latency_ms * 1e-3;
    if (bandwidth_mbps) c.profile.bandwidth_bps = *bandwidth_mbps * units::kMbps;
    if (packet_kb) c.profile.packet_size = uint64_t(std::llround(*packet_kb * units::kKB));
    if (levels) c.levels = *levels;
    if (epochs) c.train.epochs = *epochs;
    if (traces) c.dataset_traces = *traces;
    if (heat_tick) c.heatmap_tick = *heat_tick;
    if (tick_s) c.tick = *tick_s;
    if (threshold) c.quality_threshold = *threshold;
    if (stop) c.stop_at_threshold = true;
    if (static_camera) c.trace_params.static_camera = true;
    if (duration) {
      if (c.command == "gen-trace")
        c.trace_params.duration = *duration;
      else
        c.duration = *duration;
    }
    c.profile.validate();
    c.perception.validate();

    fs::path out = out_dir;
    if (const char* env = std::getenv("FOVSTREAM_OUT"); env && *env) out = env;
    fs::create_directories(out);

    if (c.command == "build")
      cmd_build(c, out);
    else if (c.command == "gen-trace")
      cmd_gen_trace(c, out);
    else if (c.command == "dataset")
      cmd_dataset(c, out);
    else if (c.command == "train")
      cmd_train(c, out);
    else if (c.command == "eval")
      cmd_eval(c, out);
    else if (c.command == "simulate")
      cmd_simulate(c, out);
    else if (c.command == "heatmap")
      cmd_heatmap(c, out);
    return 0;
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : int(ExitCode::usage);
  } catch (const std::exception& e) {
    std::cerr << "fovstream: error: " << e.what() << '\n';
    return int(exit_code_for(e));
  }
}

}  // namespace fovstream
