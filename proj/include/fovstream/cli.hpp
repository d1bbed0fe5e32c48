#pragma once

#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fovstream/errors.hpp"
#include "fovstream/netsim.hpp"
#include "fovstream/neural.hpp"

namespace fovstream {

inline constexpr int kOutputLayoutVersion = 1;

/// Everything a command needs, resolved from defaults, an optional --config file and flags
/// (later sources win). Echoed as <out>/config.json.
struct RunConfig {
  std::string command;
  std::string scene;
  std::string trace;
  std::string model;
  std::string dataset;
  std::string input;  // build: .pgm heightfield, .obj mesh or "terrain"
  uint64_t seed = 1;
  NetworkProfile profile;
  Backend backend = Backend::analytic;
  RetinaParams retina;
  DisplayParams display;
  PerceptionParams perception;
  BandSpec bands;
  RenderOptions render;
  TerrainParams terrain;
  int levels = 4;
  double heightfield_spacing = 1.0;
  TraceParams trace_params;
  int dataset_traces = 16;
  DatasetParams dataset_params;
  TrainParams train;
  double tick = kDefaultTick;
  double duration = 0.0;
  double quality_threshold = 0.5;
  bool stop_at_threshold = false;
  int64_t heatmap_tick = 0;
  int eval_timing_samples = 8;
};

nlohmann::json to_json(const RunConfig& c);
/// Overlays the keys present in `j` onto `c`.
void apply_json(const nlohmann::json& j, RunConfig& c);

/// Maps an exception to its documented exit code.
ExitCode exit_code_for(const std::exception& e);

/// Entry point of the fovstream command; returns the process exit code.
int run_cli(int argc, const char* const* argv);

}  // namespace fovstream
