#pragma once

#include <stdexcept>
#include <string>

namespace fovstream {

// Each error class maps to a distinct CLI exit code (see exit_code()).

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct AssetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TraceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StalePlanError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ExitCode : int {
  ok = 0,
  usage = 1,
  config = 2,
  io = 3,
  asset = 4,
  trace = 5,
  model = 6,
  dataset = 7,
  domain = 8,
  stale_plan = 9,
  training = 10,
  internal = 70,
};

}  // namespace fovstream
