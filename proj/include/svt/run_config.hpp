#pragma once

#include <string>

#include "svt/config.hpp"
#include "svt/sampler.hpp"
#include "svt/train.hpp"

namespace svt {

// Everything a CLI run needs, loaded from a flat `key = value` document.
// Lines starting with '#' and blank lines are ignored.
//
// Geometry is resolved in a fixed order regardless of key order: variant,
// preset, frames/height/width and subscale select the default model; heads,
// head_dim, ffn_dim and layers reshape the default schedules; explicit
// encoder/decoder/first_decoder schedules replace them outright. Schedules
// are comma-separated `TxHxW:heads:head_dim:ffn_dim` entries.
struct RunConfig {
  Preset preset = Preset::kDesk;
  ModelConfig model;
  TrainConfig train;
  SampleConfig sample;
  std::string data;

  bool operator==(const RunConfig&) const = default;
};

// Throws ConfigError on unknown or repeated keys, malformed values and
// failed geometry checks.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

// Fully resolved document; parse_run_config(dump_run_config(c)) == c.
std::string dump_run_config(const RunConfig& config);

std::string format_schedule(const LayerSchedule& schedule);
LayerSchedule parse_schedule(const std::string& text);

}  // namespace svt
