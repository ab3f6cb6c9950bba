#pragma once

// Plain-text run configuration: one `key = value` per line, '#' comments.
// Unknown keys are rejected; every key has a default (see config_keys()).

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "transweather/degradation.hpp"
#include "transweather/losses.hpp"
#include "transweather/network_config.hpp"
#include "transweather/optim.hpp"

namespace tw {

struct RunConfig {
  NetworkConfig network;
  LossConfig loss;
  Schedule schedule;
  DatasetOptions data;
  std::string mix = "uniform";
  // Global-norm gradient clipping; 0 disables.
  double grad_clip = 1.0;
  // Disables the additions that have no counterpart in the original recipe (clipping).
  bool paper_faithful = false;
  // Trailing fraction of manifest rows held out for validation.
  double val_fraction = 0.125;
  // Save a checkpoint every N epochs during training (0: only at the end).
  std::size_t checkpoint_every = 0;
  std::uint64_t seed = 0;

  // Seeds the network init, data order and generator from one value.
  void set_seed(std::uint64_t s);
  double effective_grad_clip() const { return paper_faithful ? 0.0 : grad_clip; }
  void validate() const;
};

struct ConfigKey {
  std::string name;
  std::string help;
};

const std::vector<ConfigKey>& config_keys();

// Applies `key = value` lines on top of `base`. Throws ConfigError naming the
// line for unknown keys and malformed values.
RunConfig parse_run_config(std::string_view text, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& config, const std::string& key);

// Every key with its current value; parse_run_config(to_text(c)) == c.
std::string to_text(const RunConfig& config);

}  // namespace tw
