#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "transweather/checkpoint.hpp"
#include "transweather/degradation.hpp"
#include "transweather/losses.hpp"
#include "transweather/network.hpp"
#include "transweather/run_config.hpp"

namespace tw {

struct PairedData {
  std::vector<Image> clean;
  std::vector<Image> degraded;
  std::vector<WeatherKind> kinds;

  std::size_t size() const { return clean.size(); }
};

// Loads every manifest row; all images must be 3-channel and equally sized.
PairedData load_paired_data(const std::filesystem::path& manifest);

struct TrainResult {
  std::vector<double> step_losses;  // indexed from the first step of this run
  std::uint64_t first_step = 0;
  std::uint64_t last_step = 0;  // exclusive
};

// Op name of the first recorded tensor holding NaN/Inf, if any.
std::optional<std::string> first_non_finite_op(const Graph<float>& graph);

class Trainer {
 public:
  Trainer(RunConfig config, PairedData data);

  // Loads parameters, optimizer moments and the step counter.
  void resume(const Checkpoint& checkpoint);

  std::uint64_t steps_per_epoch() const;
  std::uint64_t total_steps() const { return steps_per_epoch() * config_.schedule.total_epochs; }
  std::uint64_t step() const { return step_; }

  // Trains until `stop_at` (absolute step, clamped to total_steps()). Writes
  // one tab-separated line per completed epoch to `log`, and checkpoints to
  // `checkpoint_path` every checkpoint_every epochs and at the end.
  TrainResult run(std::uint64_t stop_at = std::numeric_limits<std::uint64_t>::max(), std::ostream* log = nullptr,
                  const std::optional<std::filesystem::path>& checkpoint_path = std::nullopt);

  // Runs the next optimizer step; returns the loss before the update.
  double train_step();

  // Mean PSNR (dB, [0,1] images) of the network on rows [begin, end).
  double mean_psnr(std::size_t begin, std::size_t end) const;
  std::size_t train_rows() const { return train_rows_; }

  TransWeather<float>& network() { return network_; }
  const TransWeather<float>& network() const { return network_; }
  Adam& optimizer() { return optimizer_; }
  Checkpoint checkpoint() const { return make_checkpoint(network_.parameters(), &optimizer_, step_); }

 private:
  std::vector<std::size_t> epoch_order(std::size_t epoch) const;

  RunConfig config_;
  PairedData data_;
  std::size_t train_rows_ = 0;
  TransWeather<float> network_;
  FeatureExtractor<float> extractor_;
  Adam optimizer_;
  std::uint64_t step_ = 0;
  mutable std::size_t cached_epoch_ = std::numeric_limits<std::size_t>::max();
  mutable std::vector<std::size_t> cached_order_;
};

}  // namespace tw
