#include "transweather/trainer.hpp"

#include <cmath>
#include <numeric>

#include "transweather/convert.hpp"
#include "transweather/error.hpp"
#include "transweather/metrics.hpp"

namespace tw {

PairedData load_paired_data(const std::filesystem::path& manifest) {
  PairedData data;
  for (const auto& row : read_manifest(manifest)) {
    auto clean = read_image(row.clean);
    auto degraded = read_image(row.degraded);
    if (clean.channels != 3 || !clean.same_dims(degraded)) {
      throw FormatError("pair " + row.clean.string() + " / " + row.degraded.string() +
                        " must be equally sized 3-channel images");
    }
    if (!data.clean.empty() && !clean.same_dims(data.clean.front())) {
      throw FormatError(row.clean.string() + ": all training images must share one size");
    }
    data.clean.push_back(std::move(clean));
    data.degraded.push_back(std::move(degraded));
    data.kinds.push_back(row.kind);
  }
  return data;
}

std::optional<std::string> first_non_finite_op(const Graph<float>& graph) {
  for (const auto& r : graph.records()) {
    for (float v : r.result->data) {
      if (!std::isfinite(v)) return std::string(r.op) + " (node " + std::to_string(r.output) + ")";
    }
  }
  return std::nullopt;
}

Trainer::Trainer(RunConfig config, PairedData data)
    : config_(std::move(config)),
      data_(std::move(data)),
      network_(config_.network),
      extractor_(config_.loss.extractor_seed),
      optimizer_(network_.parameters()) {
  config_.validate();
  if (data_.size() == 0) throw InputError("training set is empty");
  const auto held_out = static_cast<std::size_t>(std::floor(config_.val_fraction * static_cast<double>(data_.size())));
  train_rows_ = data_.size() - held_out;
  if (train_rows_ == 0) throw InputError("validation split leaves no training rows");
  const auto& img = data_.clean.front();
  network_.config().validate_input(img.height, img.width);
}

void Trainer::resume(const Checkpoint& checkpoint) {
  step_ = restore_checkpoint(checkpoint, network_.parameters(), &optimizer_);
}

std::uint64_t Trainer::steps_per_epoch() const {
  const std::size_t b = config_.schedule.batch_size;
  return (train_rows_ + b - 1) / b;
}

std::vector<std::size_t> Trainer::epoch_order(std::size_t epoch) const {
  if (epoch != cached_epoch_) {
    cached_order_.resize(train_rows_);
    std::iota(cached_order_.begin(), cached_order_.end(), std::size_t{0});
    Rng rng(derive_seed(config_.seed, 0x45504F43ULL + epoch));
    rng.shuffle(cached_order_.begin(), cached_order_.end());
    cached_epoch_ = epoch;
  }
  return cached_order_;
}

double Trainer::train_step() {
  if (step_ >= total_steps()) {
    throw ContractError("training already finished: step " + std::to_string(step_) + " of " +
                        std::to_string(total_steps()));
  }
  const std::uint64_t per_epoch = steps_per_epoch();
  const std::size_t epoch = step_ / per_epoch;
  const std::size_t batch = step_ % per_epoch;
  const auto order = epoch_order(epoch);
  const std::size_t bs = config_.schedule.batch_size;
  std::vector<const Image*> inputs, targets;
  for (std::size_t i = batch * bs; i < std::min(order.size(), (batch + 1) * bs); ++i) {
    inputs.push_back(&data_.degraded[order[i]]);
    targets.push_back(&data_.clean[order[i]]);
  }
  const auto x = images_to_tensor<float>(inputs);
  const auto y = images_to_tensor<float>(targets);

  auto& graph = Graph<float>::current();
  graph.clear();
  auto& store = network_.parameters();
  store.zero_grad();
  const auto pred = network_.restore(x);
  const auto loss = total_loss(pred, y, extractor_, config_.loss.lambda);
  const double value = loss.item();
  if (!std::isfinite(value)) {
    const auto culprit = first_non_finite_op(graph);
    graph.clear();
    throw NumericError("non-finite loss at step " + std::to_string(step_) + "; first non-finite tensor from " +
                       culprit.value_or("a parameter (no recorded op produced one)"));
  }
  backward(loss);
  clip_grad_norm(store, config_.effective_grad_clip());
  optimizer_.step(store, lr_at(epoch, config_.schedule));
  ++step_;
  return value;
}

double Trainer::mean_psnr(std::size_t begin, std::size_t end) const {
  if (begin >= end) return std::numeric_limits<double>::quiet_NaN();
  NoGradGuard no_grad;
  double total = 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    const auto out = network_.restore(image_to_tensor<float>(data_.degraded[i]));
    total += psnr(tensor_to_image(out), data_.clean[i]);
  }
  return total / static_cast<double>(end - begin);
}

TrainResult Trainer::run(std::uint64_t stop_at, std::ostream* log,
                         const std::optional<std::filesystem::path>& checkpoint_path) {
  TrainResult result;
  result.first_step = step_;
  const std::uint64_t end = std::min(stop_at, total_steps());
  const std::uint64_t per_epoch = steps_per_epoch();
  double epoch_loss = 0.0;
  std::size_t epoch_batches = 0;
  while (step_ < end) {
    const std::size_t epoch = step_ / per_epoch;
    const double loss = train_step();
    result.step_losses.push_back(loss);
    epoch_loss += loss;
    ++epoch_batches;
    if (step_ % per_epoch != 0) continue;
    if (log) {
      *log << "epoch\t" << epoch << "\tlr\t" << lr_at(epoch, config_.schedule) << "\tloss\t"
           << epoch_loss / static_cast<double>(epoch_batches);
      if (train_rows_ < data_.size()) *log << "\tval_psnr\t" << mean_psnr(train_rows_, data_.size());
      *log << '\n' << std::flush;
    }
    epoch_loss = 0.0;
    epoch_batches = 0;
    if (checkpoint_path && config_.checkpoint_every > 0 && (epoch + 1) % config_.checkpoint_every == 0) {
      save_checkpoint(*checkpoint_path, checkpoint());
    }
  }
  if (checkpoint_path) save_checkpoint(*checkpoint_path, checkpoint());
  result.last_step = step_;
  return result;
}

}  // namespace tw
