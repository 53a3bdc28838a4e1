#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "svt/model.hpp"
#include "svt/optim.hpp"

namespace svt {

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t steps = 1000;
  std::uint64_t seed = 0;
  int prime_frames = 1;
  RmsPropConfig optimizer;
  // Checkpoint every N steps; 0 writes only the final checkpoint.
  std::size_t checkpoint_every = 0;
  int threads = 1;
  bool operator==(const TrainConfig& o) const {
    return batch_size == o.batch_size && steps == o.steps && seed == o.seed && prime_frames == o.prime_frames &&
           optimizer.learning_rate == o.optimizer.learning_rate && optimizer.decay == o.optimizer.decay &&
           optimizer.momentum == o.optimizer.momentum && optimizer.epsilon == o.optimizer.epsilon &&
           checkpoint_every == o.checkpoint_every && threads == o.threads;
  }
};

struct StepRecord {
  std::size_t step = 0;  // 1-based count of completed optimizer steps
  double nats = 0.0;     // summed over the batch
  std::size_t dims = 0;  // raw channel values counted in `nats`
  double bits_per_dim = 0.0;
  double wall_ms = 0.0;
};

// "step nats dims bits/dim wall-ms"; nats and bits/dim are printed with full
// round-trip precision.
std::string format_record(const StepRecord& r);

// Optimizer state file written next to a checkpoint.
std::string optimizer_path(const std::string& checkpoint_path);

class Trainer {
 public:
  // `videos` are raw (C = 1 or 3) and at least config().video.t frames long;
  // `aux` is empty or one track per video.
  Trainer(Model model, ParamStore<float> params, std::vector<Video> videos, TrainConfig config,
          std::vector<AuxTrack> aux = {});

  // One optimizer step over the next batch. Throws NumericError on a
  // non-finite loss. Gradients are reduced in batch order, so the result does
  // not depend on the thread count.
  StepRecord step();

  const Model& model() const noexcept { return model_; }
  const ParamStore<float>& params() const noexcept { return params_; }
  const RmsProp<float>& optimizer() const noexcept { return optimizer_; }
  const TrainConfig& config() const noexcept { return config_; }
  std::size_t steps_done() const noexcept { return static_cast<std::size_t>(optimizer_.steps()); }

  // Writes the parameters to `path` and the optimizer state to
  // optimizer_path(path).
  void save(const std::string& path) const;
  // Restores parameters and optimizer state and advances the batch stream to
  // the saved step.
  void resume(const std::string& path);

 private:
  Model model_;
  ParamStore<float> params_;
  std::vector<Video> videos_;
  TrainConfig config_;
  std::vector<AuxTrack> aux_;
  RmsProp<float> optimizer_;
  BatchStream stream_;
};

// Runs `config().steps - steps_done()` steps, appending a record per step to
// `log` and checkpointing to `checkpoint_path` (if non-empty) at the
// configured cadence and at the end. `stop` ends training early when it
// returns true.
std::vector<StepRecord> run_training(Trainer& trainer, const std::string& checkpoint_path, std::ostream* log,
                                     const std::function<bool(const StepRecord&)>& stop = {});

}  // namespace svt
