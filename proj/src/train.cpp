#include "svt/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <thread>

namespace svt {

namespace {

struct ElementResult {
  ParamStore<float> grads;
  double nats = 0.0;
  std::size_t pixels = 0;
};

std::mt19937_64 crop_rng(std::uint64_t seed, std::size_t step, std::size_t element) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32),
                    static_cast<std::uint32_t>(element)};
  return std::mt19937_64(seq);
}

}  // namespace

std::string format_record(const StepRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu %.17g %zu %.17g %.3f", r.step, r.nats, r.dims, r.bits_per_dim, r.wall_ms);
  return buf;
}

std::string optimizer_path(const std::string& checkpoint_path) { return checkpoint_path + ".opt"; }

Trainer::Trainer(Model model, ParamStore<float> params, std::vector<Video> videos, TrainConfig config,
                 std::vector<AuxTrack> aux)
    : model_(std::move(model)),
      params_(std::move(params)),
      videos_(std::move(videos)),
      config_(config),
      aux_(std::move(aux)),
      optimizer_(config.optimizer),
      stream_(videos_.size(), model_.config().subscale, config.batch_size, config.seed) {
  const auto& mc = model_.config();
  if (config_.threads < 1) throw ConfigError("thread count must be at least 1");
  if (config_.prime_frames < 0 || config_.prime_frames >= mc.video.t) {
    throw ConfigError("prime frame count must lie in [0, T)");
  }
  if (!aux_.empty() && aux_.size() != videos_.size()) throw ConfigError("one aux track per video required");
  for (const auto& v : videos_) {
    if (v.channels() != mc.channels.raw_channels || v.height() != mc.video.h || v.width() != mc.video.w ||
        v.frames() < mc.video.t) {
      throw DimensionError("training video " + std::to_string(v.frames()) + "x" + std::to_string(v.height()) + "x" +
                           std::to_string(v.width()) + "x" + std::to_string(v.channels()) +
                           " does not fit the model geometry");
    }
  }
}

StepRecord Trainer::step() {
  const auto start = std::chrono::steady_clock::now();
  const auto& mc = model_.config();
  const std::size_t step_index = steps_done();
  const std::vector<SliceRef> batch = stream_.next();
  std::vector<ElementResult> results(batch.size());

  auto run_element = [&](std::size_t i) {
    const SliceRef& ref = batch[i];
    auto rng = crop_rng(config_.seed, step_index, i);
    const Video& source = videos_[ref.video];
    const Video split = split_video(random_temporal_crop(source, mc.video.t, rng));
    const AuxTrack* aux = aux_.empty() ? nullptr : &aux_[ref.video];
    Tape<float> tape;
    ParamBinder<float> bind(tape, params_, true);
    const SliceLoss<float> loss = model_.slice_loss(bind, split, ref.slice, config_.prime_frames, aux);
    tape.backward(loss.loss);
    bind.accumulate_grads(results[i].grads);
    results[i].nats = loss.nats;
    results[i].pixels = loss.pixels;
  };

  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(config_.threads), batch.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < batch.size(); ++i) run_element(i);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < batch.size(); i += workers) run_element(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  StepRecord record;
  ParamStore<float> grads = params_.zeros_like();
  const float inv_batch = 1.0f / static_cast<float>(batch.size());
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (!std::isfinite(results[i].nats)) {
      throw NumericError("non-finite loss at step " + std::to_string(step_index + 1) + " (video " +
                         std::to_string(batch[i].video) + ", slice " + batch[i].slice.str() + ")");
    }
    record.nats += results[i].nats;
    record.dims += results[i].pixels * static_cast<std::size_t>(mc.channels.raw_channels);
    for (const auto& [name, g] : results[i].grads) {
      auto& dst = grads.at(name);
      for (std::size_t k = 0; k < g.size(); ++k) dst[k] += g[k] * inv_batch;
    }
  }
  optimizer_.step(params_, grads);

  record.step = steps_done();
  record.bits_per_dim = record.dims ? record.nats / (std::log(2.0) * static_cast<double>(record.dims)) : 0.0;
  record.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return record;
}

void Trainer::save(const std::string& path) const {
  write_checkpoint(path, params_);
  ParamStore<float> state;
  for (const auto& [name, v] : optimizer_.accumulators()) state.set("acc/" + name, v);
  for (const auto& [name, v] : optimizer_.momentum()) state.set("mom/" + name, v);
  const std::uint64_t steps = optimizer_.steps();
  NdArray<float> counter({2});
  counter[0] = static_cast<float>(steps & 0xFFFF);
  counter[1] = static_cast<float>(steps >> 16);
  state.set("steps", counter);
  write_checkpoint(optimizer_path(path), state);
}

void Trainer::resume(const std::string& path) {
  ParamStore<float> params = read_checkpoint(path);
  for (const auto& [name, v] : params_) {
    if (!params.contains(name) || params.at(name).shape() != v.shape()) {
      throw DimensionError("checkpoint does not match the model: parameter '" + name + "'");
    }
  }
  const ParamStore<float> state = read_checkpoint(optimizer_path(path));
  RmsProp<float> optimizer(config_.optimizer);
  for (const auto& [key, v] : state) {
    if (key.rfind("acc/", 0) == 0) {
      optimizer.accumulators().set(key.substr(4), v);
    } else if (key.rfind("mom/", 0) == 0) {
      optimizer.momentum().set(key.substr(4), v);
    }
  }
  const auto& counter = state.at("steps");
  const std::uint64_t steps =
      static_cast<std::uint64_t>(counter[0]) | (static_cast<std::uint64_t>(counter[1]) << 16);
  optimizer.set_steps(steps);
  params_ = std::move(params);
  optimizer_ = std::move(optimizer);
  stream_ = BatchStream(videos_.size(), model_.config().subscale, config_.batch_size, config_.seed);
  stream_.skip(static_cast<std::size_t>(steps));
}

std::vector<StepRecord> run_training(Trainer& trainer, const std::string& checkpoint_path, std::ostream* log,
                                     const std::function<bool(const StepRecord&)>& stop) {
  std::vector<StepRecord> records;
  const std::size_t every = trainer.config().checkpoint_every;
  while (trainer.steps_done() < trainer.config().steps) {
    const StepRecord r = trainer.step();
    records.push_back(r);
    if (log) *log << format_record(r) << '\n' << std::flush;
    const bool done = stop && stop(r);
    if (!checkpoint_path.empty() && every > 0 && r.step % every == 0) trainer.save(checkpoint_path);
    if (done) break;
  }
  if (!checkpoint_path.empty()) trainer.save(checkpoint_path);
  return records;
}

}  // namespace svt
