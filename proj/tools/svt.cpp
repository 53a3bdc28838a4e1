// svt: data generation, training, evaluation, sampling and schedule analysis.

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "svt/connectivity.hpp"
#include "svt/data_io.hpp"
#include "svt/metrics.hpp"
#include "svt/run_config.hpp"

namespace {

using namespace svt;

const char* category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::kConfig: return "config";
    case ErrorCategory::kIo: return "io";
    case ErrorCategory::kNumeric: return "numeric";
  }
  return "unknown";
}

// --threads, then SVT_THREADS, then the config value.
int resolve_threads(std::optional<int> flag, int configured) {
  if (flag) return *flag;
  if (const char* env = std::getenv("SVT_THREADS"); env && *env) {
    try {
      return std::stoi(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("SVT_THREADS is not an integer: '") + env + "'");
    }
  }
  return configured;
}

struct GenDataArgs {
  std::string out;
  std::string preset = "sprites";
  std::uint64_t seed = 0;
  SpriteConfig sprites;
};

struct CommonArgs {
  std::string config;
  bool dump = false;
  std::optional<int> threads;
};

struct TrainArgs {
  CommonArgs common;
  std::string data, out_ckpt, log;
  std::optional<std::size_t> steps;
  bool resume = false;
};

struct EvalArgs {
  CommonArgs common;
  std::string ckpt, data, report;
  std::optional<int> prime;
};

struct SampleArgs {
  CommonArgs common;
  std::string ckpt, prime_video, out, ppm_prefix;
  std::optional<int> prime_frames, num_samples;
  std::optional<double> temperature;
  std::optional<std::uint64_t> seed;
  std::size_t video_index = 0;
};

struct AnalyzeArgs {
  CommonArgs common;
  std::string stack = "both";
  std::size_t max_blind = 10;
  std::optional<int> masked_kernel;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config, "Run configuration file (key = value)")->required();
  cmd->add_flag("--dump-config", a.dump, "Print the fully resolved configuration and exit");
  cmd->add_option("--threads", a.threads, "Worker threads (default: SVT_THREADS, then the config)")
      ->check(CLI::PositiveNumber);
}

// Loads the config; prints it and returns nullopt for --dump-config.
std::optional<RunConfig> load(const CommonArgs& a) {
  RunConfig rc = load_run_config(a.config);
  rc.train.threads = resolve_threads(a.threads, rc.train.threads);
  if (rc.train.threads < 1) throw ConfigError("thread count must be at least 1");
  if (a.dump) {
    std::cout << dump_run_config(rc);
    return std::nullopt;
  }
  return rc;
}

std::string require_data(const std::string& flag, const RunConfig& rc) {
  if (!flag.empty()) return flag;
  if (!rc.data.empty()) return rc.data;
  throw ConfigError("no dataset: pass --data or set 'data' in the config");
}

void run_gen_data(const GenDataArgs& a) {
  if (a.preset != "sprites") throw ConfigError("unknown data preset '" + a.preset + "'");
  if (a.sprites.channels != 1 && a.sprites.channels != 3) throw ConfigError("--channels must be 1 or 3");
  const auto videos = gen_sprites(a.sprites, a.seed);
  write_container(a.out, videos);
  std::cout << "wrote " << videos.size() << " videos to " << a.out << "\n";
}

void run_train(const TrainArgs& a) {
  auto rc = load(a.common);
  if (!rc) return;
  if (a.steps) rc->train.steps = *a.steps;
  const auto videos = read_container(require_data(a.data, *rc));
  Model model(rc->model);
  ParamStore<float> params = model.init_params(rc->train.seed);
  Trainer trainer(model, std::move(params), videos, rc->train);
  if (a.resume) trainer.resume(a.out_ckpt);
  std::ofstream log_file;
  if (!a.log.empty()) {
    log_file.open(a.log, a.resume ? std::ios::app : std::ios::trunc);
    if (!log_file) throw IoError(IoErrorKind::kOpen, "cannot open log '" + a.log + "'");
  }
  const auto records = run_training(trainer, a.out_ckpt, a.log.empty() ? &std::cout : &log_file);
  if (!records.empty()) {
    std::cerr << "step " << records.back().step << " bits/dim " << records.back().bits_per_dim << "\n";
  }
}

void run_eval(const EvalArgs& a) {
  auto rc = load(a.common);
  if (!rc) return;
  const int prime = a.prime.value_or(rc->train.prime_frames);
  const auto videos = read_container(require_data(a.data, *rc));
  Model model(rc->model);
  const auto params = read_checkpoint(a.ckpt);
  const EvalResult r = evaluate(model, params, videos, prime, rc->train.threads);
  std::string report = format_eval(r);
  if (r.head == HeadKind::kDeterministic && prime >= 1) {
    const EvalResult base = copy_last_frame_baseline(videos, rc->model.video.t, prime);
    char buf[96];
    std::snprintf(buf, sizeof buf, "copy_last_frame_nats_per_frame,%.17g\n", base.nats_per_frame);
    report += buf;
  }
  std::cout << report;
  if (!a.report.empty()) {
    std::ofstream out(a.report);
    if (!out) throw IoError(IoErrorKind::kOpen, "cannot open report '" + a.report + "'");
    out << report;
  }
}

void run_sample(const SampleArgs& a) {
  auto rc = load(a.common);
  if (!rc) return;
  SampleConfig cfg = rc->sample;
  if (a.prime_frames) cfg.prime_frames = *a.prime_frames;
  if (a.temperature) cfg.temperature = *a.temperature;
  if (a.seed) cfg.seed = *a.seed;
  if (a.num_samples) cfg.num_samples = *a.num_samples;
  check_temperature(cfg.temperature);
  if (cfg.num_samples < 1) throw ConfigError("--num-samples must be at least 1");
  Model model(rc->model);
  const auto params = read_checkpoint(a.ckpt);
  std::optional<Video> prime;
  if (!a.prime_video.empty()) {
    const auto videos = read_container(a.prime_video);
    if (a.video_index >= videos.size()) throw ConfigError("--video-index beyond the prime container");
    prime = videos[a.video_index];
  } else if (cfg.prime_frames > 0) {
    throw ConfigError("--prime-frames > 0 needs --prime-video");
  }
  const Video empty(rc->model.video, rc->model.channels.raw_channels);
  std::vector<Video> out;
  for (int i = 0; i < cfg.num_samples; ++i) {
    SampleConfig one = cfg;
    one.seed = cfg.seed + static_cast<std::uint64_t>(i);
    out.push_back(sample_video(model, params, prime ? *prime : empty, one).raw);
    if (!a.ppm_prefix.empty()) write_ppm_frames(a.ppm_prefix + std::to_string(i) + "_", out.back());
  }
  write_container(a.out, out);
  std::cout << "wrote " << out.size() << " samples to " << a.out << "\n";
}

void run_analyze(const AnalyzeArgs& a) {
  auto rc = load(a.common);
  if (!rc) return;
  const ModelConfig& m = rc->model;
  const VideoShape slice = m.slice();
  if (a.stack == "encoder" || a.stack == "both") {
    std::cout << format_encoder_report(slice, m.encoder, verify_encoder_connectivity(slice, m.encoder));
  }
  if (a.stack == "decoder" || a.stack == "both") {
    const auto report = analyze_decoder(slice, m.decoder, a.masked_kernel.value_or(m.masked_kernel));
    std::cout << format_decoder_report(report, find_blind_spots(report, a.max_blind));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Subscale video transformer: data generation, training, evaluation, sampling and analysis"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic bouncing-sprite dataset");
  gen_cmd->add_option("--out", gen.out, "Output container path")->required();
  gen_cmd->add_option("--preset", gen.preset, "Dataset generator")->check(CLI::IsMember({"sprites"}));
  gen_cmd->add_option("--seed", gen.seed, "Generator seed");
  gen_cmd->add_option("--videos", gen.sprites.videos, "Number of videos")->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--frames", gen.sprites.canvas.t, "Frames per video")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--height", gen.sprites.canvas.h, "Frame height")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--width", gen.sprites.canvas.w, "Frame width")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--channels", gen.sprites.channels, "1 (grayscale) or 3 (RGB)")->check(CLI::IsMember({1, 3}));
  gen_cmd->add_option("--sprites", gen.sprites.sprites, "Sprites per video")->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--sprite-size", gen.sprites.sprite_size, "Sprite edge length")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--max-speed", gen.sprites.max_speed, "Maximum per-axis speed in pixels per frame")
      ->check(CLI::NonNegativeNumber);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  add_common(train_cmd, train.common);
  train_cmd->add_option("--data", train.data, "Training container (default: config 'data')");
  train_cmd->add_option("--out-ckpt", train.out_ckpt, "Checkpoint path; optimizer state goes to <path>.opt")
      ->required();
  train_cmd->add_option("--steps", train.steps, "Total optimizer steps (overrides the config)");
  train_cmd->add_option("--log", train.log, "Metrics log path (default: stdout)");
  train_cmd->add_flag("--resume", train.resume, "Continue from --out-ckpt and its optimizer state");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Report bits/dim or nats/frame of a checkpoint");
  add_common(eval_cmd, eval.common);
  eval_cmd->add_option("--ckpt", eval.ckpt, "Checkpoint path")->required();
  eval_cmd->add_option("--data", eval.data, "Evaluation container (default: config 'data')");
  eval_cmd->add_option("--prime", eval.prime, "Primed frames excluded from the metric")
      ->check(CLI::NonNegativeNumber);
  eval_cmd->add_option("--report", eval.report, "Also write the CSV report here");

  SampleArgs sample;
  auto* sample_cmd = app.add_subcommand("sample", "Generate videos autoregressively");
  add_common(sample_cmd, sample.common);
  sample_cmd->add_option("--ckpt", sample.ckpt, "Checkpoint path")->required();
  sample_cmd->add_option("--prime-video", sample.prime_video, "Container holding the priming video");
  sample_cmd->add_option("--video-index", sample.video_index, "Video of --prime-video to prime from");
  sample_cmd->add_option("--prime-frames", sample.prime_frames, "Frames copied from the prime")
      ->check(CLI::NonNegativeNumber);
  sample_cmd->add_option("--temperature", sample.temperature, "Sampling temperature in (0, 2]");
  sample_cmd->add_option("--seed", sample.seed, "Sampling seed");
  sample_cmd->add_option("--num-samples", sample.num_samples, "Videos to generate (seeds seed, seed+1, ...)");
  sample_cmd->add_option("--out", sample.out, "Output container path")->required();
  sample_cmd->add_option("--ppm-prefix", sample.ppm_prefix, "Also write every frame as <prefix><i>_<t>.ppm");

  AnalyzeArgs analyze;
  auto* analyze_cmd = app.add_subcommand("analyze", "Connectivity report for the attention schedules");
  add_common(analyze_cmd, analyze.common);
  analyze_cmd->add_option("--stack", analyze.stack, "encoder, decoder or both")
      ->check(CLI::IsMember({"encoder", "decoder", "both"}));
  analyze_cmd->add_option("--max-blind", analyze.max_blind, "Blind-spot pairs to list, nearest first");
  analyze_cmd->add_option("--masked-kernel", analyze.masked_kernel, "Override the masked convolution size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ErrorCategory::kConfig);
  }

  try {
    if (*gen_cmd) run_gen_data(gen);
    if (*train_cmd) run_train(train);
    if (*eval_cmd) run_eval(eval);
    if (*sample_cmd) run_sample(sample);
    if (*analyze_cmd) run_analyze(analyze);
  } catch (const Error& e) {
    std::cerr << "error[" << category_name(e.category()) << "]: " << e.what() << "\n";
    return static_cast<int>(e.category());
  }
  return 0;
}
