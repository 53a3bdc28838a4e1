#include "svt/run_config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace svt {

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "variant",       "preset",      "frames",        "height",       "width",          "channels",
      "subscale",      "kernel",      "embed_dim",     "hidden_dim",   "heads",          "head_dim",
      "ffn_dim",       "layers",      "encoder",       "decoder",      "first_decoder",  "first_slice_decoder",
      "masked_kernel", "aux_width",   "batch_size",    "steps",        "seed",           "prime_frames",
      "learning_rate", "decay",       "momentum",      "epsilon",      "checkpoint_every", "threads",
      "temperature",   "sample_seed", "num_samples",   "data"};
  return keys;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

template <typename I>
I parse_int(const std::string& key, const std::string& value) {
  I out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("'" + key + "' expects an integer, got '" + value + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("'" + key + "' expects a number, got '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true") return true;
  if (value == "false") return false;
  throw ConfigError("'" + key + "' expects true or false, got '" + value + "'");
}

Int3 parse_triple(const std::string& key, const std::string& value) {
  const auto parts = split(value, ',');
  if (parts.size() != 3) throw ConfigError("'" + key + "' expects three comma-separated integers");
  return {parse_int<int>(key, parts[0]), parse_int<int>(key, parts[1]), parse_int<int>(key, parts[2])};
}

std::string triple_str(int a, int b, int c) {
  return std::to_string(a) + "," + std::to_string(b) + "," + std::to_string(c);
}

std::string double_str(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string format_schedule(const LayerSchedule& schedule) {
  std::string out;
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    const auto& l = schedule[i];
    if (i) out += ", ";
    out += std::to_string(l.block.t) + "x" + std::to_string(l.block.h) + "x" + std::to_string(l.block.w) + ":" +
           std::to_string(l.heads) + ":" + std::to_string(l.head_dim) + ":" + std::to_string(l.ffn_dim);
  }
  return out;
}

LayerSchedule parse_schedule(const std::string& text) {
  LayerSchedule out;
  if (trim(text).empty()) return out;
  for (const auto& entry : split(text, ',')) {
    const auto fields = split(entry, ':');
    if (fields.size() != 4) throw ConfigError("schedule entry '" + entry + "' is not TxHxW:heads:head_dim:ffn_dim");
    const auto dims = split(fields[0], 'x');
    if (dims.size() != 3) throw ConfigError("block '" + fields[0] + "' is not TxHxW");
    LayerSpec l;
    l.block = {parse_int<int>("block", dims[0]), parse_int<int>("block", dims[1]), parse_int<int>("block", dims[2])};
    l.heads = parse_int<int>("heads", fields[1]);
    l.head_dim = parse_int<int>("head_dim", fields[2]);
    l.ffn_dim = parse_int<int>("ffn_dim", fields[3]);
    if (l.block.t < 1 || l.block.h < 1 || l.block.w < 1 || l.heads < 1 || l.head_dim < 1 || l.ffn_dim < 0) {
      throw ConfigError("schedule entry '" + entry + "' has non-positive extents");
    }
    out.push_back(l);
  }
  return out;
}

RunConfig parse_run_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (!known_keys().count(key)) throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    if (!kv.emplace(key, value).second) {
      throw ConfigError("line " + std::to_string(line_no) + ": repeated key '" + key + "'");
    }
  }
  auto get = [&kv](const std::string& key) -> const std::string* {
    auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };

  RunConfig rc;
  const Variant variant = get("variant") ? parse_variant(*get("variant")) : Variant::kSpatiotemporal;
  rc.preset = get("preset") ? parse_preset(*get("preset")) : Preset::kDesk;
  VideoShape video{4, 16, 16};
  if (auto v = get("frames")) video.t = parse_int<int>("frames", *v);
  if (auto v = get("height")) video.h = parse_int<int>("height", *v);
  if (auto v = get("width")) video.w = parse_int<int>("width", *v);
  if (video.t < 1 || video.h < 1 || video.w < 1) throw ConfigError("frames, height and width must be positive");
  std::optional<SubscaleFactor> subscale;
  if (auto v = get("subscale")) {
    const Int3 s = parse_triple("subscale", *v);
    subscale = SubscaleFactor{s[0], s[1], s[2]};
    validate(*subscale);
  }

  const bool explicit_encoder = get("encoder") != nullptr;
  const bool explicit_decoder = get("decoder") != nullptr;
  const bool explicit_first = get("first_decoder") != nullptr;
  rc.model = build_variant(variant, video, rc.preset, subscale);
  ModelConfig& m = rc.model;
  if (auto v = get("kernel")) m.kernel = parse_triple("kernel", *v);
  if (auto v = get("embed_dim")) m.embed_dim = parse_int<int>("embed_dim", *v);
  if (auto v = get("hidden_dim")) {
    const int old = m.hidden_dim;
    m.hidden_dim = parse_int<int>("hidden_dim", *v);
    for (auto* s : {&m.encoder, &m.decoder, &m.first_decoder}) {
      for (auto& l : *s) {
        if (l.ffn_dim == old) l.ffn_dim = m.hidden_dim;
      }
    }
  }
  for (auto* s : {&m.encoder, &m.decoder, &m.first_decoder}) {
    for (auto& l : *s) {
      if (auto v = get("heads")) l.heads = parse_int<int>("heads", *v);
      if (auto v = get("head_dim")) l.head_dim = parse_int<int>("head_dim", *v);
      if (auto v = get("ffn_dim")) l.ffn_dim = parse_int<int>("ffn_dim", *v);
    }
  }
  if (auto v = get("layers")) {
    const int n = parse_int<int>("layers", *v);
    if (n < 1) throw ConfigError("layers must be at least 1");
    for (auto* s : {&m.encoder, &m.decoder}) {
      LayerSchedule resized;
      for (int i = 0; i < n; ++i) resized.push_back((*s)[static_cast<std::size_t>(i) % s->size()]);
      *s = resized;
    }
    m.first_decoder = m.decoder;
    m.first_decoder.insert(m.first_decoder.end(), m.decoder.begin(), m.decoder.end());
  }
  if (explicit_encoder) m.encoder = parse_schedule(*get("encoder"));
  if (explicit_decoder) m.decoder = parse_schedule(*get("decoder"));
  if (explicit_first) m.first_decoder = parse_schedule(*get("first_decoder"));
  if (auto v = get("channels")) {
    if (*v == "rgb") {
      m.channels = rgb_categorical();
    } else if (*v == "gray") {
      m.channels = gray_deterministic();
    } else {
      throw ConfigError("channels expects rgb or gray, got '" + *v + "'");
    }
  }
  if (auto v = get("first_slice_decoder")) m.first_slice_decoder = parse_bool("first_slice_decoder", *v);
  if (auto v = get("masked_kernel")) m.masked_kernel = parse_int<int>("masked_kernel", *v);
  if (auto v = get("aux_width")) m.aux_width = parse_int<int>("aux_width", *v);
  m.validate();

  TrainConfig& t = rc.train;
  if (auto v = get("batch_size")) t.batch_size = parse_int<std::size_t>("batch_size", *v);
  if (auto v = get("steps")) t.steps = parse_int<std::size_t>("steps", *v);
  if (auto v = get("seed")) t.seed = parse_int<std::uint64_t>("seed", *v);
  if (auto v = get("prime_frames")) t.prime_frames = parse_int<int>("prime_frames", *v);
  if (auto v = get("learning_rate")) t.optimizer.learning_rate = parse_double("learning_rate", *v);
  if (auto v = get("decay")) t.optimizer.decay = parse_double("decay", *v);
  if (auto v = get("momentum")) t.optimizer.momentum = parse_double("momentum", *v);
  if (auto v = get("epsilon")) t.optimizer.epsilon = parse_double("epsilon", *v);
  if (auto v = get("checkpoint_every")) t.checkpoint_every = parse_int<std::size_t>("checkpoint_every", *v);
  if (auto v = get("threads")) t.threads = parse_int<int>("threads", *v);
  if (t.batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (t.threads < 1) throw ConfigError("threads must be at least 1");
  if (t.prime_frames < 0 || t.prime_frames >= m.video.t) throw ConfigError("prime_frames must lie in [0, frames)");

  SampleConfig& s = rc.sample;
  s.prime_frames = t.prime_frames;
  if (auto v = get("temperature")) s.temperature = parse_double("temperature", *v);
  if (auto v = get("sample_seed")) s.seed = parse_int<std::uint64_t>("sample_seed", *v);
  if (auto v = get("num_samples")) s.num_samples = parse_int<int>("num_samples", *v);
  check_temperature(s.temperature);
  if (s.num_samples < 1) throw ConfigError("num_samples must be at least 1");

  if (auto v = get("data")) rc.data = *v;
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(IoErrorKind::kOpen, "cannot open config '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str());
}

std::string dump_run_config(const RunConfig& c) {
  const ModelConfig& m = c.model;
  std::ostringstream out;
  out << "variant = " << to_string(m.variant) << "\n"
      << "preset = " << to_string(c.preset) << "\n"
      << "frames = " << m.video.t << "\n"
      << "height = " << m.video.h << "\n"
      << "width = " << m.video.w << "\n"
      << "channels = " << (m.channels.head == HeadKind::kCategorical ? "rgb" : "gray") << "\n"
      << "subscale = " << triple_str(m.subscale.t, m.subscale.h, m.subscale.w) << "\n"
      << "kernel = " << triple_str(m.kernel[0], m.kernel[1], m.kernel[2]) << "\n"
      << "embed_dim = " << m.embed_dim << "\n"
      << "hidden_dim = " << m.hidden_dim << "\n"
      << "encoder = " << format_schedule(m.encoder) << "\n"
      << "decoder = " << format_schedule(m.decoder) << "\n"
      << "first_slice_decoder = " << (m.first_slice_decoder ? "true" : "false") << "\n"
      << "first_decoder = " << format_schedule(m.first_decoder) << "\n"
      << "masked_kernel = " << m.masked_kernel << "\n"
      << "aux_width = " << m.aux_width << "\n"
      << "batch_size = " << c.train.batch_size << "\n"
      << "steps = " << c.train.steps << "\n"
      << "seed = " << c.train.seed << "\n"
      << "prime_frames = " << c.train.prime_frames << "\n"
      << "learning_rate = " << double_str(c.train.optimizer.learning_rate) << "\n"
      << "decay = " << double_str(c.train.optimizer.decay) << "\n"
      << "momentum = " << double_str(c.train.optimizer.momentum) << "\n"
      << "epsilon = " << double_str(c.train.optimizer.epsilon) << "\n"
      << "checkpoint_every = " << c.train.checkpoint_every << "\n"
      << "threads = " << c.train.threads << "\n"
      << "temperature = " << double_str(c.sample.temperature) << "\n"
      << "sample_seed = " << c.sample.seed << "\n"
      << "num_samples = " << c.sample.num_samples << "\n";
  if (!c.data.empty()) out << "data = " << c.data << "\n";
  return out.str();
}

}  // namespace svt
