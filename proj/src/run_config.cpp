#include "avlit/run_config.hpp"

#include <charconv>

#include "avlit/errors.hpp"
#include "avlit/wav.hpp"

namespace avlit {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::string real(double v) {
  char buf[64];
  return std::string(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
}

template <typename N>
N parse_number(const std::string& key, const std::string& value) {
  N out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (value.empty() || ec != std::errc() || ptr != end) throw ConfigError("invalid value for '" + key + "': '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("invalid value for '" + key + "': '" + value + "' (expected true or false)");
}

// Non-model keys. Returns false when the key is unknown.
bool set_run_entry(RunConfig& c, const std::string& key, const std::string& v) {
  auto& t = c.train;
  auto count = [&] { return parse_number<std::size_t>(key, v); };
  auto number = [&] { return parse_number<double>(key, v); };
  if (key == "epochs") t.epochs = count();
  else if (key == "batch_size") t.batch_size = count();
  else if (key == "lr") t.lr = number();
  else if (key == "weight_decay") t.weight_decay = number();
  else if (key == "schedule_period") t.schedule_period = count();
  else if (key == "train_seed") t.seed = parse_number<std::uint64_t>(key, v);
  else if (key == "pit") t.pit = parse_bool(key, v);
  else if (key == "grad_clip") t.grad_clip = number();
  else if (key == "ae_epochs") t.ae_epochs = count();
  else if (key == "ae_lr") t.ae_lr = number();
  else if (key == "ae_frames") t.ae_frames = count();
  else if (key == "ae_batch") t.ae_batch = count();
  else if (key == "audio_only") c.audio_only = parse_bool(key, v);
  else if (key == "items") c.items = count();
  else if (key == "duration") c.duration = number();
  else if (key == "speech_snr") c.speech_snr = parse_snr_range(v);
  else if (key == "noise_snr") c.noise_snr = parse_snr_range(v);
  else if (key == "noise") c.noise = parse_bool(key, v);
  else if (key == "synth_seed") c.synth_seed = parse_number<std::uint64_t>(key, v);
  else return false;
  return true;
}

}  // namespace

MixSpec RunConfig::mix_spec() const {
  MixSpec s;
  s.speakers = model.speakers;
  s.duration = duration;
  s.speech_snr = speech_snr;
  s.noise_snr = noise_snr;
  s.noise = noise;
  s.seed = synth_seed;
  s.format.sample_rate = model.sample_rate;
  s.format.fps = model.fps;
  s.format.frame_size = static_cast<std::uint32_t>(model.frame_height);
  return s;
}

ModelConfig RunConfig::effective_model() const {
  auto m = model;
  if (audio_only) m.fusion_positions.clear();
  return m;
}

TrainConfig RunConfig::effective_train() const {
  auto t = train;
  if (audio_only) t.pit = true;
  return t;
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (model.frame_height != model.frame_width) throw ConfigError("synthetic corpora need square frames");
  mix_spec().validate();
}

std::vector<ConfigEntry> parse_config_entries(const std::string& text) {
  std::vector<ConfigEntry> out;
  std::size_t lineno = 0, start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    start = end + 1;
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const auto where = "line " + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError("config " + where + ": expected 'key = value'");
    auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("config " + where + ": empty key");
    out.push_back({std::move(key), trim(line.substr(eq + 1)), where});
  }
  return out;
}

void apply_entries(RunConfig& config, const std::vector<ConfigEntry>& entries) {
  const ConfigEntry* fusion = nullptr;
  for (const auto& e : entries) {
    try {
      if (e.key == "fusion") {
        fusion = &e;
      } else if (e.key == "preset") {
        config.model = preset(e.value);  // resets every model key set before it
      } else if (!set_run_entry(config, e.key, e.value) && !set_config_entry(config.model, e.key, e.value)) {
        throw ConfigError("unknown key '" + e.key + "'");
      }
    } catch (const ConfigError& err) {
      throw ConfigError("config " + e.where + ": " + err.what());
    }
  }
  if (fusion) {
    try {
      config.model.fusion_positions = parse_fusion(fusion->value, std::max<std::size_t>(config.model.audio_iters, 1));
    } catch (const ConfigError& err) {
      throw ConfigError("config " + fusion->where + ": " + err.what());
    }
  }
}

std::vector<std::pair<std::string, std::string>> run_config_entries(const RunConfig& c) {
  auto out = config_entries(c.model);
  const auto& t = c.train;
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  std::vector<std::pair<std::string, std::string>> rest{
      {"epochs", std::to_string(t.epochs)},
      {"batch_size", std::to_string(t.batch_size)},
      {"lr", real(t.lr)},
      {"weight_decay", real(t.weight_decay)},
      {"schedule_period", std::to_string(t.schedule_period)},
      {"train_seed", std::to_string(t.seed)},
      {"pit", b(t.pit)},
      {"grad_clip", real(t.grad_clip)},
      {"ae_epochs", std::to_string(t.ae_epochs)},
      {"ae_lr", real(t.ae_lr)},
      {"ae_frames", std::to_string(t.ae_frames)},
      {"ae_batch", std::to_string(t.ae_batch)},
      {"audio_only", b(c.audio_only)},
      {"items", std::to_string(c.items)},
      {"duration", real(c.duration)},
      {"speech_snr", format_snr_range(c.speech_snr)},
      {"noise_snr", format_snr_range(c.noise_snr)},
      {"noise", b(c.noise)},
      {"synth_seed", std::to_string(c.synth_seed)},
  };
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

std::string run_config_to_text(const RunConfig& config) {
  std::string out;
  for (const auto& [k, v] : run_config_entries(config)) out += k + " = " + v + "\n";
  return out;
}

RunConfig run_config_from_text(const std::string& text) {
  RunConfig c;
  apply_entries(c, parse_config_entries(text));
  return c;
}

RunConfig load_run_config(const std::string& path) { return run_config_from_text(read_file(path)); }

}  // namespace avlit
