#include "avlit/corpus.hpp"

#include <charconv>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "avlit/errors.hpp"
#include "avlit/wav.hpp"

namespace fs = std::filesystem;

namespace avlit {

namespace {

std::string shortest(double v) {
  char buf[32];
  return std::string(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
}

std::vector<float> read_mono(const std::string& path, std::uint32_t& sample_rate, std::size_t offset) {
  auto wav = wav_read(path);
  if (wav.channels != 1) throw FormatError("'" + path + "' is not mono", offset);
  if (sample_rate == 0) sample_rate = wav.sample_rate;
  if (wav.sample_rate != sample_rate) throw FormatError("'" + path + "' has a different sample rate", offset);
  return std::move(wav.samples);
}

}  // namespace

std::vector<ManifestRow> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest '" + path + "'");
  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? p : (base / p).string(); };

  std::vector<ManifestRow> rows;
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    const std::size_t at = offset;
    offset += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, '\t');) fields.push_back(f);
    if (fields.size() < 4 || fields.size() % 2 != 0) {
      throw FormatError("manifest line has " + std::to_string(fields.size()) + " fields, expected 2M+2", at);
    }
    for (const auto& f : fields) {
      if (f.empty()) throw FormatError("manifest line has an empty field", at);
    }
    const std::size_t m = (fields.size() - 2) / 2;
    ManifestRow row;
    row.offset = at;
    row.mixture = resolve(fields[0]);
    for (std::size_t i = 0; i < m; ++i) row.sources.push_back(resolve(fields[1 + i]));
    row.noise = resolve(fields[1 + m]);
    for (std::size_t i = 0; i < m; ++i) row.videos.push_back(resolve(fields[2 + m + i]));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string manifest_line(const ManifestRow& row) {
  std::string out = row.mixture;
  for (const auto& s : row.sources) out += "\t" + s;
  out += "\t" + row.noise;
  for (const auto& v : row.videos) out += "\t" + v;
  return out;
}

std::string write_corpus(const std::string& dir, const std::vector<MixedItem>& items, std::uint32_t sample_rate,
                         std::size_t first) {
  fs::create_directories(dir);
  std::string manifest, metadata = "index\tseed\tvoices\tspeech_snr_db\tnoise_snr_db\n";
  for (std::size_t k = 0; k < items.size(); ++k) {
    const auto& item = items[k];
    const auto& ex = item.example;
    char name[32];
    std::snprintf(name, sizeof name, "item%05zu", first + k);
    fs::create_directories(fs::path(dir) / name);
    const std::string rel = std::string(name) + "/";
    auto abs = [&](const std::string& r) { return (fs::path(dir) / r).string(); };

    ManifestRow row;
    row.mixture = rel + "mixture.wav";
    wav_write(abs(row.mixture), ex.mixture, sample_rate);
    for (std::size_t i = 0; i < ex.speakers; ++i) {
      row.sources.push_back(rel + "s" + std::to_string(i + 1) + ".wav");
      wav_write(abs(row.sources.back()), {ex.sources.begin() + static_cast<std::ptrdiff_t>(i * ex.samples),
                                          ex.sources.begin() + static_cast<std::ptrdiff_t>((i + 1) * ex.samples)},
                sample_rate);
      row.videos.push_back(rel + "v" + std::to_string(i + 1) + ".avfr");
      FrameStack fr{static_cast<std::uint32_t>(ex.frames), static_cast<std::uint32_t>(ex.height),
                    static_cast<std::uint32_t>(ex.width), {}};
      const std::size_t n = fr.frame_size() * fr.frames;
      fr.pixels.assign(ex.video.begin() + static_cast<std::ptrdiff_t>(i * n),
                       ex.video.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
      frames_write(abs(row.videos.back()), fr);
    }
    row.noise = rel + "noise.wav";
    wav_write(abs(row.noise), item.noise, sample_rate);
    manifest += manifest_line(row) + "\n";

    std::string voices, snrs;
    for (std::size_t i = 0; i < item.meta.speaker_ids.size(); ++i) {
      voices += (i ? "," : "") + std::to_string(item.meta.speaker_ids[i]);
    }
    for (std::size_t i = 0; i < item.meta.speech_snr_db.size(); ++i) {
      snrs += (i ? "," : "") + shortest(item.meta.speech_snr_db[i]);
    }
    metadata += std::to_string(first + k) + "\t" + std::to_string(item.meta.seed) + "\t" + voices + "\t" +
                (snrs.empty() ? "-" : snrs) + "\t" + (item.meta.noise ? shortest(item.meta.noise_snr_db) : "-") + "\n";
  }
  const auto manifest_path = (fs::path(dir) / kManifestName).string();
  write_file(manifest_path, manifest);
  write_file((fs::path(dir) / kMetadataName).string(), metadata);
  return manifest_path;
}

Corpus load_corpus(const std::string& manifest) {
  Corpus corpus;
  const auto rows = read_manifest(manifest);
  for (const auto& row : rows) {
    const std::size_t line = row.offset;
    Example ex;
    ex.mixture = read_mono(row.mixture, corpus.sample_rate, line);
    ex.speakers = row.sources.size();
    ex.samples = ex.mixture.size();
    for (const auto& s : row.sources) {
      auto v = read_mono(s, corpus.sample_rate, line);
      if (v.size() != ex.samples) throw FormatError("'" + s + "' length differs from the mixture", line);
      ex.sources.insert(ex.sources.end(), v.begin(), v.end());
    }
    for (std::size_t i = 0; i < row.videos.size(); ++i) {
      auto fr = frames_read(row.videos[i]);
      if (i == 0) {
        ex.frames = fr.frames;
        ex.height = fr.height;
        ex.width = fr.width;
      } else if (fr.frames != ex.frames || fr.height != ex.height || fr.width != ex.width) {
        throw FormatError("'" + row.videos[i] + "' shape differs from the first speaker's", line);
      }
      ex.video.insert(ex.video.end(), fr.pixels.begin(), fr.pixels.end());
    }
    corpus.items.push_back(std::move(ex));
  }
  return corpus;
}

bool is_additive(const Example& ex, const std::vector<float>& noise) {
  const std::size_t T = ex.samples;
  if (ex.mixture.size() != T || noise.size() != T || ex.sources.size() != ex.speakers * T) return false;
  for (std::size_t t = 0; t < T; ++t) {
    float acc = ex.sources[t];
    for (std::size_t i = 1; i < ex.speakers; ++i) acc += ex.sources[i * T + t];
    acc += noise[t];
    if (std::memcmp(&acc, &ex.mixture[t], sizeof(float)) != 0) return false;
  }
  return true;
}

}  // namespace avlit
