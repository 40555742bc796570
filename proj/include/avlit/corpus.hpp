#pragma once

// On-disk corpus: float32 WAVs and AVFR frame files per item, a manifest and
// a metadata table.
//
//   <dir>/manifest.tsv   mixture  s1..sM  noise  v1..vM   (paths relative to <dir>)
//   <dir>/metadata.tsv   index, seed, voices, speech SNRs, noise SNR

#include <string>
#include <vector>

#include "avlit/synth.hpp"

namespace avlit {

inline constexpr const char* kManifestName = "manifest.tsv";
inline constexpr const char* kMetadataName = "metadata.tsv";

struct ManifestRow {
  std::string mixture;
  std::vector<std::string> sources;
  std::string noise;
  std::vector<std::string> videos;
  std::size_t offset = 0;  // byte offset of the line in the manifest
};

/// Parses manifest lines (2M + 2 tab-separated fields). Relative paths are
/// resolved against the manifest's directory. Throws FormatError with the
/// byte offset of the offending line.
std::vector<ManifestRow> read_manifest(const std::string& path);
std::string manifest_line(const ManifestRow& row);

/// Writes items as item<index>/... under `dir` and returns the manifest path.
/// `first` is the index of items[0].
std::string write_corpus(const std::string& dir, const std::vector<MixedItem>& items, std::uint32_t sample_rate,
                         std::size_t first = 0);

struct Corpus {
  std::vector<Example> items;
  std::uint32_t sample_rate = 0;
};

/// Loads every row of a manifest. Throws FormatError (offset: the row's line in
/// the manifest) on inconsistent lengths, channel counts, frame shapes or
/// sample rates.
Corpus load_corpus(const std::string& manifest);

/// Mixture model check: true when the stored mixture is bit-identical to the
/// float sum s_1 + ... + s_M + n taken in that order.
bool is_additive(const Example& ex, const std::vector<float>& noise);

}  // namespace avlit
