#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "avlit/errors.hpp"
#include "avlit/model.hpp"

namespace avlit {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'A', 'V', 'L', 'T'};

template <typename U>
void put(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }

  std::string take(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  const char* raw(std::size_t n, const char* what) {
    need(n, what);
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) throw FormatError(std::string("checkpoint truncated while reading ") + what, pos_);
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string checkpoint_bytes(const AvlitModel<float>& model) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  const auto text = config_to_text(model.config());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  const auto params = model.parameters();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rank()));
    for (auto d : p.value.shape()) put<std::uint64_t>(out, d);
    const auto data = p.value.data();
    out.append(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(float));
  }
  return out;
}

AvlitModel<float> checkpoint_from_bytes(const std::string& bytes) {
  Reader in(bytes);
  if (in.take(4, "magic") != std::string(kMagic, 4)) throw FormatError("not a checkpoint (bad magic)", 0);
  const auto version_at = in.pos();
  const auto version = in.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version), version_at);
  const auto text_len = in.get<std::uint32_t>("config length");
  const auto config_at = in.pos();
  ModelConfig config;
  try {
    config = config_from_text(in.take(text_len, "config"));
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid model config: ") + e.what(), config_at);
  }

  AvlitModel<float> model(config, 0);
  std::map<std::string, Tensor<float>> slots;
  for (auto& p : model.parameters()) slots.emplace(p.name, p.value);

  const auto count = in.get<std::uint32_t>("record count");
  if (count != slots.size()) {
    throw FormatError("checkpoint has " + std::to_string(count) + " records, model expects " + std::to_string(slots.size()),
                      in.pos() - 4);
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto record_at = in.pos();
    const auto name = in.take(in.get<std::uint32_t>("name length"), "name");
    auto it = slots.find(name);
    if (it == slots.end()) throw FormatError("unknown weight record '" + name + "'", record_at);
    const auto rank = in.get<std::uint32_t>("rank");
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<std::size_t>(in.get<std::uint64_t>("dims")));
    auto& target = it->second;
    if (shape != target.shape()) {
      throw FormatError("record '" + name + "' has shape " + to_string(shape) + ", expected " + to_string(target.shape()),
                        record_at);
    }
    const auto* src = in.raw(target.size() * sizeof(float), "weights");
    std::memcpy(target.mutable_data().data(), src, target.size() * sizeof(float));
    slots.erase(it);
  }
  if (!in.done()) throw FormatError("trailing bytes after weight records", in.pos());
  return model;
}

void save_checkpoint(const std::string& path, const AvlitModel<float>& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  const auto bytes = checkpoint_bytes(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

AvlitModel<float> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return checkpoint_from_bytes(bytes);
}

}  // namespace avlit
