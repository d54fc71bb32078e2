#include "protfuse/checkpoint.hpp"

#include "protfuse/text_io.hpp"

#include <bit>
#include <cstring>
#include <sstream>

namespace protfuse {

namespace {

constexpr char kMagic[8] = {'P', 'F', 'C', 'K', 'P', 'T', '0', '1'};
constexpr std::size_t kHeaderSize = 8 + 4 + 8 + 8 + 8;

std::uint64_t fnv1a(const char* data, std::size_t n) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ULL;
  }
  return h;
}

class Writer {
 public:
  template <typename T>
  void put(T value) {
    static_assert(std::is_integral_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      buf_.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
    }
  }
  void put_f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }
  void put_f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    buf_ += s;
  }
  std::string& bytes() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const char* data, std::size_t size) : data_(data), size_(size) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }
  float get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
  double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(data_ + pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == size_; }

 private:
  void need(std::size_t n) const {
    if (size_ - pos_ < n) throw CheckpointError("checkpoint is truncated");
  }
  const char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

void put_model(Writer& w, const std::string& group, const ModelParams<float>& m) {
  for (Partition p : kAllPartitions) {
    for (const auto& e : m[p].entries()) {
      w.put_string(group + "/" + to_string(p) + "/" + e.name);
      w.put(static_cast<std::uint32_t>(e.value.rows()));
      w.put(static_cast<std::uint32_t>(e.value.cols()));
      for (Eigen::Index i = 0; i < e.value.size(); ++i) w.put_f32(e.value.data()[i]);
    }
  }
}

}  // namespace

std::uint64_t model_config_hash(const ModelConfig& cfg) {
  std::ostringstream s;
  s << "struct " << cfg.structure.d_struct << ' ' << cfg.structure.num_layers << ' ' << cfg.structure.edge_width
    << ' ' << to_string(cfg.structure.variant) << "|seq " << cfg.sequence.d_seq << ' ' << cfg.sequence.num_layers
    << ' ' << cfg.sequence.num_heads << "|dec " << cfg.decoder.d_model << ' ' << cfg.decoder.num_layers << ' '
    << cfg.decoder.num_heads << ' ' << cfg.decoder.vocab_size << ' ' << cfg.decoder.max_positions << "|graph "
    << cfg.graph.k << ' ' << cfg.graph.rbf_count << "|proj " << cfg.projector_hidden << ' ' << cfg.projector_depth;
  const std::string text = s.str();
  return fnv1a(text.data(), text.size());
}

std::string encode_checkpoint(const TrainState<float>& state, std::uint64_t config_hash) {
  Writer payload;
  payload.put_string(state.stage);
  payload.put(state.step);
  payload.put(state.seed);
  payload.put(static_cast<std::uint64_t>(state.loss_history.size()));
  for (double v : state.loss_history) payload.put_f64(v);
  std::uint32_t arrays = 0;
  for (Partition p : kAllPartitions) arrays += static_cast<std::uint32_t>(state.params[p].size());
  payload.put(arrays * 3);
  put_model(payload, "params", state.params);
  put_model(payload, "adam_m", state.adam_m);
  put_model(payload, "adam_v", state.adam_v);

  Writer out;
  out.bytes().append(kMagic, sizeof kMagic);
  out.put(kCheckpointVersion);
  out.put(config_hash);
  out.put(static_cast<std::uint64_t>(payload.bytes().size()));
  out.put(fnv1a(payload.bytes().data(), payload.bytes().size()));
  out.bytes() += payload.bytes();
  return std::move(out.bytes());
}

TrainState<float> decode_checkpoint(const std::string& bytes, std::uint64_t* config_hash) {
  if (bytes.size() < kHeaderSize) throw CheckpointError("checkpoint is truncated");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw CheckpointError("not a protfuse checkpoint");
  Reader header(bytes.data() + sizeof kMagic, kHeaderSize - sizeof kMagic);
  const auto version = header.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const auto hash = header.get<std::uint64_t>();
  const auto size = header.get<std::uint64_t>();
  const auto checksum = header.get<std::uint64_t>();
  if (bytes.size() - kHeaderSize < size) throw CheckpointError("checkpoint is truncated");
  if (bytes.size() - kHeaderSize > size) throw CheckpointError("checkpoint has trailing bytes");
  const char* payload = bytes.data() + kHeaderSize;
  if (fnv1a(payload, size) != checksum) throw CheckpointError("checkpoint checksum mismatch (file is corrupt)");
  if (config_hash) *config_hash = hash;

  Reader r(payload, size);
  TrainState<float> state;
  state.stage = r.get_string();
  state.step = r.get<std::uint64_t>();
  state.seed = r.get<std::uint64_t>();
  const auto losses = r.get<std::uint64_t>();
  if (losses > size / 8) throw CheckpointError("checkpoint loss history is corrupt");
  state.loss_history.reserve(losses);
  for (std::uint64_t i = 0; i < losses; ++i) state.loss_history.push_back(r.get_f64());
  const auto arrays = r.get<std::uint32_t>();
  for (std::uint32_t a = 0; a < arrays; ++a) {
    const std::string full = r.get_string();
    const std::size_t s1 = full.find('/');
    const std::size_t s2 = s1 == std::string::npos ? s1 : full.find('/', s1 + 1);
    if (s2 == std::string::npos) throw CheckpointError("checkpoint array name '" + full + "' is malformed");
    const std::string group = full.substr(0, s1);
    Partition part;
    try {
      part = parse_partition(full.substr(s1 + 1, s2 - s1 - 1));
    } catch (const ConfigError&) {
      throw CheckpointError("checkpoint array '" + full + "' names an unknown partition");
    }
    ModelParams<float>* target = group == "params"   ? &state.params
                                 : group == "adam_m" ? &state.adam_m
                                 : group == "adam_v" ? &state.adam_v
                                                     : nullptr;
    if (!target) throw CheckpointError("checkpoint array '" + full + "' has an unknown group");
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    if (static_cast<std::uint64_t>(rows) * cols > size / 4) throw CheckpointError("checkpoint array is corrupt");
    Matrix<float> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.get_f32();
    (*target)[part].add(full.substr(s2 + 1), std::move(m));
  }
  if (!r.done()) throw CheckpointError("checkpoint payload has unread bytes");
  return state;
}

void save_checkpoint(const TrainState<float>& state, const ModelConfig& cfg, const std::string& path) {
  write_file(path, encode_checkpoint(state, model_config_hash(cfg)));
}

TrainState<float> load_checkpoint(const std::string& path, const ModelConfig* cfg) {
  std::uint64_t hash = 0;
  TrainState<float> state = decode_checkpoint(read_file(path), &hash);
  if (cfg) {
    if (hash != model_config_hash(*cfg)) {
      throw CheckpointError("checkpoint '" + path + "' was written for a different model configuration");
    }
    const ModelParams<float> layout = init_model_params<float>(*cfg, 0);
    for (const ModelParams<float>* m : {&state.params, &state.adam_m, &state.adam_v}) {
      for (Partition p : kAllPartitions) {
        const auto& want = layout[p].entries();
        const auto& got = (*m)[p].entries();
        bool ok = want.size() == got.size();
        for (std::size_t i = 0; ok && i < want.size(); ++i) {
          ok = want[i].name == got[i].name && want[i].value.rows() == got[i].value.rows() &&
               want[i].value.cols() == got[i].value.cols();
        }
        if (!ok) throw CheckpointError("checkpoint partition " + to_string(p) + " does not match the model layout");
      }
    }
  }
  return state;
}

}  // namespace protfuse
