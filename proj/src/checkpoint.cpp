#include "rmen/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "rmen/errors.hpp"

namespace rmen {

namespace {

constexpr char kMagic[5] = {'R', 'M', 'E', 'N', '1'};

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  template <typename U>
  void uint(U value) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
  }
  void real(double value) { uint(std::bit_cast<std::uint64_t>(value)); }
  void string32(const std::string& s) {
    uint(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  const std::vector<char>& buffer() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> data) : data_(std::move(data)) {}

  const char* take(std::size_t n) {
    if (n > data_.size() - pos_) throw ParseError("checkpoint is truncated");
    const char* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }
  template <typename U>
  U uint() {
    const char* p = take(sizeof(U));
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(static_cast<unsigned char>(p[i])) << (8 * i);
    return value;
  }
  double real() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::string string(std::size_t n) {
    const char* p = take(n);
    return std::string(p, n);
  }

 private:
  std::vector<char> data_;
  std::size_t pos_ = 0;
};

std::string config_metadata(const Checkpoint& c) {
  std::ostringstream out;
  const auto& m = c.config;
  out << "embedding_dim\t" << m.embedding_dim << '\n'
      << "heads\t" << m.heads << '\n'
      << "head_size\t" << m.head_size << '\n'
      << "memory_slots\t" << m.memory_slots << '\n'
      << "mlp_layers\t" << m.mlp_layers << '\n'
      << "window\t" << m.window << '\n'
      << "filters\t" << m.filters << '\n'
      << "ablate_pos\t" << (m.ablate_pos ? 1 : 0) << '\n'
      << "ablate_mem\t" << (m.ablate_mem ? 1 : 0) << '\n'
      << "seed\t" << c.seed << '\n'
      << "epochs_done\t" << c.epochs_done << '\n'
      << "adam_step\t" << c.adam.step << '\n';
  for (const auto& n : c.vocab.entities.names()) out << "entity\t" << n << '\n';
  for (const auto& n : c.vocab.relations.names()) out << "relation\t" << n << '\n';
  return out.str();
}

void parse_metadata(const std::string& text, Checkpoint& c) {
  std::istringstream in(text);
  std::string line;
  std::map<std::string, std::string> fields;
  while (std::getline(in, line)) {
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("checkpoint metadata line without a tab");
    std::string key = line.substr(0, tab), value = line.substr(tab + 1);
    if (key == "entity") {
      c.vocab.entities.add(value);
    } else if (key == "relation") {
      c.vocab.relations.add(value);
    } else {
      fields[key] = value;
    }
  }
  auto number = [&](const char* key) -> std::uint64_t {
    auto it = fields.find(key);
    if (it == fields.end()) throw ParseError(std::string("checkpoint metadata is missing '") + key + "'");
    return std::stoull(it->second);
  };
  auto& m = c.config;
  m.embedding_dim = number("embedding_dim");
  m.heads = number("heads");
  m.head_size = number("head_size");
  m.memory_slots = number("memory_slots");
  m.mlp_layers = number("mlp_layers");
  m.window = number("window");
  m.filters = number("filters");
  m.ablate_pos = number("ablate_pos") != 0;
  m.ablate_mem = number("ablate_mem") != 0;
  c.seed = number("seed");
  c.epochs_done = number("epochs_done");
  c.adam.step = number("adam_step");
}

}  // namespace

Checkpoint make_checkpoint(const TrainingState& state, const Vocab& vocab) {
  return Checkpoint{state.config, state.params, state.adam, state.seed, state.epochs_done, vocab};
}

TrainingState restore_state(const Checkpoint& c) {
  return TrainingState{c.config, c.params, c.adam, c.seed, c.epochs_done};
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  check_shapes(c.params, c.config);
  std::vector<std::pair<std::string, const Tensor*>> arrays;
  const auto named = c.params.named_arrays();
  for (const auto& [name, t] : named) arrays.emplace_back("param/" + name, t);
  if (!c.adam.first.empty()) {
    if (c.adam.first.size() != named.size() || c.adam.second.size() != named.size()) {
      throw DimensionError("optimizer state does not match the parameter layout");
    }
    for (std::size_t i = 0; i < named.size(); ++i) arrays.emplace_back("adam.m/" + named[i].first, &c.adam.first[i]);
    for (std::size_t i = 0; i < named.size(); ++i) arrays.emplace_back("adam.v/" + named[i].first, &c.adam.second[i]);
  }

  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.uint(kCheckpointVersion);
  const std::string meta = config_metadata(c);
  w.uint(static_cast<std::uint64_t>(meta.size()));
  w.bytes(meta.data(), meta.size());
  w.uint(static_cast<std::uint32_t>(arrays.size()));
  for (const auto& [name, t] : arrays) {
    w.string32(name);
    w.uint(static_cast<std::uint8_t>(3));
    w.bytes("f64", 3);
    w.uint(static_cast<std::uint32_t>(t->rank()));
    for (auto d : t->shape()) w.uint(static_cast<std::uint64_t>(d));
  }
  for (const auto& [name, t] : arrays) {
    for (double v : t->data()) w.real(v);
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write checkpoint " + path.string());
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw ParseError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(bytes));

  if (std::memcmp(r.take(sizeof(kMagic)), kMagic, sizeof(kMagic)) != 0) {
    throw ParseError(path.string() + " is not an RMEN1 checkpoint");
  }
  const auto version = r.uint<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw ParseError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                     std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint c;
  const auto meta_len = r.uint<std::uint64_t>();
  parse_metadata(r.string(meta_len), c);

  const auto count = r.uint<std::uint32_t>();
  std::vector<std::pair<std::string, Shape>> manifest;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.string(r.uint<std::uint32_t>());
    const std::string dtype = r.string(r.uint<std::uint8_t>());
    if (dtype != "f64") throw ParseError("unsupported dtype '" + dtype + "' for " + name);
    Shape shape(r.uint<std::uint32_t>());
    for (auto& d : shape) d = r.uint<std::uint64_t>();
    manifest.emplace_back(std::move(name), std::move(shape));
  }
  std::map<std::string, Tensor> arrays;
  for (auto& [name, shape] : manifest) {
    Tensor t(shape);
    for (auto& v : t.data()) v = r.real();
    arrays.emplace(name, std::move(t));
  }

  auto take = [&](const std::string& name) {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw ParseError("checkpoint is missing array " + name);
    return std::move(it->second);
  };
  c.params.mlp_weights.resize(c.config.mlp_layers);
  c.params.mlp_biases.resize(c.config.mlp_layers);
  const auto named = c.params.named_arrays();
  for (const auto& [name, t] : named) *t = take("param/" + name);
  if (arrays.contains("adam.m/" + named.front().first)) {
    for (const auto& [name, t] : named) c.adam.first.push_back(take("adam.m/" + name));
    for (const auto& [name, t] : named) c.adam.second.push_back(take("adam.v/" + name));
  }
  check_shapes(c.params, c.config);
  return c;
}

}  // namespace rmen
