#include "pirtune/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <limits>

#include "pirtune/errors.hpp"

namespace pirtune {

namespace {

constexpr char kMagic[4] = {'P', 'I', 'R', 'T'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v));
    u8(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    u16(static_cast<std::uint16_t>(v));
    u16(static_cast<std::uint16_t>(v >> 16));
  }
  void i64(std::int64_t v) {
    auto u = static_cast<std::uint64_t>(v);
    u32(static_cast<std::uint32_t>(u));
    u32(static_cast<std::uint32_t>(u >> 32));
  }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    u32(bits);
  }
  void name(const std::string& s) {
    if (s.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw IoError("checkpoint: name too long: " + s.substr(0, 32));
    }
    u16(static_cast<std::uint16_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void f32_array(const std::vector<float>& v) {
    for (float x : v) f32(x);
  }

 private:
  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint16_t u16() {
    std::uint16_t lo = u8(), hi = u8();
    return static_cast<std::uint16_t>(lo | (hi << 8));
  }
  std::uint32_t u32() {
    std::uint32_t lo = u16(), hi = u16();
    return lo | (hi << 16);
  }
  std::int64_t i64() {
    std::uint64_t lo = u32();
    std::uint64_t hi = u32();
    return static_cast<std::int64_t>(lo | (hi << 32));
  }
  float f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }
  std::string name() {
    std::uint16_t len = u16();
    need(len);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), len);
    pos_ += len;
    return s;
  }
  void f32_array(std::vector<float>& v, size_t n) {
    need_at_least(n * 4);
    v.resize(n);
    for (size_t i = 0; i < n; ++i) v[i] = f32();
  }
  void need_at_least(size_t n) {
    if (in_.size() - pos_ < n) throw IoError("checkpoint: truncated file");
  }
  bool at_end() const { return pos_ == in_.size(); }

 private:
  void need(size_t n) {
    if (in_.size() - pos_ < n) throw IoError("checkpoint: truncated file");
  }
  const std::vector<std::uint8_t>& in_;
  size_t pos_ = 0;
};

void insert_name(std::unordered_map<std::string, size_t>& index,
                 const std::string& name, size_t pos, const char* kind) {
  if (!index.emplace(name, pos).second) {
    throw IoError("checkpoint: duplicate " + std::string(kind) + " entry: " +
                  name);
  }
}

}  // namespace

void Checkpoint::put_tensor(const std::string& name, Tensor t) {
  insert_name(tensor_index_, name, tensors_.size(), "tensor");
  tensors_.push_back({name, std::move(t)});
}

void Checkpoint::put_stats(const std::string& name, RunningStats s) {
  if (s.mean.size() != s.var.size()) {
    throw ShapeError("checkpoint: running stats mean/var size mismatch: " +
                     name);
  }
  insert_name(stats_index_, name, stats_.size(), "stats");
  stats_.push_back({name, std::move(s)});
}

void Checkpoint::put_int(const std::string& name, std::int64_t v) {
  insert_name(int_index_, name, ints_.size(), "int");
  ints_.push_back({name, v});
}

void Checkpoint::put_string(const std::string& name, std::string v) {
  insert_name(string_index_, name, strings_.size(), "string");
  strings_.push_back({name, std::move(v)});
}

bool Checkpoint::has_tensor(const std::string& name) const {
  return tensor_index_.count(name) != 0;
}
bool Checkpoint::has_stats(const std::string& name) const {
  return stats_index_.count(name) != 0;
}
bool Checkpoint::has_int(const std::string& name) const {
  return int_index_.count(name) != 0;
}
bool Checkpoint::has_string(const std::string& name) const {
  return string_index_.count(name) != 0;
}

template <typename T>
const T& Checkpoint::find(const std::vector<Entry<T>>& entries,
                          const std::unordered_map<std::string, size_t>& index,
                          const std::string& name, const char* kind) {
  auto it = index.find(name);
  if (it == index.end()) {
    throw MissingArtifactError("checkpoint: no " + std::string(kind) +
                               " named " + name);
  }
  return entries[it->second].value;
}

const Tensor& Checkpoint::tensor(const std::string& name) const {
  return find(tensors_, tensor_index_, name, "tensor");
}
const RunningStats& Checkpoint::stats(const std::string& name) const {
  return find(stats_, stats_index_, name, "stats");
}
std::int64_t Checkpoint::integer(const std::string& name) const {
  return find(ints_, int_index_, name, "int");
}
const std::string& Checkpoint::text(const std::string& name) const {
  return find(strings_, string_index_, name, "string");
}

namespace {
template <typename T, typename F>
std::vector<std::string> names_of(const std::vector<T>& entries, F) {
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.name);
  return out;
}
}  // namespace

std::vector<std::string> Checkpoint::tensor_names() const {
  return names_of(tensors_, 0);
}
std::vector<std::string> Checkpoint::stats_names() const {
  return names_of(stats_, 0);
}
std::vector<std::string> Checkpoint::int_names() const {
  return names_of(ints_, 0);
}
std::vector<std::string> Checkpoint::string_names() const {
  return names_of(strings_, 0);
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
  std::vector<std::uint8_t> out;
  Writer w(out);
  out.insert(out.end(), kMagic, kMagic + 4);
  w.u32(kVersion);

  w.u32(static_cast<std::uint32_t>(tensors_.size()));
  for (const auto& e : tensors_) {
    w.name(e.name);
    const Shape& shape = e.value.shape;
    if (shape.size() > 255) throw IoError("checkpoint: tensor rank too large");
    w.u8(static_cast<std::uint8_t>(shape.size()));
    for (std::int64_t d : shape) {
      if (d < 0 || d > std::numeric_limits<std::uint32_t>::max()) {
        throw IoError("checkpoint: tensor dimension out of range");
      }
      w.u32(static_cast<std::uint32_t>(d));
    }
    w.f32_array(e.value.data);
  }

  w.u32(static_cast<std::uint32_t>(stats_.size()));
  for (const auto& e : stats_) {
    w.name(e.name);
    w.u32(static_cast<std::uint32_t>(e.value.mean.size()));
    w.f32_array(e.value.mean);
    w.f32_array(e.value.var);
    w.i64(e.value.batches);
  }

  w.u32(static_cast<std::uint32_t>(ints_.size()));
  for (const auto& e : ints_) {
    w.name(e.name);
    w.i64(e.value);
  }

  w.u32(static_cast<std::uint32_t>(strings_.size()));
  for (const auto& e : strings_) {
    w.name(e.name);
    if (e.value.size() > std::numeric_limits<std::uint32_t>::max()) {
      throw IoError("checkpoint: string value too long: " + e.name);
    }
    w.u32(static_cast<std::uint32_t>(e.value.size()));
    out.insert(out.end(), e.value.begin(), e.value.end());
  }
  return out;
}

Checkpoint Checkpoint::deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  char magic[4];
  for (char& c : magic) c = static_cast<char>(r.u8());
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("checkpoint: bad magic, not a checkpoint file");
  }
  std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw IoError("checkpoint: unsupported version " + std::to_string(version));
  }

  Checkpoint ckpt;
  std::uint32_t n_tensors = r.u32();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = r.name();
    std::uint8_t rank = r.u8();
    Shape shape(rank);
    size_t count = 1;
    for (auto& d : shape) {
      d = r.u32();
      count *= static_cast<size_t>(d);
      if (count > bytes.size()) throw IoError("checkpoint: truncated file");
    }
    Tensor t(shape);
    r.f32_array(t.data, count);
    ckpt.put_tensor(name, std::move(t));
  }

  std::uint32_t n_stats = r.u32();
  for (std::uint32_t i = 0; i < n_stats; ++i) {
    std::string name = r.name();
    std::uint32_t n = r.u32();
    RunningStats s;
    r.f32_array(s.mean, n);
    r.f32_array(s.var, n);
    s.batches = r.i64();
    ckpt.put_stats(name, std::move(s));
  }

  std::uint32_t n_ints = r.u32();
  for (std::uint32_t i = 0; i < n_ints; ++i) {
    std::string name = r.name();
    ckpt.put_int(name, r.i64());
  }

  std::uint32_t n_strings = r.u32();
  for (std::uint32_t i = 0; i < n_strings; ++i) {
    std::string name = r.name();
    std::uint32_t len = r.u32();
    std::string value;
    value.reserve(len);
    for (std::uint32_t j = 0; j < len; ++j) {
      value.push_back(static_cast<char>(r.u8()));
    }
    ckpt.put_string(name, std::move(value));
  }

  if (!r.at_end()) throw IoError("checkpoint: trailing bytes after payload");
  return ckpt;
}

void Checkpoint::save(const std::string& path) const {
  auto bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("checkpoint: cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("checkpoint: write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw MissingArtifactError("checkpoint: cannot open: " + path);
  auto size = in.tellg();
  in.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<size_t>(size));
  in.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!in) throw IoError("checkpoint: read failed: " + path);
  return deserialize(bytes);
}

}  // namespace pirtune
