#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "pirtune/graph.hpp"
#include "pirtune/tensor.hpp"

namespace pirtune {

// Binary container for model and optimizer state: named f32 tensors, batch
// norm running statistics, and named integer / string scalars. Entries keep
// insertion order, so serializing the same logical state twice produces
// byte-identical files. All fields are little-endian.
class Checkpoint {
 public:
  void put_tensor(const std::string& name, Tensor t);
  void put_stats(const std::string& name, RunningStats s);
  void put_int(const std::string& name, std::int64_t v);
  void put_string(const std::string& name, std::string v);

  bool has_tensor(const std::string& name) const;
  bool has_stats(const std::string& name) const;
  bool has_int(const std::string& name) const;
  bool has_string(const std::string& name) const;

  // Lookups throw MissingArtifactError when the entry is absent.
  const Tensor& tensor(const std::string& name) const;
  const RunningStats& stats(const std::string& name) const;
  std::int64_t integer(const std::string& name) const;
  const std::string& text(const std::string& name) const;

  std::vector<std::string> tensor_names() const;
  std::vector<std::string> stats_names() const;
  std::vector<std::string> int_names() const;
  std::vector<std::string> string_names() const;

  std::vector<std::uint8_t> serialize() const;
  static Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

 private:
  template <typename T>
  struct Entry {
    std::string name;
    T value;
  };
  template <typename T>
  static const T& find(const std::vector<Entry<T>>& entries,
                       const std::unordered_map<std::string, size_t>& index,
                       const std::string& name, const char* kind);

  std::vector<Entry<Tensor>> tensors_;
  std::vector<Entry<RunningStats>> stats_;
  std::vector<Entry<std::int64_t>> ints_;
  std::vector<Entry<std::string>> strings_;
  std::unordered_map<std::string, size_t> tensor_index_;
  std::unordered_map<std::string, size_t> stats_index_;
  std::unordered_map<std::string, size_t> int_index_;
  std::unordered_map<std::string, size_t> string_index_;
};

}  // namespace pirtune
