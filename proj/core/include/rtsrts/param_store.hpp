#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "rtsrts/tensor.hpp"

namespace rtsrts {

// Named, insertion-ordered collection of trainable tensors plus the two
// Adam moment buffers per entry.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    tensor::Tensor<T> value;
    std::vector<T> first_moment;
    std::vector<T> second_moment;
  };

  // Registers a leaf that requires a gradient. Duplicate names are rejected.
  tensor::Tensor<T>& add(const std::string& name, tensor::Tensor<T> value);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  tensor::Tensor<T>& at(const std::string& name);
  const tensor::Tensor<T>& at(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  std::int64_t scalar_count() const;

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<std::string> names() const;

  void zero_grad();
  // Optimizer step counter shared by every entry.
  std::int64_t step() const { return step_; }
  void set_step(std::int64_t s) { step_ = s; }

  // Value-only deep copy (fresh leaves, moments cleared).
  ParamStore clone() const;
  // Copies values from `other`, which must hold identical names and shapes.
  void assign_values(const ParamStore& other);
  // CRC32 over names, shapes and values; used to audit that code paths
  // leave parameters untouched.
  std::uint32_t checksum() const;

  template <typename U>
  ParamStore<U> cast() const;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::int64_t step_ = 0;
};

}  // namespace rtsrts
