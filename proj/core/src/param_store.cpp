#include "rtsrts/param_store.hpp"

#include <zlib.h>

#include "rtsrts/error.hpp"

namespace rtsrts {

template <typename T>
tensor::Tensor<T>& ParamStore<T>::add(const std::string& name, tensor::Tensor<T> value) {
  if (index_.count(name)) throw ValidationError("duplicate parameter name '" + name + "'");
  value.set_requires_grad(true);
  index_.emplace(name, entries_.size());
  const auto n = static_cast<std::size_t>(value.numel());
  entries_.push_back(Entry{name, std::move(value), std::vector<T>(n, T(0)), std::vector<T>(n, T(0))});
  return entries_.back().value;
}

template <typename T>
tensor::Tensor<T>& ParamStore<T>::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("unknown parameter '" + name + "'");
  return entries_[it->second].value;
}

template <typename T>
const tensor::Tensor<T>& ParamStore<T>::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("unknown parameter '" + name + "'");
  return entries_[it->second].value;
}

template <typename T>
std::int64_t ParamStore<T>::scalar_count() const {
  std::int64_t n = 0;
  for (const auto& e : entries_) n += e.value.numel();
  return n;
}

template <typename T>
std::vector<std::string> ParamStore<T>::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& e : entries_) e.value.zero_grad();
}

template <typename T>
ParamStore<T> ParamStore<T>::clone() const {
  ParamStore out;
  for (const auto& e : entries_) out.add(e.name, e.value.detach());
  return out;
}

template <typename T>
void ParamStore<T>::assign_values(const ParamStore& other) {
  if (other.entries_.size() != entries_.size()) {
    throw ValidationError("parameter stores differ in size");
  }
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto& dst = entries_[i];
    const auto& src = other.entries_[i];
    if (dst.name != src.name || dst.value.shape() != src.value.shape()) {
      throw ValidationError("parameter '" + dst.name + "' does not match '" + src.name + "'");
    }
    auto out = dst.value.mutable_values();
    auto in = src.value.values();
    std::copy(in.begin(), in.end(), out.begin());
  }
}

template <typename T>
std::uint32_t ParamStore<T>::checksum() const {
  uLong crc = crc32(0L, Z_NULL, 0);
  for (const auto& e : entries_) {
    crc = crc32(crc, reinterpret_cast<const Bytef*>(e.name.data()), static_cast<uInt>(e.name.size()));
    for (auto d : e.value.shape()) crc = crc32(crc, reinterpret_cast<const Bytef*>(&d), sizeof(d));
    auto v = e.value.values();
    crc = crc32(crc, reinterpret_cast<const Bytef*>(v.data()), static_cast<uInt>(v.size_bytes()));
  }
  return static_cast<std::uint32_t>(crc);
}

template <typename T>
template <typename U>
ParamStore<U> ParamStore<T>::cast() const {
  ParamStore<U> out;
  for (const auto& e : entries_) out.add(e.name, tensor::cast<U>(e.value));
  return out;
}

template class ParamStore<float>;
template class ParamStore<double>;
template ParamStore<double> ParamStore<float>::cast<double>() const;
template ParamStore<float> ParamStore<double>::cast<float>() const;
template ParamStore<float> ParamStore<float>::cast<float>() const;
template ParamStore<double> ParamStore<double>::cast<double>() const;

}  // namespace rtsrts
