#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "adaptlab/tensor.hpp"

namespace adaptlab {

template <typename S>
struct Parameter {
  std::string name;
  Tensor<S> value;
  bool trainable = false;
  std::optional<Tensor<S>> grad;
};

// Named parameters in registration order. References returned by add()/at()
// stay valid for the lifetime of the store.
template <typename S>
class ParamStore {
 public:
  Parameter<S>& add(std::string name, Tensor<S> value, bool trainable);

  bool contains(std::string_view name) const;
  Parameter<S>& at(std::string_view name);
  const Parameter<S>& at(std::string_view name) const;
  Parameter<S>* find(std::string_view name);
  const Parameter<S>* find(std::string_view name) const;

  std::size_t size() const noexcept { return entries_.size(); }
  auto begin() noexcept { return entries_.begin(); }
  auto end() noexcept { return entries_.end(); }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }

  std::size_t total_count() const;
  std::size_t trainable_count() const;

  void zero_grad();
  void set_all_trainable(bool trainable);
  void set_trainable_if(const std::function<bool(const Parameter<S>&)>& pred, bool trainable);

 private:
  std::deque<Parameter<S>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline constexpr char kCheckpointMagic[4] = {'A', 'D', 'L', 'B'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

// Binary checkpoint: magic "ADLB", u16 version, u32 entry count; per entry a
// u16-length UTF-8 name, u8 trainable, u8 dtype, u8 rank, u32 extents and the
// raw little-endian values. Gradients are not stored.
template <typename S>
void write_checkpoint(const ParamStore<S>& store, std::ostream& out);
template <typename S>
void write_checkpoint(const ParamStore<S>& store, const std::string& path);

template <typename S>
ParamStore<S> read_checkpoint(std::istream& in);
template <typename S>
ParamStore<S> read_checkpoint(const std::string& path);

// Copies values from a checkpoint into an existing store; names and shapes
// must match exactly.
template <typename S>
void load_values(ParamStore<S>& dst, const ParamStore<S>& src);

}  // namespace adaptlab
