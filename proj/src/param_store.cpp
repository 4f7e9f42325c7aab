#include "adaptlab/param_store.hpp"

#include <cstring>
#include <fstream>
#include <limits>

#include "adaptlab/binary_io.hpp"

namespace adaptlab {

template <typename S>
Parameter<S>& ParamStore<S>::add(std::string name, Tensor<S> value, bool trainable) {
  if (index_.contains(name)) {
    throw ConfigError("parameter '" + name + "' registered twice");
  }
  index_.emplace(name, entries_.size());
  entries_.push_back(Parameter<S>{std::move(name), std::move(value), trainable, std::nullopt});
  return entries_.back();
}

template <typename S>
bool ParamStore<S>::contains(std::string_view name) const {
  return index_.contains(std::string(name));
}

template <typename S>
Parameter<S>* ParamStore<S>::find(std::string_view name) {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : &entries_[it->second];
}

template <typename S>
const Parameter<S>* ParamStore<S>::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : &entries_[it->second];
}

template <typename S>
Parameter<S>& ParamStore<S>::at(std::string_view name) {
  if (auto* p = find(name)) return *p;
  throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

template <typename S>
const Parameter<S>& ParamStore<S>::at(std::string_view name) const {
  if (const auto* p = find(name)) return *p;
  throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

template <typename S>
std::size_t ParamStore<S>::total_count() const {
  std::size_t n = 0;
  for (const auto& p : entries_) n += p.value.size();
  return n;
}

template <typename S>
std::size_t ParamStore<S>::trainable_count() const {
  std::size_t n = 0;
  for (const auto& p : entries_) {
    if (p.trainable) n += p.value.size();
  }
  return n;
}

template <typename S>
void ParamStore<S>::zero_grad() {
  for (auto& p : entries_) p.grad.reset();
}

template <typename S>
void ParamStore<S>::set_all_trainable(bool trainable) {
  for (auto& p : entries_) p.trainable = trainable;
}

template <typename S>
void ParamStore<S>::set_trainable_if(const std::function<bool(const Parameter<S>&)>& pred,
                                     bool trainable) {
  for (auto& p : entries_) {
    if (pred(p)) p.trainable = trainable;
  }
}

template <typename S>
void write_checkpoint(const ParamStore<S>& store, std::ostream& out) {
  out.write(kCheckpointMagic, 4);
  binio::put_uint<std::uint16_t>(out, kCheckpointVersion);
  binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(store.size()));
  for (const auto& p : store) {
    if (p.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw FormatError(FormatError::Kind::kInvalid, "parameter name too long: " + p.name);
    }
    binio::put_uint<std::uint16_t>(out, static_cast<std::uint16_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    binio::put_uint<std::uint8_t>(out, p.trainable ? 1 : 0);
    binio::put_uint<std::uint8_t>(out, static_cast<std::uint8_t>(dtype_of<S>()));
    binio::put_uint<std::uint8_t>(out, static_cast<std::uint8_t>(p.value.rank()));
    for (std::size_t e : p.value.shape()) binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(e));
    for (S v : p.value.data()) binio::put_float(out, v);
  }
  if (!out) throw FormatError(FormatError::Kind::kIo, "failed writing checkpoint");
}

template <typename S>
void write_checkpoint(const ParamStore<S>& store, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::kIo, "cannot open '" + path + "' for writing");
  write_checkpoint(store, out);
}

template <typename S>
ParamStore<S> read_checkpoint(std::istream& in) {
  char magic[4];
  binio::get_bytes(in, magic, 4, "checkpoint magic");
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw FormatError(FormatError::Kind::kBadMagic, "bad magic: not a checkpoint file");
  }
  const auto version = binio::get_uint<std::uint16_t>(in, "checkpoint version");
  if (version != kCheckpointVersion) {
    throw FormatError(FormatError::Kind::kVersionMismatch,
                      "version mismatch: checkpoint version " + std::to_string(version));
  }
  const auto count = binio::get_uint<std::uint32_t>(in, "entry count");
  ParamStore<S> store;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = binio::get_uint<std::uint16_t>(in, "name length");
    std::string name(name_len, '\0');
    binio::get_bytes(in, name.data(), name_len, "parameter name");
    const bool trainable = binio::get_uint<std::uint8_t>(in, "trainable flag") != 0;
    const auto dtype = binio::get_uint<std::uint8_t>(in, "dtype");
    if (dtype != static_cast<std::uint8_t>(dtype_of<S>())) {
      throw FormatError(FormatError::Kind::kInvalid,
                        "parameter '" + name + "' has dtype " + std::to_string(dtype) +
                            ", expected " + std::to_string(static_cast<int>(dtype_of<S>())));
    }
    const auto rank = binio::get_uint<std::uint8_t>(in, "rank");
    Shape shape(rank);
    for (auto& e : shape) e = binio::get_uint<std::uint32_t>(in, "extent");
    std::vector<S> values(num_elements(shape));
    for (auto& v : values) v = binio::get_float<S>(in, "parameter values");
    store.add(std::move(name), Tensor<S>(std::move(shape), std::move(values)), trainable);
  }
  return store;
}

template <typename S>
ParamStore<S> read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::kIo, "cannot open checkpoint '" + path + "'");
  return read_checkpoint<S>(in);
}

template <typename S>
void load_values(ParamStore<S>& dst, const ParamStore<S>& src) {
  if (dst.size() != src.size()) {
    throw ConfigError("checkpoint has " + std::to_string(src.size()) + " entries, model has " +
                      std::to_string(dst.size()));
  }
  for (const auto& p : src) {
    auto* target = dst.find(p.name);
    if (!target) throw ConfigError("checkpoint entry '" + p.name + "' not in model");
    if (!target->value.same_shape(p.value)) {
      throw ConfigError("checkpoint entry '" + p.name + "' has shape " + shape_str(p.value.shape()) +
                        ", model expects " + shape_str(target->value.shape()));
    }
    target->value = p.value;
  }
}

#define ADAPTLAB_INSTANTIATE(S)                                              \
  template class ParamStore<S>;                                              \
  template void write_checkpoint(const ParamStore<S>&, std::ostream&);       \
  template void write_checkpoint(const ParamStore<S>&, const std::string&);  \
  template ParamStore<S> read_checkpoint<S>(std::istream&);                  \
  template ParamStore<S> read_checkpoint<S>(const std::string&);             \
  template void load_values(ParamStore<S>&, const ParamStore<S>&);

ADAPTLAB_INSTANTIATE(float)
ADAPTLAB_INSTANTIATE(double)
#undef ADAPTLAB_INSTANTIATE

}  // namespace adaptlab
