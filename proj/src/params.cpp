#include "smoothsr/params.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "smoothsr/hash.hpp"

namespace smoothsr {

namespace io {

void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("unexpected end of file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_string(std::ostream& os, const std::string& s) {
  write_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
  const auto n = read_u64(is);
  if (n > (1u << 20)) throw std::runtime_error("corrupt string length");
  std::string s(n, '\0');
  if (!is.read(s.data(), static_cast<std::streamsize>(n))) throw std::runtime_error("unexpected end of file");
  return s;
}

void write_doubles(std::ostream& os, const std::vector<double>& v) {
  write_u64(os, v.size());
  for (double d : v) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    write_u64(os, bits);
  }
}

std::vector<double> read_doubles(std::istream& is) {
  const auto n = read_u64(is);
  if (n > (1ULL << 32)) throw std::runtime_error("corrupt array length");
  std::vector<double> v(n);
  for (auto& d : v) {
    const auto bits = read_u64(is);
    std::memcpy(&d, &bits, 8);
  }
  return v;
}

}  // namespace io

namespace {

void write_shape(std::ostream& os, const Shape& s) {
  io::write_u64(os, s.size());
  for (auto d : s) io::write_u64(os, d);
}

Shape read_shape(std::istream& is) {
  const auto rank = io::read_u64(is);
  if (rank > 8) throw std::runtime_error("corrupt tensor rank");
  Shape s(rank);
  for (auto& d : s) d = io::read_u64(is);
  return s;
}

constexpr std::uint64_t kStoreMagic = 0x31504d5252535353ULL;  // "SSSRRMP1"

}  // namespace

Tensor ParamStore::make(const std::string& name, const Shape& shape, const Init& init, bool trainable) const {
  const std::size_t n = shape_numel(shape);
  std::vector<double> data(n);
  switch (init.kind) {
    case InitKind::he_normal: {
      if (init.fan_in == 0) throw TensorError("he init for '" + name + "' needs a fan-in");
      Rng rng(derive_seed(seed_, name));
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(init.fan_in)));
      for (auto& v : data) v = dist(rng);
      break;
    }
    case InitKind::zeros:
      break;
    case InitKind::ones:
      std::fill(data.begin(), data.end(), 1.0);
      break;
    case InitKind::constant:
      std::fill(data.begin(), data.end(), init.value);
      break;
  }
  return Tensor(shape, std::move(data), trainable);
}

Tensor& ParamStore::param(const std::string& name, const Shape& shape, const Init& init) {
  auto it = params_.find(name);
  if (it != params_.end()) {
    if (it->second.value.shape() != shape) {
      throw TensorError("parameter '" + name + "' exists with shape " + shape_str(it->second.value.shape()) +
                        ", requested " + shape_str(shape));
    }
    return it->second.value;
  }
  if (sealed_) throw TensorError("parameter '" + name + "' is not part of the sealed architecture");
  if (buffers_.count(name)) throw TensorError("name '" + name + "' is already a buffer");
  Entry e{make(name, shape, init, true), {}};
  e.adam.m.assign(e.value.numel(), 0.0);
  e.adam.v.assign(e.value.numel(), 0.0);
  param_order_.push_back(name);
  return params_.emplace(name, std::move(e)).first->second.value;
}

Tensor& ParamStore::buffer(const std::string& name, const Shape& shape, const Init& init) {
  auto it = buffers_.find(name);
  if (it != buffers_.end()) {
    if (it->second.shape() != shape) throw TensorError("buffer '" + name + "' shape mismatch");
    return it->second;
  }
  if (sealed_) throw TensorError("buffer '" + name + "' is not part of the sealed architecture");
  if (params_.count(name)) throw TensorError("name '" + name + "' is already a parameter");
  buffer_order_.push_back(name);
  return buffers_.emplace(name, make(name, shape, init, false)).first->second;
}

bool ParamStore::contains(const std::string& name) const { return params_.count(name) || buffers_.count(name); }

Tensor& ParamStore::at(const std::string& name) {
  if (auto it = params_.find(name); it != params_.end()) return it->second.value;
  if (auto it = buffers_.find(name); it != buffers_.end()) return it->second;
  throw TensorError("no parameter named '" + name + "'");
}

const Tensor& ParamStore::at(const std::string& name) const { return const_cast<ParamStore*>(this)->at(name); }

AdamState& ParamStore::adam(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw TensorError("no parameter named '" + name + "'");
  return it->second.adam;
}

const AdamState& ParamStore::adam(const std::string& name) const {
  return const_cast<ParamStore*>(this)->adam(name);
}

std::size_t ParamStore::numel() const {
  std::size_t n = 0;
  for (const auto& [_, e] : params_) n += e.value.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, e] : params_) e.value.zero_grad();
}

std::string ParamStore::manifest() const {
  std::ostringstream os;
  for (const auto& name : param_order_) {
    const auto& t = params_.at(name).value;
    os << name << ' ' << shape_str(t.shape()) << ' ' << t.numel() << '\n';
  }
  os << "total " << param_order_.size() << " tensors " << numel() << " values\n";
  return os.str();
}

void ParamStore::save(std::ostream& os) const {
  io::write_u64(os, kStoreMagic);
  io::write_u64(os, param_order_.size());
  for (const auto& name : param_order_) {
    const auto& e = params_.at(name);
    io::write_string(os, name);
    write_shape(os, e.value.shape());
    io::write_doubles(os, e.value.to_vector());
    io::write_doubles(os, e.adam.m);
    io::write_doubles(os, e.adam.v);
    io::write_u64(os, e.adam.step);
  }
  io::write_u64(os, buffer_order_.size());
  for (const auto& name : buffer_order_) {
    const auto& t = buffers_.at(name);
    io::write_string(os, name);
    write_shape(os, t.shape());
    io::write_doubles(os, t.to_vector());
  }
}

void ParamStore::load(std::istream& is) {
  if (io::read_u64(is) != kStoreMagic) throw std::runtime_error("not a parameter store");
  auto check = [](const std::string& name, const Shape& have, const Shape& got) {
    if (have != got) {
      throw std::runtime_error("stored '" + name + "' has shape " + shape_str(got) + ", expected " +
                               shape_str(have));
    }
  };
  const auto np = io::read_u64(is);
  if (np != param_order_.size()) throw std::runtime_error("parameter count mismatch in stored state");
  for (std::uint64_t i = 0; i < np; ++i) {
    const auto name = io::read_string(is);
    auto it = params_.find(name);
    if (it == params_.end()) throw std::runtime_error("unknown stored parameter '" + name + "'");
    auto& e = it->second;
    check(name, e.value.shape(), read_shape(is));
    const auto values = io::read_doubles(is);
    auto m = io::read_doubles(is);
    auto v = io::read_doubles(is);
    if (values.size() != e.value.numel() || m.size() != values.size() || v.size() != values.size()) {
      throw std::runtime_error("stored '" + name + "' has the wrong number of values");
    }
    auto dst = e.value.mutable_data();
    std::copy(values.begin(), values.end(), dst.begin());
    e.value.zero_grad();
    e.adam.m = std::move(m);
    e.adam.v = std::move(v);
    e.adam.step = io::read_u64(is);
  }
  const auto nb = io::read_u64(is);
  if (nb != buffer_order_.size()) throw std::runtime_error("buffer count mismatch in stored state");
  for (std::uint64_t i = 0; i < nb; ++i) {
    const auto name = io::read_string(is);
    auto it = buffers_.find(name);
    if (it == buffers_.end()) throw std::runtime_error("unknown stored buffer '" + name + "'");
    check(name, it->second.shape(), read_shape(is));
    const auto values = io::read_doubles(is);
    if (values.size() != it->second.numel()) throw std::runtime_error("stored buffer size mismatch");
    auto dst = it->second.mutable_data();
    std::copy(values.begin(), values.end(), dst.begin());
  }
}

Scope Scope::child(const std::string& name) const { return Scope(*store_, full_name(name), mode_, frozen_); }

std::string Scope::full_name(const std::string& name) const {
  return prefix_.empty() ? name : prefix_ + "." + name;
}

Tensor Scope::param(const std::string& name, const Shape& shape, const Init& init) const {
  Tensor& p = store_->param(full_name(name), shape, init);
  return frozen_ ? p.detach() : p;
}

Tensor& Scope::buffer(const std::string& name, const Shape& shape, const Init& init) const {
  return store_->buffer(full_name(name), shape, init);
}

}  // namespace smoothsr
