#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "bevodo/params.hpp"

namespace bevodo {

Tensor ParamStore::add(const std::string& name, Shape shape, std::vector<double> init) {
  if (contains(name)) throw std::invalid_argument("ParamStore: duplicate parameter '" + name + "'");
  Tensor t = Tensor::parameter(std::move(shape), std::move(init));
  entries_.emplace_back(name, t);
  return t;
}

Tensor ParamStore::add_uniform(const std::string& name, Shape shape, std::size_t fan_in,
                               std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = u(rng);
  return add(name, std::move(shape), std::move(v));
}

Tensor ParamStore::get(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw std::out_of_range("ParamStore: no parameter '" + name + "'");
}

bool ParamStore::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

std::vector<double> ParamStore::flat_values() const {
  std::vector<double> out;
  out.reserve(total_size());
  for (const auto& e : entries_) out.insert(out.end(), e.second.values().begin(), e.second.values().end());
  return out;
}

std::vector<double> ParamStore::flat_grads() const {
  std::vector<double> out;
  out.reserve(total_size());
  for (const auto& e : entries_) {
    const auto g = e.second.grad_or_zeros();
    out.insert(out.end(), g.begin(), g.end());
  }
  return out;
}

void ParamStore::set_flat_values(std::span<const double> values) {
  if (values.size() != total_size()) throw std::invalid_argument("ParamStore: flat size mismatch");
  std::size_t off = 0;
  for (auto& e : entries_) {
    auto dst = e.second.mutable_values();
    std::copy_n(values.begin() + static_cast<long>(off), dst.size(), dst.begin());
    off += dst.size();
  }
}

namespace {

constexpr char kMagic[8] = {'B', 'E', 'V', 'O', 'D', 'O', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& os, T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    os.write(bytes.data(), sizeof(T));
  } else {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
}

template <class T>
T take(std::istream& is) {
  std::array<char, sizeof(T)> bytes{};
  if (!is.read(bytes.data(), sizeof(T))) throw CheckpointError("checkpoint: truncated file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  return std::bit_cast<T>(bytes);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("checkpoint: cannot open " + path.string() + " for writing");
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(store.entries().size()));
  for (const auto& [name, t] : store.entries()) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.ndim()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(os, d);
  }
  for (const auto& e : store.entries()) {
    for (double v : e.second.values()) put<double>(os, v);
  }
  if (!os) throw CheckpointError("checkpoint: write failed for " + path.string());
}

std::vector<std::pair<std::string, Tensor>> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("checkpoint: cannot open " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw CheckpointError("checkpoint: bad magic in " + path.string());
  }
  if (take<std::uint32_t>(is) != kVersion) throw CheckpointError("checkpoint: unsupported version");
  const auto count = take<std::uint32_t>(is);
  std::vector<std::pair<std::string, Shape>> header;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = take<std::uint32_t>(is);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw CheckpointError("checkpoint: truncated name");
    const auto rank = take<std::uint32_t>(is);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(take<std::uint64_t>(is));
    header.emplace_back(std::move(name), std::move(shape));
  }
  std::vector<std::pair<std::string, Tensor>> out;
  for (auto& [name, shape] : header) {
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = take<double>(is);
    out.emplace_back(name, Tensor::constant(shape, std::move(v)));
  }
  return out;
}

void load_checkpoint(const std::filesystem::path& path, ParamStore& store) {
  const auto loaded = read_checkpoint(path);
  if (loaded.size() != store.entries().size()) {
    throw CheckpointError("checkpoint: tensor count mismatch (" + std::to_string(loaded.size()) +
                          " in file, " + std::to_string(store.entries().size()) + " expected)");
  }
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    auto [name, target] = store.entries()[i];
    if (loaded[i].first != name || loaded[i].second.shape() != target.shape()) {
      throw CheckpointError("checkpoint: entry " + std::to_string(i) + " is '" + loaded[i].first + "' " +
                            shape_str(loaded[i].second.shape()) + ", expected '" + name + "' " +
                            shape_str(target.shape()));
    }
    auto dst = target.mutable_values();
    std::copy(loaded[i].second.values().begin(), loaded[i].second.values().end(), dst.begin());
  }
}

}  // namespace bevodo
