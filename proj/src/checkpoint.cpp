#include "glmotion/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "glmotion/errors.hpp"

namespace glmotion {

namespace {

constexpr char kMagic[8] = {'G', 'L', 'M', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& in, const char* what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw FormatError(std::string("checkpoint truncated while reading ") + what);
  return v;
}

std::string take_string(std::istream& in, std::size_t n, const char* what) {
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n)))
    throw FormatError(std::string("checkpoint truncated while reading ") + what);
  return s;
}

}  // namespace

const Tensor& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw DataError("checkpoint has no tensor '" + name + "'");
}

bool Checkpoint::has(const std::string& name) const {
  return std::any_of(tensors.begin(), tensors.end(), [&](const auto& p) { return p.first == name; });
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  std::string meta = ckpt.meta.dump();
  put<std::uint64_t>(out, meta.size());
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  put<std::uint64_t>(out, ckpt.tensors.size());
  for (const auto& [name, t] : ckpt.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw FormatError(path.string() + " is not a glmotion checkpoint");
  auto version = take<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  auto meta_len = take<std::uint64_t>(in, "metadata length");
  try {
    ckpt.meta = nlohmann::json::parse(take_string(in, meta_len, "metadata"));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }
  auto count = take<std::uint64_t>(in, "tensor count");
  for (std::uint64_t i = 0; i < count; ++i) {
    auto name = take_string(in, take<std::uint32_t>(in, "name length"), "name");
    auto rank = take<std::uint32_t>(in, "rank");
    if (rank > 8) throw FormatError("checkpoint tensor '" + name + "' has implausible rank");
    Shape shape(rank);
    for (auto& d : shape) d = take<std::uint64_t>(in, "shape");
    std::vector<double> values(shape_numel(shape));
    if (!values.empty() &&
        !in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double))))
      throw FormatError("checkpoint truncated in tensor '" + name + "'");
    ckpt.tensors.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(values)));
  }
  return ckpt;
}

void restore_tensors(const Checkpoint& ckpt, const std::vector<std::pair<std::string, Tensor>>& dest,
                     const std::string& prefix) {
  for (auto [name, t] : dest) {
    const Tensor& src = ckpt.get(prefix + name);
    if (src.shape() != t.shape())
      throw ShapeError("checkpoint tensor '" + prefix + name + "' has shape " + shape_str(src.shape()) +
                       ", expected " + shape_str(t.shape()));
    std::copy(src.data().begin(), src.data().end(), t.mutable_data().begin());
  }
}

}  // namespace glmotion
