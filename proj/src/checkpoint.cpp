#include "tse/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "tse/error.hpp"

namespace tse {

namespace {

constexpr char kMagic[8] = {'T', 'S', 'E', 'C', 'K', 'P', 'T', '\0'};

enum class DType : std::uint8_t { kFloat32 = 1, kFloat64 = 2, kInt64 = 3 };

DType dtype_tag(const torch::Tensor& t) {
  switch (t.scalar_type()) {
    case torch::kFloat32: return DType::kFloat32;
    case torch::kFloat64: return DType::kFloat64;
    case torch::kInt64: return DType::kInt64;
    default:
      fail(Errc::kInvalidArgument,
           std::string("checkpoint: unsupported dtype ") + c10::toString(t.scalar_type()));
  }
}

torch::ScalarType scalar_type(DType tag) {
  switch (tag) {
    case DType::kFloat32: return torch::kFloat32;
    case DType::kFloat64: return torch::kFloat64;
    case DType::kInt64: return torch::kInt64;
  }
  fail(Errc::kUnsupportedFormat, "checkpoint: unknown dtype tag");
}

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  void str32(const std::string& s) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  const std::vector<char>& buffer() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(std::vector<char> buf, std::string name) : buf_(std::move(buf)), name_(std::move(name)) {}

  template <typename T>
  T pod() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  const char* take(std::size_t n) {
    require(pos_ + n <= buf_.size(), Errc::kUnsupportedFormat,
            name_ + ": truncated checkpoint");
    const char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::string str(std::size_t n) { return std::string(take(n), n); }

 private:
  std::vector<char> buf_;
  std::string name_;
  std::size_t pos_ = 0;
};

}  // namespace

const torch::Tensor& Checkpoint::at(const std::string& name) const {
  auto it = arrays.find(name);
  if (it == arrays.end()) fail(Errc::kCheckpointMismatch, "checkpoint has no array '" + name + "'");
  return it->second;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  static_assert(std::endian::native == std::endian::little,
                "checkpoint writer assumes a little-endian host");
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.pod<std::uint32_t>(kCheckpointVersion);
  const std::string meta_text = meta.dump();
  w.pod<std::uint64_t>(meta_text.size());
  w.bytes(meta_text.data(), meta_text.size());
  w.pod<std::uint64_t>(arrays.size());
  for (const auto& [name, tensor] : arrays) {
    auto t = tensor.detach().to(torch::kCPU).contiguous();
    w.str32(name);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(t.dim()));
    for (auto d : t.sizes()) w.pod<std::int64_t>(d);
    w.pod<std::uint8_t>(static_cast<std::uint8_t>(dtype_tag(t)));
    const auto nbytes = static_cast<std::uint64_t>(t.nbytes());
    w.pod<std::uint64_t>(nbytes);
    w.bytes(t.data_ptr(), nbytes);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::kIo, "cannot write " + path.string());
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) fail(Errc::kIo, "short write to " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::kMissingFile, "cannot open checkpoint " + path.string());
  Reader r(std::vector<char>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()),
           path.string());
  require(std::memcmp(r.take(sizeof(kMagic)), kMagic, sizeof(kMagic)) == 0,
          Errc::kUnsupportedFormat, path.string() + ": not a checkpoint file");
  const auto version = r.pod<std::uint32_t>();
  require(version >= 1 && version <= kCheckpointVersion, Errc::kUnsupportedFormat,
          path.string() + ": unsupported checkpoint version " + std::to_string(version));

  Checkpoint ckpt;
  const auto meta_len = r.pod<std::uint64_t>();
  try {
    ckpt.meta = nlohmann::json::parse(r.str(meta_len));
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::kUnsupportedFormat, path.string() + ": bad metadata: " + e.what());
  }
  const auto count = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = r.pod<std::uint32_t>();
    std::string name = r.str(name_len);
    const auto ndim = r.pod<std::uint32_t>();
    std::vector<std::int64_t> dims(ndim);
    for (auto& d : dims) d = r.pod<std::int64_t>();
    const auto type = scalar_type(static_cast<DType>(r.pod<std::uint8_t>()));
    const auto nbytes = r.pod<std::uint64_t>();
    auto t = torch::empty(dims, torch::TensorOptions().dtype(type));
    require(static_cast<std::uint64_t>(t.nbytes()) == nbytes, Errc::kUnsupportedFormat,
            path.string() + ": size mismatch for array '" + name + "'");
    std::memcpy(t.data_ptr(), r.take(nbytes), nbytes);
    ckpt.arrays.emplace(std::move(name), std::move(t));
  }
  return ckpt;
}

void export_module(const torch::nn::Module& module, const std::string& prefix,
                   Checkpoint& ckpt) {
  for (const auto& p : module.named_parameters()) {
    ckpt.arrays[prefix + "/" + p.key()] = p.value().detach().clone();
  }
  for (const auto& b : module.named_buffers()) {
    ckpt.arrays[prefix + "/" + b.key()] = b.value().detach().clone();
  }
}

void import_module(torch::nn::Module& module, const std::string& prefix,
                   const Checkpoint& ckpt) {
  torch::NoGradGuard no_grad;
  auto assign = [&](const std::string& name, torch::Tensor& dst) {
    const std::string key = prefix + "/" + name;
    const auto& src = ckpt.at(key);
    require(src.sizes() == dst.sizes(), Errc::kCheckpointMismatch,
            "checkpoint array '" + key + "' has a different shape than the model");
    dst.copy_(src);
  };
  for (auto& p : module.named_parameters()) assign(p.key(), p.value());
  for (auto& b : module.named_buffers()) assign(b.key(), b.value());
}

}  // namespace tse
