#include "fgsgt/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>

namespace fgsgt::checkpoint {

namespace {

template <class U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}
  bool done() const { return pos_ == bytes_.size(); }

  template <class U>
  U get_le(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }

  std::string get_bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw std::runtime_error(std::string("checkpoint truncated while reading ") + what + " at byte " +
                               std::to_string(pos_));
    }
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode(const std::vector<NamedTensor>& tensors) {
  std::string out(kMagic, sizeof(kMagic) - 1);
  for (const auto& [name, t] : tensors) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put_le<std::uint64_t>(out, d);
    for (double v : t.values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

std::vector<NamedTensor> decode(const std::string& bytes) {
  const std::string magic(kMagic, sizeof(kMagic) - 1);
  if (bytes.compare(0, magic.size(), magic) != 0) throw std::runtime_error("not an FGSGT1 checkpoint (bad magic)");
  const std::string body = bytes.substr(magic.size());
  Reader r(body);
  std::vector<NamedTensor> out;
  while (!r.done()) {
    const auto len = r.get_le<std::uint32_t>("name length");
    std::string name = r.get_bytes(len, "name");
    const auto rank = r.get_le<std::uint32_t>("rank");
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.get_le<std::uint64_t>("extent"));
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = std::bit_cast<double>(r.get_le<std::uint64_t>("value"));
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
  }
  return out;
}

void save(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const std::string bytes = encode(tensors);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

std::vector<NamedTensor> load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode(bytes);
}

std::vector<NamedTensor> restore(ParamStore& store, const std::vector<NamedTensor>& tensors) {
  std::vector<NamedTensor> extra;
  for (const auto& nt : store.all()) {
    auto it = std::find_if(tensors.begin(), tensors.end(), [&](const NamedTensor& x) { return x.name == nt.name; });
    if (it == tensors.end()) throw std::runtime_error("checkpoint is missing tensor '" + nt.name + "'");
    if (it->tensor.shape() != nt.tensor.shape()) {
      throw std::runtime_error("checkpoint tensor '" + nt.name + "' has shape " + shape_str(it->tensor.shape()) +
                               ", model expects " + shape_str(nt.tensor.shape()));
    }
  }
  for (const auto& nt : tensors) {
    Tensor target = store.find(nt.name);
    if (!target.defined()) {
      extra.push_back(nt);
      continue;
    }
    auto dst = target.values_mut();
    const auto src = nt.tensor.values();
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return extra;
}

}  // namespace fgsgt::checkpoint
