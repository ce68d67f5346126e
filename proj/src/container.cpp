#include "stereodistill/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include "stereodistill/errors.hpp"

namespace stereodistill {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace {

template <class T>
void put(std::string& buf, T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  buf.append(b, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& data, std::string path) : data_(data), path_(std::move(path)) {}

  template <class T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  const char* take(size_t n) {
    if (n > data_.size() - pos_) throw IoError(path_ + ": truncated container");
    const char* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }
  size_t pos() const { return pos_; }

 private:
  const std::string& data_;
  std::string path_;
  size_t pos_ = 0;
};

}  // namespace

const Tensor* Container::find(const std::string& name) const {
  for (const auto& [n, t] : entries) {
    if (n == name) return &t;
  }
  return nullptr;
}

const Tensor& Container::at(const std::string& name) const {
  const Tensor* t = find(name);
  if (!t) throw IoError("container has no entry '" + name + "'");
  return *t;
}

void Container::add(std::string name, Tensor t) { entries.emplace_back(std::move(name), std::move(t)); }

void write_container(const std::string& path, const Container& c) {
  std::set<std::string> seen;
  std::string head(Container::kMagic, 4);
  put<uint32_t>(head, Container::kVersion);
  const std::string meta = c.metadata.dump();
  put<uint64_t>(head, meta.size());
  head += meta;
  put<uint32_t>(head, static_cast<uint32_t>(c.entries.size()));
  uint64_t offset = 0;
  for (const auto& [name, t] : c.entries) {
    if (!seen.insert(name).second) throw IoError("duplicate container entry '" + name + "'");
    put<uint32_t>(head, static_cast<uint32_t>(name.size()));
    head += name;
    put<uint8_t>(head, 0);
    put<uint8_t>(head, static_cast<uint8_t>(t.rank()));
    for (auto d : t.shape()) put<uint64_t>(head, static_cast<uint64_t>(d));
    const uint64_t nbytes = static_cast<uint64_t>(t.numel()) * 4;
    put<uint64_t>(head, offset);
    put<uint64_t>(head, nbytes);
    offset += nbytes;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  for (const auto& [name, t] : c.entries) {
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * 4));
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

Container read_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(data, path);
  if (std::memcmp(r.take(4), Container::kMagic, 4) != 0) throw IoError(path + ": not a tensor container");
  const auto version = r.get<uint32_t>();
  if (version != Container::kVersion) {
    throw IoError(path + ": unsupported container version " + std::to_string(version));
  }
  const auto meta_len = r.get<uint64_t>();
  Container c;
  try {
    c.metadata = nlohmann::json::parse(std::string(r.take(meta_len), meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": bad metadata: " + e.what());
  }
  const auto count = r.get<uint32_t>();
  struct Index {
    std::string name;
    Shape shape;
    uint64_t offset, nbytes;
  };
  std::vector<Index> index;
  for (uint32_t i = 0; i < count; ++i) {
    Index e;
    const auto len = r.get<uint32_t>();
    e.name.assign(r.take(len), len);
    if (r.get<uint8_t>() != 0) throw IoError(path + ": unsupported dtype for '" + e.name + "'");
    const auto rank = r.get<uint8_t>();
    for (int k = 0; k < rank; ++k) e.shape.push_back(static_cast<int64_t>(r.get<uint64_t>()));
    e.offset = r.get<uint64_t>();
    e.nbytes = r.get<uint64_t>();
    if (e.nbytes != static_cast<uint64_t>(numel(e.shape)) * 4) {
      throw IoError(path + ": byte length of '" + e.name + "' does not match its shape");
    }
    index.push_back(std::move(e));
  }
  const size_t blob = r.pos();
  for (auto& e : index) {
    if (blob + e.offset + e.nbytes > data.size()) throw IoError(path + ": truncated payload for '" + e.name + "'");
    Tensor t(e.shape);
    std::memcpy(t.data(), data.data() + blob + e.offset, e.nbytes);
    c.entries.emplace_back(std::move(e.name), std::move(t));
  }
  return c;
}

}  // namespace stereodistill
