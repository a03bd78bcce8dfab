#include "jfaa/tensor_file.hpp"

#include <fstream>
#include <iterator>

namespace jfaa {

namespace le {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}

}  // namespace le

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::kF32: return 4;
    case DType::kF64: return 8;
    case DType::kI64: return 8;
    case DType::kBytes: return 1;
  }
  throw DataError("unknown dtype");
}

TensorBlock TensorBlock::from_text(std::string name, const std::string& text) {
  TensorBlock b;
  b.name = std::move(name);
  b.dtype = DType::kBytes;
  b.rows = static_cast<std::uint32_t>(text.size());
  b.cols = 1;
  b.payload.assign(text.begin(), text.end());
  return b;
}

TensorBlock TensorBlock::from_ints(std::string name, const std::vector<std::int64_t>& values,
                                   std::uint32_t cols) {
  if (cols == 0 || values.size() % cols != 0) throw DataError("from_ints: bad column count");
  TensorBlock b;
  b.name = std::move(name);
  b.dtype = DType::kI64;
  b.rows = static_cast<std::uint32_t>(values.size() / cols);
  b.cols = cols;
  for (auto v : values) le::put<std::int64_t>(b.payload, v);
  return b;
}

std::string TensorBlock::to_text() const {
  if (dtype != DType::kBytes) throw DataError("block '" + name + "' is not text");
  return {payload.begin(), payload.end()};
}

std::vector<std::int64_t> TensorBlock::to_ints() const {
  if (dtype != DType::kI64) throw DataError("block '" + name + "' is not integer");
  std::vector<std::int64_t> out(payload.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = le::get<std::int64_t>(payload.data() + 8 * i);
  return out;
}

void TensorFile::add(TensorBlock block) {
  if (contains(block.name)) throw DataError("duplicate block '" + block.name + "'");
  blocks_.push_back(std::move(block));
}

bool TensorFile::contains(const std::string& name) const {
  for (const auto& b : blocks_)
    if (b.name == name) return true;
  return false;
}

const TensorBlock& TensorFile::at(const std::string& name) const {
  for (const auto& b : blocks_)
    if (b.name == name) return b;
  throw DataError("missing block '" + name + "'");
}

void TensorFile::save(const std::filesystem::path& path) const {
  std::vector<unsigned char> bytes(kMagic, kMagic + 8);
  le::put_u32(bytes, kVersion);
  le::put_u32(bytes, static_cast<std::uint32_t>(blocks_.size()));
  for (const auto& b : blocks_) {
    le::put_u32(bytes, static_cast<std::uint32_t>(b.name.size()));
    bytes.insert(bytes.end(), b.name.begin(), b.name.end());
    le::put_u32(bytes, static_cast<std::uint32_t>(b.dtype));
    le::put_u32(bytes, b.rows);
    le::put_u32(bytes, b.cols);
    bytes.insert(bytes.end(), b.payload.begin(), b.payload.end());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

TensorFile TensorFile::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("tensor file not found: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const auto where = path.string();
  std::size_t pos = 0;
  const auto need = [&](std::size_t n) {
    if (bytes.size() - pos < n) throw DataError(where + ": truncated");
  };
  const auto u32 = [&] {
    need(4);
    auto v = le::get_u32(bytes.data() + pos);
    pos += 4;
    return v;
  };
  need(8);
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) throw DataError(where + ": bad magic");
  pos = 8;
  if (u32() != kVersion) throw DataError(where + ": unsupported version");
  const auto count = u32();
  TensorFile file;
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorBlock b;
    const auto name_len = u32();
    need(name_len);
    b.name.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                  bytes.begin() + static_cast<std::ptrdiff_t>(pos + name_len));
    pos += name_len;
    const auto dtype = u32();
    if (dtype < 1 || dtype > 4) throw DataError(where + ": bad dtype in block " + b.name);
    b.dtype = static_cast<DType>(dtype);
    b.rows = u32();
    b.cols = u32();
    const std::uint64_t n = std::uint64_t{b.rows} * b.cols * dtype_size(b.dtype);
    need(n);
    b.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                     bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
    pos += n;
    file.add(std::move(b));
  }
  if (pos != bytes.size()) throw DataError(where + ": trailing bytes");
  return file;
}

}  // namespace jfaa
