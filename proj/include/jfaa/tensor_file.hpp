#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "jfaa/error.hpp"

namespace jfaa {

enum class DType : std::uint32_t { kF32 = 1, kF64 = 2, kI64 = 3, kBytes = 4 };

std::size_t dtype_size(DType t);

/// One named 2-D block of a tensor container; payload is little-endian, row-major.
struct TensorBlock {
  std::string name;
  DType dtype = DType::kF64;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<unsigned char> payload;

  template <class Derived>
  static TensorBlock from_matrix(std::string name, const Eigen::DenseBase<Derived>& m);
  static TensorBlock from_text(std::string name, const std::string& text);
  static TensorBlock from_ints(std::string name, const std::vector<std::int64_t>& values,
                               std::uint32_t cols = 1);

  /// Row-major matrix of the stored values, converted to Scalar.
  template <class Scalar>
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> to_matrix() const;
  std::string to_text() const;
  std::vector<std::int64_t> to_ints() const;
};

/// Named-block container: 8-byte magic "JFAATENS", u32 version, u32 block count, then
/// per block u32 name length, name bytes, u32 dtype, u32 rows, u32 cols, payload.
class TensorFile {
 public:
  static constexpr char kMagic[9] = "JFAATENS";
  static constexpr std::uint32_t kVersion = 1;

  void add(TensorBlock block);
  const TensorBlock& at(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::vector<TensorBlock>& blocks() const { return blocks_; }

  void save(const std::filesystem::path& path) const;
  static TensorFile load(const std::filesystem::path& path);

 private:
  std::vector<TensorBlock> blocks_;
};

namespace le {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v);
std::uint32_t get_u32(const unsigned char* p);

template <class T>
void put(std::vector<unsigned char>& out, T v) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  U bits;
  std::memcpy(&bits, &v, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<unsigned char>(bits >> (8 * i)));
}

template <class T>
T get(const unsigned char* p) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(p[i]) << (8 * i);
  T v;
  std::memcpy(&v, &bits, sizeof(T));
  return v;
}

}  // namespace le

template <class Derived>
TensorBlock TensorBlock::from_matrix(std::string name, const Eigen::DenseBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  static_assert(std::is_same_v<Scalar, float> || std::is_same_v<Scalar, double>);
  TensorBlock b;
  b.name = std::move(name);
  b.dtype = std::is_same_v<Scalar, float> ? DType::kF32 : DType::kF64;
  b.rows = static_cast<std::uint32_t>(m.rows());
  b.cols = static_cast<std::uint32_t>(m.cols());
  b.payload.reserve(static_cast<std::size_t>(m.size()) * sizeof(Scalar));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) le::put<Scalar>(b.payload, m(r, c));
  return b;
}

template <class Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> TensorBlock::to_matrix()
    const {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> m(rows, cols);
  const unsigned char* p = payload.data();
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    switch (dtype) {
      case DType::kF32: m.data()[i] = static_cast<Scalar>(le::get<float>(p + 4 * i)); break;
      case DType::kF64: m.data()[i] = static_cast<Scalar>(le::get<double>(p + 8 * i)); break;
      default: throw DataError("block '" + name + "' is not floating point");
    }
  }
  return m;
}

}  // namespace jfaa
