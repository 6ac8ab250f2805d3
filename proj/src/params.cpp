#include "sylcount/params.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <set>

#include "sylcount/error.hpp"

namespace sylcount {

std::size_t ParamSet::add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  if (index_.count(name)) throw UsageError("duplicate parameter name '" + name + "'");
  index_[name] = tensors_.size();
  names_.push_back(name);
  tensors_.push_back(Eigen::MatrixXd::Zero(rows, cols));
  return tensors_.size() - 1;
}

std::size_t ParamSet::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw DataError("unknown parameter '" + name + "'");
  return it->second;
}

Eigen::Index ParamSet::total_elements() const {
  Eigen::Index n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

bool ParamSet::all_finite() const {
  for (const auto& t : tensors_)
    if (!t.allFinite()) return false;
  return true;
}

void ParamSet::set_zero() {
  for (auto& t : tensors_) t.setZero();
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out = *this;
  out.set_zero();
  return out;
}

bool ParamSet::operator==(const ParamSet& other) const {
  if (names_ != other.names_) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    const auto& a = tensors_[i];
    const auto& b = other.tensors_[i];
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    for (Eigen::Index k = 0; k < a.size(); ++k)
      if (std::bit_cast<std::uint64_t>(a.data()[k]) != std::bit_cast<std::uint64_t>(b.data()[k]))
        return false;
  }
  return true;
}

namespace {

constexpr char kMagic[8] = {'S', 'Y', 'L', 'T', 'N', 'S', 'R', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>(v >> (8 * i));
  out.write(b, 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw DataError("truncated tensor archive");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_tensor_archive(const std::filesystem::path& path, const ParamSet& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write tensor archive '" + path.string() + "'");
  out.write(kMagic, 8);
  put_u64(out, params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string& name = params.name(i);
    const Eigen::MatrixXd& t = params[i];
    put_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u64(out, static_cast<std::uint64_t>(t.rows()));
    put_u64(out, static_cast<std::uint64_t>(t.cols()));
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index c = 0; c < t.cols(); ++c) put_u64(out, std::bit_cast<std::uint64_t>(t(r, c)));
  }
  if (!out) throw DataError("failed writing tensor archive '" + path.string() + "'");
}

void read_tensor_archive(const std::filesystem::path& path, ParamSet& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open tensor archive '" + path.string() + "'");
  try {
    char magic[8];
    if (!in.read(magic, 8) || !std::equal(magic, magic + 8, kMagic))
      throw DataError("bad magic");
    const std::uint64_t count = get_u64(in);
    if (count > 100000) throw DataError("implausible tensor count");
    std::set<std::string> seen;
    for (std::uint64_t k = 0; k < count; ++k) {
      const std::uint64_t len = get_u64(in);
      if (len > 4096) throw DataError("implausible tensor name length");
      std::string name(len, '\0');
      if (!in.read(name.data(), static_cast<std::streamsize>(len))) throw DataError("truncated name");
      const auto rows = static_cast<Eigen::Index>(get_u64(in));
      const auto cols = static_cast<Eigen::Index>(get_u64(in));
      if (!params.contains(name)) throw DataError("unexpected tensor '" + name + "'");
      Eigen::MatrixXd& t = params.at(name);
      if (t.rows() != rows || t.cols() != cols)
        throw DataError("tensor '" + name + "' has shape " + std::to_string(rows) + "x" +
                        std::to_string(cols) + ", configuration expects " +
                        std::to_string(t.rows()) + "x" + std::to_string(t.cols()));
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) t(r, c) = std::bit_cast<double>(get_u64(in));
      seen.insert(name);
    }
    for (const auto& name : params.names())
      if (!seen.count(name)) throw DataError("tensor '" + name + "' missing");
  } catch (const DataError& e) {
    throw DataError("tensor archive '" + path.string() + "': " + e.what());
  }
}

}  // namespace sylcount
