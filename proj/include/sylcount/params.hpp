#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace sylcount {

// Ordered collection of named parameter tensors. Models address tensors by
// the index returned from add(); names identify them in checkpoints and
// adaptation partitions.
class ParamSet {
 public:
  std::size_t add(const std::string& name, Eigen::Index rows, Eigen::Index cols);

  std::size_t size() const { return tensors_.size(); }
  Eigen::MatrixXd& operator[](std::size_t i) { return tensors_[i]; }
  const Eigen::MatrixXd& operator[](std::size_t i) const { return tensors_[i]; }
  Eigen::MatrixXd& at(const std::string& name) { return tensors_[index_of(name)]; }
  const Eigen::MatrixXd& at(const std::string& name) const { return tensors_[index_of(name)]; }

  const std::string& name(std::size_t i) const { return names_[i]; }
  const std::vector<std::string>& names() const { return names_; }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  std::size_t index_of(const std::string& name) const;

  Eigen::Index total_elements() const;
  bool all_finite() const;
  void set_zero();
  // Same names and shapes, all zeros.
  ParamSet zeros_like() const;

  bool operator==(const ParamSet& other) const;

 private:
  std::vector<std::string> names_;
  std::vector<Eigen::MatrixXd> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Disjoint, exhaustive split of a model's tensors into the part that stays
// fixed during adaptation and the part that is retrained.
struct ParamPartition {
  std::vector<std::string> frozen;
  std::vector<std::string> tunable;
};

// Flat tensor archive: magic, tensor count, then per tensor the name, shape
// and little-endian float64 values in row-major order.
void write_tensor_archive(const std::filesystem::path& path, const ParamSet& params);
// Loads into `params`, which must already hold tensors of the expected names
// and shapes; any missing, extra or mis-shaped tensor is a DataError.
void read_tensor_archive(const std::filesystem::path& path, ParamSet& params);

}  // namespace sylcount
