#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace phonogan::nn {

using Array = Eigen::ArrayXd;
using Shape = std::vector<int>;

long numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;

/// Vector-Jacobian product of one graph node. Given the cotangent of the
/// node's output, returns one cotangent per parent. Parents whose `needed`
/// flag is false may be skipped (return an empty Tensor in that slot).
using BackwardFn = std::function<std::vector<Tensor>(const Tensor& cotangent,
                                                     const std::vector<char>& needed)>;

struct Node {
  Array value;
  Shape shape;
  bool requires_grad = false;
  Array grad;  // leaf accumulator, sized lazily by backward()
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;  // empty for leaves
  const char* op = "";
};

/// Shape-tagged array of doubles with optional reverse-mode gradient support.
/// Value semantics over a shared node: copies alias the same storage, which
/// is what the graph engine needs; use detach() or clone() to break the link.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor scalar(double v);
  static Tensor from(Shape shape, std::vector<double> vals, bool requires_grad = false);
  static Tensor leaf(Shape shape, Array values, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  long numel() const { return node_->value.size(); }
  int dim(int i) const { return node_->shape[i]; }
  int rank() const { return static_cast<int>(node_->shape.size()); }

  const Array& values() const { return node_->value; }
  Array& values() { return node_->value; }
  double value_at(long i) const { return node_->value[i]; }
  double item() const;  // scalar tensors only

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg);  // leaves only
  bool is_leaf() const { return !node_->backward; }

  /// Accumulated gradient of a leaf; empty until backward() touches it.
  const Array& grad() const { return node_->grad; }
  Array& grad() { return node_->grad; }
  bool has_grad() const { return node_->grad.size() == numel(); }
  void zero_grad();

  /// Same values, no history, no gradient requirement.
  Tensor detach() const;
  /// Deep copy of the values as a fresh leaf.
  Tensor clone(bool requires_grad = false) const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

  friend Tensor make_node(Array value, Shape shape, std::vector<Tensor> parents,
                          BackwardFn backward, const char* op);

 private:
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
  std::shared_ptr<Node> node_;
};

/// Creates a graph node; collapses to a plain leaf when grad recording is
/// off or no parent requires a gradient.
Tensor make_node(Array value, Shape shape, std::vector<Tensor> parents,
                 BackwardFn backward, const char* op);

bool grad_enabled();

/// RAII scope that disables graph recording on this thread.
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

using GradMap = std::unordered_map<Node*, Array>;

/// Accumulates d(root)/d(leaf) into .grad of every leaf that requires grad.
/// root must be scalar; the seed cotangent is `seed` (use 1/batch for means).
void backward(const Tensor& root, double seed = 1.0);

/// Like backward() but returns the per-leaf gradients without mutating any
/// node, so independent graphs can be processed on worker threads and the
/// results reduced in a fixed order.
GradMap collect_grads(const Tensor& root, double seed = 1.0);

/// Gradient of a scalar root w.r.t. one tensor in its graph. With
/// create_graph the returned tensor carries its own history, so expressions
/// of it can be backward()ed again (used by the gradient penalty).
Tensor grad_wrt(const Tensor& root, const Tensor& x, bool create_graph = false,
                double seed = 1.0);

/// Deterministic pseudo-random stream. The engine is std::mt19937_64 (bit
/// exact across platforms per the standard); doubles are built from the top
/// 53 bits, so identical seeds give identical streams everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return eng_(); }

  /// Uniform double in [0, 1).
  double uniform01() { return (eng_() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi); lo < hi required.
  double uniform(double lo, double hi);

  /// Uniform integer in [lo, hi] inclusive, by 64-bit rejection sampling.
  long uniform_int(long lo, long hi);

  /// Child stream for (a, b, c); splitmix64 over the parent seed, so
  /// parallel and serial consumers agree bit-exactly.
  Rng derive(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const;

 private:
  std::mt19937_64 eng_;
  std::uint64_t seed_;
};

std::uint64_t splitmix64(std::uint64_t x);

/// i.i.d. uniform values in [lo, hi); reproducible from the rng state.
Tensor uniform(Rng& rng, Shape shape, double lo, double hi, bool requires_grad = false);

}  // namespace phonogan::nn
