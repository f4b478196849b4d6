#include "phonogan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace phonogan::nn {

long numel(const Shape& shape) {
  long n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor dims must be positive, got " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  long n = nn::numel(shape);
  return leaf(std::move(shape), Array::Zero(n), requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  long n = nn::numel(shape);
  return leaf(std::move(shape), Array::Constant(n, v), requires_grad);
}

Tensor Tensor::scalar(double v) { return full({1}, v); }

Tensor Tensor::from(Shape shape, std::vector<double> vals, bool requires_grad) {
  long n = nn::numel(shape);
  if (n != static_cast<long>(vals.size()))
    throw std::invalid_argument("value count " + std::to_string(vals.size()) +
                                " does not match shape " + shape_str(shape));
  Array a = Eigen::Map<const Array>(vals.data(), n);
  return leaf(std::move(shape), std::move(a), requires_grad);
}

Tensor Tensor::leaf(Shape shape, Array values, bool requires_grad) {
  if (nn::numel(shape) != values.size())
    throw std::invalid_argument("value count " + std::to_string(values.size()) +
                                " does not match shape " + shape_str(shape));
  auto n = std::make_shared<Node>();
  n->value = std::move(values);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  n->op = "leaf";
  return Tensor(std::move(n));
}

double Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item() on non-scalar tensor " + shape_str(shape()));
  return node_->value[0];
}

void Tensor::set_requires_grad(bool rg) {
  if (node_->backward) throw std::invalid_argument("requires_grad can only be toggled on leaves");
  node_->requires_grad = rg;
}

void Tensor::zero_grad() {
  if (node_->grad.size() != numel()) node_->grad = Array::Zero(numel());
  else node_->grad.setZero();
}

Tensor Tensor::detach() const { return leaf(node_->shape, node_->value, false); }

Tensor Tensor::clone(bool requires_grad) const {
  Array copy = node_->value;
  return leaf(node_->shape, std::move(copy), requires_grad);
}

namespace {
thread_local int g_no_grad_depth = 0;
}

bool grad_enabled() { return g_no_grad_depth == 0; }

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

Tensor make_node(Array value, Shape shape, std::vector<Tensor> parents,
                 BackwardFn backward, const char* op) {
  if (numel(shape) != value.size())
    throw std::invalid_argument(std::string(op) + ": value count does not match shape " + shape_str(shape));
  bool track = grad_enabled();
  if (track) {
    track = false;
    for (const auto& p : parents)
      if (p.requires_grad()) { track = true; break; }
  }
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->shape = std::move(shape);
  n->op = op;
  if (track) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node_ptr());
    n->backward = std::move(backward);
  }
  return Tensor(std::move(n));
}

namespace {

// Reverse topological order of the subgraph reachable from root through
// nodes satisfying `follow`. Iterative DFS; graphs can be thousands deep.
std::vector<Node*> topo_order(Node* root, const std::function<bool(Node*)>& follow) {
  std::vector<Node*> order;
  std::unordered_map<Node*, int> state;  // 0 unseen, 1 open, 2 done
  std::vector<std::pair<Node*, size_t>> stack;
  stack.push_back({root, 0});
  state[root] = 1;
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node* p = n->parents[idx++].get();
      if (follow(p) && state[p] == 0) {
        state[p] = 1;
        stack.push_back({p, 0});
      }
    } else {
      state[n] = 2;
      order.push_back(n);
      stack.pop_back();
    }
  }
  return order;  // parents before children; iterate reversed for backprop
}

struct BackpropResult {
  std::unordered_map<Node*, Tensor> cotangents;
};

// Core engine: propagate cotangents from root down to every node where
// need(node) holds. Under create_graph the cotangent arithmetic itself is
// recorded so it can be differentiated again.
BackpropResult backprop(const Tensor& root, double seed, bool create_graph,
                        const std::function<bool(Node*)>& need) {
  if (root.numel() != 1)
    throw std::invalid_argument("backward() requires a scalar root, got " + shape_str(root.shape()));

  std::unique_ptr<NoGradGuard> guard;
  if (!create_graph) guard = std::make_unique<NoGradGuard>();

  auto order = topo_order(root.node(), need);

  BackpropResult res;
  res.cotangents.emplace(root.node(), Tensor::scalar(seed));

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    auto ct = res.cotangents.find(n);
    if (ct == res.cotangents.end() || !n->backward) continue;

    std::vector<char> mask(n->parents.size(), 0);
    bool any = false;
    for (size_t i = 0; i < n->parents.size(); ++i) {
      mask[i] = need(n->parents[i].get()) ? 1 : 0;
      any = any || mask[i];
    }
    if (!any) continue;

    std::vector<Tensor> pgrads = n->backward(ct->second, mask);
    if (pgrads.size() != n->parents.size())
      throw std::runtime_error(std::string(n->op) + ": backward returned wrong arity");

    for (size_t i = 0; i < n->parents.size(); ++i) {
      if (!mask[i]) continue;
      Node* p = n->parents[i].get();
      Tensor& g = pgrads[i];
      if (!g.defined())
        throw std::runtime_error(std::string(n->op) + ": backward skipped a needed parent");
      if (g.numel() != numel(p->shape))
        throw std::runtime_error(std::string(n->op) + ": cotangent shape mismatch");
      auto slot = res.cotangents.find(p);
      if (slot == res.cotangents.end()) {
        res.cotangents.emplace(p, g);
      } else {
        // accumulate; recorded as an op when create_graph is on
        Array sum = slot->second.values() + g.values();
        std::vector<Tensor> ps{slot->second, g};
        slot->second = make_node(std::move(sum), p->shape, std::move(ps),
                                 [](const Tensor& c, const std::vector<char>&) {
                                   return std::vector<Tensor>{c, c};
                                 },
                                 "grad_add");
      }
    }
  }
  return res;
}

}  // namespace

void backward(const Tensor& root, double seed) {
  auto need = [](Node* n) { return n->requires_grad; };
  auto res = backprop(root, seed, /*create_graph=*/false, need);
  for (auto& [node, cot] : res.cotangents) {
    if (node->backward || !node->requires_grad) continue;
    if (node->grad.size() != node->value.size()) node->grad = Array::Zero(node->value.size());
    node->grad += cot.values();
  }
}

GradMap collect_grads(const Tensor& root, double seed) {
  auto need = [](Node* n) { return n->requires_grad; };
  auto res = backprop(root, seed, /*create_graph=*/false, need);
  GradMap out;
  for (auto& [node, cot] : res.cotangents) {
    if (node->backward || !node->requires_grad) continue;
    out.emplace(node, cot.values());
  }
  return out;
}

Tensor grad_wrt(const Tensor& root, const Tensor& x, bool create_graph, double seed) {
  // need(n) := x is reachable from n through parent edges
  std::unordered_map<Node*, bool> memo;
  Node* target = x.node();
  std::function<bool(Node*)> need = [&](Node* n) -> bool {
    if (n == target) return true;
    auto it = memo.find(n);
    if (it != memo.end()) return it->second;
    memo[n] = false;  // cut cycles (graphs are acyclic, this guards recursion)
    bool r = false;
    for (auto& p : n->parents)
      if (need(p.get())) { r = true; break; }
    memo[n] = r;
    return r;
  };
  if (!need(root.node()) && root.node() != target)
    return Tensor::zeros(x.shape());
  auto res = backprop(root, seed, create_graph, need);
  auto it = res.cotangents.find(target);
  if (it == res.cotangents.end()) return Tensor::zeros(x.shape());
  return it->second;
}

double Rng::uniform(double lo, double hi) {
  if (!(lo < hi)) throw std::invalid_argument("uniform: lo must be < hi");
  double v = lo + uniform01() * (hi - lo);
  if (v >= hi) v = std::nextafter(hi, lo);  // fp rounding guard at the top end
  return v;
}

long Rng::uniform_int(long lo, long hi) {
  if (lo > hi) throw std::invalid_argument("uniform_int: empty range");
  std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<long>(eng_());  // full 64-bit range
  std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  std::uint64_t v;
  do { v = eng_(); } while (v >= limit);
  return lo + static_cast<long>(v % span);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng Rng::derive(std::uint64_t a, std::uint64_t b, std::uint64_t c) const {
  std::uint64_t s = splitmix64(seed_ ^ splitmix64(a ^ splitmix64(b ^ splitmix64(c))));
  return Rng(s);
}

Tensor uniform(Rng& rng, Shape shape, double lo, double hi, bool requires_grad) {
  if (!(lo < hi)) throw std::invalid_argument("uniform: lo must be < hi");
  long n = numel(shape);
  Array a(n);
  for (long i = 0; i < n; ++i) a[i] = rng.uniform(lo, hi);
  return Tensor::leaf(std::move(shape), std::move(a), requires_grad);
}

}  // namespace phonogan::nn
