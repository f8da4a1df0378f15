#ifndef MAPGAN_TENSOR_HPP_
#define MAPGAN_TENSOR_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace mapgan {

enum class Mode { Train, Eval };

namespace detail {

[[noreturn]] inline void fail(const std::string& msg) {
  throw std::invalid_argument(msg);
}

inline void check(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

inline std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

inline int64_t shape_numel(const std::vector<int>& s) {
  check(!s.empty(), "tensor shape must be non-empty");
  int64_t n = 1;
  for (int d : s) {
    check(d > 0, "tensor dimensions must be positive, got " + shape_str(s));
    n *= d;
  }
  return n;
}

}  // namespace detail

// N-dimensional float32 array in row-major layout. Copies share the
// underlying buffer; forward ops never mutate their inputs, so sharing is
// observable only through the gradient buffer, which is exactly what
// parameter handles rely on. Deep copies are explicit (clone/detached).
class Tensor {
  struct Storage {
    std::vector<int> shape;
    std::vector<float> data;
    std::vector<float> grad;  // empty until a backward pass reaches it
    bool requires_grad = false;
  };

 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
    return full(std::move(shape), 0.0f, requires_grad);
  }

  static Tensor ones(std::vector<int> shape, bool requires_grad = false) {
    return full(std::move(shape), 1.0f, requires_grad);
  }

  static Tensor full(std::vector<int> shape, float value,
                     bool requires_grad = false) {
    int64_t n = detail::shape_numel(shape);
    auto st = std::make_shared<Storage>();
    st->shape = std::move(shape);
    st->data.assign(static_cast<size_t>(n), value);
    st->requires_grad = requires_grad;
    return Tensor(std::move(st));
  }

  static Tensor from_vector(std::vector<int> shape, std::vector<float> data,
                            bool requires_grad = false) {
    int64_t n = detail::shape_numel(shape);
    detail::check(n == static_cast<int64_t>(data.size()),
                  "from_vector: " + std::to_string(data.size()) +
                      " values do not fill shape " + detail::shape_str(shape));
    auto st = std::make_shared<Storage>();
    st->shape = std::move(shape);
    st->data = std::move(data);
    st->requires_grad = requires_grad;
    return Tensor(std::move(st));
  }

  static Tensor scalar(float value, bool requires_grad = false) {
    return full({1}, value, requires_grad);
  }

  bool defined() const { return st_ != nullptr; }

  const std::vector<int>& shape() const { return st().shape; }

  int dim(size_t i) const {
    detail::check(i < st().shape.size(), "dim index out of range");
    return st().shape[i];
  }

  size_t ndim() const { return st().shape.size(); }

  int64_t numel() const { return static_cast<int64_t>(st().data.size()); }

  float* data() { return st().data.data(); }
  const float* data() const { return st().data.data(); }

  std::vector<float>& values() { return st().data; }
  const std::vector<float>& values() const { return st().data; }

  bool requires_grad() const { return defined() && st_->requires_grad; }
  void set_requires_grad(bool rg) { st().requires_grad = rg; }

  bool has_grad() const { return defined() && !st_->grad.empty(); }

  std::vector<float>& grad() {
    detail::check(has_grad(), "tensor has no gradient buffer");
    return st_->grad;
  }
  const std::vector<float>& grad() const {
    detail::check(has_grad(), "tensor has no gradient buffer");
    return st_->grad;
  }

  void zero_grad() {
    if (has_grad()) std::fill(st_->grad.begin(), st_->grad.end(), 0.0f);
  }

  void accumulate_grad(const std::vector<float>& g) {
    detail::check(static_cast<int64_t>(g.size()) == numel(),
                  "gradient size does not match tensor");
    if (st_->grad.empty()) st_->grad.assign(g.size(), 0.0f);
    for (size_t i = 0; i < g.size(); ++i) st_->grad[i] += g[i];
  }

  float item() const {
    detail::check(numel() == 1, "item() requires a single-element tensor, got " +
                                    detail::shape_str(shape()));
    return st().data[0];
  }

  // deep copy of the data; no gradient, same requires_grad flag
  Tensor clone() const {
    auto st = std::make_shared<Storage>();
    st->shape = st_->shape;
    st->data = st_->data;
    st->requires_grad = st_->requires_grad;
    return Tensor(std::move(st));
  }

  // deep copy that drops gradient tracking, severing any graph link
  Tensor detached() const {
    auto st = std::make_shared<Storage>();
    st->shape = st_->shape;
    st->data = st_->data;
    st->requires_grad = false;
    return Tensor(std::move(st));
  }

  // storage identity; stable across handle copies
  const void* id() const { return st_.get(); }

  bool same_storage(const Tensor& other) const { return st_ == other.st_; }

 private:
  explicit Tensor(std::shared_ptr<Storage> st) : st_(std::move(st)) {}

  Storage& st() {
    detail::check(st_ != nullptr, "operation on an undefined tensor");
    return *st_;
  }
  const Storage& st() const {
    detail::check(st_ != nullptr, "operation on an undefined tensor");
    return *st_;
  }

  std::shared_ptr<Storage> st_;
};

// Reverse-mode tape. Constructing a Graph makes it the recording target for
// the current thread; destruction restores the previous one. Ops append an
// entry when a graph is active and any input requires a gradient, which
// guarantees topological order by construction. backward() replays entries
// in reverse with per-call scratch gradients and then accumulates into the
// persistent grad buffers of leaf tensors only, so repeated backward calls
// add up until the caller zeroes them.
class Graph {
 public:
  using GradMap = std::unordered_map<const void*, std::vector<float>>;
  using BackwardFn = std::function<void(const std::vector<float>&, GradMap&)>;

  Graph() : prev_(current_slot()) { current_slot() = this; }
  ~Graph() { current_slot() = prev_; }
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  static Graph* current() { return current_slot(); }

  // registers a leaf candidate: an input that requires grad and was not
  // produced by an op recorded earlier on this tape
  void watch(const Tensor& t) {
    if (!t.requires_grad()) return;
    if (produced_.count(t.id())) return;
    leaves_.emplace(t.id(), t);
  }

  void record(const Tensor& out, BackwardFn fn) {
    produced_.insert(out.id());
    entries_.push_back(Entry{out, std::move(fn)});
  }

  size_t size() const { return entries_.size(); }

  void backward(const Tensor& loss) {
    detail::check(loss.defined() && loss.numel() == 1,
                  "backward: loss must be a single-element tensor" +
                      (loss.defined() ? ", got " + detail::shape_str(loss.shape())
                                      : std::string()));
    GradMap gm;
    gm[loss.id()] = {1.0f};
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      auto found = gm.find(it->out.id());
      if (found == gm.end()) continue;  // nothing downstream consumed this op
      it->fn(found->second, gm);
    }
    for (auto& [id, g] : gm) {
      auto leaf = leaves_.find(id);
      if (leaf != leaves_.end()) leaf->second.accumulate_grad(g);
    }
  }

  // scratch-gradient accumulation helper for backward closures
  static void add_grad(GradMap& gm, const Tensor& t, std::vector<float>&& g) {
    auto& slot = gm[t.id()];
    if (slot.empty()) {
      slot = std::move(g);
    } else {
      for (size_t i = 0; i < slot.size(); ++i) slot[i] += g[i];
    }
  }

 private:
  struct Entry {
    Tensor out;
    BackwardFn fn;
  };

  static Graph*& current_slot() {
    thread_local Graph* current = nullptr;
    return current;
  }

  Graph* prev_ = nullptr;
  std::vector<Entry> entries_;
  std::unordered_set<const void*> produced_;
  std::unordered_map<const void*, Tensor> leaves_;
};

namespace detail {

// true when the op must be recorded on the active tape
inline bool tracing(std::initializer_list<const Tensor*> inputs) {
  if (Graph::current() == nullptr) return false;
  for (const Tensor* t : inputs)
    if (t && t->defined() && t->requires_grad()) return true;
  return false;
}

inline void watch_all(std::initializer_list<const Tensor*> inputs) {
  for (const Tensor* t : inputs)
    if (t && t->defined()) Graph::current()->watch(*t);
}

}  // namespace detail

}  // namespace mapgan

#endif  // MAPGAN_TENSOR_HPP_
