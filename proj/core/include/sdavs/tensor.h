#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdavs {

// Raised when a forward op produces NaN/Inf, or when a training loss goes
// non-finite. The harness maps this to exit code 3.
class NumericError : public std::runtime_error {
  public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

template <typename S>
struct Node {
    Shape shape;
    std::vector<S> val;
    std::vector<S> grad;  // lazily allocated; empty means "all zero"
    bool requires_grad = false;
    std::function<void()> backward;  // set only for recorded op outputs

    std::vector<S>& ensure_grad() {
        if (grad.empty()) grad.assign(val.size(), S(0));
        return grad;
    }
};

namespace detail {

template <typename S>
inline std::vector<std::shared_ptr<Node<S>>>& tape() {
    thread_local std::vector<std::shared_ptr<Node<S>>> t;
    return t;
}

inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

template <typename S>
inline void check_finite(const char* op, const std::vector<S>& v) {
    for (const S x : v) {
        if (!std::isfinite(double(x)))
            throw NumericError(std::string("non-finite value produced by op '") + op + "'");
    }
}

}  // namespace detail

// Scoped guard disabling gradient recording (and tape growth) on this thread.
class NoGradGuard {
  public:
    NoGradGuard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
    ~NoGradGuard() { detail::grad_mode() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

// Dense row-major tensor handle with reverse-mode autodiff. Value semantics:
// copying a Tensor aliases the underlying node (like a shared_ptr).
template <typename S>
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node<S>> n) : n_(std::move(n)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return filled(std::move(shape), S(0), requires_grad);
    }

    static Tensor filled(Shape shape, S value, bool requires_grad = false) {
        auto n = std::make_shared<Node<S>>();
        n->val.assign(size_t(numel(shape)), value);
        n->shape = std::move(shape);
        n->requires_grad = requires_grad && detail::grad_mode();
        return Tensor(std::move(n));
    }

    static Tensor from_vector(Shape shape, std::vector<S> data, bool requires_grad = false) {
        if (int64_t(data.size()) != numel(shape))
            throw std::runtime_error("from_vector: data size " + std::to_string(data.size()) +
                                     " does not match shape " + shape_str(shape));
        auto n = std::make_shared<Node<S>>();
        n->shape = std::move(shape);
        n->val = std::move(data);
        n->requires_grad = requires_grad && detail::grad_mode();
        return Tensor(std::move(n));
    }

    static Tensor scalar(S v, bool requires_grad = false) {
        return from_vector({1}, {v}, requires_grad);
    }

    bool defined() const { return n_ != nullptr; }
    const Shape& shape() const { return n_->shape; }
    int64_t dim(int i) const { return n_->shape[size_t(i)]; }
    int rank() const { return int(n_->shape.size()); }
    int64_t size() const { return int64_t(n_->val.size()); }

    std::vector<S>& val() { return n_->val; }
    const std::vector<S>& val() const { return n_->val; }
    S* data() { return n_->val.data(); }
    const S* data() const { return n_->val.data(); }

    bool requires_grad() const { return n_->requires_grad; }
    std::vector<S>& grad() { return n_->ensure_grad(); }
    const std::vector<S>& grad_ref() const { return n_->grad; }
    void zero_grad() { n_->grad.clear(); }

    S item() const {
        if (size() != 1) throw std::runtime_error("item(): tensor is not scalar");
        return n_->val[0];
    }

    const std::shared_ptr<Node<S>>& node() const { return n_; }

  private:
    std::shared_ptr<Node<S>> n_;
};

namespace detail {

// Create an op output node; registers it on the tape when gradients flow.
// make_backward is invoked lazily (only when recording) and must return the
// closure that scatters out->grad into the parents' grads.
template <typename S, typename MakeBackward>
Tensor<S> make_op(const char* name, Shape shape, std::vector<S> val,
                  std::initializer_list<const Tensor<S>*> parents, MakeBackward&& make_backward) {
    check_finite(name, val);
    auto out = std::make_shared<Node<S>>();
    out->shape = std::move(shape);
    out->val = std::move(val);

    bool flows = false;
    if (grad_mode()) {
        for (const Tensor<S>* p : parents)
            if (p->defined() && p->requires_grad()) flows = true;
    }
    out->requires_grad = flows;
    if (flows) {
        out->backward = make_backward(out.get());
        tape<S>().push_back(out);
    }
    return Tensor<S>(out);
}

}  // namespace detail

template <typename S>
inline void clear_tape() {
    detail::tape<S>().clear();
}

template <typename S>
inline size_t tape_size() {
    return detail::tape<S>().size();
}

// Reverse-mode sweep from a scalar loss. Visits recorded nodes in reverse
// creation order (creation order is a topological order), accumulating into
// parent grads; the tape is consumed.
template <typename S>
void backward(Tensor<S>& loss) {
    if (loss.size() != 1) throw std::runtime_error("backward: loss must be scalar");
    auto& t = detail::tape<S>();
    loss.grad()[0] = S(1);
    for (auto it = t.rbegin(); it != t.rend(); ++it) {
        Node<S>& n = **it;
        if (n.backward && !n.grad.empty()) n.backward();
    }
    t.clear();
}

}  // namespace sdavs
