#include "modfuse/tensor.hpp"

#include <numeric>
#include <sstream>
#include <utility>

namespace modfuse {

namespace {

std::int64_t checked_size(const std::vector<int>& shape) {
    if (shape.empty()) {
        throw UsageError("tensor rank must be >= 1");
    }
    std::int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) {
            throw UsageError("tensor dimensions must be positive, got " + shape_str(shape));
        }
        n *= d;
    }
    return n;
}

}  // namespace

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(std::vector<int> shape) {
    const std::int64_t n = checked_size(shape);
    shape_ = std::move(shape);
    data_.assign(static_cast<std::size_t>(n), 0.0f);
}

Tensor::Tensor(std::vector<int> shape, std::vector<float> values) {
    const std::int64_t n = checked_size(shape);
    if (n != static_cast<std::int64_t>(values.size())) {
        throw UsageError("tensor data length " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
    }
    shape_ = std::move(shape);
    data_ = std::move(values);
}

Tensor Tensor::scalar(float v) { return Tensor({1}, {v}); }

Tensor Tensor::zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::ones(std::vector<int> shape) { return full(std::move(shape), 1.0f); }

Tensor Tensor::full(std::vector<int> shape, float v) {
    Tensor t(std::move(shape));
    for (float& x : t.data_) x = v;
    return t;
}

Tensor Tensor::uniform(Rng& rng, std::vector<int> shape, float lo, float hi) {
    Tensor t(std::move(shape));
    for (float& x : t.data_) x = rng.uniform(lo, hi);
    return t;
}

Tensor Tensor::normal(Rng& rng, std::vector<int> shape, float stddev) {
    Tensor t(std::move(shape));
    for (float& x : t.data_) x = stddev * rng.normal();
    return t;
}

int Tensor::dim(int axis) const {
    if (axis < 0 || axis >= rank()) {
        throw UsageError("axis " + std::to_string(axis) + " out of range for " +
                         shape_str(shape_));
    }
    return shape_[static_cast<std::size_t>(axis)];
}

float Tensor::item() const {
    if (size() != 1) {
        throw UsageError("item() on non-scalar tensor " + shape_str(shape_));
    }
    return data_[0];
}

namespace {

std::size_t flat_index(const std::vector<int>& shape, std::initializer_list<int> idx) {
    if (static_cast<int>(idx.size()) != static_cast<int>(shape.size())) {
        throw UsageError("index rank mismatch for " + shape_str(shape));
    }
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (int i : idx) {
        if (i < 0 || i >= shape[axis]) {
            throw UsageError("index out of bounds for " + shape_str(shape));
        }
        flat = flat * static_cast<std::size_t>(shape[axis]) + static_cast<std::size_t>(i);
        ++axis;
    }
    return flat;
}

}  // namespace

float& Tensor::at(std::initializer_list<int> idx) {
    return data_[flat_index(shape_, idx)];
}

float Tensor::at(std::initializer_list<int> idx) const {
    return data_[flat_index(shape_, idx)];
}

const Tensor& GradientMap::grad(const Tensor& leaf) const {
    if (!leaf.on_tape() || leaf.tape() != tape_) {
        throw UsageError("grad(): tensor does not belong to the tape of this backward pass");
    }
    auto it = grads_.find(leaf.node());
    if (it == grads_.end()) {
        throw UsageError("grad(): tensor is not a requires_grad leaf");
    }
    return it->second;
}

bool GradientMap::contains(const Tensor& t) const {
    return t.on_tape() && t.tape() == tape_ && grads_.count(t.node()) > 0;
}

Tensor Tape::leaf(Tensor value, bool requires_grad) {
    Node node;
    node.shape = value.shape();
    node.leaf = true;
    node.requires_grad = requires_grad;
    nodes_.push_back(std::move(node));

    value.tape_ = this;
    value.node_ = static_cast<int>(nodes_.size()) - 1;
    value.requires_grad_ = requires_grad;
    return value;
}

Tensor Tape::record(Tensor value, std::vector<int> input_nodes, BackwardFn backward) {
    const int next = static_cast<int>(nodes_.size());
    for (int in : input_nodes) {
        if (in < 0 || in >= next) {
            throw UsageError("tape record: input node out of range");
        }
    }
    Node node;
    node.inputs = std::move(input_nodes);
    node.backward = std::move(backward);
    node.shape = value.shape();
    nodes_.push_back(std::move(node));

    value.tape_ = this;
    value.node_ = next;
    value.requires_grad_ = false;
    return value;
}

GradientMap Tape::backward(const Tensor& loss) const {
    if (!loss.on_tape() || loss.tape() != this) {
        throw UsageError("backward(): loss is not on this tape");
    }
    if (loss.size() != 1) {
        throw UsageError("backward(): loss must be scalar, got " + shape_str(loss.shape()));
    }

    // One slot per node; an undefined tensor means "no gradient reached it".
    std::vector<Tensor> acc(nodes_.size());
    acc[static_cast<std::size_t>(loss.node())] = Tensor::ones(loss.shape());

    for (int i = loss.node(); i >= 0; --i) {
        const Node& node = nodes_[static_cast<std::size_t>(i)];
        Tensor& g = acc[static_cast<std::size_t>(i)];
        if (!g.defined() || node.leaf) continue;

        std::vector<Tensor> input_grads = node.backward(g);
        if (input_grads.size() != node.inputs.size()) {
            throw UsageError("tape backward rule returned wrong gradient count");
        }
        for (std::size_t j = 0; j < node.inputs.size(); ++j) {
            Tensor& slot = acc[static_cast<std::size_t>(node.inputs[j])];
            if (!slot.defined()) {
                slot = std::move(input_grads[j]);
            } else {
                const std::vector<float>& add = input_grads[j].values();
                std::vector<float>& dst = slot.values();
                for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += add[k];
            }
        }
        // An op node's gradient is never read again after it dispatched to
        // its inputs; release the buffer eagerly.
        g = Tensor();
    }

    GradientMap out;
    out.tape_ = this;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const Node& node = nodes_[i];
        if (!node.leaf || !node.requires_grad) continue;
        Tensor& g = acc[i];
        out.grads_[static_cast<int>(i)] =
            g.defined() ? std::move(g) : Tensor::zeros(node.shape);
    }
    return out;
}

}  // namespace modfuse
