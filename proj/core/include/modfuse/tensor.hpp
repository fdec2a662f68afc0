#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "modfuse/error.hpp"
#include "modfuse/rng.hpp"

namespace modfuse {

class Tape;

// Dense row-major f32 tensor. Value-semantic: copies duplicate the payload.
// A tensor may additionally carry a handle onto the tape node that produced
// it; the handle is what backward() keys gradients on.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<float> values);

    static Tensor scalar(float v);
    static Tensor zeros(std::vector<int> shape);
    static Tensor ones(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, float v);
    static Tensor uniform(Rng& rng, std::vector<int> shape, float lo, float hi);
    static Tensor normal(Rng& rng, std::vector<int> shape, float stddev);

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    int dim(int axis) const;

    std::vector<float>& values() { return data_; }
    const std::vector<float>& values() const { return data_; }

    // Scalar payload; requires size() == 1.
    float item() const;
    float& at(std::initializer_list<int> idx);
    float at(std::initializer_list<int> idx) const;

    bool defined() const { return !shape_.empty(); }
    bool on_tape() const { return tape_ != nullptr; }
    Tape* tape() const { return tape_; }
    int node() const { return node_; }
    bool requires_grad() const { return requires_grad_; }

private:
    friend class Tape;

    std::vector<int> shape_;
    std::vector<float> data_;
    Tape* tape_ = nullptr;
    int node_ = -1;
    bool requires_grad_ = false;
};

std::string shape_str(const std::vector<int>& shape);

// Gradients of one backward pass, keyed by tape node.
class GradientMap {
public:
    // Gradient of a requires_grad leaf; throws UsageError for anything else.
    const Tensor& grad(const Tensor& leaf) const;
    bool contains(const Tensor& t) const;
    std::size_t size() const { return grads_.size(); }

private:
    friend class Tape;
    const Tape* tape_ = nullptr;
    std::unordered_map<int, Tensor> grads_;
};

// Define-by-run gradient tape. Operations append nodes in execution order,
// which is a topological order by construction; backward() walks it once in
// reverse. A tape is confined to one thread and rebuilt every forward pass.
class Tape {
public:
    using BackwardFn = std::function<std::vector<Tensor>(const Tensor& grad_out)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Registers `value` as a leaf and returns the tape-bound handle.
    Tensor leaf(Tensor value, bool requires_grad = true);

    // Records an op node. `backward` receives the output gradient and returns
    // one gradient per input, in order.
    Tensor record(Tensor value, std::vector<int> input_nodes, BackwardFn backward);

    // Reverse sweep from a scalar loss. Every requires_grad leaf gets an
    // entry; leaves the loss does not depend on get zeros.
    GradientMap backward(const Tensor& loss) const;

    int node_count() const { return static_cast<int>(nodes_.size()); }

private:
    struct Node {
        std::vector<int> inputs;
        BackwardFn backward;  // null for leaves
        std::vector<int> shape;
        bool requires_grad = false;
        bool leaf = false;
    };

    std::vector<Node> nodes_;
};

}  // namespace modfuse
