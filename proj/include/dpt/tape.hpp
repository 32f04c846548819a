#pragma once

#include <functional>
#include <vector>

#include "dpt/params.hpp"
#include "dpt/rng.hpp"
#include "dpt/tensor.hpp"

namespace dpt {

// Handle to a node on a Tape. Plain index; only valid for the tape that
// produced it.
struct Var {
    int id = -1;
};

// Reverse-mode gradient tape. A forward pass records one node per primitive;
// backward() walks the record once and accumulates gradients of unfrozen leaf
// parameters into Parameter::grad.
//
// Every op validates shapes and checks its output for non-finite values,
// throwing with the op name on failure.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaves. Frozen parameters join as non-differentiable inputs; backward
    // never descends into subgraphs that only they feed.
    Var leaf(Parameter& p);
    Var constant(Tensor t);

    // Elementwise, same shape.
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);

    // out = a * mul + add, with compile-time-constant coefficients.
    Var affine(Var a, double mul, double add);

    // Broadcasts of a trainable 1x1 scalar.
    Var scale_by(Var a, Var s);
    Var add_scalar(Var a, Var s);

    Var matmul(Var a, Var b);
    // fwd * x. The caller supplies the transpose used by the backward pass.
    Var spmm(SpMatPtr fwd, SpMatPtr fwd_t, Var x);

    Var concat_cols(const std::vector<Var>& parts);
    Var gather_rows(Var a, std::vector<int> ids);

    // Row-wise inner products: (n x d, n x d) -> n x 1.
    Var rows_dot(Var a, Var b);
    // Scale row i of a (n x d) by s[i] (n x 1).
    Var scale_rows(Var a, Var s);
    // Broadcast a 1 x d row vector over all rows of a (n x d).
    Var add_rowvec(Var a, Var v);
    Var mul_rowvec(Var a, Var v);

    Var sigmoid(Var a);
    Var relu(Var a);
    Var log(Var a);
    Var clamp(Var a, double lo, double hi);
    Var reciprocal(Var a);

    Var sum(Var a);  // 1 x 1
    Var mean(Var a); // 1 x 1

    // Inverted dropout: keeps entries with probability keep_prob and scales
    // them by 1/keep_prob. Identity when not training or keep_prob == 1.
    Var dropout(Var a, double keep_prob, bool training, Rng& rng);

    const Tensor& value(Var v) const;
    double scalar_value(Var v) const;

    // Seeds d(loss)/d(loss) = 1 and accumulates into unfrozen leaves' grads.
    // loss must be 1 x 1.
    void backward(Var loss);

    std::size_t num_nodes() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool needs_grad = false;
        const char* op = "";
        Parameter* param = nullptr;
        std::function<void(Tape&)> back;
    };

    Var push(Node node);
    Tensor& grad(int id);
    void accumulate(int id, const Tensor& g);

    std::vector<Node> nodes_;
};

} // namespace dpt
