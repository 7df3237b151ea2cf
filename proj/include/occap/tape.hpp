#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "occap/param_store.hpp"
#include "occap/tensor.hpp"

namespace occap::num {

enum class EwKind { Sigmoid, Tanh, Relu, ClampMinZero };

EwKind ew_kind_from_string(const std::string& s);

// Handle into a Tape.
struct Var {
    int id = -1;
};

// Reverse-mode gradient tape. Rebuilt per forward pass; nodes are appended
// in topological order, so the reverse sweep is a simple backwards scan.
// Every op validates shapes and rejects non-finite outputs.
class Tape {
public:
    // Leaf tied to a named parameter; repeated requests return the same node.
    Var param(const ParamStore& store, const std::string& name);
    // Constant leaf, no gradient.
    Var input(Tensor value);
    Var input(std::vector<double> v);
    Var input_scalar(double v);

    const Tensor& val(Var v) const;
    double scalar(Var v) const;

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b); // elementwise
    Var scale(Var a, double c);
    Var neg(Var a) { return scale(a, -1.0); }

    Var matmul(Var a, Var b);    // [m,k]x[k,n] -> [m,n]
    Var matmul_nt(Var a, Var b); // [m,k]x[n,k] -> [m,n], b transposed
    Var matvec(Var m, Var x);    // [r,c]x[c] -> [r]
    Var matvec_t(Var m, Var x);  // [r,c],[r] -> [c], m transposed
    Var add_row_broadcast(Var m, Var v);

    Var elementwise(Var a, EwKind kind);
    Var sigmoid(Var a) { return elementwise(a, EwKind::Sigmoid); }
    Var tanh_(Var a) { return elementwise(a, EwKind::Tanh); }
    Var relu(Var a) { return elementwise(a, EwKind::Relu); }

    Var abs_(Var a);
    Var softmax(Var a); // 1-D, max-subtracted
    Var sum(Var a);
    Var dot(Var a, Var b);
    Var concat(Var a, Var b); // 1-D
    Var slice(Var a, int start, int len);
    Var row(Var m, int r);
    Var l2_normalize(Var a);
    Var scale_by(Var a, Var s); // s is a scalar node
    Var one_minus(Var s);

    Var cross_entropy_logits(Var logits, int target);
    Var bce_with_logits(Var logits, const Tensor& targets); // mean

    // Fills grads: every parameter of `store` gets a gradient (zero if the
    // parameter never entered this tape).
    void backward(Var loss, ParamStore& store);

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        const char* op;
        bool requires_grad;
        std::vector<double> grad;
        std::function<void(Tape&, int)> back;
    };

    Var push(Tensor value, const char* op, bool requires_grad, std::function<void(Tape&, int)> back);
    Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }
    const Node& node(Var v) const { return nodes_[static_cast<std::size_t>(v.id)]; }
    std::vector<double>& grad_of(int id) { return nodes_[static_cast<std::size_t>(id)].grad; }
    void check_valid(Var v, const char* op) const;

    std::vector<Node> nodes_;
    std::map<std::string, int> param_nodes_;
};

// Value-level ops (no tape), sharing kernels with the tape path.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax(const Tensor& x);
Tensor elementwise(const Tensor& x, EwKind kind);

} // namespace occap::num
