#pragma once

#include "ivl/tensor.hpp"

#include <cstdint>
#include <map>
#include <string>

namespace ivl {

// Interface hyperparameters. Desk-scale defaults; dim must divide evenly
// across heads.
struct InterfaceConfig {
    Index dim = 64;
    int layers = 3;
    int heads = 4;
    Index n_obj = 16;
    bool cosine_score = true;  // raw inner-product head when false
    double score_tau_init = 10.0;

    void validate() const;
};

// Named parameter tensors, ordered by name so iteration is deterministic.
struct ParamStore {
    std::map<std::string, Tensor> tensors;

    bool has(const std::string& name) const { return tensors.count(name) != 0; }
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
};

// Per-forward view of a ParamStore. With a tape attached, each parameter is
// materialized as a tracked leaf on first use so its gradient can be read
// back after backward(); without a tape, parameters pass through untracked.
class Bind {
public:
    explicit Bind(const ParamStore& store, Tape* tape = nullptr)
        : store_(&store), tape_(tape) {}

    const Tensor& operator()(const std::string& name);
    Tape* tape() const { return tape_; }
    const std::map<std::string, Tensor>& bound() const { return bound_; }

private:
    const ParamStore* store_;
    Tape* tape_;
    std::map<std::string, Tensor> bound_;
};

// Deterministic initialization of every learnable tensor. Each parameter's
// values depend only on (seed, name), not on creation order.
ParamStore init_params(const InterfaceConfig& cfg, std::uint64_t seed);

}  // namespace ivl
