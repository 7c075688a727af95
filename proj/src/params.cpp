#include "ivl/params.hpp"

#include "ivl/rng.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace ivl {

void InterfaceConfig::validate() const {
    if (dim < 1 || layers < 1 || heads < 1 || n_obj < 1) {
        throw std::invalid_argument("interface config: extents must be positive");
    }
    if (dim % heads != 0) {
        throw std::invalid_argument("interface config: dim " + std::to_string(dim) +
                                    " not divisible by heads " + std::to_string(heads));
    }
}

Tensor& ParamStore::at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
}

const Tensor& Bind::operator()(const std::string& name) {
    if (tape_ == nullptr) return store_->at(name);
    auto it = bound_.find(name);
    if (it == bound_.end()) {
        const Tensor& stored = store_->at(name);
        // tensors already tracked on this tape pass through unchanged
        it = bound_.emplace(name, stored.tracked() && stored.tape == tape_
                                      ? stored
                                      : tape_->leaf(stored))
                 .first;
    }
    return it->second;
}

namespace {

enum class Init { Xavier, Zero, One, Pool, Scalar };

Tensor make_param(const std::string& name, Index rows, Index cols, Init init,
                  std::uint64_t seed, double scalar_value = 0.0) {
    RowMatrix m(rows, cols);
    Rng rng(mix_seed(seed, name));
    switch (init) {
        case Init::Xavier: {
            const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
            for (Index r = 0; r < rows; ++r)
                for (Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-bound, bound);
            break;
        }
        case Init::Zero:
            m.setZero();
            break;
        case Init::One:
            m.setOnes();
            break;
        case Init::Pool: {
            const double s = 1.0 / std::sqrt(static_cast<double>(cols));
            for (Index r = 0; r < rows; ++r)
                for (Index c = 0; c < cols; ++c) m(r, c) = rng.normal() * s;
            break;
        }
        case Init::Scalar:
            m.setConstant(scalar_value);
            break;
    }
    Tensor t = Tensor::from_matrix(std::move(m));
    if (rows == 1 && cols == 1) t.shape = {};
    return t;
}

}  // namespace

ParamStore init_params(const InterfaceConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const Index d = cfg.dim;
    ParamStore ps;
    auto put = [&](const std::string& name, Index r, Index c, Init init, double sv = 0.0) {
        ps.tensors.emplace(name, make_param(name, r, c, init, seed, sv));
    };

    put("enc.image.adapter.w", d, d, Init::Xavier);
    put("enc.image.adapter.b", 1, d, Init::Zero);
    put("enc.text.adapter.w", d, d, Init::Xavier);
    put("enc.text.adapter.b", 1, d, Init::Zero);

    for (int l = 0; l < cfg.layers; ++l) {
        for (const char* block : {"content", "condition"}) {
            const std::string base = "iface.l" + std::to_string(l) + "." + block + ".";
            put(base + "ln.g", 1, d, Init::One);
            put(base + "ln.b", 1, d, Init::Zero);
            for (const char* w : {"wq", "wk", "wv", "wo"}) put(base + w, d, d, Init::Xavier);
            for (const char* b : {"bq", "bk", "bv", "bo"}) put(base + b, 1, d, Init::Zero);
            put(base + "att_gain", 1, 1, Init::Zero);  // log attention sharpness
        }
    }

    for (const char* head : {"semantic", "pixel"}) {
        const std::string base = std::string("proj.") + head + ".";
        put(base + "ln.g", 1, d, Init::One);
        put(base + "ln.b", 1, d, Init::Zero);
        put(base + "w1", d, d, Init::Xavier);
        put(base + "b1", 1, d, Init::Zero);
        put(base + "w2", d, d, Init::Xavier);
        put(base + "b2", 1, d, Init::Zero);
    }

    // Learnable query pools; multiple streams may sample (duplicate) the
    // same pool rows.
    for (const char* pool :
         {"object", "slot", "class", "image", "caption", "spatial", "_interleave"}) {
        put(std::string("pool.") + pool, cfg.n_obj, d, Init::Pool);
    }

    put("head.no_object", 1, d, Init::Pool);
    put("head.score.log_tau", 1, 1, Init::Scalar, std::log(cfg.score_tau_init));

    return ps;
}

}  // namespace ivl
