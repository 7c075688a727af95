#include "ivl/trainer.hpp"

#include "ivl/binio.hpp"

#include <cstring>
#include <fstream>

namespace ivl {

namespace {

constexpr char kCkptMagic[8] = {'I', 'V', 'L', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kCkptVersion = 1;

void write_string(std::ostream& os, const std::string& s) {
    binio::write_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
    const std::uint32_t n = binio::read_u32(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw std::runtime_error("checkpoint: truncated string");
    return s;
}

void write_matrix(std::ostream& os, const std::string& name, const RowMatrix& m,
                  std::uint32_t rank) {
    write_string(os, name);
    binio::write_u32(os, rank);
    binio::write_u64(os, static_cast<std::uint64_t>(m.rows()));
    binio::write_u64(os, static_cast<std::uint64_t>(m.cols()));
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) binio::write_f64(os, m(r, c));
}

struct NamedMatrix {
    std::string name;
    std::uint32_t rank = 2;
    RowMatrix m;
};

NamedMatrix read_matrix(std::istream& is) {
    NamedMatrix out;
    out.name = read_string(is);
    out.rank = binio::read_u32(is);
    const auto rows = static_cast<Index>(binio::read_u64(is));
    const auto cols = static_cast<Index>(binio::read_u64(is));
    out.m.resize(rows, cols);
    for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c) out.m(r, c) = binio::read_f64(is);
    return out;
}

std::uint32_t rank_of(const Tensor& t) { return static_cast<std::uint32_t>(t.shape.size()); }

std::vector<Index> shape_for(std::uint32_t rank, const RowMatrix& m) {
    if (rank == 0) return {};
    if (rank == 1) return {m.cols()};
    return {m.rows(), m.cols()};
}

}  // namespace

void save_checkpoint(const std::filesystem::path& file, const ParamStore& params,
                     const AdamState& opt, const TrainConfig& cfg, long step) {
    std::ofstream os(file, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write checkpoint " + file.string());
    os.write(kCkptMagic, 8);
    binio::write_u32(os, kCkptVersion);
    binio::write_u64(os, config_hash(cfg));
    write_string(os, serialize_kv(train_config_to_kv(cfg)));
    binio::write_u64(os, static_cast<std::uint64_t>(step));
    binio::write_u64(os, static_cast<std::uint64_t>(opt.t));

    binio::write_u32(os, static_cast<std::uint32_t>(params.tensors.size()));
    for (const auto& [name, t] : params.tensors) write_matrix(os, name, t.m, rank_of(t));

    binio::write_u32(os, static_cast<std::uint32_t>(opt.m.size()));
    for (const auto& [name, m] : opt.m) write_matrix(os, "m." + name, m, 2);
    for (const auto& [name, v] : opt.v) write_matrix(os, "v." + name, v, 2);
    if (!os) throw std::runtime_error("checkpoint write failed: " + file.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& file, const TrainConfig& cfg,
                           bool force) {
    std::ifstream is(file, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read checkpoint " + file.string());
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kCkptMagic, 8) != 0) {
        throw std::runtime_error("checkpoint: bad magic in " + file.string());
    }
    if (binio::read_u32(is) != kCkptVersion) {
        throw std::runtime_error("checkpoint: unsupported version");
    }
    const std::uint64_t hash = binio::read_u64(is);
    read_string(is);  // embedded config, unused when the caller supplies one
    if (hash != config_hash(cfg) && !force) {
        throw std::runtime_error(
            "checkpoint: config hash mismatch (pass force to override)");
    }

    Checkpoint out;
    out.step = static_cast<long>(binio::read_u64(is));
    out.opt.t = static_cast<long>(binio::read_u64(is));

    out.params = init_params(cfg.interface, 0);
    const std::uint32_t n_params = binio::read_u32(is);
    std::uint32_t seen = 0;
    for (std::uint32_t i = 0; i < n_params; ++i) {
        NamedMatrix nm = read_matrix(is);
        auto it = out.params.tensors.find(nm.name);
        if (it == out.params.tensors.end()) {
            throw std::runtime_error("checkpoint: unknown parameter " + nm.name);
        }
        if (it->second.rows() != nm.m.rows() || it->second.cols() != nm.m.cols()) {
            throw std::runtime_error(
                "checkpoint: shape mismatch for " + nm.name + ": file [" +
                std::to_string(nm.m.rows()) + "x" + std::to_string(nm.m.cols()) +
                "] vs config [" + std::to_string(it->second.rows()) + "x" +
                std::to_string(it->second.cols()) + "]");
        }
        it->second.m = nm.m;
        it->second.shape = shape_for(nm.rank, nm.m);
        ++seen;
    }
    if (seen != out.params.tensors.size()) {
        throw std::runtime_error("checkpoint: parameter set incomplete");
    }

    const std::uint32_t n_opt = binio::read_u32(is);
    for (std::uint32_t i = 0; i < n_opt; ++i) {
        NamedMatrix nm = read_matrix(is);
        out.opt.m.emplace(nm.name.substr(2), std::move(nm.m));
    }
    for (std::uint32_t i = 0; i < n_opt; ++i) {
        NamedMatrix nm = read_matrix(is);
        out.opt.v.emplace(nm.name.substr(2), std::move(nm.m));
    }
    return out;
}

TrainConfig checkpoint_config(const std::filesystem::path& file) {
    std::ifstream is(file, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read checkpoint " + file.string());
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kCkptMagic, 8) != 0) {
        throw std::runtime_error("checkpoint: bad magic in " + file.string());
    }
    if (binio::read_u32(is) != kCkptVersion) {
        throw std::runtime_error("checkpoint: unsupported version");
    }
    binio::read_u64(is);  // hash
    return train_config_from_kv(parse_kv_text(read_string(is)));
}

}  // namespace ivl
