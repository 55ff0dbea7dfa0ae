#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "idccp/config.hpp"
#include "idccp/error.hpp"
#include "idccp/linalg.hpp"
#include "idccp/pipeline.hpp"
#include "idccp/rng.hpp"

namespace idccp {

// Mutable training state: parameters, momentum buffers, progress, RNG.
struct TrainState {
    Model model;
    ConvNetGrads backbone_velocity;
    ClassifierWeights classifier_velocity;
    std::uint64_t epoch = 0; // completed epochs
    Rng rng;

    friend bool operator==(const TrainState&, const TrainState&) = default;
};

struct Checkpoint {
    TrainConfig config;
    TrainState state;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

// Fresh model and zero momentum for a validated config.
inline TrainState init_state(const TrainConfig& config) {
    validate(config);
    const Rng root(config.seed);
    TrainState s;
    Rng backbone_rng = root.fork(1);
    s.model.backbone = init_backbone(config.channels, parse_layer_specs(config.backbone_spec()),
                                     backbone_rng);
    if (config.compressed_dim < config.feature_dim) {
        s.model.w = init_stiefel(config.feature_dim, config.compressed_dim, root.fork(2).seed());
    }
    s.model.classifier = ClassifierWeights::zeros(config.classes, config.compressed_dim);
    s.backbone_velocity = ConvNetGrads::zeros_like(s.model.backbone);
    s.classifier_velocity = ClassifierWeights::zeros(config.classes, config.compressed_dim);
    s.rng = root.fork(3);
    return s;
}

inline constexpr char kCheckpointMagic[8] = {'I', 'D', 'C', 'P', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_section(std::ostream& os, const std::string& bytes) {
    wire::put_u64(os, bytes.size());
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::string get_section(std::istream& is, const char* what) {
    const auto len = wire::get_u64(is, what);
    if (len > (std::uint64_t{1} << 32)) throw DataError(std::string("checkpoint: implausible ") + what + " length");
    std::string bytes(len, '\0');
    is.read(bytes.data(), static_cast<std::streamsize>(len));
    if (static_cast<std::uint64_t>(is.gcount()) != len) {
        throw DataError(std::string("checkpoint: truncated ") + what + " section");
    }
    return bytes;
}

inline void put_matrices(std::ostream& os, const std::vector<Matrix>& ms) {
    wire::put_u32(os, static_cast<std::uint32_t>(ms.size()));
    for (const auto& m : ms) write_matrix(os, m);
}

inline std::vector<Matrix> get_matrices(std::istream& is) {
    const auto n = wire::get_u32(is, "matrix count");
    if (n > 4096) throw DataError("checkpoint: implausible matrix count");
    std::vector<Matrix> ms;
    ms.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) ms.push_back(read_matrix(is));
    return ms;
}

inline Matrix bias_row(const std::vector<double>& b) { return Matrix(1, b.size(), b); }

inline void put_classifier(std::ostream& os, const ClassifierWeights& c) {
    put_matrices(os, c.w);
    write_matrix(os, bias_row(c.b));
}

inline ClassifierWeights get_classifier(std::istream& is) {
    ClassifierWeights c;
    c.w = get_matrices(is);
    const Matrix b = read_matrix(is);
    if (b.rows() != 1 || b.cols() != c.w.size()) throw DataError("checkpoint: classifier bias shape");
    c.b.assign(b.data().begin(), b.data().end());
    return c;
}

inline void put_backbone(std::ostream& os, const std::vector<Matrix>& kernels,
                         const std::vector<Matrix>& biases) {
    put_matrices(os, kernels);
    put_matrices(os, biases);
}

template <typename F>
std::string section_bytes(F&& write) {
    std::ostringstream os(std::ios::binary);
    write(os);
    return os.str();
}

} // namespace detail

inline void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
    const auto& s = ck.state;
    os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    wire::put_u32(os, kCheckpointVersion);
    detail::put_section(os, format_config(ck.config));
    detail::put_section(os, detail::section_bytes([&](std::ostream& o) {
        wire::put_u64(o, s.epoch);
        wire::put_u64(o, s.rng.seed());
        wire::put_u64(o, s.rng.counter());
    }));
    detail::put_section(os, detail::section_bytes([&](std::ostream& o) {
        std::vector<Matrix> kernels, biases;
        for (const auto& c : s.model.backbone.convs) {
            kernels.push_back(c.kernels);
            biases.push_back(c.bias);
        }
        detail::put_backbone(o, kernels, biases);
    }));
    detail::put_section(os, detail::section_bytes([&](std::ostream& o) {
        wire::put_u32(o, s.model.w ? 1 : 0);
        if (s.model.w) write_matrix(o, s.model.w->matrix());
    }));
    detail::put_section(os, detail::section_bytes([&](std::ostream& o) {
        detail::put_classifier(o, s.model.classifier);
    }));
    detail::put_section(os, detail::section_bytes([&](std::ostream& o) {
        detail::put_backbone(o, s.backbone_velocity.kernels, s.backbone_velocity.biases);
        detail::put_classifier(o, s.classifier_velocity);
    }));
    if (!os) throw DataError("checkpoint: write failed");
}

inline Checkpoint read_checkpoint(std::istream& is) {
    char magic[8] = {};
    is.read(magic, sizeof(magic));
    if (is.gcount() != 8 || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
        throw DataError("checkpoint: bad magic");
    }
    const auto version = wire::get_u32(is, "checkpoint version");
    if (version != kCheckpointVersion) {
        throw DataError("checkpoint: unsupported version " + std::to_string(version));
    }
    Checkpoint ck;
    ck.config = parse_config(detail::get_section(is, "config"));
    // Architecture and shapes come from the config; the payload must match.
    TrainState s = init_state(ck.config);
    auto require = [](bool ok, const std::string& what) {
        if (!ok) throw DataError("checkpoint: " + what + " does not match the stored config");
    };
    {
        std::istringstream sec(detail::get_section(is, "meta"));
        s.epoch = wire::get_u64(sec, "epoch");
        const auto seed = wire::get_u64(sec, "rng seed");
        const auto counter = wire::get_u64(sec, "rng counter");
        s.rng = Rng(seed, counter);
    }
    auto read_backbone = [&](std::istream& sec, std::vector<Matrix>& kernels, std::vector<Matrix>& biases) {
        auto k = detail::get_matrices(sec);
        auto b = detail::get_matrices(sec);
        require(k.size() == kernels.size() && b.size() == biases.size(), "backbone layer count");
        for (std::size_t i = 0; i < k.size(); ++i) {
            require(k[i].rows() == kernels[i].rows() && k[i].cols() == kernels[i].cols(), "kernel shape");
            require(b[i].rows() == biases[i].rows() && b[i].cols() == biases[i].cols(), "bias shape");
        }
        kernels = std::move(k);
        biases = std::move(b);
    };
    {
        std::istringstream sec(detail::get_section(is, "backbone"));
        std::vector<Matrix> kernels, biases;
        for (const auto& c : s.model.backbone.convs) {
            kernels.push_back(c.kernels);
            biases.push_back(c.bias);
        }
        read_backbone(sec, kernels, biases);
        for (std::size_t i = 0; i < kernels.size(); ++i) {
            s.model.backbone.convs[i].kernels = std::move(kernels[i]);
            s.model.backbone.convs[i].bias = std::move(biases[i]);
        }
    }
    {
        std::istringstream sec(detail::get_section(is, "compression"));
        const bool has_w = wire::get_u32(sec, "compression flag") != 0;
        require(has_w == s.model.w.has_value(), "compression layer");
        if (has_w) {
            Matrix w = read_matrix(sec);
            require(w.rows() == s.model.w->d() && w.cols() == s.model.w->d_hat(), "W shape");
            try {
                s.model.w = StiefelMatrix(std::move(w));
            } catch (const ContractError& e) {
                throw DataError(std::string("checkpoint: ") + e.what());
            }
        }
    }
    auto read_classifier = [&](std::istream& sec, ClassifierWeights& into) {
        auto c = detail::get_classifier(sec);
        require(c.classes() == into.classes() && c.dim() == into.dim(), "classifier shape");
        for (const auto& w : c.w) require(w.rows() == into.dim() && w.cols() == into.dim(), "classifier shape");
        into = std::move(c);
    };
    {
        std::istringstream sec(detail::get_section(is, "classifier"));
        read_classifier(sec, s.model.classifier);
    }
    {
        std::istringstream sec(detail::get_section(is, "momentum"));
        read_backbone(sec, s.backbone_velocity.kernels, s.backbone_velocity.biases);
        read_classifier(sec, s.classifier_velocity);
    }
    ck.state = std::move(s);
    return ck;
}

inline std::string checkpoint_bytes(const Checkpoint& ck) {
    std::ostringstream os(std::ios::binary);
    write_checkpoint(os, ck);
    return os.str();
}

inline Checkpoint checkpoint_from_bytes(const std::string& bytes) {
    std::istringstream is(bytes, std::ios::binary);
    return read_checkpoint(is);
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    const std::string bytes = checkpoint_bytes(ck);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot write checkpoint " + path);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw DataError("failed writing checkpoint " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint " + path);
    return read_checkpoint(is);
}

} // namespace idccp
