#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "hmloss/config_io.hpp"
#include "hmloss/errors.hpp"
#include "hmloss/trainer.hpp"

namespace hmloss {

// ---------------------------------------------------------------------------
// Checkpoint file layout (version 1):
//   line 1: magic `HMLOSS-CKPT-V1`
//   line 2: single-line JSON header with keys
//             format_version, epoch, rng_state,
//             net   {input_dim, hidden_dims, embedding_dim},
//             head  {dim, classes, norm_mode},
//             config {flat training-config mirror}
//   then raw little-endian float64 parameter arrays, in order: for each layer
//   the weight matrix (row-major) then its bias; then the head weight matrix
//   (row-major) then the head bias.
// ---------------------------------------------------------------------------

inline constexpr const char* kCheckpointMagic = "HMLOSS-CKPT-V1";

namespace detail {

inline void write_f64_le(std::ostream& os, double v) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    os.write(buf, 8);
}

inline double read_f64_le(std::istream& is, const std::string& path) {
    char buf[8];
    if (!is.read(buf, 8))
        throw format_error(path + ": truncated parameter payload");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
    return std::bit_cast<double>(bits);
}

inline void write_block(std::ostream& os, std::span<const double> v) {
    for (double x : v) write_f64_le(os, x);
}

inline void read_block(std::istream& is, std::span<double> v, const std::string& path) {
    for (double& x : v) x = read_f64_le(is, path);
}

} // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw std::runtime_error("save_checkpoint: cannot open " + path.string());

    nlohmann::json header{
        {"format_version", 1},
        {"epoch", ckpt.epoch},
        {"rng_state", ckpt.rng_state},
        {"net",
         {{"input_dim", ckpt.net.input_dim()},
          {"hidden_dims", ckpt.config.hidden_dims},
          {"embedding_dim", ckpt.net.embedding_dim()}}},
        {"head",
         {{"dim", ckpt.head.dim()},
          {"classes", ckpt.head.classes()},
          {"norm_mode", ckpt.head.norm_mode == NormMode::none ? "none" : "unit_columns"}}},
        {"config", train_config_to_json(ckpt.config)},
    };
    f << kCheckpointMagic << '\n' << header.dump() << '\n';
    for (const DenseLayer& L : ckpt.net.layers) {
        detail::write_block(f, L.weight.storage());
        detail::write_block(f, L.bias);
    }
    detail::write_block(f, ckpt.head.w.storage());
    detail::write_block(f, ckpt.head.b);
    if (!f)
        throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw std::runtime_error("load_checkpoint: cannot open " + path.string());
    const std::string pstr = path.string();

    std::string magic;
    if (!std::getline(f, magic) || magic != kCheckpointMagic)
        throw format_error(pstr + ": not a checkpoint file (bad magic)");
    std::string header_line;
    if (!std::getline(f, header_line))
        throw format_error(pstr + ": missing header");

    nlohmann::json header = nlohmann::json::parse(header_line, nullptr, false);
    if (header.is_discarded() || !header.is_object())
        throw format_error(pstr + ": malformed header JSON");

    Checkpoint ckpt;
    try {
        if (header.at("format_version").get<int>() != 1)
            throw format_error(pstr + ": unsupported format version");
        ckpt.epoch = header.at("epoch").get<int>();
        ckpt.rng_state = header.at("rng_state").get<std::string>();
        apply_config_json(ckpt.config, header.at("config"));

        const auto& net_h = header.at("net");
        const auto input_dim = net_h.at("input_dim").get<std::size_t>();
        const auto hidden = net_h.at("hidden_dims").get<std::vector<std::size_t>>();
        const auto embedding_dim = net_h.at("embedding_dim").get<std::size_t>();
        ckpt.net = DenseNet::make(input_dim, hidden, embedding_dim);

        const auto& head_h = header.at("head");
        const auto head_dim = head_h.at("dim").get<std::size_t>();
        const auto classes = head_h.at("classes").get<std::size_t>();
        const std::string nm = head_h.at("norm_mode").get<std::string>();
        if (nm != "none" && nm != "unit_columns")
            throw format_error(pstr + ": unknown norm_mode '" + nm + "'");
        if (head_dim != embedding_dim)
            throw format_error(pstr + ": head dimension does not match embedding dimension");
        ckpt.head.w = Matrix(head_dim, classes);
        ckpt.head.b.assign(classes, 0.0);
        ckpt.head.norm_mode = nm == "none" ? NormMode::none : NormMode::unit_columns;
    } catch (const nlohmann::json::exception& e) {
        throw format_error(pstr + ": bad header field: " + e.what());
    }

    for (DenseLayer& L : ckpt.net.layers) {
        detail::read_block(f, L.weight.storage(), pstr);
        detail::read_block(f, L.bias, pstr);
    }
    detail::read_block(f, ckpt.head.w.storage(), pstr);
    detail::read_block(f, ckpt.head.b, pstr);
    if (f.peek() != std::char_traits<char>::eof())
        throw format_error(pstr + ": trailing bytes after parameter payload");
    return ckpt;
}

} // namespace hmloss
