#pragma once

// Checkpoint container.
//
// Layout (all integers little-endian):
//   bytes 0..7    magic "HSNPLCKP"
//   bytes 8..11   uint32 format version (currently 1)
//   bytes 12..19  uint64 header length H
//   next H bytes  UTF-8 JSON header:
//                   {"version", "config", "seed", "dims", "n_folds",
//                    "best_epochs", "tensors": [{"name","rows","cols","offset"}]}
//   remainder     float64 tensor data, column-major, at the header offsets
//                 (offsets count doubles from the start of the data block)
//
// Tensor names are "fold<k>/<parameter name>".

#include "hsnpl/core/errors.hpp"
#include "hsnpl/core/parameters.hpp"
#include "hsnpl/trainer/config.hpp"
#include "hsnpl/trainer/model.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace hsnpl::trainer {

inline constexpr char kCheckpointMagic[8] = {'H', 'S', 'N', 'P', 'L', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    TrainConfig config;
    ModelDims dims;
    std::vector<ParameterStore> folds;
    std::vector<std::size_t> best_epochs;
};

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

template <typename T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw ValidationError("truncated checkpoint");
    return v;
}

} // namespace detail

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
    nlohmann::json header;
    header["version"] = kCheckpointVersion;
    header["config"] = to_json(ck.config);
    header["seed"] = ck.config.seed;
    header["dims"] = {{"d_post", ck.dims.d_post}, {"q", ck.dims.q}, {"layers", ck.dims.layers}, {"heads", ck.dims.heads}};
    header["n_folds"] = ck.folds.size();
    header["best_epochs"] = ck.best_epochs;
    header["tensors"] = nlohmann::json::array();
    std::size_t offset = 0;
    for (std::size_t f = 0; f < ck.folds.size(); ++f) {
        const auto& store = ck.folds[f];
        for (std::size_t i = 0; i < store.size(); ++i) {
            const auto& m = store.at(i);
            header["tensors"].push_back(
                {{"name", "fold" + std::to_string(f) + "/" + store.names()[i]}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", offset}});
            offset += static_cast<std::size_t>(m.size());
        }
    }
    const std::string text = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write checkpoint " + path.string());
    out.write(kCheckpointMagic, sizeof kCheckpointMagic);
    detail::write_pod<std::uint32_t>(out, kCheckpointVersion);
    detail::write_pod<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& store : ck.folds)
        for (std::size_t i = 0; i < store.size(); ++i) {
            const auto& m = store.at(i);
            out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
        }
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open checkpoint " + path.string());
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) throw ValidationError(path.string() + " is not a checkpoint");
    const auto version = detail::read_pod<std::uint32_t>(in);
    if (version != kCheckpointVersion) throw ValidationError("unsupported checkpoint version " + std::to_string(version));
    const auto header_len = detail::read_pod<std::uint64_t>(in);
    std::string text(header_len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw ValidationError("truncated checkpoint header");

    Checkpoint ck;
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
        ck.config = config_from_json(header.at("config"));
        const auto& d = header.at("dims");
        ck.dims = {d.at("d_post").get<std::size_t>(), d.at("q").get<std::size_t>(), d.at("layers").get<std::size_t>(),
                   d.at("heads").get<std::size_t>()};
        ck.best_epochs = header.at("best_epochs").get<std::vector<std::size_t>>();
        ck.folds.resize(header.at("n_folds").get<std::size_t>());
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed checkpoint header: ") + e.what());
    }
    const auto data_start = in.tellg();
    for (const auto& t : header.at("tensors")) {
        const auto name = t.at("name").get<std::string>();
        const auto slash = name.find('/');
        if (name.rfind("fold", 0) != 0 || slash == std::string::npos) throw ValidationError("bad tensor name " + name);
        const auto fold = std::stoul(name.substr(4, slash - 4));
        if (fold >= ck.folds.size()) throw ValidationError("tensor " + name + " refers to a missing fold");
        Matrix m(t.at("rows").get<Eigen::Index>(), t.at("cols").get<Eigen::Index>());
        in.seekg(data_start + static_cast<std::streamoff>(t.at("offset").get<std::size_t>() * sizeof(double)));
        in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
        if (!in) throw ValidationError("truncated checkpoint data for " + name);
        ck.folds[fold].add(name.substr(slash + 1), std::move(m));
    }
    return ck;
}

} // namespace hsnpl::trainer
