// Copyright 2026 nevrf contributors
// SPDX-License-Identifier: Apache-2.0
#include "nevrf/checkpoint.hpp"

#include <cmath>

#include "json.hpp"
#include "nevrf/binary_io.hpp"

namespace nevrf {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

nlohmann::json blocks_json(const std::vector<ParameterBlock>& blocks) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& b : blocks) out.push_back({{"name", b.name}, {"offset", b.offset}, {"size", b.size}});
    return out;
}

} // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
    nlohmann::json h;
    h["config"] = nlohmann::json::parse(train_config_to_json(ck.config));
    h["feature_dim"] = ck.net.feature_dim;
    h["k"] = ck.net.k;
    h["mlp_sizes"] = ck.net.mlp.sizes();
    h["groups_done"] = ck.groups_done;
    h["group_start"] = ck.group_start;
    h["group_frames"] = ck.group_frames;
    h["encoder_blocks"] = blocks_json(ck.net.encoder.blocks());
    h["mlp_blocks"] = blocks_json(ck.net.mlp.blocks());
    const std::string header = h.dump();

    ByteWriter w;
    w.put_bytes("NVCK");
    w.put<std::uint32_t>(kCheckpointVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(header.size()));
    w.put_bytes(header);
    w.put<std::uint64_t>(ck.net.encoder.values().size());
    w.put_span<float>(ck.net.encoder.values());
    w.put<std::uint64_t>(ck.net.mlp.values().size());
    w.put_span<float>(ck.net.mlp.values());
    return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    ByteReader rd(bytes);
    if (rd.get_string(4) != "NVCK") throw Error(ErrorKind::FormatError, "bad checkpoint magic");
    if (rd.get<std::uint32_t>() != kCheckpointVersion) throw Error(ErrorKind::FormatError, "unsupported checkpoint version");
    const auto len = rd.get<std::uint32_t>();
    if (len > rd.remaining()) throw Error(ErrorKind::FormatError, "truncated checkpoint header");
    Checkpoint ck;
    try {
        const auto h = nlohmann::json::parse(rd.get_string(static_cast<std::size_t>(len)));
        ck.config = train_config_from_json(h.at("config").dump());
        ck.groups_done = h.at("groups_done").get<int>();
        ck.group_start = h.at("group_start").get<int>();
        ck.group_frames = h.at("group_frames").get<int>();
        const int f = h.at("feature_dim").get<int>();
        const int k = h.at("k").get<int>();
        ck.net = BlendNetwork<float>(f, k);
        if (h.at("mlp_sizes").get<std::vector<int>>() != ck.net.mlp.sizes()) {
            throw Error(ErrorKind::FormatError, "checkpoint MLP layout does not match the feature width");
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::FormatError, std::string("checkpoint header: ") + e.what());
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::FormatError) throw;
        throw Error(ErrorKind::FormatError, std::string("checkpoint header: ") + e.what());
    }
    auto load = [&](std::span<float> dst, const char* what) {
        const auto n = rd.get<std::uint64_t>();
        if (n != dst.size()) throw Error(ErrorKind::FormatError, std::string("checkpoint ") + what + " size mismatch");
        const auto v = rd.get_vector<float>(n);
        for (float x : v)
            if (!std::isfinite(x)) throw Error(ErrorKind::FormatError, std::string("non-finite ") + what + " weight");
        std::copy(v.begin(), v.end(), dst.begin());
    };
    load(ck.net.encoder.mutable_values(), "encoder");
    load(ck.net.mlp.mutable_values(), "mlp");
    if (rd.remaining() != 0) throw Error(ErrorKind::FormatError, "trailing bytes in checkpoint");
    return ck;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    write_file_bytes(path.string(), encode_checkpoint(ck));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(read_file_bytes(path.string()));
}

} // namespace nevrf
