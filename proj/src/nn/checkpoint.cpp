#include "svct/nn/checkpoint.hpp"

#include <bit>
#include <cstring>

#include <json.hpp>

#include "svct/error.hpp"
#include "svct/io.hpp"

namespace svct::nn {

namespace {

using nlohmann::json;

std::uint64_t to_little(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap64(v);
    return v;
}

}  // namespace

CheckpointInfo save_checkpoint(const std::filesystem::path& blob_path, const Network& net) {
    const std::vector<double> state = net.state();
    std::string blob(state.size() * 8, '\0');
    for (std::size_t i = 0; i < state.size(); ++i) {
        const std::uint64_t bits = to_little(std::bit_cast<std::uint64_t>(state[i]));
        std::memcpy(blob.data() + 8 * i, &bits, 8);
    }
    CheckpointInfo info{net.spec(), io::hex64(io::fnv1a64(blob)), state.size()};
    const NetSpec& s = net.spec();
    const json j = {{"format_version", checkpoint_format_version},
                    {"spec",
                     {{"stages", s.stages},
                      {"base_channels", s.base_channels},
                      {"multi_scale", s.multi_scale},
                      {"mode", to_string(s.mode)}}},
                    {"values", state.size()},
                    {"parameters", net.parameter_count()},
                    {"target_scale", net.target_scale()},
                    {"hash", info.hash}};
    io::atomic_write(blob_path, blob);
    io::atomic_write(io::sidecar_path(blob_path), j.dump(2) + "\n");
    return info;
}

Network load_checkpoint(const std::filesystem::path& blob_path, CheckpointInfo* info) {
    json j;
    try {
        j = json::parse(io::read_file(io::sidecar_path(blob_path)));
    } catch (const json::exception& e) {
        fail(ErrorKind::io, blob_path.string() + ": bad checkpoint header: " + e.what());
    }
    require(j.value("format_version", 0) == checkpoint_format_version, ErrorKind::io,
            blob_path.string() + ": unsupported checkpoint format version");
    NetSpec spec;
    const json& js = j.at("spec");
    spec.stages = js.at("stages").get<std::size_t>();
    spec.base_channels = js.at("base_channels").get<std::size_t>();
    spec.multi_scale = js.at("multi_scale").get<bool>();
    spec.mode = parse_learning_mode(js.at("mode").get<std::string>());

    const std::string blob = io::read_file(blob_path);
    const std::string hash = io::hex64(io::fnv1a64(blob));
    require(hash == j.value("hash", ""), ErrorKind::io,
            blob_path.string() + ": weight blob hash mismatch");
    require(blob.size() % 8 == 0, ErrorKind::io, blob_path.string() + ": truncated weight blob");
    std::vector<double> state(blob.size() / 8);
    for (std::size_t i = 0; i < state.size(); ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, blob.data() + 8 * i, 8);
        state[i] = std::bit_cast<double>(to_little(bits));
    }
    Network net(spec, 0);
    net.load_state(state);
    if (info != nullptr) *info = CheckpointInfo{spec, hash, state.size()};
    return net;
}

}  // namespace svct::nn
