#include "flab/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "flab/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoints are little-endian; big-endian hosts are unsupported");

namespace flab {

namespace {

using nlohmann::json;

constexpr char kMagic[5] = {'F', 'L', 'A', 'B', '1'};

uint64_t fnv1a(const char* data, size_t n) {
    uint64_t h = 1469598103934665603ULL;
    for (size_t i = 0; i < n; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 1099511628211ULL;
    }
    return h;
}

json config_to_json(const ModelConfig& c) {
    return json{{"n_layers", c.n_layers}, {"n_heads", c.n_heads},
                {"d_model", c.d_model},   {"d_ff", c.d_ff},
                {"vocab_size", c.vocab_size}, {"max_positions", c.max_positions},
                {"role", c.role == Role::compressor ? "compressor" : "decoder"}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.n_layers = j.at("n_layers").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.d_ff = j.at("d_ff").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.max_positions = j.at("max_positions").get<int>();
    c.role = j.at("role").get<std::string>() == "compressor" ? Role::compressor : Role::decoder;
    return c;
}

} // namespace

std::string checkpoint_filename(long step) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "ckpt_%08ld", step);
    return buf;
}

void save_checkpoint(const std::string& path, const Model& model, long step) {
    std::vector<char> payload;
    json dir = json::array();
    for (size_t i = 0; i < model.params.count(); ++i) {
        const MatF& t = model.params.tensors[i];
        dir.push_back(json{{"name", model.params.names[i]},
                           {"rows", t.rows},
                           {"cols", t.cols},
                           {"offset", payload.size()}});
        const size_t bytes = t.a.size() * sizeof(float);
        const size_t at = payload.size();
        payload.resize(at + bytes);
        std::memcpy(payload.data() + at, t.a.data(), bytes);
    }

    json header;
    header["version"] = 1;
    header["step"] = step;
    header["compressor"] = config_to_json(model.comp_cfg);
    header["decoder"] = config_to_json(model.dec_cfg);
    header["compression"] = json{{"memory_slots", model.ccfg.memory_slots},
                                 {"train_prefix_len", model.ccfg.train_prefix_len},
                                 {"use_projector", model.ccfg.use_projector}};
    header["vocab"] = model.vocab.symbols();
    header["tensors"] = std::move(dir);
    header["payload_bytes"] = payload.size();
    char hex[20];
    std::snprintf(hex, sizeof hex, "%016llx",
                  static_cast<unsigned long long>(fnv1a(payload.data(), payload.size())));
    header["checksum_fnv1a"] = hex;

    const std::string hs = header.dump();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open checkpoint for writing: " + path);
    os.write(kMagic, sizeof kMagic);
    const uint32_t hlen = static_cast<uint32_t>(hs.size());
    os.write(reinterpret_cast<const char*>(&hlen), sizeof hlen);
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!os) throw IoError("checkpoint write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    char magic[5];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw SchemaError("not a FLAB1 checkpoint: " + path);
    uint32_t hlen = 0;
    is.read(reinterpret_cast<char*>(&hlen), sizeof hlen);
    if (!is || hlen == 0 || hlen > (1u << 24)) throw SchemaError("checkpoint: bad header length");
    std::string hs(hlen, '\0');
    is.read(hs.data(), hlen);
    if (!is) throw SchemaError("checkpoint: truncated header");

    json header;
    try {
        header = json::parse(hs);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("checkpoint: invalid header JSON: ") + e.what());
    }

    LoadedCheckpoint out;
    try {
        out.step = header.at("step").get<long>();
        Model& m = out.model;
        m.comp_cfg = config_from_json(header.at("compressor"));
        m.dec_cfg = config_from_json(header.at("decoder"));
        m.ccfg.memory_slots = header.at("compression").at("memory_slots").get<int>();
        m.ccfg.train_prefix_len = header.at("compression").at("train_prefix_len").get<int>();
        m.ccfg.use_projector = header.at("compression").at("use_projector").get<bool>();
        m.vocab = Vocabulary::from_words(
            header.at("vocab").get<std::vector<std::string>>());

        const size_t payload_bytes = header.at("payload_bytes").get<size_t>();
        std::vector<char> payload(payload_bytes);
        is.read(payload.data(), static_cast<std::streamsize>(payload_bytes));
        if (!is) throw SchemaError("checkpoint: truncated payload");

        char hex[20];
        std::snprintf(hex, sizeof hex, "%016llx",
                      static_cast<unsigned long long>(fnv1a(payload.data(), payload.size())));
        if (header.at("checksum_fnv1a").get<std::string>() != hex)
            throw ChecksumMismatch("checkpoint: payload checksum mismatch in " + path);

        for (const auto& t : header.at("tensors")) {
            const int rows = t.at("rows").get<int>();
            const int cols = t.at("cols").get<int>();
            const size_t offset = t.at("offset").get<size_t>();
            MatF mat(rows, cols);
            const size_t bytes = mat.a.size() * sizeof(float);
            if (offset + bytes > payload_bytes)
                throw SchemaError("checkpoint: tensor extends past payload");
            std::memcpy(mat.a.data(), payload.data() + offset, bytes);
            m.params.add(t.at("name").get<std::string>(), std::move(mat));
        }
        m.bind();
    } catch (const json::exception& e) {
        throw SchemaError(std::string("checkpoint: malformed header field: ") + e.what());
    }
    return out;
}

} // namespace flab
