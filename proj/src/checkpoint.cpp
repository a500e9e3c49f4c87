#include "sefi/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include "sefi/errors.hpp"

namespace sefi {

namespace {

constexpr char kMagic[5] = {'S', 'E', 'F', 'I', '1'};

struct NamedTensor {
    std::string name;
    const Tensor* tensor;
};

std::vector<NamedTensor> payload_order(const Checkpoint& c) {
    std::vector<NamedTensor> out;
    for (const auto& [name, t] : c.params.named_tensors()) out.push_back({name, t});
    out.push_back({"k_tokens", &c.tokens.k_tokens});
    out.push_back({"v_tokens", &c.tokens.v_tokens});
    out.push_back({"initializer_vector", &c.initializer_vector});
    return out;
}

void write_u32_le(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff), static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32_le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw io_error("checkpoint truncated in header");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void write_f64_le(std::ostream& os, const double* data, int64_t n) {
    // this build targets little-endian hosts; payloads are the raw doubles
    static_assert(sizeof(double) == 8);
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n) * 8);
}

void read_f64_le(std::istream& is, double* data, int64_t n) {
    is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n) * 8);
    if (!is) throw io_error("checkpoint truncated in tensor payload");
}

}  // namespace

void save_checkpoint(const Checkpoint& c, const std::string& path) {
    nlohmann::json meta;
    meta["format_version"] = c.format_version;
    meta["backend"] = c.backend_name;
    meta["d_text"] = c.d_text;
    meta["n_pairs"] = c.n_pairs;
    meta["initializer_word"] = c.initializer_word;
    meta["step_count"] = c.step_count;
    meta["train_config"] = c.train_config;
    meta["loss_summary"] = c.loss_summary;
    meta["dtype"] = "f64";
    nlohmann::json tensors = nlohmann::json::array();
    for (const NamedTensor& nt : payload_order(c)) {
        nlohmann::json entry;
        entry["name"] = nt.name;
        entry["shape"] = nt.tensor->shape;
        tensors.push_back(entry);
    }
    meta["tensors"] = tensors;

    std::string meta_str = meta.dump();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot write checkpoint: " + path);
    os.write(kMagic, 5);
    write_u32_le(os, static_cast<uint32_t>(meta_str.size()));
    os.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
    for (const NamedTensor& nt : payload_order(c)) write_f64_le(os, nt.tensor->ptr(), nt.tensor->numel());
    if (!os) throw io_error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open checkpoint: " + path);
    char magic[5];
    is.read(magic, 5);
    if (!is || std::memcmp(magic, kMagic, 5) != 0)
        throw io_error("not a checkpoint file (bad magic): " + path);
    uint32_t len = read_u32_le(is);
    std::string meta_str(len, '\0');
    is.read(meta_str.data(), len);
    if (!is) throw io_error("checkpoint truncated in metadata");
    nlohmann::json meta = nlohmann::json::parse(meta_str, nullptr, false);
    if (meta.is_discarded()) throw io_error("checkpoint metadata is not valid JSON");
    if (meta.value("dtype", "") != "f64") throw io_error("unsupported checkpoint dtype");

    Checkpoint c;
    c.format_version = meta.at("format_version").get<int>();
    c.backend_name = meta.at("backend").get<std::string>();
    c.d_text = meta.at("d_text").get<int>();
    c.n_pairs = meta.at("n_pairs").get<int>();
    c.initializer_word = meta.at("initializer_word").get<std::string>();
    c.step_count = meta.at("step_count").get<int64_t>();
    c.train_config = meta.at("train_config");
    c.loss_summary = meta.at("loss_summary");

    // shape the destination tensors, then stream payloads in declared order
    c.params = init_expander(c.d_text, c.n_pairs, 0);
    c.tokens.k_tokens = Tensor({c.n_pairs, c.d_text});
    c.tokens.v_tokens = Tensor({c.n_pairs, c.d_text});
    c.initializer_vector = Tensor({c.d_text});

    std::vector<NamedTensor> order = payload_order(c);
    const nlohmann::json& tensors = meta.at("tensors");
    if (tensors.size() != order.size()) throw io_error("checkpoint tensor list mismatch");
    for (size_t i = 0; i < order.size(); ++i) {
        const nlohmann::json& entry = tensors.at(i);
        if (entry.at("name").get<std::string>() != order[i].name)
            throw io_error("checkpoint tensor order mismatch at '" + order[i].name + "'");
        std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
        if (shape != order[i].tensor->shape)
            throw io_error("checkpoint tensor '" + order[i].name + "' has unexpected shape");
        read_f64_le(is, const_cast<Tensor*>(order[i].tensor)->ptr(), order[i].tensor->numel());
    }
    return c;
}

uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open for hashing: " + path);
    uint64_t h = 1469598103934665603ull;
    char buf[4096];
    while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
        std::streamsize got = is.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
        if (!is) break;
    }
    return h;
}

}  // namespace sefi
