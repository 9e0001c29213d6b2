#include "docrecon/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "docrecon/error.hpp"

namespace docrecon {

static_assert(std::endian::native == std::endian::little, "checkpoint codec assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'D', 'R', 'C', 'K', 'P', 'T', '\0', '\0'};

class Writer {
public:
    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out.insert(out.end(), b, b + n);
    }
    std::vector<std::uint8_t> out;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : bytes(b) {}
    std::uint32_t u32() {
        std::uint32_t v;
        raw(&v, sizeof v);
        return v;
    }
    void raw(void* p, std::size_t n) {
        if (pos + n > bytes.size()) throw Error(ErrorKind::malformed, "checkpoint truncated");
        std::memcpy(p, bytes.data() + pos, n);
        pos += n;
    }
    bool done() const { return pos == bytes.size(); }

private:
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ModelParams<float>& params, Precision precision) {
    Writer w;
    w.raw(kMagic, sizeof kMagic);
    w.u32(kCheckpointVersion);
    w.u32(precision == Precision::f16 ? 1u : 0u);
    const NetConfig& c = params.config;
    w.u32(static_cast<std::uint32_t>(c.input_h));
    w.u32(static_cast<std::uint32_t>(c.input_w));
    w.u32(static_cast<std::uint32_t>(c.input_c));
    w.u32(static_cast<std::uint32_t>(c.conv_channels));
    w.u32(static_cast<std::uint32_t>(c.dense.size()));
    for (int d : c.dense) w.u32(static_cast<std::uint32_t>(d));

    const auto tensors = params.named_tensors();
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        w.u32(static_cast<std::uint32_t>(name.size()));
        w.raw(name.data(), name.size());
        w.u32(static_cast<std::uint32_t>(t->shape.size()));
        for (int d : t->shape) w.u32(static_cast<std::uint32_t>(d));
        if (precision == Precision::f16) {
            for (float v : t->data) {
                const std::uint16_t h = float_to_half_bits(v);
                w.raw(&h, sizeof h);
            }
        } else {
            w.raw(t->data.data(), t->data.size() * sizeof(float));
        }
    }
    return std::move(w.out);
}

ModelParams<float> decode_checkpoint(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    char magic[8];
    r.raw(magic, sizeof magic);
    if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw Error(ErrorKind::malformed, "not a checkpoint file");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw Error(ErrorKind::unsupported_version, "unsupported checkpoint version " + std::to_string(version));
    }
    const std::uint32_t prec = r.u32();
    if (prec > 1) throw Error(ErrorKind::malformed, "unknown checkpoint precision");

    NetConfig c;
    c.input_h = static_cast<int>(r.u32());
    c.input_w = static_cast<int>(r.u32());
    c.input_c = static_cast<int>(r.u32());
    c.conv_channels = static_cast<int>(r.u32());
    const std::uint32_t n_dense = r.u32();
    if (n_dense > 64) throw Error(ErrorKind::malformed, "implausible dense layer count");
    c.dense.clear();
    for (std::uint32_t i = 0; i < n_dense; ++i) c.dense.push_back(static_cast<int>(r.u32()));

    ModelParams<float> params = ModelParams<float>::init(c, 0);
    auto tensors = params.named_tensors();
    if (r.u32() != tensors.size()) throw Error(ErrorKind::malformed, "checkpoint tensor count mismatch");
    for (auto& [name, t] : tensors) {
        const std::uint32_t len = r.u32();
        if (len > 4096) throw Error(ErrorKind::malformed, "implausible tensor name length");
        std::string stored(len, '\0');
        r.raw(stored.data(), len);
        if (stored != name) throw Error(ErrorKind::malformed, "expected tensor '" + name + "', found '" + stored + "'");
        std::vector<int> shape(r.u32());
        for (int& d : shape) d = static_cast<int>(r.u32());
        require_shape(shape, t->shape, "checkpoint tensor " + name);
        if (prec == 1) {
            for (float& v : t->data) {
                std::uint16_t h;
                r.raw(&h, sizeof h);
                v = half_bits_to_float(h);
            }
        } else {
            r.raw(t->data.data(), t->data.size() * sizeof(float));
        }
    }
    if (!r.done()) throw Error(ErrorKind::malformed, "trailing bytes after checkpoint");
    return params;
}

void save_checkpoint(const ModelParams<float>& params, const std::filesystem::path& path, Precision precision) {
    const auto bytes = encode_checkpoint(params, precision);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::io, "short write to " + path.string());
}

ModelParams<float> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace docrecon
