#include "mxt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

namespace mxt {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'M', 'X', 'T', 'C', 'K', 'P', 'T', '\0'};

class Writer {
public:
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out.insert(out.end(), b, b + n);
    }
    void u32(std::uint32_t v) { raw(&v, 4); }
    void u64(std::uint64_t v) { raw(&v, 8); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
    std::vector<std::uint8_t> out;
};

class Reader {
public:
    Reader(const std::vector<std::uint8_t>& b, std::size_t end) : bytes_(b), end_(end) {}

    void raw(void* p, std::size_t n) {
        need(n);
        std::memcpy(p, bytes_.data() + pos_, n);
        pos_ += n;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        raw(&v, 4);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        raw(&v, 8);
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::vector<std::uint8_t> bytes(std::size_t n) {
        need(n);
        std::vector<std::uint8_t> v(bytes_.begin() + static_cast<long>(pos_),
                                    bytes_.begin() + static_cast<long>(pos_ + n));
        pos_ += n;
        return v;
    }
    std::size_t pos() const { return pos_; }

private:
    void need(std::size_t n) const {
        if (n > end_ - pos_) {
            throw CorruptionError("checkpoint truncated: record at byte " + std::to_string(pos_) +
                                  " needs " + std::to_string(n) + " bytes");
        }
    }
    const std::vector<std::uint8_t>& bytes_;
    std::size_t end_;
    std::size_t pos_ = 0;
};

}  // namespace

const CheckpointTensor* CheckpointFile::find(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

const std::string* CheckpointFile::config_value(const std::string& key) const {
    for (const auto& [k, v] : config)
        if (k == key) return &v;
    return nullptr;
}

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<std::uint8_t> encode_checkpoint(const CheckpointFile& file) {
    Writer w;
    w.raw(kMagic, sizeof kMagic);
    w.u32(kCheckpointVersion);
    w.u32(file.scalar_bytes);
    w.u32(static_cast<std::uint32_t>(file.config.size()));
    for (const auto& [k, v] : file.config) {
        w.str(k);
        w.str(v);
    }
    w.u32(static_cast<std::uint32_t>(file.tensors.size()));
    for (const auto& t : file.tensors) {
        if (t.payload.size() != numel(t.shape) * file.scalar_bytes) {
            throw ContractError("checkpoint tensor '" + t.name + "' payload does not match its shape");
        }
        w.str(t.name);
        w.u32(static_cast<std::uint32_t>(t.shape.size()));
        for (auto d : t.shape) w.u64(d);
        w.raw(t.payload.data(), t.payload.size());
    }
    w.u64(fnv1a(w.out.data(), w.out.size()));
    return std::move(w.out);
}

CheckpointFile decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < sizeof kMagic + 8 + 8) throw CorruptionError("checkpoint truncated: file too short");
    if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
        throw CorruptionError("not a checkpoint file (bad magic)");
    }
    const std::size_t body = bytes.size() - 8;
    std::uint64_t stored;
    std::memcpy(&stored, bytes.data() + body, 8);
    Reader r(bytes, body);
    char magic[8];
    r.raw(magic, 8);
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw SchemaError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
    }
    if (fnv1a(bytes.data(), body) != stored) {
        throw CorruptionError("checkpoint checksum mismatch (file truncated or corrupted)");
    }
    CheckpointFile f;
    f.scalar_bytes = r.u32();
    if (f.scalar_bytes != 4 && f.scalar_bytes != 8) {
        throw SchemaError("checkpoint scalar width " + std::to_string(f.scalar_bytes) + " is not supported");
    }
    const std::uint32_t nc = r.u32();
    for (std::uint32_t i = 0; i < nc; ++i) {
        auto k = r.str();
        auto v = r.str();
        f.config.emplace_back(std::move(k), std::move(v));
    }
    const std::uint32_t nt = r.u32();
    for (std::uint32_t i = 0; i < nt; ++i) {
        CheckpointTensor t;
        t.name = r.str();
        const std::uint32_t rank = r.u32();
        if (rank > 8) throw CorruptionError("checkpoint tensor '" + t.name + "' has implausible rank");
        std::size_t count = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            const std::uint64_t dim = r.u64();
            if (dim > (std::uint64_t{1} << 32)) throw CorruptionError("checkpoint tensor '" + t.name + "' has implausible shape");
            t.shape.push_back(static_cast<std::size_t>(dim));
            count *= static_cast<std::size_t>(dim);
        }
        t.payload = r.bytes(count * f.scalar_bytes);
        f.tensors.push_back(std::move(t));
    }
    if (r.pos() != body) throw CorruptionError("checkpoint has trailing bytes before the checksum");
    return f;
}

void write_checkpoint(const std::filesystem::path& path, const CheckpointFile& file) {
    const auto bytes = encode_checkpoint(file);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("failed writing '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move checkpoint into place at '" + path.string() + "': " + ec.message());
}

CheckpointFile read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
    std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return decode_checkpoint(bytes);
}

template <class T>
CheckpointTensor pack_tensor(const std::string& name, const Tensor<T>& t) {
    CheckpointTensor c;
    c.name = name;
    c.shape = t.shape();
    c.payload.resize(t.numel() * sizeof(T));
    std::memcpy(c.payload.data(), t.values().data(), c.payload.size());
    return c;
}

template <class T>
void unpack_tensor(const CheckpointTensor& src, std::uint32_t scalar_bytes, Tensor<T>& dst) {
    if (scalar_bytes != sizeof(T)) {
        throw SchemaError("checkpoint stores " + std::to_string(scalar_bytes * 8) + "-bit scalars, this build expects " +
                          std::to_string(sizeof(T) * 8) + "-bit");
    }
    if (src.shape != dst.shape()) {
        throw SchemaError("checkpoint tensor '" + src.name + "' has shape " + to_string(src.shape) +
                          ", model expects " + to_string(dst.shape()));
    }
    std::memcpy(dst.mutable_values().data(), src.payload.data(), src.payload.size());
}

ModelConfig model_config_from(const CheckpointFile& file) {
    ModelConfig cfg;
    for (const auto& [k, v] : file.config) {
        if (k.rfind("model.", 0) != 0) continue;
        try {
            if (!cfg.set(k.substr(6), v)) throw SchemaError("checkpoint has unknown config key '" + k + "'");
        } catch (const ParseError& e) {
            throw SchemaError(std::string("checkpoint config: ") + e.what());
        }
    }
    return cfg;
}

template <class T>
CheckpointFile model_checkpoint(MxtModel<T>& model) {
    CheckpointFile f;
    f.scalar_bytes = sizeof(T);
    f.config = model.config().entries();
    model.visit([&](const std::string& name, Tensor<T>& p) { f.tensors.push_back(pack_tensor(name, p)); });
    return f;
}

template <class T>
MxtModel<T> load_model(const CheckpointFile& file, const std::vector<std::string>& ignored_prefixes) {
    const ModelConfig cfg = model_config_from(file);
    try {
        cfg.validate();
    } catch (const ContractError& e) {
        throw SchemaError(std::string("checkpoint config is invalid: ") + e.what());
    }
    auto model = MxtModel<T>::init(cfg, 0);
    std::set<std::string> owned;
    model.visit([&](const std::string& name, Tensor<T>& p) {
        owned.insert(name);
        const auto* t = file.find(name);
        if (!t) throw SchemaError("checkpoint is missing tensor '" + name + "'");
        unpack_tensor(*t, file.scalar_bytes, p);
    });
    for (const auto& t : file.tensors) {
        if (owned.count(t.name)) continue;
        bool ignored = false;
        for (const auto& p : ignored_prefixes) ignored = ignored || t.name.rfind(p, 0) == 0;
        if (!ignored) throw SchemaError("checkpoint has unknown tensor '" + t.name + "'");
    }
    return model;
}

#define MXT_INSTANTIATE_CKPT(T)                                                                   \
    template CheckpointTensor pack_tensor(const std::string&, const Tensor<T>&);                  \
    template void unpack_tensor(const CheckpointTensor&, std::uint32_t, Tensor<T>&);              \
    template CheckpointFile model_checkpoint(MxtModel<T>&);                                       \
    template MxtModel<T> load_model<T>(const CheckpointFile&, const std::vector<std::string>&);

MXT_INSTANTIATE_CKPT(float)
MXT_INSTANTIATE_CKPT(double)

}  // namespace mxt
