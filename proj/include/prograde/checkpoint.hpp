#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "prograde/tensor.hpp"

namespace prograde {

// Versioned binary container: a manifest of named entries, parameters as
// little-endian 32-bit float blobs. Round-trips bit-exactly so resuming is
// bit-exact in deterministic mode.

struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;
    static constexpr char kMagic[8] = {'P', 'G', 'C', 'K', 'P', 'T', '0', '1'};

    std::string config_text;
    std::uint64_t images_shown = 0;
    int resolution = 4;
    double alpha = 1.0;
    std::uint64_t adam_g_steps = 0, adam_d_steps = 0;
    double lsgan_d_hat = 0.0;
    std::uint64_t seed = 0;

    std::map<std::string, Tensor<float>> g_params, d_params, ema_params;
    std::map<std::string, Tensor<float>> adam_g_m, adam_g_v, adam_d_m, adam_d_v;
    std::map<std::string, std::uint64_t> adam_g_t, adam_d_t;  // per-parameter step index
    std::map<std::string, std::array<std::uint64_t, 4>> rng_states;
};

namespace detail_ckpt {

inline void put_bytes(std::vector<std::uint8_t>& out, const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
}

template <typename V>
void put_pod(std::vector<std::uint8_t>& out, V v) {
    put_bytes(out, &v, sizeof(V));
}

inline void put_name(std::vector<std::uint8_t>& out, const std::string& name) {
    check(name.size() < 65536, "checkpoint: name too long");
    put_pod<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    put_bytes(out, name.data(), name.size());
}

enum : std::uint8_t { kKindTensor = 0, kKindU64 = 1, kKindF64 = 2, kKindBlob = 3 };

inline void put_tensor(std::vector<std::uint8_t>& out, const std::string& name, const Tensor<float>& t) {
    put_name(out, name);
    put_pod<std::uint8_t>(out, kKindTensor);
    put_pod<std::uint8_t>(out, static_cast<std::uint8_t>(t.shape().rank));
    for (int i = 0; i < t.shape().rank; ++i) put_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape()[i]));
    put_pod<std::uint64_t>(out, static_cast<std::uint64_t>(t.numel()));
    put_bytes(out, t.data(), sizeof(float) * t.numel());
}

inline void put_u64(std::vector<std::uint8_t>& out, const std::string& name, std::uint64_t v) {
    put_name(out, name);
    put_pod<std::uint8_t>(out, kKindU64);
    put_pod<std::uint64_t>(out, v);
}

inline void put_f64(std::vector<std::uint8_t>& out, const std::string& name, double v) {
    put_name(out, name);
    put_pod<std::uint8_t>(out, kKindF64);
    put_pod<double>(out, v);
}

inline void put_blob(std::vector<std::uint8_t>& out, const std::string& name, const std::string& blob) {
    put_name(out, name);
    put_pod<std::uint8_t>(out, kKindBlob);
    put_pod<std::uint64_t>(out, blob.size());
    put_bytes(out, blob.data(), blob.size());
}

struct Reader {
    const std::uint8_t* p;
    std::size_t n, pos = 0;

    void read(void* dst, std::size_t len) {
        check(pos + len <= n, "checkpoint: truncated file");
        std::memcpy(dst, p + pos, len);
        pos += len;
    }
    template <typename V>
    V pod() {
        V v;
        read(&v, sizeof(V));
        return v;
    }
    std::string name() {
        const auto len = pod<std::uint16_t>();
        std::string s(len, '\0');
        read(s.data(), len);
        return s;
    }
};

}  // namespace detail_ckpt

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
    static_assert(std::endian::native == std::endian::little, "checkpoint format is little-endian");
    using namespace detail_ckpt;
    std::vector<std::uint8_t> out;
    put_bytes(out, Checkpoint::kMagic, 8);
    put_pod<std::uint32_t>(out, Checkpoint::kVersion);

    std::vector<std::uint8_t> body;
    std::uint32_t entries = 0;
    auto tensors = [&](const char* prefix, const std::map<std::string, Tensor<float>>& m) {
        for (const auto& [name, t] : m) {
            put_tensor(body, std::string(prefix) + name, t);
            ++entries;
        }
    };
    put_blob(body, "meta/config", ck.config_text); ++entries;
    put_u64(body, "meta/images_shown", ck.images_shown); ++entries;
    put_u64(body, "meta/resolution", static_cast<std::uint64_t>(ck.resolution)); ++entries;
    put_f64(body, "meta/alpha", ck.alpha); ++entries;
    put_u64(body, "meta/adam_g_steps", ck.adam_g_steps); ++entries;
    put_u64(body, "meta/adam_d_steps", ck.adam_d_steps); ++entries;
    put_f64(body, "meta/lsgan_d_hat", ck.lsgan_d_hat); ++entries;
    put_u64(body, "meta/seed", ck.seed); ++entries;
    for (const auto& [name, st] : ck.rng_states) {
        std::string blob(sizeof(st), '\0');
        std::memcpy(blob.data(), st.data(), sizeof(st));
        put_blob(body, "rng/" + name, blob);
        ++entries;
    }
    for (const auto& [name, t] : ck.adam_g_t) { put_u64(body, "adam_g_t/" + name, t); ++entries; }
    for (const auto& [name, t] : ck.adam_d_t) { put_u64(body, "adam_d_t/" + name, t); ++entries; }
    tensors("g/", ck.g_params);
    tensors("d/", ck.d_params);
    tensors("ema/", ck.ema_params);
    tensors("adam_g_m/", ck.adam_g_m);
    tensors("adam_g_v/", ck.adam_g_v);
    tensors("adam_d_m/", ck.adam_d_m);
    tensors("adam_d_v/", ck.adam_d_v);

    put_pod<std::uint32_t>(out, entries);
    out.insert(out.end(), body.begin(), body.end());
    return out;
}

inline Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    using namespace detail_ckpt;
    Checkpoint ck;
    check(bytes.size() > 12 && std::memcmp(bytes.data(), Checkpoint::kMagic, 8) == 0,
          "checkpoint: bad magic");
    Reader r{bytes.data() + 8, bytes.size() - 8};
    const auto version = r.pod<std::uint32_t>();
    check(version == Checkpoint::kVersion,
          "checkpoint: format version " + std::to_string(version) + " not supported (expected " +
              std::to_string(Checkpoint::kVersion) + ")");
    const auto entries = r.pod<std::uint32_t>();

    for (std::uint32_t e = 0; e < entries; ++e) {
        const std::string name = r.name();
        const auto kind = r.pod<std::uint8_t>();
        if (kind == kKindTensor) {
            const int rank = r.pod<std::uint8_t>();
            check(rank >= 1 && rank <= 4, "checkpoint: bad tensor rank");
            std::vector<int> dims(rank);
            for (auto& d : dims) d = static_cast<int>(r.pod<std::uint32_t>());
            const auto count = r.pod<std::uint64_t>();
            Shape s = Shape::of(dims);
            check(static_cast<std::uint64_t>(s.numel()) == count, "checkpoint: tensor size mismatch in " + name);
            std::vector<float> data(count);
            r.read(data.data(), sizeof(float) * count);
            Tensor<float> t = Tensor<float>::from(s, std::move(data));
            auto route = [&](const char* prefix, std::map<std::string, Tensor<float>>& m) {
                const std::size_t plen = std::strlen(prefix);
                if (name.rfind(prefix, 0) == 0) {
                    m.emplace(name.substr(plen), std::move(t));
                    return true;
                }
                return false;
            };
            route("g/", ck.g_params) || route("d/", ck.d_params) || route("ema/", ck.ema_params) ||
                route("adam_g_m/", ck.adam_g_m) || route("adam_g_v/", ck.adam_g_v) ||
                route("adam_d_m/", ck.adam_d_m) || route("adam_d_v/", ck.adam_d_v) ||
                (raise("checkpoint: unknown tensor section in " + name), false);
        } else if (kind == kKindU64) {
            const auto v = r.pod<std::uint64_t>();
            if (name == "meta/images_shown") ck.images_shown = v;
            else if (name == "meta/resolution") ck.resolution = static_cast<int>(v);
            else if (name == "meta/adam_g_steps") ck.adam_g_steps = v;
            else if (name == "meta/adam_d_steps") ck.adam_d_steps = v;
            else if (name == "meta/seed") ck.seed = v;
            else if (name.rfind("adam_g_t/", 0) == 0) ck.adam_g_t[name.substr(9)] = v;
            else if (name.rfind("adam_d_t/", 0) == 0) ck.adam_d_t[name.substr(9)] = v;
            else raise("checkpoint: unknown u64 entry " + name);
        } else if (kind == kKindF64) {
            const auto v = r.pod<double>();
            if (name == "meta/alpha") ck.alpha = v;
            else if (name == "meta/lsgan_d_hat") ck.lsgan_d_hat = v;
            else raise("checkpoint: unknown f64 entry " + name);
        } else if (kind == kKindBlob) {
            const auto len = r.pod<std::uint64_t>();
            std::string blob(len, '\0');
            r.read(blob.data(), len);
            if (name == "meta/config") {
                ck.config_text = std::move(blob);
            } else if (name.rfind("rng/", 0) == 0) {
                check(blob.size() == sizeof(std::array<std::uint64_t, 4>), "checkpoint: bad rng state size");
                std::array<std::uint64_t, 4> st;
                std::memcpy(st.data(), blob.data(), sizeof(st));
                ck.rng_states[name.substr(4)] = st;
            } else {
                raise("checkpoint: unknown blob entry " + name);
            }
        } else {
            raise("checkpoint: unknown entry kind");
        }
    }
    return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    const auto bytes = encode_checkpoint(ck);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        check(f.good(), "checkpoint: cannot write " + tmp);
        f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        check(f.good(), "checkpoint: short write to " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    check(f.good(), "checkpoint: cannot open " + path);
    std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
    return decode_checkpoint(bytes);
}

}  // namespace prograde
