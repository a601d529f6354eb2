#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "prograde/tensor.hpp"

// 8-bit image container plus a self-contained PNG codec (writer emits
// stored-deflate zlib streams; reader inflates stored, fixed and dynamic
// Huffman blocks) and a trivial PPM fallback. No external image libraries.

namespace prograde {

struct ImageU8 {
    int width = 0, height = 0, channels = 3;  // interleaved
    std::vector<std::uint8_t> pixels;

    static ImageU8 make(int w, int h, int c = 3, std::uint8_t fill = 0) {
        ImageU8 img;
        img.width = w;
        img.height = h;
        img.channels = c;
        img.pixels.assign(static_cast<std::size_t>(w) * h * c, fill);
        return img;
    }

    std::uint8_t& at(int x, int y, int c) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::uint8_t at(int x, int y, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
};

namespace pngio {

inline std::uint32_t crc32(const std::uint8_t* data, std::size_t n, std::uint32_t crc = 0) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    crc ^= 0xffffffffu;
    for (std::size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
    return crc ^ 0xffffffffu;
}

inline std::uint32_t adler32(const std::uint8_t* data, std::size_t n) {
    std::uint32_t a = 1, b = 0;
    for (std::size_t i = 0; i < n; ++i) {
        a = (a + data[i]) % 65521u;
        b = (b + a) % 65521u;
    }
    return (b << 16) | a;
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

inline void put_chunk(std::vector<std::uint8_t>& out, const char type[4], const std::vector<std::uint8_t>& body) {
    put_u32(out, static_cast<std::uint32_t>(body.size()));
    std::vector<std::uint8_t> tb;
    tb.insert(tb.end(), type, type + 4);
    tb.insert(tb.end(), body.begin(), body.end());
    out.insert(out.end(), tb.begin(), tb.end());
    put_u32(out, crc32(tb.data(), tb.size()));
}

inline std::vector<std::uint8_t> encode_png(const ImageU8& img) {
    check(img.width > 0 && img.height > 0 && (img.channels == 1 || img.channels == 3),
          "png: only 1- or 3-channel images are written");
    // Raw scanline stream: filter byte 0 per row.
    std::vector<std::uint8_t> raw;
    const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
    raw.reserve((stride + 1) * img.height);
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0);
        raw.insert(raw.end(), img.pixels.begin() + y * stride, img.pixels.begin() + (y + 1) * stride);
    }

    // zlib stream with stored (uncompressed) deflate blocks.
    std::vector<std::uint8_t> z;
    z.push_back(0x78);
    z.push_back(0x01);
    std::size_t pos = 0;
    while (pos < raw.size() || raw.empty()) {
        const std::size_t len = std::min<std::size_t>(65535, raw.size() - pos);
        const bool final = pos + len >= raw.size();
        z.push_back(final ? 1 : 0);
        z.push_back(static_cast<std::uint8_t>(len & 0xff));
        z.push_back(static_cast<std::uint8_t>(len >> 8));
        z.push_back(static_cast<std::uint8_t>(~len & 0xff));
        z.push_back(static_cast<std::uint8_t>((~len >> 8) & 0xff));
        z.insert(z.end(), raw.begin() + pos, raw.begin() + pos + len);
        pos += len;
        if (final) break;
    }
    put_u32(z, adler32(raw.data(), raw.size()));

    std::vector<std::uint8_t> out{137, 80, 78, 71, 13, 10, 26, 10};
    std::vector<std::uint8_t> ihdr;
    put_u32(ihdr, static_cast<std::uint32_t>(img.width));
    put_u32(ihdr, static_cast<std::uint32_t>(img.height));
    ihdr.push_back(8);                                   // bit depth
    ihdr.push_back(img.channels == 3 ? 2 : 0);           // color type
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);                                   // no interlace
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", z);
    put_chunk(out, "IEND", {});
    return out;
}

// -- inflate ----------------------------------------------------------------

struct BitReader {
    const std::uint8_t* data;
    std::size_t size, pos = 0;
    std::uint32_t buf = 0;
    int count = 0;

    int bit() {
        if (count == 0) {
            check(pos < size, "inflate: out of input");
            buf = data[pos++];
            count = 8;
        }
        const int b = buf & 1;
        buf >>= 1;
        --count;
        return b;
    }

    std::uint32_t bits(int n) {
        std::uint32_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint32_t>(bit()) << i;
        return v;
    }

    void align_byte() { count = 0; }
};

struct Huffman {
    std::array<int, 16> counts{};
    std::vector<int> symbols;

    static Huffman build(const std::vector<int>& lengths) {
        Huffman h;
        for (int len : lengths)
            if (len > 0) ++h.counts[len];
        std::array<int, 16> offsets{};
        for (int len = 1; len < 15; ++len) offsets[len + 1] = offsets[len] + h.counts[len];
        h.symbols.resize(offsets[15] + h.counts[15]);
        for (std::size_t sym = 0; sym < lengths.size(); ++sym)
            if (lengths[sym] > 0) h.symbols[offsets[lengths[sym]]++] = static_cast<int>(sym);
        return h;
    }

    int decode(BitReader& br) const {
        int code = 0, first = 0, index = 0;
        for (int len = 1; len <= 15; ++len) {
            code |= br.bit();
            const int count = counts[len];
            if (code - first < count) return symbols[index + (code - first)];
            index += count;
            first = (first + count) << 1;
            code <<= 1;
        }
        raise("inflate: invalid Huffman code");
    }
};

inline void inflate_block(BitReader& br, const Huffman& lit, const Huffman& dist, std::vector<std::uint8_t>& out) {
    static const int kLenBase[29] = {3, 4, 5, 6, 7, 8, 9, 10, 11, 13, 15, 17, 19, 23, 27, 31,
                                     35, 43, 51, 59, 67, 83, 99, 115, 131, 163, 195, 227, 258};
    static const int kLenExtra[29] = {0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2,
                                      3, 3, 3, 3, 4, 4, 4, 4, 5, 5, 5, 5, 0};
    static const int kDistBase[30] = {1, 2, 3, 4, 5, 7, 9, 13, 17, 25, 33, 49, 65, 97, 129, 193,
                                      257, 385, 513, 769, 1025, 1537, 2049, 3073, 4097, 6145, 8193, 12289, 16385, 24577};
    static const int kDistExtra[30] = {0, 0, 0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5, 6, 6,
                                       7, 7, 8, 8, 9, 9, 10, 10, 11, 11, 12, 12, 13, 13};
    for (;;) {
        const int sym = lit.decode(br);
        if (sym < 256) {
            out.push_back(static_cast<std::uint8_t>(sym));
        } else if (sym == 256) {
            return;
        } else {
            check(sym - 257 < 29, "inflate: bad length symbol");
            const int len = kLenBase[sym - 257] + static_cast<int>(br.bits(kLenExtra[sym - 257]));
            const int dsym = dist.decode(br);
            check(dsym < 30, "inflate: bad distance symbol");
            const int d = kDistBase[dsym] + static_cast<int>(br.bits(kDistExtra[dsym]));
            check(static_cast<std::size_t>(d) <= out.size(), "inflate: distance beyond output");
            for (int i = 0; i < len; ++i) out.push_back(out[out.size() - d]);
        }
    }
}

inline std::vector<std::uint8_t> inflate(const std::uint8_t* data, std::size_t size) {
    check(size >= 2, "inflate: truncated zlib stream");
    check((data[0] & 0x0f) == 8, "inflate: not a deflate stream");
    BitReader br{data + 2, size - 2};
    std::vector<std::uint8_t> out;
    for (;;) {
        const int final = br.bit();
        const int type = static_cast<int>(br.bits(2));
        if (type == 0) {
            br.align_byte();
            check(br.pos + 4 <= br.size, "inflate: truncated stored block");
            const int len = br.data[br.pos] | (br.data[br.pos + 1] << 8);
            br.pos += 4;
            check(br.pos + len <= br.size, "inflate: truncated stored data");
            out.insert(out.end(), br.data + br.pos, br.data + br.pos + len);
            br.pos += len;
        } else if (type == 1) {
            std::vector<int> lit_len(288);
            for (int i = 0; i < 144; ++i) lit_len[i] = 8;
            for (int i = 144; i < 256; ++i) lit_len[i] = 9;
            for (int i = 256; i < 280; ++i) lit_len[i] = 7;
            for (int i = 280; i < 288; ++i) lit_len[i] = 8;
            inflate_block(br, Huffman::build(lit_len), Huffman::build(std::vector<int>(30, 5)), out);
        } else if (type == 2) {
            const int hlit = static_cast<int>(br.bits(5)) + 257;
            const int hdist = static_cast<int>(br.bits(5)) + 1;
            const int hclen = static_cast<int>(br.bits(4)) + 4;
            static const int kOrder[19] = {16, 17, 18, 0, 8, 7, 9, 6, 10, 5, 11, 4, 12, 3, 13, 2, 14, 1, 15};
            std::vector<int> cl_len(19, 0);
            for (int i = 0; i < hclen; ++i) cl_len[kOrder[i]] = static_cast<int>(br.bits(3));
            const Huffman cl = Huffman::build(cl_len);
            std::vector<int> lengths;
            lengths.reserve(hlit + hdist);
            while (static_cast<int>(lengths.size()) < hlit + hdist) {
                const int sym = cl.decode(br);
                if (sym < 16) {
                    lengths.push_back(sym);
                } else if (sym == 16) {
                    check(!lengths.empty(), "inflate: repeat with no previous length");
                    const int rep = 3 + static_cast<int>(br.bits(2));
                    for (int i = 0; i < rep; ++i) lengths.push_back(lengths.back());
                } else if (sym == 17) {
                    const int rep = 3 + static_cast<int>(br.bits(3));
                    lengths.insert(lengths.end(), rep, 0);
                } else {
                    const int rep = 11 + static_cast<int>(br.bits(7));
                    lengths.insert(lengths.end(), rep, 0);
                }
            }
            check(static_cast<int>(lengths.size()) == hlit + hdist, "inflate: code length overflow");
            inflate_block(br,
                          Huffman::build({lengths.begin(), lengths.begin() + hlit}),
                          Huffman::build({lengths.begin() + hlit, lengths.end()}), out);
        } else {
            raise("inflate: reserved block type");
        }
        if (final) break;
    }
    return out;
}

inline ImageU8 decode_png(const std::vector<std::uint8_t>& file) {
    static const std::uint8_t kSig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    check(file.size() > 8 && std::memcmp(file.data(), kSig, 8) == 0, "png: bad signature");
    std::size_t pos = 8;
    int width = 0, height = 0, bit_depth = 0, color_type = 0;
    std::vector<std::uint8_t> idat;
    while (pos + 8 <= file.size()) {
        const std::uint32_t len = (file[pos] << 24) | (file[pos + 1] << 16) | (file[pos + 2] << 8) | file[pos + 3];
        const std::string type(file.begin() + pos + 4, file.begin() + pos + 8);
        check(pos + 12 + len <= file.size(), "png: truncated chunk");
        const std::uint8_t* body = file.data() + pos + 8;
        if (type == "IHDR") {
            width = (body[0] << 24) | (body[1] << 16) | (body[2] << 8) | body[3];
            height = (body[4] << 24) | (body[5] << 16) | (body[6] << 8) | body[7];
            bit_depth = body[8];
            color_type = body[9];
            check(bit_depth == 8, "png: only 8-bit depth supported");
            check(color_type == 0 || color_type == 2 || color_type == 4 || color_type == 6,
                  "png: unsupported color type " + std::to_string(color_type));
            check(body[12] == 0, "png: interlaced images not supported");
        } else if (type == "IDAT") {
            idat.insert(idat.end(), body, body + len);
        } else if (type == "IEND") {
            break;
        }
        pos += 12 + len;
    }
    check(width > 0 && height > 0 && !idat.empty(), "png: missing image data");

    const int src_ch = color_type == 0 ? 1 : color_type == 2 ? 3 : color_type == 4 ? 2 : 4;
    const std::size_t stride = static_cast<std::size_t>(width) * src_ch;
    std::vector<std::uint8_t> raw = inflate(idat.data(), idat.size());
    check(raw.size() == (stride + 1) * height, "png: unexpected scanline data size");

    // Undo per-row filters.
    std::vector<std::uint8_t> recon(stride * height);
    for (int y = 0; y < height; ++y) {
        const std::uint8_t filter = raw[y * (stride + 1)];
        const std::uint8_t* src = raw.data() + y * (stride + 1) + 1;
        std::uint8_t* cur = recon.data() + y * stride;
        const std::uint8_t* prior = y > 0 ? recon.data() + (y - 1) * stride : nullptr;
        for (std::size_t i = 0; i < stride; ++i) {
            const int a = i >= static_cast<std::size_t>(src_ch) ? cur[i - src_ch] : 0;
            const int b = prior ? prior[i] : 0;
            const int c = (prior && i >= static_cast<std::size_t>(src_ch)) ? prior[i - src_ch] : 0;
            int v = src[i];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: {
                    const int p = a + b - c;
                    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
                    v += (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : c);
                    break;
                }
                default: raise("png: unknown filter " + std::to_string(filter));
            }
            cur[i] = static_cast<std::uint8_t>(v & 0xff);
        }
    }

    ImageU8 img = ImageU8::make(width, height, 3);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const std::uint8_t* px = recon.data() + y * stride + static_cast<std::size_t>(x) * src_ch;
            std::uint8_t r, g, b;
            if (src_ch <= 2) r = g = b = px[0];
            else { r = px[0]; g = px[1]; b = px[2]; }
            img.at(x, y, 0) = r;
            img.at(x, y, 1) = g;
            img.at(x, y, 2) = b;
        }
    }
    return img;
}

}  // namespace pngio

// -- file IO ------------------------------------------------------------------

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    check(f.good(), "io: cannot open " + path);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary);
    check(f.good(), "io: cannot write " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    check(f.good(), "io: short write to " + path);
}

inline ImageU8 decode_ppm(const std::vector<std::uint8_t>& file) {
    std::string header(file.begin(), file.begin() + std::min<std::size_t>(file.size(), 64));
    check(file.size() > 2 && file[0] == 'P' && (file[1] == '6' || file[1] == '5'), "ppm: bad magic");
    std::size_t pos = 2;
    auto next_int = [&] {
        while (pos < file.size() && (std::isspace(file[pos]) || file[pos] == '#')) {
            if (file[pos] == '#')
                while (pos < file.size() && file[pos] != '\n') ++pos;
            else ++pos;
        }
        int v = 0;
        while (pos < file.size() && std::isdigit(file[pos])) v = v * 10 + (file[pos++] - '0');
        return v;
    };
    const bool gray = file[1] == '5';
    const int w = next_int(), h = next_int(), maxv = next_int();
    check(w > 0 && h > 0 && maxv == 255, "ppm: unsupported header");
    ++pos;  // single whitespace after maxval
    const int src_ch = gray ? 1 : 3;
    check(file.size() - pos >= static_cast<std::size_t>(w) * h * src_ch, "ppm: truncated data");
    ImageU8 img = ImageU8::make(w, h, 3);
    for (int i = 0; i < w * h; ++i)
        for (int c = 0; c < 3; ++c) img.pixels[i * 3 + c] = file[pos + i * src_ch + (gray ? 0 : c)];
    return img;
}

inline std::vector<std::uint8_t> encode_ppm(const ImageU8& img) {
    check(img.channels == 3, "ppm: 3-channel images only");
    std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.pixels.begin(), img.pixels.end());
    return out;
}

inline ImageU8 read_image(const std::string& path) {
    auto bytes = read_file_bytes(path);
    check(!bytes.empty(), "io: empty image file " + path);
    if (bytes.size() > 4 && bytes[0] == 137 && bytes[1] == 'P') return pngio::decode_png(bytes);
    if (bytes[0] == 'P') return decode_ppm(bytes);
    raise("io: unrecognized image format in " + path);
}

inline void write_image(const std::string& path, const ImageU8& img) {
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".ppm") write_file_bytes(path, encode_ppm(img));
    else write_file_bytes(path, pngio::encode_png(img));
}

// -- conversions ---------------------------------------------------------------

/// u8 -> planar float in [-1, 1]; the exact inverse of the sample mapping.
template <typename T = float>
Tensor<T> to_tensor_pm1(const ImageU8& img) {
    Tensor<T> out = Tensor<T>::uninitialized({3, img.height, img.width});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                out.mutable_data()[(static_cast<std::int64_t>(c) * img.height + y) * img.width + x] =
                    static_cast<T>(img.at(x, y, img.channels == 3 ? c : 0)) / T(127.5) - T(1);
    return out;
}

/// [-1,1] float -> u8 via round(127.5*(v+1)), clamped to [0,255].
template <typename T>
ImageU8 from_tensor_pm1(const Tensor<T>& t) {
    const Shape& s = t.shape();
    check(s.rank == 3 && s[0] == 3, "from_tensor_pm1: expected (3,H,W)");
    ImageU8 img = ImageU8::make(s[2], s[1], 3);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < s[1]; ++y)
            for (int x = 0; x < s[2]; ++x) {
                const double v = static_cast<double>(t.at(c, y, x));
                const long q = std::lround(127.5 * (v + 1.0));
                img.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(q, 0L, 255L));
            }
    return img;
}

/// Grayscale in [0,1] (Rec. 601 luma).
inline std::vector<double> to_gray01(const ImageU8& img) {
    std::vector<double> out(static_cast<std::size_t>(img.width) * img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const double r = img.at(x, y, 0) / 255.0;
            const double g = img.at(x, y, img.channels > 1 ? 1 : 0) / 255.0;
            const double b = img.at(x, y, img.channels > 2 ? 2 : 0) / 255.0;
            out[static_cast<std::size_t>(y) * img.width + x] = 0.299 * r + 0.587 * g + 0.114 * b;
        }
    return out;
}

/// Square grid of equally sized tiles; cols = ceil(sqrt(n)).
inline ImageU8 image_grid(const std::vector<ImageU8>& tiles) {
    check(!tiles.empty(), "image_grid: no tiles");
    const int w = tiles[0].width, h = tiles[0].height;
    int cols = 1;
    while (cols * cols < static_cast<int>(tiles.size())) ++cols;
    const int rows = (static_cast<int>(tiles.size()) + cols - 1) / cols;
    ImageU8 grid = ImageU8::make(cols * w, rows * h, 3);
    for (std::size_t i = 0; i < tiles.size(); ++i) {
        check(tiles[i].width == w && tiles[i].height == h, "image_grid: mixed tile sizes");
        const int gx = static_cast<int>(i) % cols, gy = static_cast<int>(i) / cols;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < 3; ++c)
                    grid.at(gx * w + x, gy * h + y, c) = tiles[i].at(x, y, tiles[i].channels == 3 ? c : 0);
    }
    return grid;
}

}  // namespace prograde
