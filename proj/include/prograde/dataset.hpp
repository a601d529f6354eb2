#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "prograde/image.hpp"
#include "prograde/rng.hpp"

// Dataset preparation geometry: landmark-driven oriented crops, border
// extension, supersampled rendering, the frequency-based quality score, and
// top-k selection. Works in double precision on planar [0,1] images.

namespace prograde {

struct Vec2 {
    double x = 0, y = 0;

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(Vec2 o) const { return x * o.x + y * o.y; }
    double norm() const { return std::sqrt(x * x + y * y); }
};

/// Fixed convention (u,v) -> (v,-u); the opposite choice degenerates the
/// upright symmetric face (x' - Rotate90(y') = 0).
inline Vec2 rotate90(Vec2 v) { return {v.y, -v.x}; }

/// Eye and mouth landmark positions in image coordinates (y grows downward).
struct Landmarks {
    Vec2 e0, e1, m0, m1;
};

/// Oriented square crop: center, side length, orthonormal axes.
struct CropFrame {
    Vec2 center;
    double size = 0;
    Vec2 axis_x, axis_y;
};

inline CropFrame crop_frame_from_landmarks(const Landmarks& lm) {
    const Vec2 xp = lm.e1 - lm.e0;
    const Vec2 yp = (lm.e0 + lm.e1) * 0.5 - (lm.m0 + lm.m1) * 0.5;
    CropFrame f;
    f.center = (lm.e0 + lm.e1) * 0.5 - yp * 0.1;
    f.size = std::max(4.0 * xp.norm(), 3.6 * yp.norm());
    const Vec2 dir = xp - rotate90(yp);
    check(dir.norm() > 1e-12 && f.size > 0, "crop_frame: degenerate landmarks");
    f.axis_x = dir * (1.0 / dir.norm());
    f.axis_y = rotate90(f.axis_x);
    return f;
}

// -- planar [0,1] images -------------------------------------------------------

template <typename T = double>
Tensor<T> to_tensor01(const ImageU8& img) {
    Tensor<T> out = Tensor<T>::uninitialized({3, img.height, img.width});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                out.mutable_data()[(static_cast<std::int64_t>(c) * img.height + y) * img.width + x] =
                    static_cast<T>(img.at(x, y, img.channels == 3 ? c : 0)) / T(255);
    return out;
}

template <typename T>
ImageU8 from_tensor01(const Tensor<T>& t) {
    const Shape& s = t.shape();
    check(s.rank == 3 && s[0] == 3, "from_tensor01: expected (3,H,W)");
    ImageU8 img = ImageU8::make(s[2], s[1], 3);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < s[1]; ++y)
            for (int x = 0; x < s[2]; ++x) {
                const long q = std::lround(255.0 * static_cast<double>(t.at(c, y, x)));
                img.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(q, 0L, 255L));
            }
    return img;
}

namespace detail {

/// Folds an index into [0, n) by repeated reflection without edge repeats.
inline int reflect_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i = ((i % period) + period) % period;
    return i < n ? i : period - i;
}

template <typename T>
T bilinear_at(const Tensor<T>& img, int c, double x, double y) {
    const int h = img.shape()[1], w = img.shape()[2];
    const double cx = std::clamp(x, 0.0, static_cast<double>(w - 1));
    const double cy = std::clamp(y, 0.0, static_cast<double>(h - 1));
    const int x0 = static_cast<int>(std::floor(cx)), y0 = static_cast<int>(std::floor(cy));
    const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
    const double fx = cx - x0, fy = cy - y0;
    const double v00 = img.at(c, y0, x0), v01 = img.at(c, y0, x1);
    const double v10 = img.at(c, y1, x0), v11 = img.at(c, y1, x1);
    return static_cast<T>((v00 * (1 - fx) + v01 * fx) * (1 - fy) + (v10 * (1 - fx) + v11 * fx) * fy);
}

}  // namespace detail

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& img, int out_h, int out_w) {
    const Shape& s = img.shape();
    check(s.rank == 3, "bilinear_resize: expected (C,H,W)");
    Tensor<T> out = Tensor<T>::uninitialized({s[0], out_h, out_w});
    for (int c = 0; c < s[0]; ++c)
        for (int y = 0; y < out_h; ++y)
            for (int x = 0; x < out_w; ++x) {
                const double sx = (x + 0.5) * s[2] / out_w - 0.5;
                const double sy = (y + 0.5) * s[1] / out_h - 0.5;
                out.mutable_data()[(static_cast<std::int64_t>(c) * out_h + y) * out_w + x] =
                    detail::bilinear_at(img, c, sx, sy);
            }
    return out;
}

/// Bilinear sampling of the oriented square onto a supersample grid, then an
/// exact box reduction to the output resolution. Sample positions live at
/// pixel centers: position = c + ((j+.5)/S - .5) s x + ((i+.5)/S - .5) s y.
template <typename T>
Tensor<T> render_crop(const Tensor<T>& src, const CropFrame& frame, int supersample, int out_resolution,
                      bool clamp_borders = true) {
    const Shape& s = src.shape();
    check(s.rank == 3, "render_crop: expected (C,H,W)");
    check(supersample >= out_resolution && supersample % out_resolution == 0,
          "render_crop: supersample must be a multiple of output resolution");
    const int ch = s[0], h = s[1], w = s[2];

    Tensor<T> super = Tensor<T>::uninitialized({ch, supersample, supersample});
    for (int i = 0; i < supersample; ++i) {
        for (int j = 0; j < supersample; ++j) {
            const double fu = (j + 0.5) / supersample - 0.5;
            const double fv = (i + 0.5) / supersample - 0.5;
            const Vec2 p = frame.center + frame.axis_x * (fu * frame.size) + frame.axis_y * (fv * frame.size);
            if (!clamp_borders)
                check(p.x >= -0.5 && p.x <= w - 0.5 && p.y >= -0.5 && p.y <= h - 0.5,
                      "render_crop: frame outside image and border extension disabled");
            for (int c = 0; c < ch; ++c)
                super.mutable_data()[(static_cast<std::int64_t>(c) * supersample + i) * supersample + j] =
                    detail::bilinear_at(src, c, p.x, p.y);
        }
    }

    const int f = supersample / out_resolution;
    if (f == 1) return super;
    Tensor<T> out = Tensor<T>::zeros({ch, out_resolution, out_resolution});
    const T inv = T(1) / static_cast<T>(f * f);
    for (int c = 0; c < ch; ++c)
        for (int i = 0; i < out_resolution; ++i)
            for (int j = 0; j < out_resolution; ++j) {
                T acc = 0;
                for (int di = 0; di < f; ++di)
                    for (int dj = 0; dj < f; ++dj)
                        acc += super.at(c, i * f + di, j * f + dj);
                out.mutable_data()[(static_cast<std::int64_t>(c) * out_resolution + i) * out_resolution + j] =
                    acc * inv;
            }
    return out;
}

template <typename T>
Tensor<T> gaussian_blur(const Tensor<T>& img, double sigma) {
    const Shape& s = img.shape();
    check(s.rank == 3, "gaussian_blur: expected (C,H,W)");
    if (sigma <= 0) return img.clone();
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += kernel[i + radius];
    }
    for (auto& k : kernel) k /= sum;

    const int h = s[1], w = s[2];
    Tensor<T> tmp = Tensor<T>::uninitialized(s);
    Tensor<T> out = Tensor<T>::uninitialized(s);
    for (int c = 0; c < s[0]; ++c) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0;
                for (int t = -radius; t <= radius; ++t)
                    acc += kernel[t + radius] * img.at(c, y, detail::reflect_index(x + t, w));
                tmp.mutable_data()[(static_cast<std::int64_t>(c) * h + y) * w + x] = static_cast<T>(acc);
            }
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0;
                for (int t = -radius; t <= radius; ++t)
                    acc += kernel[t + radius] * tmp.at(c, detail::reflect_index(y + t, h), x);
                out.mutable_data()[(static_cast<std::int64_t>(c) * h + y) * w + x] = static_cast<T>(acc);
            }
    }
    return out;
}

/// Mirror-pads by `margin`, then blends the padded band toward a Gaussian
/// blur (sigma = margin/4) with weight rising from 0 at the original border
/// to 1 at the outer edge. Interior pixels are untouched.
template <typename T>
Tensor<T> extend_borders(const Tensor<T>& img, int margin) {
    check(margin >= 0, "extend_borders: negative margin");
    if (margin == 0) return img.clone();
    const Shape& s = img.shape();
    const int h = s[1], w = s[2];
    const int oh = h + 2 * margin, ow = w + 2 * margin;

    Tensor<T> padded = Tensor<T>::uninitialized({s[0], oh, ow});
    for (int c = 0; c < s[0]; ++c)
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x)
                padded.mutable_data()[(static_cast<std::int64_t>(c) * oh + y) * ow + x] =
                    img.at(c, detail::reflect_index(y - margin, h), detail::reflect_index(x - margin, w));

    Tensor<T> blurred = gaussian_blur(padded, margin / 4.0);
    for (int c = 0; c < s[0]; ++c)
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) {
                const int dx = std::max({margin - x, x - (margin + w - 1), 0});
                const int dy = std::max({margin - y, y - (margin + h - 1), 0});
                const int d = std::max(dx, dy);
                if (d == 0) continue;
                const double wgt = std::min(1.0, static_cast<double>(d) / margin);
                const std::int64_t idx = (static_cast<std::int64_t>(c) * oh + y) * ow + x;
                padded.mutable_data()[idx] = static_cast<T>((1.0 - wgt) * padded.data()[idx] +
                                                            wgt * blurred.data()[idx]);
            }
    return padded;
}

// -- frequency-based quality score ----------------------------------------------

namespace detail {

inline void fft_inplace(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * 3.14159265358979323846 / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const auto u = a[i + k];
                const auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

inline std::vector<double> power_spectrum(const std::vector<double>& gray, int n) {
    std::vector<std::complex<double>> grid(static_cast<std::size_t>(n) * n);
    for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = gray[i];
    std::vector<std::complex<double>> row(n);
    for (int y = 0; y < n; ++y) {
        std::copy(grid.begin() + static_cast<std::int64_t>(y) * n, grid.begin() + (y + 1LL) * n, row.begin());
        fft_inplace(row);
        std::copy(row.begin(), row.end(), grid.begin() + static_cast<std::int64_t>(y) * n);
    }
    for (int x = 0; x < n; ++x) {
        for (int y = 0; y < n; ++y) row[y] = grid[static_cast<std::int64_t>(y) * n + x];
        fft_inplace(row);
        for (int y = 0; y < n; ++y) grid[static_cast<std::int64_t>(y) * n + x] = row[y];
    }
    std::vector<double> power(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) power[i] = std::norm(grid[i]);
    return power;
}

}  // namespace detail

/// Favors a broad, approximately radially symmetric power spectrum:
/// (energy fraction above half-Nyquist, from the radially averaged spectrum)
/// times (1 - normalized angular variance over 16 orientation bins).
inline double quality_score(const ImageU8& img) {
    check(img.width == img.height && img.width > 0, "quality_score: square image required");
    constexpr int kN = 128;  // fixed analysis resolution
    std::vector<double> gray;
    if (img.width == kN) {
        gray = to_gray01(img);
    } else {
        Tensor<double> t = to_tensor01(img);
        Tensor<double> r = bilinear_resize(t, kN, kN);
        gray.resize(static_cast<std::size_t>(kN) * kN);
        for (int y = 0; y < kN; ++y)
            for (int x = 0; x < kN; ++x)
                gray[static_cast<std::size_t>(y) * kN + x] =
                    0.299 * r.at(0, y, x) + 0.587 * r.at(1, y, x) + 0.114 * r.at(2, y, x);
    }
    double mean = std::accumulate(gray.begin(), gray.end(), 0.0) / gray.size();
    for (auto& v : gray) v -= mean;

    const std::vector<double> power = detail::power_spectrum(gray, kN);

    constexpr int kBins = 16;
    std::vector<double> radial(kN / 2 + 1, 0.0);
    std::vector<int> radial_count(kN / 2 + 1, 0);
    std::array<double, kBins> angular{};
    for (int v = 0; v < kN; ++v) {
        const int fv = v <= kN / 2 ? v : v - kN;
        for (int u = 0; u < kN; ++u) {
            const int fu = u <= kN / 2 ? u : u - kN;
            if (fu == 0 && fv == 0) continue;
            const double r = std::sqrt(static_cast<double>(fu) * fu + static_cast<double>(fv) * fv);
            const int ri = static_cast<int>(std::lround(r));
            const double p = power[static_cast<std::size_t>(v) * kN + u];
            if (ri <= kN / 2) {
                radial[ri] += p;
                ++radial_count[ri];
            }
            if (r >= 2.0) {
                double theta = std::atan2(static_cast<double>(fv), static_cast<double>(fu));
                if (theta < 0) theta += 3.14159265358979323846;
                int bin = static_cast<int>(theta / 3.14159265358979323846 * kBins);
                if (bin >= kBins) bin = kBins - 1;
                angular[bin] += p;
            }
        }
    }

    double total = 0, high = 0;
    for (int r = 1; r <= kN / 2; ++r) {
        if (radial_count[r] == 0) continue;
        const double avg = radial[r] / radial_count[r];
        total += avg;
        if (r > kN / 4) high += avg;
    }
    if (total < 1e-15) return 0.0;
    const double high_fraction = high / total;

    double ang_total = 0;
    for (double e : angular) ang_total += e;
    if (ang_total < 1e-15) return 0.0;
    double var = 0;
    for (double e : angular) {
        const double p = e / ang_total - 1.0 / kBins;
        var += p * p;
    }
    const double normalized_var = var / (1.0 - 1.0 / kBins);  // 1 when all energy in one bin
    return high_fraction * (1.0 - normalized_var);
}

/// Indices of the k highest scores; ties keep input order.
inline std::vector<int> select_top_k(const std::vector<double>& scores, int k) {
    check(k >= 0 && k <= static_cast<int>(scores.size()),
          "select_top_k: k=" + std::to_string(k) + " out of range for " + std::to_string(scores.size()) + " items");
    std::vector<int> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return scores[a] > scores[b]; });
    idx.resize(k);
    return idx;
}

// -- synthetic data and directory loading ----------------------------------------

/// Procedural colored-shape images (solid background, 1..3 filled circles,
/// rectangles or triangles). Deterministic for a given seed.
inline std::vector<ImageU8> make_synthetic_shapes(int count, int resolution, std::uint64_t seed) {
    check(count > 0 && resolution >= 4, "make_synthetic_shapes: bad arguments");
    std::vector<ImageU8> out;
    out.reserve(count);
    Rng rng(seed);
    for (int n = 0; n < count; ++n) {
        Rng r = rng.substream(static_cast<std::uint64_t>(n));
        ImageU8 img = ImageU8::make(resolution, resolution, 3);
        std::uint8_t bg[3];
        for (auto& c : bg) c = static_cast<std::uint8_t>(r.below(120));
        for (int i = 0; i < resolution * resolution; ++i)
            for (int c = 0; c < 3; ++c) img.pixels[i * 3 + c] = bg[c];

        const int shapes = 1 + static_cast<int>(r.below(3));
        for (int sidx = 0; sidx < shapes; ++sidx) {
            std::uint8_t col[3];
            for (auto& c : col) c = static_cast<std::uint8_t>(100 + r.below(156));
            const int kind = static_cast<int>(r.below(3));
            const double cx = r.uniform() * resolution;
            const double cy = r.uniform() * resolution;
            const double size = (0.15 + 0.25 * r.uniform()) * resolution;
            for (int y = 0; y < resolution; ++y) {
                for (int x = 0; x < resolution; ++x) {
                    bool inside = false;
                    const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
                    if (kind == 0) inside = dx * dx + dy * dy <= size * size;
                    else if (kind == 1) inside = std::abs(dx) <= size && std::abs(dy) <= 0.7 * size;
                    else inside = dy >= -size && dy <= size && std::abs(dx) <= (size - dy) * 0.5;
                    if (inside)
                        for (int c = 0; c < 3; ++c) img.at(x, y, c) = col[c];
                }
            }
        }
        out.push_back(std::move(img));
    }
    return out;
}

inline std::vector<std::pair<std::string, ImageU8>> load_image_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    check(fs::is_directory(dir), "io: not a directory: " + dir);
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string ext = e.path().extension().string();
        if (ext == ".png" || ext == ".ppm") names.push_back(e.path().filename().string());
    }
    std::sort(names.begin(), names.end());
    check(!names.empty(), "io: no .png/.ppm images in " + dir);
    std::vector<std::pair<std::string, ImageU8>> out;
    out.reserve(names.size());
    for (const auto& n : names) out.emplace_back(n, read_image(dir + "/" + n));
    return out;
}

/// CSV columns: filename, e0x, e0y, e1x, e1y, m0x, m0y, m1x, m1y. A header
/// row is skipped if the second field is not numeric.
inline std::map<std::string, Landmarks> parse_landmarks_csv(const std::string& path) {
    std::ifstream f(path);
    check(f.good(), "io: cannot open " + path);
    std::map<std::string, Landmarks> out;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 9)
            raise("landmarks: line " + std::to_string(lineno) + ": expected 9 fields, got " +
                  std::to_string(fields.size()));
        char* end = nullptr;
        std::strtod(fields[1].c_str(), &end);
        if (lineno == 1 && end == fields[1].c_str()) continue;  // header
        double v[8];
        for (int i = 0; i < 8; ++i) {
            v[i] = std::strtod(fields[i + 1].c_str(), &end);
            check(end != fields[i + 1].c_str(), "landmarks: line " + std::to_string(lineno) + ": bad number '" +
                                                    fields[i + 1] + "'");
        }
        out[fields[0]] = Landmarks{{v[0], v[1]}, {v[2], v[3]}, {v[4], v[5]}, {v[6], v[7]}};
    }
    return out;
}

}  // namespace prograde
