// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexedit/mask/mask.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include <spdlog/spdlog.h>

#include "flexedit/core/errors.hpp"
#include "flexedit/core/image.hpp"

namespace flexedit::mask {

EditMask EditMask::filled(int h, int w, bool value, int step) {
    return EditMask{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w, value ? 1 : 0), step};
}

std::size_t EditMask::count() const noexcept {
    return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](auto b) { return b != 0; }));
}

double EditMask::coverage() const noexcept {
    return bits.empty() ? 0.0 : static_cast<double>(count()) / static_cast<double>(bits.size());
}

EditMask EditMask::complement() const {
    EditMask out = *this;
    for (auto& b : out.bits) b = b ? 0 : 1;
    return out;
}

SaliencyMap word_saliency(std::span<const Matrix> i2t_blocks, const std::vector<int>& word_tokens, int h, int w) {
    if (word_tokens.empty()) throw MaskError("blended word covers no tokens");
    if (i2t_blocks.empty()) throw MaskError("no I2T-CA blocks to aggregate");
    const std::size_t n = static_cast<std::size_t>(h) * w;
    SaliencyMap map{h, w, std::vector<double>(n, 0.0)};
    for (const auto& block : i2t_blocks) {
        if (static_cast<std::size_t>(block.rows()) != n) {
            throw DimensionError("I2T-CA block has " + std::to_string(block.rows()) + " image rows, expected " +
                                 std::to_string(n));
        }
        for (int token : word_tokens) {
            if (token < 0 || token >= block.cols()) throw MaskError("word token index out of range");
        }
        for (std::size_t r = 0; r < n; ++r) {
            double sum = 0.0;
            for (int token : word_tokens) sum += block(static_cast<Eigen::Index>(r), token);
            map.values[r] += sum / static_cast<double>(word_tokens.size());
        }
    }
    for (auto& v : map.values) v /= static_cast<double>(i2t_blocks.size());
    return map;
}

std::vector<double> gaussian_kernel(double sigma, int radius) {
    if (!(sigma > 0.0)) throw MaskError("gaussian sigma must be positive");
    if (radius < 0) throw MaskError("gaussian radius must be nonnegative");
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += k[i + radius];
    }
    for (auto& v : k) v /= sum;
    return k;
}

namespace {

// Half-sample symmetric reflection: ... c b a | a b c ... | c b a ...
int reflect(int i, int n) {
    const int period = 2 * n;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - 1 - i;
}

} // namespace

SaliencyMap gaussian_smooth(const SaliencyMap& map, double sigma, int radius) {
    const auto kernel = gaussian_kernel(sigma, radius);
    SaliencyMap tmp{map.h, map.w, std::vector<double>(map.values.size(), 0.0)};
    for (int y = 0; y < map.h; ++y) {
        for (int x = 0; x < map.w; ++x) {
            double acc = 0.0;
            for (int d = -radius; d <= radius; ++d) acc += kernel[d + radius] * map.at(y, reflect(x + d, map.w));
            tmp.values[static_cast<std::size_t>(y) * map.w + x] = acc;
        }
    }
    SaliencyMap out{map.h, map.w, std::vector<double>(map.values.size(), 0.0)};
    for (int y = 0; y < map.h; ++y) {
        for (int x = 0; x < map.w; ++x) {
            double acc = 0.0;
            for (int d = -radius; d <= radius; ++d) acc += kernel[d + radius] * tmp.at(reflect(y + d, map.h), x);
            out.values[static_cast<std::size_t>(y) * map.w + x] = acc;
        }
    }
    return out;
}

namespace {

int otsu_exact(std::span<const std::uint64_t> hist, std::uint64_t total, std::uint64_t weighted) {
    using u128 = unsigned __int128;
    using i128 = __int128;
    int best = 0;
    u128 best_num = 0;
    u128 best_den = 1;
    std::uint64_t n0 = 0;
    std::uint64_t s0 = 0;
    for (std::size_t t = 0; t < hist.size(); ++t) {
        n0 += hist[t];
        s0 += hist[t] * t;
        const std::uint64_t n1 = total - n0;
        if (n0 == 0 || n1 == 0) continue;  // between-class variance is zero
        // sigma_b^2 * N^2 = (N * S0 - S * n0)^2 / (n0 * n1)
        const i128 diff = static_cast<i128>(total) * s0 - static_cast<i128>(weighted) * n0;
        const u128 num = static_cast<u128>(diff < 0 ? -diff : diff) * static_cast<u128>(diff < 0 ? -diff : diff);
        const u128 den = static_cast<u128>(n0) * n1;
        if (num * best_den > best_num * den) {
            best = static_cast<int>(t);
            best_num = num;
            best_den = den;
        }
    }
    return best;
}

int otsu_float(std::span<const std::uint64_t> hist, long double total, long double weighted) {
    int best = 0;
    long double best_var = 0.0L;
    long double n0 = 0.0L;
    long double s0 = 0.0L;
    for (std::size_t t = 0; t < hist.size(); ++t) {
        n0 += static_cast<long double>(hist[t]);
        s0 += static_cast<long double>(hist[t]) * static_cast<long double>(t);
        const long double n1 = total - n0;
        if (n0 == 0.0L || n1 == 0.0L) continue;
        const long double diff = total * s0 - weighted * n0;
        const long double var = diff * diff / (n0 * n1);
        if (var > best_var) {
            best = static_cast<int>(t);
            best_var = var;
        }
    }
    return best;
}

} // namespace

int otsu_histogram_threshold(std::span<const std::uint64_t> histogram) {
    if (histogram.size() < 2) throw MaskError("Otsu needs at least two bins");
    std::uint64_t total = 0;
    std::uint64_t weighted = 0;
    for (std::size_t t = 0; t < histogram.size(); ++t) {
        total += histogram[t];
        weighted += histogram[t] * t;
    }
    // The exact path compares (N * S0 - S * n0)^2 * (n0 * n1) products, whose
    // bound is (N^2 * (bins - 1))^2 * N^2.
    const int bound_bits = 2 * (2 * std::bit_width(total) + std::bit_width(histogram.size() - 1)) +
                           2 * std::bit_width(total);
    if (bound_bits <= 127) return otsu_exact(histogram, total, weighted);
    return otsu_float(histogram, static_cast<long double>(total), static_cast<long double>(weighted));
}

OtsuResult otsu_threshold(const SaliencyMap& map, int bins) {
    if (bins < 2) throw MaskError("Otsu needs at least two bins");
    if (map.values.empty()) throw MaskError("empty saliency map");
    OtsuResult result;
    result.histogram.assign(static_cast<std::size_t>(bins), 0);
    const auto [lo_it, hi_it] = std::minmax_element(map.values.begin(), map.values.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    if (!(hi > lo)) {
        spdlog::warn("saliency map is constant; using an all-ones edit mask");
        result.mask = EditMask::filled(map.h, map.w, true);
        result.degenerate = true;
        result.histogram[0] = map.values.size();
        return result;
    }

    std::vector<int> bin_of(map.values.size());
    for (std::size_t i = 0; i < map.values.size(); ++i) {
        const double u = (map.values[i] - lo) / (hi - lo);
        bin_of[i] = std::min(bins - 1, static_cast<int>(std::floor(u * bins)));
        ++result.histogram[bin_of[i]];
    }
    result.threshold_bin = otsu_histogram_threshold(result.histogram);
    result.mask = EditMask::filled(map.h, map.w, false);
    for (std::size_t i = 0; i < bin_of.size(); ++i) result.mask.bits[i] = bin_of[i] > result.threshold_bin ? 1 : 0;
    return result;
}

LatentGrid blend_latents(const LatentGrid& z_t, const LatentGrid& z_source, const EditMask& mask) {
    if (z_t.shape != z_source.shape) throw BlendError("target and source latent shapes differ");
    if (mask.h != z_t.shape.h || mask.w != z_t.shape.w) {
        throw BlendError("mask shape [" + std::to_string(mask.h) + ", " + std::to_string(mask.w) +
                         "] differs from latent spatial shape [" + std::to_string(z_t.shape.h) + ", " +
                         std::to_string(z_t.shape.w) + "]");
    }
    if (z_t.step_index != z_source.step_index) {
        throw BlendError("step mismatch: target at " + std::to_string(z_t.step_index) + ", source at " +
                         std::to_string(z_source.step_index));
    }
    LatentGrid out = z_t;
    const std::size_t c = static_cast<std::size_t>(z_t.shape.c);
    for (std::size_t p = 0; p < mask.bits.size(); ++p) {
        if (mask.bits[p]) continue;
        std::copy_n(z_source.data.begin() + static_cast<std::ptrdiff_t>(p * c), c,
                    out.data.begin() + static_cast<std::ptrdiff_t>(p * c));
    }
    return out;
}

EditMask resample_mask(const EditMask& mask, int h, int w) {
    if (mask.h == h && mask.w == w) return mask;
    EditMask out = EditMask::filled(h, w, false, mask.step_index);
    if (h >= mask.h && w >= mask.w) {
        if (h % mask.h != 0 || w % mask.w != 0) throw MaskError("mask size does not divide the target size");
        const int fy = h / mask.h;
        const int fx = w / mask.w;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) out.bits[static_cast<std::size_t>(y) * w + x] = mask.at(y / fy, x / fx);
        }
        return out;
    }
    if (h <= mask.h && w <= mask.w) {
        if (mask.h % h != 0 || mask.w % w != 0) throw MaskError("target size does not divide the mask size");
        const int fy = mask.h / h;
        const int fx = mask.w / w;
        for (int y = 0; y < mask.h; ++y) {
            for (int x = 0; x < mask.w; ++x) {
                if (mask.at(y, x)) out.bits[static_cast<std::size_t>(y / fy) * w + x / fx] = 1;
            }
        }
        return out;
    }
    throw MaskError("mask resampling needs both axes to scale the same way");
}

void write_mask(const EditMask& mask, const std::filesystem::path& path) {
    GrayImage img{mask.h, mask.w, std::vector<std::uint8_t>(mask.bits.size())};
    for (std::size_t i = 0; i < mask.bits.size(); ++i) img.pixels[i] = mask.bits[i] ? 255 : 0;
    write_pgm(img, path);
}

EditMask read_mask(const std::filesystem::path& path) {
    const auto img = read_pgm(path);
    EditMask mask = EditMask::filled(img.height, img.width, false);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) mask.bits[i] = img.pixels[i] >= 128 ? 1 : 0;
    return mask;
}

} // namespace flexedit::mask
