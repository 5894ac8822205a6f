#include "t2ue/victim/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace t2ue {

Tensor<float> cutout(const Tensor<float>& img, int patch_size, Rng& rng) {
    if (img.ndim() != 3) throw std::invalid_argument("cutout: expected (C,H,W)");
    const int h = img.dim(1), w = img.dim(2);
    if (patch_size > std::min(h, w)) throw std::invalid_argument("cutout: patch larger than image");
    Tensor<float> out = img;
    if (patch_size <= 0) return out;
    int y0 = rng.uniform_int(h - patch_size + 1);
    int x0 = rng.uniform_int(w - patch_size + 1);
    for (int c = 0; c < img.dim(0); ++c)
        for (int y = y0; y < y0 + patch_size; ++y)
            for (int x = x0; x < x0 + patch_size; ++x) out.data[(c * h + y) * w + x] = 0.5f;
    return out;
}

namespace {

float sample_bilinear(const Tensor<float>& img, int c, double y, double x) {
    const int h = img.dim(1), w = img.dim(2);
    double yc = std::clamp(y, 0.0, static_cast<double>(h - 1));
    double xc = std::clamp(x, 0.0, static_cast<double>(w - 1));
    int y0 = static_cast<int>(std::floor(yc)), x0 = static_cast<int>(std::floor(xc));
    int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
    double fy = yc - y0, fx = xc - x0;
    auto at = [&](int yy, int xx) { return static_cast<double>(img.data[(c * h + yy) * w + xx]); };
    double v = at(y0, x0) * (1 - fy) * (1 - fx) + at(y0, x1) * (1 - fy) * fx + at(y1, x0) * fy * (1 - fx) +
               at(y1, x1) * fy * fx;
    return static_cast<float>(v);
}

Tensor<float> rotate(const Tensor<float>& img, double radians) {
    const int h = img.dim(1), w = img.dim(2);
    Tensor<float> out(img.shape);
    const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
    const double ca = std::cos(-radians), sa = std::sin(-radians);
    for (int c = 0; c < img.dim(0); ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double dy = y - cy, dx = x - cx;
                double sy = cy + dy * ca - dx * sa;
                double sx = cx + dy * sa + dx * ca;
                out.data[(c * h + y) * w + x] = sample_bilinear(img, c, sy, sx);
            }
    return out;
}

Tensor<float> pad_crop(const Tensor<float>& img, int pad, int dy, int dx) {
    const int h = img.dim(1), w = img.dim(2);
    Tensor<float> out(img.shape);
    for (int c = 0; c < img.dim(0); ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                int sy = std::clamp(y + dy - pad, 0, h - 1);  // edge-replicated padding
                int sx = std::clamp(x + dx - pad, 0, w - 1);
                out.data[(c * h + y) * w + x] = img.data[(c * h + sy) * w + sx];
            }
    return out;
}

}  // namespace

Tensor<float> augproxy(const Tensor<float>& img, Rng& rng) {
    if (img.ndim() != 3) throw std::invalid_argument("augproxy: expected (C,H,W)");
    Tensor<float> out = img;
    const int h = out.dim(1), w = out.dim(2);
    if (rng.uniform() < 0.5) {  // horizontal flip
        for (int c = 0; c < out.dim(0); ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w / 2; ++x)
                    std::swap(out.data[(c * h + y) * w + x], out.data[(c * h + y) * w + (w - 1 - x)]);
    }
    double deg = rng.uniform(-15.0, 15.0);
    out = rotate(out, deg * 3.14159265358979323846 / 180.0);
    const int pad = 4;
    out = pad_crop(out, pad, rng.uniform_int(2 * pad + 1), rng.uniform_int(2 * pad + 1));
    float delta = static_cast<float>(rng.uniform(-0.2, 0.2));
    out.data = (out.data + delta).max(0.0f).min(1.0f);
    return out;
}

Tensor<float> mixup_batch(const Tensor<float>& images, const std::vector<int>& perm, double lambda) {
    if (images.ndim() != 4) throw std::invalid_argument("mixup_batch: expected (N,C,H,W)");
    const int n = images.dim(0);
    if (static_cast<int>(perm.size()) != n) throw std::invalid_argument("mixup_batch: permutation size mismatch");
    const int64_t per = images.size() / n;
    Tensor<float> out(images.shape);
    for (int i = 0; i < n; ++i) {
        int j = perm[static_cast<size_t>(i)];
        for (int64_t k = 0; k < per; ++k)
            out.data[i * per + k] = static_cast<float>(lambda) * images.data[i * per + k] +
                                    static_cast<float>(1.0 - lambda) * images.data[j * per + k];
    }
    return out;
}

Tensor<float> random_noise(const std::vector<int>& shape, double epsilon, Rng& rng) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("random_noise: epsilon must be positive");
    Tensor<float> out(shape);
    for (int64_t i = 0; i < out.size(); ++i) {
        double v = rng.uniform(-epsilon, epsilon);
        double k = std::round(v * 255.0);  // snap to grid; |v| <= eps keeps |k| <= eps*255
        out[i] = static_cast<float>(k / 255.0);
    }
    return out;
}

Dataset mix_poison(const Dataset& clean, const Dataset& protected_set, double ratio, uint64_t seed) {
    if (ratio < 0.0 || ratio > 1.0) throw std::invalid_argument("mix_poison: ratio must be in [0,1]");
    std::unordered_map<std::string, int> prot_index;
    for (int i = 0; i < protected_set.size(); ++i) prot_index[protected_set.samples[static_cast<size_t>(i)].id] = i;
    if (protected_set.size() != clean.size()) throw std::invalid_argument("mix_poison: dataset sizes differ");
    for (const auto& s : clean.samples)
        if (!prot_index.count(s.id)) throw std::invalid_argument("mix_poison: id missing from protected set: " + s.id);

    const int n = clean.size();
    const int take = static_cast<int>(std::floor(ratio * static_cast<double>(n)));
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    Rng rng(seed);
    for (int i = n - 1; i > 0; --i) std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(rng.uniform_int(i + 1))]);

    Dataset out = clean;
    for (int k = 0; k < take; ++k) {
        int i = order[static_cast<size_t>(k)];
        const auto& id = clean.samples[static_cast<size_t>(i)].id;
        out.samples[static_cast<size_t>(i)] = protected_set.samples[static_cast<size_t>(prot_index.at(id))];
    }
    return out;
}

}  // namespace t2ue
