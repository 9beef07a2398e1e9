#include "sdsr/metrics.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>

namespace sdsr {

double mse(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mse");
    if (a.numel() == 0) throw ShapeError("mse: empty tensors");
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s / static_cast<double>(a.numel());
}

double psnr(const Tensor& a, const Tensor& b) {
    const double m = mse(a, b);
    if (m == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

Tensor luminance(const Tensor& img) {
    if (img.ndim() == 2) return img;
    if (img.ndim() != 3 || (img.dim(0) != 3 && img.dim(0) != 1))
        throw ShapeError("luminance: expected [3,H,W], got " + shape_str(img.shape()));
    const int h = img.dim(1), w = img.dim(2);
    if (img.dim(0) == 1) return img.reshaped({h, w});
    Tensor out({h, w});
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (std::size_t i = 0; i < plane; ++i) out[i] = 0.299 * img[i] + 0.587 * img[plane + i] + 0.114 * img[2 * plane + i];
    return out;
}

namespace {

// Summed-area table with a zero row/column in front.
std::vector<double> integral(const Tensor& x, int h, int w, const std::function<double(double)>& f) {
    std::vector<double> s(static_cast<std::size_t>((h + 1) * (w + 1)), 0.0);
    for (int y = 0; y < h; ++y) {
        double row = 0.0;
        for (int xx = 0; xx < w; ++xx) {
            row += f(x[static_cast<std::size_t>(y * w + xx)]);
            s[static_cast<std::size_t>((y + 1) * (w + 1) + xx + 1)] = s[static_cast<std::size_t>(y * (w + 1) + xx + 1)] + row;
        }
    }
    return s;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b, const SsimOptions& opt) {
    require_same_shape(a, b, "ssim");
    const Tensor la = luminance(a), lb = luminance(b);
    const int h = la.dim(0), w = la.dim(1), k = opt.window;
    if (k < 1 || h < k || w < k) throw ShapeError("ssim: image smaller than the window");
    Tensor prod({h, w});
    for (std::size_t i = 0; i < prod.numel(); ++i) prod[i] = la[i] * lb[i];
    auto id = [](double v) { return v; };
    auto sq = [](double v) { return v * v; };
    const auto sa = integral(la, h, w, id), sb = integral(lb, h, w, id);
    const auto saa = integral(la, h, w, sq), sbb = integral(lb, h, w, sq);
    const auto sab = integral(prod, h, w, id);
    auto box = [&](const std::vector<double>& s, int y, int x) {
        const int W = w + 1;
        return s[static_cast<std::size_t>((y + k) * W + x + k)] - s[static_cast<std::size_t>(y * W + x + k)] -
               s[static_cast<std::size_t>((y + k) * W + x)] + s[static_cast<std::size_t>(y * W + x)];
    };
    const double n = static_cast<double>(k) * k;
    double total = 0.0;
    for (int y = 0; y + k <= h; ++y)
        for (int x = 0; x + k <= w; ++x) {
            const double ma = box(sa, y, x) / n, mb = box(sb, y, x) / n;
            const double va = box(saa, y, x) / n - ma * ma, vb = box(sbb, y, x) / n - mb * mb;
            const double cov = box(sab, y, x) / n - ma * mb;
            total += ((2 * ma * mb + opt.c1) * (2 * cov + opt.c2)) / ((ma * ma + mb * mb + opt.c1) * (va + vb + opt.c2));
        }
    return total / (static_cast<double>(h - k + 1) * (w - k + 1));
}

DisparityMap estimate_disparity(const Tensor& left, const Tensor& right, const BlockMatchOptions& opt) {
    require_same_shape(left, right, "estimate_disparity");
    if (opt.max_disp < 1) throw RangeError("estimate_disparity: max_disp must be at least 1");
    if (opt.block < 1 || opt.block % 2 == 0) throw RangeError("estimate_disparity: block size must be odd");
    const Tensor ll = luminance(left), lr = luminance(right);
    const int h = ll.dim(0), w = ll.dim(1), r = opt.block / 2;
    if (w < opt.max_disp + opt.block || h < opt.block)
        throw ShapeError("estimate_disparity: image narrower than max_disp + block");
    std::vector<std::int64_t> ql(ll.numel()), qr(lr.numel());
    for (std::size_t i = 0; i < ql.size(); ++i) {
        ql[i] = std::llround(ll[i] * 65536.0);
        qr[i] = std::llround(lr[i] * 65536.0);
    }
    DisparityMap d;
    d.height = h;
    d.width = w;
    d.values.assign(static_cast<std::size_t>(h * w), 0.0f);
    d.valid.assign(static_cast<std::size_t>(h * w), 0);
#pragma omp parallel for schedule(static)
    for (int y = r; y < h - r; ++y)
        for (int x = r + opt.max_disp; x < w - r; ++x) {
            std::int64_t best = std::numeric_limits<std::int64_t>::max();
            int best_d = 0;
            for (int disp = 0; disp <= opt.max_disp; ++disp) {
                std::int64_t sad = 0;
                for (int dy = -r; dy <= r; ++dy) {
                    const std::int64_t* pl = &ql[static_cast<std::size_t>((y + dy) * w + x - r)];
                    const std::int64_t* pr = &qr[static_cast<std::size_t>((y + dy) * w + x - r - disp)];
                    for (int dx = 0; dx < opt.block; ++dx) sad += std::abs(pl[dx] - pr[dx]);
                }
                if (sad < best) {
                    best = sad;
                    best_d = disp;
                }
            }
            d.values[static_cast<std::size_t>(y * w + x)] = static_cast<float>(best_d);
            d.valid[static_cast<std::size_t>(y * w + x)] = 1;
        }
    return d;
}

double made(const DisparityMap& sr, const DisparityMap& gt) {
    if (sr.height != gt.height || sr.width != gt.width) throw ShapeError("made: disparity map sizes differ");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < sr.values.size(); ++i)
        if (sr.valid[i] && gt.valid[i]) {
            sum += std::abs(static_cast<double>(sr.values[i]) - gt.values[i]);
            ++n;
        }
    if (n == 0) throw ShapeError("made: no pixel is valid in both maps");
    return sum / static_cast<double>(n);
}

double made(const StereoImagePair& sr, const StereoImagePair& gt, const BlockMatchOptions& opt) {
    require_same_shape(sr.left, gt.left, "made");
    require_same_shape(sr.right, gt.right, "made");
    return made(estimate_disparity(sr.left, sr.right, opt), estimate_disparity(gt.left, gt.right, opt));
}

double disparity_accuracy(const DisparityMap& est, const DisparityMap& truth, double tol) {
    if (est.height != truth.height || est.width != truth.width) throw ShapeError("disparity_accuracy: size mismatch");
    std::size_t good = 0, n = 0;
    for (std::size_t i = 0; i < est.values.size(); ++i)
        if (est.valid[i] && truth.valid[i]) {
            ++n;
            good += std::abs(static_cast<double>(est.values[i]) - truth.values[i]) <= tol;
        }
    return n ? static_cast<double>(good) / static_cast<double>(n) : 0.0;
}

}  // namespace sdsr
