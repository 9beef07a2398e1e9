#pragma once

// PSNR, SSIM, SAD block-matching disparity and MADE.
//
// PSNR uses the mean squared error over all RGB values and is capped at 100 dB.
// SSIM and disparity work on BT.601 luminance (0.299 R + 0.587 G + 0.114 B).
// The block matcher quantizes luminance to multiples of 2^-16 and compares
// integer SADs, so a constant added to both images never changes the argmin.

#include "sdsr/degradation.hpp"

namespace sdsr {

inline constexpr double kPsnrCap = 100.0;

double mse(const Tensor& a, const Tensor& b);
double psnr(const Tensor& a, const Tensor& b);

/// [3,H,W] -> [H,W] luminance; a [1,H,W] or [H,W] input is returned unchanged in shape [H,W].
Tensor luminance(const Tensor& img);

struct SsimOptions {
    int window = 8;
    double c1 = 0.01 * 0.01;
    double c2 = 0.03 * 0.03;
};
/// Mean over every fully contained window (stride 1) of the local SSIM, using
/// uniform weights and population (1/N) moments.
double ssim(const Tensor& a, const Tensor& b, const SsimOptions& opt = {});

struct BlockMatchOptions {
    int max_disp = 32;
    int block = 9;
};

/// Left-referenced disparity: for each pixel the d in [0, max_disp] minimizing the
/// SAD between the block at x in the left image and at x - d in the right image.
/// Ties go to the smaller d. Pixels whose block or search range leaves the image
/// (x < r + max_disp, x + r >= W, or within r rows of the top/bottom) are invalid
/// and hold 0.
DisparityMap estimate_disparity(const Tensor& left, const Tensor& right, const BlockMatchOptions& opt = {});

/// Mean |d_sr - d_gt| over pixels valid in both maps.
double made(const DisparityMap& sr, const DisparityMap& gt);
double made(const StereoImagePair& sr, const StereoImagePair& gt, const BlockMatchOptions& opt = {});

/// Fraction of ground-truth-valid pixels (also valid in the estimate) within tol of the truth.
double disparity_accuracy(const DisparityMap& est, const DisparityMap& truth, double tol);

}  // namespace sdsr
