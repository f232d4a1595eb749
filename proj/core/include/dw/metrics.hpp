#pragma once

#include "dw/image.hpp"

/// Image quality metrics on [0,1] images.
namespace dw::metrics {

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE); identical images give `kPsnrCap`.
double psnr(const Image& a, const Image& b);

/// Mean SSIM over channels and valid positions (11-tap Gaussian, sigma 1.5, k1 0.01, k2 0.03).
double ssim(const Image& a, const Image& b);

/// Three-scale MS-SSIM with a 7-tap window (the configuration used in training).
double ms_ssim(const Image& a, const Image& b);

}  // namespace dw::metrics
