#include "dw/metrics.hpp"

#include <cmath>

#include "dw/losses.hpp"

namespace dw::metrics {

namespace {

void require_same(const Image& a, const Image& b, const char* what) {
  DW_REQUIRE(a.same_shape(b) && !a.empty(), ErrorCode::kInvalidInput, std::string(what) + ": image shapes differ");
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  require_same(a, b, "psnr");
  double se = 0.0;
  const auto& pa = a.pixels();
  const auto& pb = b.pixels();
  for (std::size_t i = 0; i < pa.size(); ++i) se += (pa[i] - pb[i]) * (pa[i] - pb[i]);
  const double mse = se / static_cast<double>(pa.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b) {
  require_same(a, b, "ssim");
  ag::NoGradGuard guard;
  return loss::ssim(ag::constant(to_batch(a, false)), ag::constant(to_batch(b, false))).item();
}

double ms_ssim(const Image& a, const Image& b) {
  require_same(a, b, "ms_ssim");
  return 1.0 - loss::ms_ssim_loss(a, b);
}

}  // namespace dw::metrics
