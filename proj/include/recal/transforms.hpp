#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "recal/errors.hpp"
#include "recal/types.hpp"

namespace recal {

// Shrink every H x W plane by `scale` with corner-aligned bilinear sampling,
// then paste the result centered on a canvas of the original size filled
// with `fill`. Output dims equal input dims; values stay in [0, 1].
inline image_tensor_set zoom_out(const image_tensor_set& images, double scale,
                                 double fill = 0.0) {
  if (!(scale > 0.0) || !(scale <= 1.0) || !std::isfinite(scale))
    throw domain_error("zoom scale must lie in (0, 1]");
  if (!(fill >= 0.0) || !(fill <= 1.0)) throw domain_error("fill value must lie in [0, 1]");

  const std::size_t h = images.h;
  const std::size_t w = images.w;
  const std::size_t out_h =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(scale * static_cast<double>(h))));
  const std::size_t out_w =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(scale * static_cast<double>(w))));

  std::vector<float> out(images.values.size(), static_cast<float>(fill));
  const std::size_t top = (h - out_h) / 2;
  const std::size_t left = (w - out_w) / 2;

  std::vector<double> resized(out_h * out_w);
  for (std::size_t ni = 0; ni < images.n; ++ni) {
    for (std::size_t ci = 0; ci < images.c; ++ci) {
      const auto plane = images.plane(ni, ci);
      if (out_h == h && out_w == w) {
        for (std::size_t i = 0; i < h * w; ++i) resized[i] = plane[i];
      } else {
        for (std::size_t y = 0; y < out_h; ++y) {
          const double sy = out_h == 1 ? (static_cast<double>(h) - 1.0) / 2.0
                                       : static_cast<double>(y) * (static_cast<double>(h) - 1.0) /
                                             (static_cast<double>(out_h) - 1.0);
          const std::size_t y0 = static_cast<std::size_t>(sy);
          const std::size_t y1 = std::min(y0 + 1, h - 1);
          const double fy = sy - static_cast<double>(y0);
          for (std::size_t x = 0; x < out_w; ++x) {
            const double sx = out_w == 1 ? (static_cast<double>(w) - 1.0) / 2.0
                                         : static_cast<double>(x) * (static_cast<double>(w) - 1.0) /
                                               (static_cast<double>(out_w) - 1.0);
            const std::size_t x0 = static_cast<std::size_t>(sx);
            const std::size_t x1 = std::min(x0 + 1, w - 1);
            const double fx = sx - static_cast<double>(x0);
            const double v00 = plane[y0 * w + x0];
            const double v01 = plane[y0 * w + x1];
            const double v10 = plane[y1 * w + x0];
            const double v11 = plane[y1 * w + x1];
            const double v = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) +
                             fy * ((1.0 - fx) * v10 + fx * v11);
            resized[y * out_w + x] = std::min(1.0, std::max(0.0, v));
          }
        }
      }
      float* dst = out.data() + (ni * images.c + ci) * h * w;
      for (std::size_t y = 0; y < out_h; ++y) {
        for (std::size_t x = 0; x < out_w; ++x) {
          dst[(top + y) * w + (left + x)] = static_cast<float>(resized[y * out_w + x]);
        }
      }
    }
  }
  return image_tensor_set(std::move(out), images.n, images.c, images.h, images.w);
}

// Multiply every value by `factor` and clamp to [0, 1]. Dims unchanged.
inline image_tensor_set brightness(const image_tensor_set& images, double factor) {
  if (!(factor > 0.0) || !(factor <= 1.0) || !std::isfinite(factor))
    throw domain_error("brightness factor must lie in (0, 1]");
  std::vector<float> out(images.values.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = static_cast<double>(images.values[i]) * factor;
    out[i] = static_cast<float>(std::min(1.0, std::max(0.0, v)));
  }
  return image_tensor_set(std::move(out), images.n, images.c, images.h, images.w);
}

}  // namespace recal
