#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "hwssl/imageops.hpp"

namespace hwssl::testing {

// ---- HOG oracle: one block at a time, straight from pixel gradients -------

inline std::vector<double> hog_oracle(const ProcessedImage& im) {
  auto P = [&](int y, int x) { return static_cast<double>(im.at(0, std::clamp(y, 0, 63), std::clamp(x, 0, 63))); };
  auto cell_hist = [&](int cy, int cx) {
    std::vector<double> h(9, 0.0);
    for (int y = cy * 8; y < cy * 8 + 8; ++y)
      for (int x = cx * 8; x < cx * 8 + 8; ++x) {
        const double gx = P(y, x + 1) - P(y, x - 1), gy = P(y + 1, x) - P(y - 1, x);
        const double m = std::hypot(gx, gy);
        if (m == 0) continue;
        double a = std::atan2(gy, gx) * 180.0 / std::numbers::pi;
        while (a < 0) a += 180.0;
        while (a >= 180.0) a -= 180.0;
        h[std::min(8, static_cast<int>(a / 20.0))] += m;
      }
    return h;
  };
  std::vector<double> out;
  for (int by = 0; by < 7; ++by)
    for (int bx = 0; bx < 7; ++bx) {
      std::vector<double> v;
      for (int cy : {by, by + 1})
        for (int cx : {bx, bx + 1})
          for (double h : cell_hist(cy, cx)) v.push_back(h);
      auto l2 = [&] {
        double s = 1e-6;
        for (double e : v) s += e * e;
        return std::sqrt(s);
      };
      const double n1 = l2();
      for (double& e : v) e = std::min(e / n1, 0.2);
      const double n2 = l2();
      for (double e : v) out.push_back(e / n2);
    }
  return out;
}

}  // namespace hwssl::testing
