// Copyright 2026 The ATFuse Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Plain-loop reference implementations written from the definitions and not
// sharing code with the library. Used by unit tests and the acceptance run.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <vector>

#include "atfuse/model.hpp"
#include "test_util.hpp"

namespace atfuse::oracle {

using atfuse::testing::random_tensor;

inline LinearParams random_linear(Rng& rng, std::size_t in, std::size_t out, double scale = 0.5) {
  return {random_tensor(rng, {in, out}, false, -scale, scale),
          random_tensor(rng, {out}, false, -0.1, 0.1)};
}

inline AttentionBlockParams random_block(Rng& rng, std::size_t d, std::size_t hidden) {
  return {random_linear(rng, d, d),      random_linear(rng, d, d),
          random_linear(rng, d, d),      random_linear(rng, d, d),
          random_tensor(rng, {d}, false, 0.5, 1.5), random_tensor(rng, {d}, false, -0.2, 0.2),
          random_linear(rng, d, hidden), random_linear(rng, hidden, d)};
}

inline TokenGrid random_grid(Rng& rng, std::size_t h, std::size_t w, std::size_t d) {
  return {random_tensor(rng, {h * w, d}), h, w};
}

using Mat = std::vector<std::vector<double>>;

inline Mat to_mat(const Tensor& t) {
  Mat m(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m[i].size(); ++j) m[i][j] = t[i * t.dim(1) + j];
  return m;
}

inline Mat lin(const Mat& x, const LinearParams& p) {
  const Mat w = to_mat(p.weight);
  Mat y(x.size(), std::vector<double>(w[0].size()));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < y[i].size(); ++j) {
      double acc = p.bias[j];
      for (std::size_t k = 0; k < x[i].size(); ++k) acc += x[i][k] * w[k][j];
      y[i][j] = acc;
    }
  return y;
}

// Plain-loop reference of one attention block; `discrepancy` selects V - CM
// over CM as the injected information.
inline Mat reference_block(const TokenGrid& query, const TokenGrid& source,
                    const AttentionBlockParams& p, bool discrepancy) {
  const Mat q = lin(to_mat(query.tokens), p.query);
  const Mat k = lin(to_mat(source.tokens), p.key);
  const Mat v = lin(to_mat(source.tokens), p.value);
  const std::size_t s = q.size(), d = q[0].size();
  Mat info(s, std::vector<double>(d));
  for (std::size_t i = 0; i < s; ++i) {
    std::vector<double> logits(s);
    for (std::size_t j = 0; j < s; ++j) {
      double dot = 0;
      for (std::size_t c = 0; c < d; ++c) dot += q[i][c] * k[j][c];
      logits[j] = dot / std::sqrt(static_cast<double>(d));
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0;
    for (auto& l : logits) z += (l = std::exp(l - mx));
    for (std::size_t c = 0; c < d; ++c) {
      double cm = 0;
      for (std::size_t j = 0; j < s; ++j) cm += logits[j] / z * v[j][c];
      info[i][c] = discrepancy ? v[i][c] - cm : cm;
    }
  }
  Mat f_add = lin(info, p.out);
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t c = 0; c < d; ++c) f_add[i][c] += q[i][c];
  Mat normed = f_add;
  for (auto& row : normed) {
    const double mean = std::accumulate(row.begin(), row.end(), 0.0) / d;
    double var = 0;
    for (double x : row) var += (x - mean) * (x - mean);
    var /= d;
    for (std::size_t c = 0; c < d; ++c)
      row[c] = (row[c] - mean) / std::sqrt(var + 1e-6) * p.ln_gain[c] + p.ln_shift[c];
  }
  Mat hidden = lin(normed, p.mlp_in);
  for (auto& row : hidden)
    for (auto& x : row) x = 0.5 * x * (1 + std::erf(x / std::sqrt(2.0)));
  Mat out = lin(hidden, p.mlp_out);
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t c = 0; c < d; ++c) out[i][c] += f_add[i][c];
  return out;
}

inline double max_diff(const Tensor& t, const Mat& m) {
  double worst = 0;
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m[i].size(); ++j)
      worst = std::max(worst, std::fabs(t[i * m[i].size() + j] - m[i][j]));
  return worst;
}

// Independent reflect-101 Sobel, straight from the kernel definitions.
inline std::vector<double> grad_mag(const GrayImage& img) {
  const int h = static_cast<int>(img.height), w = static_cast<int>(img.width);
  auto reflect = [](int i, int n) { return i < 0 ? -i : (i >= n ? 2 * n - 2 - i : i); };
  const int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  const int ky[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
  std::vector<double> out(img.pixels.size());
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      auto at = [&](int a, int b) { return img.at(reflect(r + a - 1, h), reflect(c + b - 1, w)); };
      // Mirrored taps are differenced first so that responses which vanish
      // by symmetry (corners, mirrored borders) come out exactly zero.
      double gx = 0, gy = 0;
      for (int a = 0; a < 3; ++a) {
        gx += kx[a][2] * (at(a, 2) - at(a, 0));
        gy += ky[2][a] * (at(2, a) - at(0, a));
      }
      out[r * w + c] = std::fabs(gx) + std::fabs(gy);
    }
  return out;
}

inline double texture(const GrayImage& f, const GrayImage& ir, const GrayImage& vi) {
  const auto gf = grad_mag(f), gi = grad_mag(ir), gv = grad_mag(vi);
  double acc = 0;
  for (std::size_t i = 0; i < gf.size(); ++i) acc += std::fabs(gf[i] - std::max(gi[i], gv[i]));
  return acc / gf.size();
}

// Indices of the ceil(alpha% * n) largest values, ties at the cut included.
inline std::vector<bool> top(const std::vector<double>& v, double alpha) {
  std::vector<double> sorted = v;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const std::size_t k = static_cast<std::size_t>(std::ceil(alpha * v.size() / 100.0 - 1e-9));
  std::vector<bool> top(v.size(), false);
  if (k == 0) return top;
  for (std::size_t i = 0; i < v.size(); ++i) top[i] = v[i] >= sorted[k - 1];
  return top;
}

inline std::vector<double> importance(const GrayImage& img) {
  auto g = grad_mag(img);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= img.pixels[i];
  return g;
}

struct PixelLoss {
  double part1 = 0, part2 = 0;
};

// Literal per-pixel evaluation of the segmented loss.
inline PixelLoss pixel_loss(const GrayImage& f, const GrayImage& ir, const GrayImage& vi,
                        double alpha) {
  const auto t_ir = top(importance(ir), alpha);
  const auto t_vi = top(importance(vi), alpha);
  PixelLoss l;
  const double hw = static_cast<double>(f.pixels.size());
  for (std::size_t i = 0; i < f.pixels.size(); ++i) {
    const double x = f.pixels[i], a = ir.pixels[i], b = vi.pixels[i];
    if (t_ir[i] || t_vi[i]) {
      l.part1 += std::fabs(x - std::max(a, b)) / hw;
    } else {
      l.part2 += (std::fabs(x - a) + std::fabs(x - b)) / (2 * hw);
    }
  }
  return l;
}

inline double ag(const GrayImage& im) {
  double s = 0;
  int n = 0;
  for (std::size_t r = 0; r + 1 < im.height; ++r)
    for (std::size_t c = 0; c + 1 < im.width; ++c) {
      const double dx = 255 * im.at(r, c + 1) - 255 * im.at(r, c);
      const double dy = 255 * im.at(r + 1, c) - 255 * im.at(r, c);
      s += std::sqrt(0.5 * dx * dx + 0.5 * dy * dy);
      ++n;
    }
  return s / n;
}

inline double en(const GrayImage& im) {
  std::map<int, int> counts;
  for (double p : im.pixels) ++counts[static_cast<int>(std::floor(p * 255 + 0.5))];
  double h = 0;
  for (const auto& [level, c] : counts) {
    const double q = static_cast<double>(c) / im.pixels.size();
    h += -q * std::log(q) / std::log(2.0);
  }
  return h;
}

inline double sd(const GrayImage& im) {
  double mean = 0;
  for (double p : im.pixels) mean += p;
  mean /= im.pixels.size();
  double v = 0;
  for (double p : im.pixels) v += (p - mean) * (p - mean);
  return 255 * std::sqrt(v / im.pixels.size());
}

inline double sf(const GrayImage& im) {
  double rf = 0, cf = 0;
  for (std::size_t r = 0; r < im.height; ++r)
    for (std::size_t c = 1; c < im.width; ++c) rf += std::pow(im.at(r, c) - im.at(r, c - 1), 2);
  for (std::size_t r = 1; r < im.height; ++r)
    for (std::size_t c = 0; c < im.width; ++c) cf += std::pow(im.at(r, c) - im.at(r - 1, c), 2);
  rf = std::sqrt(rf / (im.height * (im.width - 1)));
  cf = std::sqrt(cf / ((im.height - 1) * im.width));
  return std::sqrt(rf * rf + cf * cf);
}

struct Grad {
  std::vector<double> g, a;
};

inline Grad sobel(const GrayImage& im) {
  const int h = static_cast<int>(im.height), w = static_cast<int>(im.width);
  // Padded copy with mirrored (reflect-101) borders.
  std::vector<std::vector<double>> pad(h + 2, std::vector<double>(w + 2));
  for (int r = -1; r <= h; ++r)
    for (int c = -1; c <= w; ++c) {
      const int rr = r < 0 ? -r : (r >= h ? 2 * h - 2 - r : r);
      const int cc = c < 0 ? -c : (c >= w ? 2 * w - 2 - c : c);
      pad[r + 1][c + 1] = im.at(rr, cc);
    }
  Grad out{std::vector<double>(h * w), std::vector<double>(h * w)};
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const auto& p = pad;
      const double gx = (p[r][c + 2] + 2 * p[r + 1][c + 2] + p[r + 2][c + 2]) -
                        (p[r][c] + 2 * p[r + 1][c] + p[r + 2][c]);
      const double gy = (p[r + 2][c] + 2 * p[r + 2][c + 1] + p[r + 2][c + 2]) -
                        (p[r][c] + 2 * p[r][c + 1] + p[r][c + 2]);
      out.g[r * w + c] = std::hypot(gx, gy);
      out.a[r * w + c] = gx == 0 ? M_PI / 2 : std::atan(gy / gx);
    }
  return out;
}

inline double q_edge(double gs, double as, double gf, double af) {
  const double G = gs == gf ? 1.0 : std::min(gs, gf) / std::max(gs, gf);
  const double A = std::fabs(std::fabs(as - af) - M_PI / 2) / (M_PI / 2);
  const double qg = 0.9994 / (1 + std::exp(-15 * (G - 0.5)));
  const double qa = 0.9879 / (1 + std::exp(-22 * (A - 0.8)));
  return qg * qa;
}

inline double qabf(const GrayImage& f, const GrayImage& a, const GrayImage& b) {
  const Grad F = sobel(f), A = sobel(a), B = sobel(b);
  double num = 0, den = 0;
  for (std::size_t i = 0; i < f.pixels.size(); ++i) {
    if (A.g[i] == 0 && B.g[i] == 0) continue;
    num += q_edge(A.g[i], A.a[i], F.g[i], F.a[i]) * A.g[i] +
           q_edge(B.g[i], B.a[i], F.g[i], F.a[i]) * B.g[i];
    den += A.g[i] + B.g[i];
  }
  return den == 0 ? 0 : num / den;
}

}  // namespace atfuse::oracle
