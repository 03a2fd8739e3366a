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

#include "atfuse/metrics.hpp"

#include <array>
#include <cmath>
#include <numbers>

#include "atfuse/config.hpp"
#include "atfuse/error.hpp"

namespace atfuse::metrics {

double avg_gradient(const GrayImage& img, double scale) {
  if (img.height < 2 || img.width < 2) throw DimensionError("avg_gradient: image must be at least 2x2");
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < img.height; ++i) {
    for (std::size_t j = 0; j + 1 < img.width; ++j) {
      const double dx = scale * (img.at(i, j + 1) - img.at(i, j));
      const double dy = scale * (img.at(i + 1, j) - img.at(i, j));
      acc += std::sqrt((dx * dx + dy * dy) / 2.0);
    }
  }
  return acc / static_cast<double>((img.height - 1) * (img.width - 1));
}

double entropy(const GrayImage& img) {
  std::array<std::size_t, 256> hist{};
  for (double p : img.pixels) ++hist[quantize_pixel(p)];
  const double n = static_cast<double>(img.pixels.size());
  double h = 0.0;
  for (std::size_t count : hist) {
    if (count == 0) continue;
    const double q = static_cast<double>(count) / n;
    h -= q * std::log2(q);
  }
  return h;
}

double std_dev(const GrayImage& img, double scale) {
  const double n = static_cast<double>(img.pixels.size());
  double mu = 0.0;
  for (double p : img.pixels) mu += scale * p;
  mu /= n;
  double var = 0.0;
  for (double p : img.pixels) var += (scale * p - mu) * (scale * p - mu);
  return std::sqrt(var / n);
}

double spatial_frequency(const GrayImage& img, double scale) {
  double rf = 0.0, cf = 0.0;
  if (img.width > 1) {
    for (std::size_t i = 0; i < img.height; ++i)
      for (std::size_t j = 1; j < img.width; ++j) {
        const double d = scale * (img.at(i, j) - img.at(i, j - 1));
        rf += d * d;
      }
    rf /= static_cast<double>(img.height * (img.width - 1));
  }
  if (img.height > 1) {
    for (std::size_t i = 1; i < img.height; ++i)
      for (std::size_t j = 0; j < img.width; ++j) {
        const double d = scale * (img.at(i, j) - img.at(i - 1, j));
        cf += d * d;
      }
    cf /= static_cast<double>((img.height - 1) * img.width);
  }
  return std::sqrt(rf + cf);
}

namespace {

struct EdgeMap {
  std::vector<double> strength;
  std::vector<double> orientation;
};

std::size_t mirror(std::ptrdiff_t i, std::size_t n) {
  if (i < 0) return static_cast<std::size_t>(-i);
  if (i >= static_cast<std::ptrdiff_t>(n)) return 2 * n - 2 - static_cast<std::size_t>(i);
  return static_cast<std::size_t>(i);
}

EdgeMap edges(const GrayImage& img) {
  static constexpr int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  static constexpr int ky[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
  EdgeMap e{std::vector<double>(img.pixels.size()), std::vector<double>(img.pixels.size())};
  for (std::size_t i = 0; i < img.height; ++i) {
    for (std::size_t j = 0; j < img.width; ++j) {
      auto at = [&](int a, int b) {
        return img.at(mirror(static_cast<std::ptrdiff_t>(i) + a - 1, img.height),
                      mirror(static_cast<std::ptrdiff_t>(j) + b - 1, img.width));
      };
      // Mirrored taps differenced first: responses that vanish by symmetry
      // are exactly zero, which keeps the zero-strength convention stable.
      double gx = 0.0, gy = 0.0;
      for (int a = 0; a < 3; ++a) {
        gx += kx[a][2] * (at(a, 2) - at(a, 0));
        gy += ky[2][a] * (at(2, a) - at(0, a));
      }
      e.strength[i * img.width + j] = std::sqrt(gx * gx + gy * gy);
      e.orientation[i * img.width + j] = gx == 0.0 ? std::numbers::pi / 2 : std::atan(gy / gx);
    }
  }
  return e;
}

// Perceptual preservation of one source's edges in the fused image.
double preservation(double g_src, double a_src, double g_fused, double a_fused) {
  constexpr double kGammaG = 0.9994, kKappaG = -15.0, kSigmaG = 0.5;
  constexpr double kGammaA = 0.9879, kKappaA = -22.0, kSigmaA = 0.8;
  constexpr double kHalfPi = std::numbers::pi / 2;
  double g;
  if (g_src > g_fused) g = g_fused / g_src;
  else if (g_src < g_fused) g = g_src / g_fused;
  else g = 1.0;
  const double a = std::fabs(std::fabs(a_src - a_fused) - kHalfPi) / kHalfPi;
  const double qg = kGammaG / (1.0 + std::exp(kKappaG * (g - kSigmaG)));
  const double qa = kGammaA / (1.0 + std::exp(kKappaA * (a - kSigmaA)));
  return qg * qa;
}

}  // namespace

double qabf(const GrayImage& fused, const GrayImage& ir, const GrayImage& vi) {
  if (!fused.same_size(ir) || !fused.same_size(vi)) {
    throw DimensionError("qabf: images differ in size");
  }
  if (fused.height < 2 || fused.width < 2) throw DimensionError("qabf: image must be at least 2x2");
  const EdgeMap ef = edges(fused), ea = edges(ir), eb = edges(vi);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < fused.pixels.size(); ++i) {
    const double wa = ea.strength[i], wb = eb.strength[i];
    if (wa == 0.0 && wb == 0.0) continue;
    num += preservation(wa, ea.orientation[i], ef.strength[i], ef.orientation[i]) * wa +
           preservation(wb, eb.orientation[i], ef.strength[i], ef.orientation[i]) * wb;
    den += wa + wb;
  }
  return den == 0.0 ? 0.0 : num / den;
}

MetricReport evaluate(const GrayImage& fused, const GrayImage& ir, const GrayImage& vi) {
  return {avg_gradient(fused), entropy(fused), std_dev(fused), spatial_frequency(fused),
          qabf(fused, ir, vi)};
}

MetricReport mean_report(const std::vector<MetricReport>& reports) {
  MetricReport m;
  if (reports.empty()) return m;
  for (const auto& r : reports) {
    m.ag += r.ag;
    m.en += r.en;
    m.sd += r.sd;
    m.sf += r.sf;
    m.qabf += r.qabf;
  }
  const double n = static_cast<double>(reports.size());
  m.ag /= n;
  m.en /= n;
  m.sd /= n;
  m.sf /= n;
  m.qabf /= n;
  return m;
}

std::string format_row(const std::string& name, const MetricReport& r) {
  using setting::format_double;
  return name + "," + format_double(r.ag) + "," + format_double(r.en) + "," +
         format_double(r.sd) + "," + format_double(r.sf) + "," + format_double(r.qabf);
}

void write_csv(std::ostream& out, const std::vector<NamedReport>& rows) {
  out << "name,ag,en,sd,sf,qabf\n";
  std::vector<MetricReport> all;
  for (const auto& row : rows) {
    out << format_row(row.name, row.report) << '\n';
    all.push_back(row.report);
  }
  if (!rows.empty()) out << format_row("mean", mean_report(all)) << '\n';
}

}  // namespace atfuse::metrics
