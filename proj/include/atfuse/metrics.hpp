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

#include <ostream>
#include <string>
#include <vector>

#include "atfuse/image.hpp"

// No-reference fusion quality metrics. Images are stored on [0, 1]; each
// metric states the intensity scale it is evaluated on.
namespace atfuse::metrics {

struct MetricReport {
  double ag = 0;
  double en = 0;
  double sd = 0;
  double sf = 0;
  double qabf = 0;
};

// Mean over the (H-1)(W-1) interior pixels of sqrt((dx^2 + dy^2) / 2) with
// forward differences, on the [0, 255] scale by default.
double avg_gradient(const GrayImage& img, double scale = 255.0);
// Shannon entropy (bits) of the 256-bin histogram of quantized pixels.
double entropy(const GrayImage& img);
// Population standard deviation, [0, 255] scale by default.
double std_dev(const GrayImage& img, double scale = 255.0);
// sqrt(RF^2 + CF^2), RF/CF the RMS of horizontal/vertical first
// differences; [0, 1] scale by default.
double spatial_frequency(const GrayImage& img, double scale = 1.0);
// Edge-information transfer from both sources into the fused image.
double qabf(const GrayImage& fused, const GrayImage& ir, const GrayImage& vi);

MetricReport evaluate(const GrayImage& fused, const GrayImage& ir, const GrayImage& vi);
MetricReport mean_report(const std::vector<MetricReport>& reports);

struct NamedReport {
  std::string name;
  MetricReport report;
};

// `name,ag,en,sd,sf,qabf`, one row per entry, then a `mean` row unless empty.
void write_csv(std::ostream& out, const std::vector<NamedReport>& rows);
std::string format_row(const std::string& name, const MetricReport& r);

}  // namespace atfuse::metrics
