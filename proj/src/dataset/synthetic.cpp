// Copyright 2026 The netdissect Authors
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

#include "dataset/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "common/rng.hpp"
#include "tensor/ops.hpp"

namespace nd {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Sum of coarse random grids upsampled to full size.
void paint_background(Rng& rng, Tensor& image) {
  const std::size_t n = kSyntheticSize;
  const double base = rng.uniform(0.25, 0.40);
  struct Octave {
    std::size_t grid;
    double amplitude;
  };
  for (const Octave octave : {Octave{5, 0.12}, Octave{9, 0.06}, Octave{17, 0.03}}) {
    Tensor coarse({octave.grid, octave.grid});
    for (auto& v : coarse.values()) v = static_cast<float>(rng.uniform(-octave.amplitude, octave.amplitude));
    const Tensor fine = ops::bilinear_upsample(coarse, n, n);
    for (std::size_t i = 0; i < n * n; ++i) image[i] += fine[i];
  }
  for (std::size_t i = 0; i < n * n; ++i) image[i] += static_cast<float>(base + 0.01 * rng.normal());
}

void paint_mass(Rng& rng, Tensor& image, Tensor& mask) {
  const auto n = static_cast<double>(kSyntheticSize);
  const double a = rng.uniform(8.0, 24.0);
  const double b = rng.uniform(8.0, 24.0);
  const double theta = rng.uniform(0.0, kPi);
  const double margin = std::max(a, b) + 2.0;
  const double cx = rng.uniform(margin, n - 1.0 - margin);
  const double cy = rng.uniform(margin, n - 1.0 - margin);
  const double boost = rng.uniform(0.3, 0.6);
  const double c = std::cos(theta), s = std::sin(theta);
  const auto y0 = static_cast<std::size_t>(cy - margin), y1 = static_cast<std::size_t>(cy + margin);
  const auto x0 = static_cast<std::size_t>(cx - margin), x1 = static_cast<std::size_t>(cx + margin);
  for (std::size_t y = y0; y <= y1; ++y) {
    for (std::size_t x = x0; x <= x1; ++x) {
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      const double u = (c * dx + s * dy) / a, v = (-s * dx + c * dy) / b;
      if (u * u + v * v <= 1.0) {
        image.at(0, y, x) += static_cast<float>(boost);
        mask.at(y, x) = 1.0f;
      }
    }
  }
}

void paint_calcifications(Rng& rng, Tensor& image, Tensor& mask) {
  const auto n = static_cast<double>(kSyntheticSize);
  const double radius = rng.uniform(6.0, 14.0);
  const double hull = radius + 2.0;
  const double cx = rng.uniform(hull + 1.0, n - 2.0 - hull);
  const double cy = rng.uniform(hull + 1.0, n - 2.0 - hull);
  const auto dots = rng.uniform_int(5, 12);
  for (std::int64_t d = 0; d < dots; ++d) {
    const double r = radius * std::sqrt(rng.uniform());
    const double phi = rng.uniform(0.0, 2.0 * kPi);
    const auto px = static_cast<std::size_t>(std::lround(cx + r * std::cos(phi)));
    const auto py = static_cast<std::size_t>(std::lround(cy + r * std::sin(phi)));
    const auto size = static_cast<std::size_t>(rng.uniform_int(1, 2));
    const double boost = rng.uniform(0.3, 0.6);
    for (std::size_t y = py; y < py + size; ++y) {
      for (std::size_t x = px; x < px + size; ++x) image.at(0, y, x) += static_cast<float>(boost);
    }
  }
  const auto y0 = static_cast<std::size_t>(cy - hull), y1 = static_cast<std::size_t>(cy + hull) + 1;
  const auto x0 = static_cast<std::size_t>(cx - hull), x1 = static_cast<std::size_t>(cx + hull) + 1;
  for (std::size_t y = y0; y <= y1; ++y) {
    for (std::size_t x = x0; x <= x1; ++x) {
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      if (dx * dx + dy * dy <= hull * hull) mask.at(y, x) = 1.0f;
    }
  }
}

}  // namespace

Case generate_synthetic_case(std::uint64_t seed, bool positive, std::string case_id, std::string patient_id) {
  Rng rng(derive_seed(seed, positive ? 1 : 0));
  Case out;
  out.case_id = std::move(case_id);
  out.patient_id = std::move(patient_id);
  out.image = Tensor({1, kSyntheticSize, kSyntheticSize});
  out.lesion_mask = Tensor({kSyntheticSize, kSyntheticSize});
  out.image_label = positive ? ImageLabel::kCancerous : ImageLabel::kNormal;
  paint_background(rng, out.image);
  if (positive) {
    const auto lesions = rng.uniform_int(1, 3);
    for (std::int64_t i = 0; i < lesions; ++i) {
      if (rng.uniform() < 0.6) {
        paint_mass(rng, out.image, out.lesion_mask);
      } else {
        paint_calcifications(rng, out.image, out.lesion_mask);
      }
    }
  }
  for (auto& v : out.image.values()) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

}  // namespace nd
