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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "common/error.hpp"
#include "common/rng.hpp"
#include "dataset/synthetic.hpp"
#include "dissect/catalog.hpp"
#include "dissect/dissect.hpp"
#include "oracles/brute_force.hpp"
#include "oracles/gradcheck.hpp"
#include "tensor/ops.hpp"
#include "trainer/trainer.hpp"

using nd::ErrorCode;
using nd::Tensor;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const nd::Error& e) {
    return e.code();
  }
  return ErrorCode::kInternal;
}

nd::PatchCorpus small_corpus(std::size_t cases, std::size_t input_size = 16) {
  std::vector<nd::Case> list;
  for (std::size_t i = 0; i < cases; ++i) {
    list.push_back(nd::generate_synthetic_case(300 + i, i % 2 == 0, "s" + std::to_string(i), "p" + std::to_string(i)));
  }
  return nd::PatchCorpus(list, 0.25, 0.5, input_size);
}

// Per-unit max scores computed independently of probe's streaming path.
std::vector<std::vector<oracle::Scored>> all_scores(const nd::Model& m, const nd::PatchCorpus& corpus,
                                                    const std::string& layer) {
  std::vector<std::vector<oracle::Scored>> out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const Tensor act = nd::forward(m, nd::adapt_input(m, corpus.pixels(i)), {layer}).captures[0].tensor;
    const std::size_t units = act.dim(0), plane = act.dim(1) * act.dim(2);
    out.resize(units);
    for (std::size_t u = 0; u < units; ++u) {
      const auto begin = act.values().begin() + static_cast<std::ptrdiff_t>(u * plane);
      out[u].push_back({*std::max_element(begin, begin + static_cast<std::ptrdiff_t>(plane)), corpus.entry(i).patch_id});
    }
  }
  return out;
}

nd::UnitRecord record_with(std::size_t index, std::size_t positives, std::size_t k = 12) {
  nd::UnitRecord r;
  r.layer_id = "conv3";
  r.unit_index = index;
  r.top.resize(k);
  r.top_positives = positives;
  return r;
}

}  // namespace

TEST_SUITE("dissect") {
  TEST_CASE("TopK keeps the max of two and breaks ties by patch id") {
    nd::TopK top(1);
    nd::TopEntry a;
    a.score = 5.0f;
    a.patch_id = "A";
    nd::TopEntry b;
    b.score = 3.0f;
    b.patch_id = "B";
    top.offer(a);
    top.offer(b);
    auto best = std::move(top).sorted();
    REQUIRE(best.size() == 1);
    CHECK(best[0].score == 5.0f);
    CHECK(best[0].patch_id == "A");

    nd::TopK ties(2);
    for (const char* id : {"c", "a", "b"}) {
      nd::TopEntry e;
      e.score = 1.0f;
      e.patch_id = id;
      ties.offer(e);
    }
    const auto t = std::move(ties).sorted();
    CHECK(t[0].patch_id == "a");
    CHECK(t[1].patch_id == "b");
    CHECK(nd::ranks_before(2.0f, "z", 1.0f, "a"));
    CHECK(nd::ranks_before(1.0f, "a", 1.0f, "b"));
    CHECK_FALSE(nd::ranks_before(1.0f, "b", 1.0f, "b"));
  }

  TEST_CASE("TopK merge is independent of partitioning") {
    nd::Rng rng(4);
    std::vector<nd::TopEntry> entries;
    for (int i = 0; i < 200; ++i) {
      nd::TopEntry e;
      e.score = static_cast<float>(rng.uniform_int(0, 15));
      e.patch_id = "p" + std::to_string(rng.uniform_int(0, 100000));
      entries.push_back(e);
    }
    nd::TopK single(7);
    for (const auto& e : entries) single.offer(e);
    const auto want = std::move(single).sorted();
    for (std::size_t parts : {2u, 3u, 7u}) {
      std::vector<nd::TopK> shards(parts, nd::TopK(7));
      for (std::size_t i = 0; i < entries.size(); ++i) shards[(i * 31) % parts].offer(entries[i]);
      nd::TopK merged(7);
      for (std::size_t s = parts; s-- > 0;) merged.merge(std::move(shards[s]));
      const auto got = std::move(merged).sorted();
      REQUIRE(got.size() == want.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].patch_id == want[i].patch_id);
        CHECK(got[i].score == want[i].score);
      }
    }
  }

  TEST_CASE("probe equals the full-sort oracle per unit") {
    const nd::Model m = nd::build_dissectnet_t(31, 16);
    const nd::PatchCorpus corpus = small_corpus(1);
    REQUIRE(corpus.size() == 49);
    for (const char* layer : {"conv2", "conv3"}) {
      nd::ProbeOptions opt;
      opt.layer_id = layer;
      opt.k = 5;
      opt.quantile = 0.05;
      opt.threads = 3;
      const nd::UnitCatalog cat = nd::probe(m, corpus, opt);
      const auto scores = all_scores(m, corpus, layer);
      REQUIRE(cat.units.size() == scores.size());
      for (std::size_t u = 0; u < scores.size(); ++u) {
        const auto want = oracle::top_k_by_sort(scores[u], 5);
        const auto& got = cat.units[u].top;
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
          CHECK(got[i].patch_id == want[i].id);
          CHECK(got[i].score == want[i].score);
        }
        std::size_t pos = 0;
        for (const auto& e : got) pos += corpus.entry(e.patch_index).label ? 1 : 0;
        CHECK(cat.units[u].top_positives == pos);
      }
    }
  }

  TEST_CASE("probe: k larger than the corpus, truncation, thread counts") {
    const nd::Model m = nd::build_dissectnet_t(32, 16);
    const nd::PatchCorpus corpus = small_corpus(2);
    nd::ProbeOptions all;
    all.k = 1000;
    all.threads = 1;
    nd::ProbeOptions k4 = all;
    k4.k = 4;
    k4.threads = 4;
    const nd::UnitCatalog full = nd::probe(m, corpus, all);
    const nd::UnitCatalog small = nd::probe(m, corpus, k4);
    for (std::size_t u = 0; u < full.units.size(); ++u) {
      CHECK(full.units[u].top.size() == corpus.size());
      CHECK(full.units[u].threshold == small.units[u].threshold);
      for (std::size_t i = 0; i < 4; ++i) {
        CHECK(small.units[u].top[i].patch_id == full.units[u].top[i].patch_id);
        CHECK(small.units[u].top[i].feature_map.identical(full.units[u].top[i].feature_map));
        CHECK(small.units[u].top[i].argmax_row == full.units[u].top[i].argmax_row);
      }
    }
  }

  TEST_CASE("probe: all-zero weights give zero scores ordered by patch id") {
    nd::Model m = nd::build_dissectnet_t(33, 16);
    for (Tensor* t : m.trainable_parameters()) {
      for (auto& v : t->values()) v = 0.0f;
    }
    const nd::PatchCorpus corpus = small_corpus(1);
    nd::ProbeOptions opt;
    opt.k = 6;
    const nd::UnitCatalog cat = nd::probe(m, corpus, opt);
    std::vector<std::string> ids;
    for (const auto& e : corpus.entries()) ids.push_back(e.patch_id);
    std::sort(ids.begin(), ids.end());
    for (const auto& unit : cat.units) {
      CHECK(unit.threshold == 0.0f);
      for (std::size_t i = 0; i < 6; ++i) {
        CHECK(unit.top[i].score == 0.0f);
        CHECK(unit.top[i].patch_id == ids[i]);
      }
    }
  }

  TEST_CASE("probe rejects fully connected and unknown layers and bad options") {
    const nd::Model m = nd::build_dissectnet_t(34, 16);
    const nd::PatchCorpus corpus = small_corpus(1);
    nd::ProbeOptions opt;
    opt.layer_id = "fc";
    CHECK(code_of([&] { nd::probe(m, corpus, opt); }) == ErrorCode::kInvalidArgument);
    opt.layer_id = "relu3";
    CHECK(code_of([&] { nd::probe(m, corpus, opt); }) == ErrorCode::kInvalidArgument);
    opt.layer_id = "conv7";
    CHECK(code_of([&] { nd::probe(m, corpus, opt); }) == ErrorCode::kNotFound);
    opt.layer_id = "conv3";
    opt.k = 0;
    CHECK(code_of([&] { nd::probe(m, corpus, opt); }) == ErrorCode::kInvalidArgument);
    opt.k = 3;
    opt.quantile = 1.0;
    CHECK(code_of([&] { nd::probe(m, corpus, opt); }) == ErrorCode::kInvalidArgument);
    opt.quantile = 0.005;
    CHECK(code_of([&] { nd::probe(m, nd::PatchCorpus{}, opt); }) == ErrorCode::kInvalidArgument);
  }

  TEST_CASE("compute_threshold: worked examples") {
    std::vector<float> hundred;
    for (int i = 1; i <= 100; ++i) hundred.push_back(static_cast<float>(i));
    CHECK(nd::compute_threshold(hundred, 0.05) == 95.0f);
    CHECK(nd::compute_threshold({1.0f, 2.0f}, 0.5) == 1.0f);
    CHECK(nd::compute_threshold(std::vector<float>(40, 2.5f), 0.005) == 2.5f);
    CHECK(code_of([] { nd::compute_threshold({}, 0.1); }) == ErrorCode::kInvalidArgument);
  }

  TEST_CASE("compute_threshold: sandwich and scan oracle on random distributions") {
    nd::Rng rng(12);
    for (int d = 0; d < 30; ++d) {
      std::vector<float> s(static_cast<std::size_t>(rng.uniform_int(1, 400)));
      const bool coarse = d % 3 == 0;
      for (auto& v : s) v = coarse ? static_cast<float>(rng.uniform_int(0, 5)) : static_cast<float>(rng.normal());
      for (double q : {0.5, 0.05, 0.005}) {
        const float t = nd::compute_threshold(s, q);
        CHECK(t == oracle::threshold_by_scan(s, q));
        CHECK(oracle::fraction_above(s, t) <= q);
        const float lower = oracle::next_lower_sample(s, t);
        if (lower < t) CHECK(oracle::fraction_above(s, lower) > q);
      }
    }
  }

  TEST_CASE("segment_patch: empty, full and single-peak masks") {
    oracle::GradRng rng(13);
    const Tensor pixels = rng.tensor({1, 17, 17}, 0.0, 1.0);
    const nd::SegmentedPatchView dim = nd::segment_patch("p", pixels, Tensor({5, 5}, 1.0f), 2.0f);
    for (std::size_t i = 0; i < 289; ++i) {
      CHECK(dim.mask[i] == 0.0f);
      CHECK(dim.overlay[i] == doctest::Approx(pixels[i] * nd::kDimFactor));
    }
    const nd::SegmentedPatchView full = nd::segment_patch("p", pixels, Tensor({5, 5}, 3.0f), 2.0f);
    for (std::size_t i = 0; i < 289; ++i) {
      CHECK(full.mask[i] == 1.0f);
      CHECK(full.overlay[i] == pixels[i]);
    }

    for (int t = 0; t < 20; ++t) {
      Tensor map = rng.tensor({5, 5}, 0.0, 0.5);
      const std::size_t r = rng.index(0, 4), c = rng.index(0, 4);
      map.at(r, c) = 4.0f;
      const float thr = static_cast<float>(rng.uniform(0.6, 3.5));
      const nd::SegmentedPatchView v = nd::segment_patch("p", pixels, map, thr);
      // Align-corners: feature (r,c) lands exactly on pixel (4r,4c).
      CHECK(v.mask.at(4 * r, 4 * c) == 1.0f);
      const oracle::Components comps = oracle::flood_fill(v.mask);
      CHECK(comps.size.size() == 1);
      const Tensor up = nd::ops::bilinear_upsample(map, 17, 17);
      for (std::size_t i = 0; i < 289; ++i) CHECK(v.mask[i] == (up[i] > thr ? 1.0f : 0.0f));
    }
  }

  TEST_CASE("montage layout: k = 12 is 3x4, k = 1 is a bordered cell") {
    const nd::MontageLayout l12 = nd::montage_layout(12, 32);
    CHECK(l12.rows == 3);
    CHECK(l12.cols == 4);
    CHECK(l12.width == 4 * 32 + 5 * nd::kMontageSeparator);
    CHECK(l12.height == 3 * 32 + 4 * nd::kMontageSeparator);
    for (std::size_t n = 1; n <= 40; ++n) {
      const nd::MontageLayout l = nd::montage_layout(n, 8);
      const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
      CHECK(l.cols == cols);
      CHECK(l.rows == (n + cols - 1) / cols);
    }

    nd::UnitRecord one = record_with(0, 0, 0);
    nd::TopEntry e;
    e.score = 1.0f;
    e.patch_id = "a";
    e.feature_map = Tensor({2, 2}, 5.0f);
    one.top.push_back(e);
    one.threshold = 1.0f;
    oracle::GradRng rng(14);
    const Tensor px = rng.tensor({1, 8, 8}, 0.0, 1.0);
    const Tensor mont = nd::render_montage(one, [&](const nd::TopEntry&) { return px; });
    const std::size_t s = nd::kMontageSeparator;
    REQUIRE(mont.shape() == nd::Shape{8 + 2 * s, 8 + 2 * s});
    for (std::size_t y = 0; y < 8 + 2 * s; ++y) {
      for (std::size_t x = 0; x < 8 + 2 * s; ++x) {
        const bool inside = y >= s && y < 8 + s && x >= s && x < 8 + s;
        CHECK(mont.at(y, x) == (inside ? px.at(0, y - s, x - s) : 1.0f));
      }
    }
  }

  TEST_CASE("montage places cells in score order, blacks out unused cells, is pure") {
    oracle::GradRng rng(15);
    nd::UnitRecord unit = record_with(3, 0, 0);
    unit.threshold = 0.0f;
    std::vector<Tensor> tiles;
    for (std::size_t i = 0; i < 5; ++i) {
      nd::TopEntry e;
      e.score = static_cast<float>(10 - i);
      e.patch_id = "t" + std::to_string(i);
      e.patch_index = i;
      e.feature_map = Tensor({2, 2}, 1.0f);
      unit.top.push_back(e);
      tiles.push_back(rng.tensor({1, 6, 6}, 0.0, 1.0));
    }
    auto pixels = [&](const nd::TopEntry& e) { return tiles[e.patch_index]; };
    const Tensor a = nd::render_montage(unit, pixels);
    CHECK(a.identical(nd::render_montage(unit, pixels)));
    const nd::MontageLayout l = nd::montage_layout(5, 6);
    const std::size_t s = nd::kMontageSeparator;
    for (std::size_t i = 0; i < 6; ++i) {
      const std::size_t oy = s + (i / l.cols) * (6 + s), ox = s + (i % l.cols) * (6 + s);
      for (std::size_t y = 0; y < 6; ++y) {
        for (std::size_t x = 0; x < 6; ++x) CHECK(a.at(oy + y, ox + x) == (i < 5 ? tiles[i].at(0, y, x) : 0.0f));
      }
    }
    CHECK_THROWS_AS(nd::render_montage(unit, [](const nd::TopEntry&) -> Tensor { nd::fail(ErrorCode::kNotFound, "x"); }),
                    nd::Error);
    nd::UnitRecord empty = record_with(0, 0, 0);
    CHECK(code_of([&] { nd::render_montage(empty, pixels); }) == ErrorCode::kInvalidArgument);
  }

  TEST_CASE("rank_units: fraction order, index ties, sort oracle") {
    std::vector<nd::UnitRecord> units{record_with(0, 6), record_with(1, 12), record_with(2, 6)};
    CHECK(nd::rank_units(units) == std::vector<std::size_t>{1, 0, 2});
    std::vector<nd::UnitRecord> same{record_with(0, 3), record_with(1, 3), record_with(2, 3)};
    CHECK(nd::rank_units(same) == std::vector<std::size_t>{0, 1, 2});

    nd::Rng rng(16);
    for (int t = 0; t < 50; ++t) {
      std::vector<nd::UnitRecord> rs;
      for (std::size_t u = 0; u < 32; ++u) {
        rs.push_back(record_with(u, static_cast<std::size_t>(rng.uniform_int(0, 12))));
      }
      std::vector<std::size_t> want(32);
      for (std::size_t i = 0; i < 32; ++i) want[i] = i;
      std::stable_sort(want.begin(), want.end(),
                       [&](std::size_t a, std::size_t b) { return rs[a].top_positives > rs[b].top_positives; });
      CHECK(nd::rank_units(rs) == want);
    }
  }

  TEST_CASE("select_survey_units: n = 10 over 32 is 5 top plus 5 disjoint others") {
    std::vector<std::size_t> ranked(32);
    for (std::size_t i = 0; i < 32; ++i) ranked[i] = (i * 7) % 32;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto pick = nd::select_survey_units(ranked, 10, seed);
      REQUIRE(pick.size() == 10);
      const std::set<std::size_t> chosen(pick.begin(), pick.end());
      CHECK(chosen.size() == 10);
      for (std::size_t i = 0; i < 5; ++i) CHECK(chosen.count(ranked[i]) == 1);
      std::size_t from_rest = 0;
      for (std::size_t i = 5; i < 32; ++i) from_rest += chosen.count(ranked[i]);
      CHECK(from_rest == 5);
      CHECK(nd::select_survey_units(ranked, 10, seed) == pick);
    }
    const auto all = nd::select_survey_units(ranked, 32, 3);
    CHECK(std::set<std::size_t>(all.begin(), all.end()).size() == 32);
    CHECK(all != ranked);
    const auto odd = nd::select_survey_units(ranked, 7, 5);
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::count(odd.begin(), odd.end(), ranked[i]) == 1);
    CHECK(code_of([&] { nd::select_survey_units(ranked, 33, 1); }) == ErrorCode::kInvalidArgument);
  }

  TEST_CASE("unit ids are zero padded") {
    CHECK(nd::unit_id("conv3", 7) == "conv3_0007");
    CHECK(nd::unit_id("conv2", 1234) == "conv2_1234");
  }

  TEST_CASE("catalog round-trips and validation catches broken invariants") {
    nd::Catalog c;
    c.model_name = "DissectNet-T";
    c.model_fingerprint = "0123456789abcdef";
    c.layer_id = "conv3";
    c.k = 2;
    c.quantile = 0.005;
    c.threshold_source = "patch_max";
    c.split = "test";
    c.seed = 7;
    c.patch_count = 49;
    c.feature_height = 32;
    c.feature_width = 32;
    c.cases["s0"] = {"s0", "p0", nd::ImageLabel::kCancerous, 256, 256, "context/s0.png"};
    for (std::size_t u = 0; u < 2; ++u) {
      nd::CatalogUnit unit;
      unit.unit_id = nd::unit_id("conv3", u);
      unit.layer_id = "conv3";
      unit.unit_index = u;
      unit.threshold = 0.25f + static_cast<float>(u);
      unit.top_positives = 1;
      unit.montage = unit.unit_id + ".png";
      unit.patches.push_back({0, 2.5f, "s0:32,0", "s0", {32, 0, 64, 64}, 3, 4, true, "patches/a.png"});
      unit.patches.push_back({1, 1.5f, "s0:0,0", "s0", {0, 0, 64, 64}, 0, 1, false, "patches/b.png"});
      c.units.push_back(unit);
    }
    c.survey = {"conv3_0001", "conv3_0000"};
    CHECK_NOTHROW(nd::validate_catalog(c));
    const std::string text = nd::format_catalog(c);
    const nd::Catalog back = nd::parse_catalog(text);
    CHECK(nd::format_catalog(back) == text);
    CHECK(back.find_unit("conv3_0001")->threshold == 1.25f);
    CHECK(back.find_unit("conv3_0009") == nullptr);

    nd::Catalog unsorted = c;
    unsorted.units[0].patches[1].score = 3.0f;
    CHECK(code_of([&] { nd::validate_catalog(unsorted); }) == ErrorCode::kInvalidArgument);
    nd::Catalog outside = c;
    outside.units[1].patches[0].rect.x0 = 250;
    CHECK(code_of([&] { nd::validate_catalog(outside); }) == ErrorCode::kInvalidArgument);
    nd::Catalog dup = c;
    dup.survey = {"conv3_0001", "conv3_0001"};
    CHECK(code_of([&] { nd::validate_catalog(dup); }) == ErrorCode::kInvalidArgument);
    nd::Catalog unknown = c;
    unknown.survey = {"conv3_0005"};
    CHECK(code_of([&] { nd::validate_catalog(unknown); }) == ErrorCode::kInvalidArgument);
    nd::Catalog too_many = c;
    too_many.k = 1;
    CHECK(code_of([&] { nd::validate_catalog(too_many); }) == ErrorCode::kInvalidArgument);
    CHECK(code_of([] { nd::parse_catalog("[]"); }) == ErrorCode::kParse);
  }
}
