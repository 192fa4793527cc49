#include <doctest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "meetsync/error.hpp"
#include "meetsync/simdev.hpp"
#include "meetsync/syncfit.hpp"

using namespace meetsync;

namespace {

std::vector<TimeAnchor> pulses(const GroundTruthClock& truth, SourceTier tier, double end = 1800,
                               double cadence = 30) {
  return emit_anchor_pulses(pulse_schedule(0, end, cadence), std::vector{truth}, tier);
}

FitMethod with_threshold(std::size_t n, FitKind kind = FitKind::theil_sen) {
  FitMethod m;
  m.kind = kind;
  m.min_anchors_full_model = n;
  return m;
}

}  // namespace

TEST_SUITE("syncfit") {
  TEST_CASE("tier selection follows the hierarchy") {
    const GroundTruthClock t{"cam", 0.2, 15, 0.0005, 4};
    AnchorPool pool;
    for (const auto& a : pulses(t, SourceTier::frame_log, 1800, 1)) pool.add(a);
    for (const auto& a : pulses(t, SourceTier::lsl)) pool.add(a);
    auto sel = select_anchors("cam", pool);
    CHECK(sel.tier == SourceTier::lsl);
    CHECK(sel.anchors.size() == 60);

    AnchorPool sidecar_only;
    for (const auto& a : pulses(t, SourceTier::sidecar, 90)) sidecar_only.add(a);
    sel = select_anchors("cam", sidecar_only);
    CHECK(sel.tier == SourceTier::sidecar);
    CHECK(sel.anchors.size() == 3);

    sel = select_anchors("cam", AnchorPool{});
    CHECK(sel.tier == SourceTier::unaligned);
    CHECK(sel.anchors.empty());
  }

  TEST_CASE("adding a lower tier never changes the selection") {
    const GroundTruthClock t{"dev", 0.2, 15, 0.0005, 4};
    AnchorPool pool;
    for (const auto& a : pulses(t, SourceTier::event_log)) pool.add(a);
    const auto before = select_anchors("dev", pool).anchors;
    for (const auto& a : pulses(t, SourceTier::sidecar)) pool.add(a);
    for (const auto& a : pulses(t, SourceTier::frame_log)) pool.add(a);
    CHECK(select_anchors("dev", pool).anchors == before);
  }

  TEST_CASE("invalid anchors are rejected by the pool") {
    AnchorPool pool;
    CHECK_THROWS_AS(pool.add({"dev", std::nan(""), 1.0}), Error);
    CHECK_THROWS_AS(pool.add({"dev", 1.0, 1.0, SourceTier::lsl, -1.0}), Error);
    CHECK_THROWS_AS(pool.add({"dev", 1.0, 1.0, SourceTier::unaligned}), Error);
  }

  TEST_CASE("two-point exact fit") {
    const std::vector<TimeAnchor> a{{"dev", 0.0, 0.5}, {"dev", 100.0, 100.505}};
    for (auto kind : {FitKind::least_squares, FitKind::theil_sen}) {
      const auto m = fit_clock_model(a, with_threshold(2, kind));
      CHECK(m.offset_s == doctest::Approx(0.5).epsilon(1e-12));
      CHECK(m.drift_ppm == doctest::Approx(50.0).epsilon(1e-6));
      CHECK(m.rms_residual_s <= 1e-12);
      CHECK(m.anchor_count == 2);
      CHECK(m.source_tier == SourceTier::lsl);
    }
  }

  TEST_CASE("offset-only fallback") {
    const std::vector<TimeAnchor> a{{"dev", 1.0, 1.5}, {"dev", 2.0, 2.5}, {"dev", 3.0, 3.5}};
    const auto m = fit_clock_model(a, with_threshold(8));
    CHECK(m.offset_s == doctest::Approx(0.5));
    CHECK(m.drift_ppm == 0.0);
    CHECK(m.anchor_count == 3);
  }

  TEST_CASE("no anchors gives an unaligned model") {
    const auto m = fit_clock_model({}, FitMethod{});
    CHECK(m.source_tier == SourceTier::unaligned);
    CHECK(m.anchor_count == 0);
    CHECK_FALSE(m.aligned());
  }

  TEST_CASE("identical device times cannot determine a slope") {
    std::vector<TimeAnchor> a;
    for (int i = 0; i < 10; ++i) a.push_back({"dev", 5.0, 5.0 + 0.001 * i});
    for (auto kind : {FitKind::least_squares, FitKind::theil_sen}) {
      try {
        fit_clock_model(a, with_threshold(8, kind));
        FAIL("expected throw");
      } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::degenerate_geometry);
      }
    }
  }

  TEST_CASE("zero-weight anchors are ignored") {
    const GroundTruthClock t{"dev", 0.7, -40, 0, 1};
    auto a = pulses(t, SourceTier::lsl);
    a[3].t_device_s += 5.0;
    a[3].weight = 0.0;
    const auto m = fit_clock_model(a, with_threshold(8, FitKind::least_squares));
    CHECK(m.anchor_count == 59);
    CHECK(m.offset_s == doctest::Approx(0.7).epsilon(1e-9));
    CHECK(m.drift_ppm == doctest::Approx(-40).epsilon(1e-6));
  }

  TEST_CASE("Theil-Sen subsampling path still recovers the truth") {
    const GroundTruthClock t{"dev", -0.4, 70, 0.0005, 17};
    const auto a = pulses(t, SourceTier::frame_log, 3000, 1);  // 3000 anchors
    FitMethod m;
    m.theil_sen_pair_budget = 200'000;
    const auto model = fit_clock_model(a, m);
    CHECK(std::abs(model.offset_s + 0.4) < 0.0005);
    CHECK(std::abs(model.drift_ppm - 70) < 1.0);
    CHECK(fit_clock_model(a, m) == model);
  }

  TEST_CASE("align_stream examples") {
    SampleSeries s;
    s.channel_count = 1;
    const double v[] = {7.0};
    s.push_back(10.0, v);
    s.push_back(1000.0, v);
    CHECK(align_stream(s, identity_model("d")).times == s.times);
    ClockModel shift{"d", 0.5, 0.0, 2, 0.0, SourceTier::lsl};
    CHECK(align_stream(s, shift).times[0] == 10.5);
    ClockModel drift{"d", 0.5, 50.0, 2, 0.0, SourceTier::lsl};
    const auto out = align_stream(s, drift);
    CHECK(out.times[1] == doctest::Approx(1000.55).epsilon(1e-15));
    CHECK(out.values == s.values);
  }

  TEST_CASE("align_stream refuses unaligned models") {
    SampleSeries s;
    s.channel_count = 0;
    s.push_back(1.0, {});
    try {
      align_stream(s, ClockModel{"d"});
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::unaligned_stream);
    }
  }

  TEST_CASE("align_stream restores order and keeps rows together") {
    SampleSeries s;
    s.channel_count = 2;
    const double r0[] = {0, 10}, r1[] = {1, 11}, r2[] = {2, 12};
    s.push_back(1.0, r0);
    s.push_back(0.5, r1);
    s.push_back(2.0, r2);
    const auto out = align_stream(s, identity_model("d"));
    CHECK(out.times == std::vector<double>{0.5, 1.0, 2.0});
    CHECK(out.values == std::vector<double>{1, 11, 0, 10, 2, 12});
  }

  TEST_CASE("validation flags offset-only fits on drifting clocks") {
    const GroundTruthClock t{"dev", 0.3, 200, 0.0, 1};
    auto a = pulses(t, SourceTier::lsl);
    AnchorPool pool(a);
    ClockModel offset_only{"dev", 0.0, 0.0, 60, 0.0, SourceTier::lsl};
    {
      std::vector<TimeAnchor> first(a.begin(), a.begin() + 3);
      offset_only = fit_clock_model(first, with_threshold(8));
      offset_only.anchor_count = a.size();
    }
    const auto bad = validate_session_alignment(std::vector{offset_only}, pool, 0.005);
    REQUIRE(bad.entries.size() == 1);
    CHECK_FALSE(bad.entries[0].pass);
    CHECK(bad.entries[0].max_abs_residual_s > 0.1);

    const auto good_model = fit_clock_model(a, FitMethod{});
    const auto good = validate_session_alignment(std::vector{good_model}, pool, 0.005);
    CHECK(good.entries[0].pass);
    CHECK(good.entries[0].rms_residual_s <= 1e-9);
  }

  TEST_CASE("device with no anchors fails validation") {
    const auto r = validate_session_alignment(std::vector{ClockModel{"lonely"}}, AnchorPool{}, 0.005);
    REQUIRE(r.entries.size() == 1);
    CHECK_FALSE(r.entries[0].pass);
    CHECK(r.entries[0].model.source_tier == SourceTier::unaligned);
    CHECK_FALSE(r.all_pass());
  }

  TEST_CASE("repair demotes to a lower tier when the top tier is corrupt") {
    const GroundTruthClock t{"cam", 0.2, 25, 0.0005, 8};
    auto lsl = pulses(t, SourceTier::lsl);
    for (std::size_t i = 0; i < lsl.size(); i += 2) lsl[i].t_device_s += 0.05 * double(i % 7);
    AnchorPool pool(lsl);
    for (const auto& a : pulses(t, SourceTier::frame_log)) pool.add(a);
    const auto fit = fit_with_repair("cam", pool, FitMethod{}, 0.005);
    CHECK(fit.model.source_tier == SourceTier::frame_log);
    CHECK(fit.demoted_from == std::vector<SourceTier>{SourceTier::lsl});

    AnchorPool clean(pulses(t, SourceTier::lsl));
    const auto ok = fit_with_repair("cam", clean, FitMethod{}, 0.005);
    CHECK(ok.model.source_tier == SourceTier::lsl);
    CHECK(ok.demoted_from.empty());
  }

  TEST_CASE("both estimators are consistent on clean anchors") {
    int ok_ls = 0, ok_ts = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(derive_seed(1234, std::to_string(seed)));
      const GroundTruthClock t{"dev", rng.uniform(-1, 1), rng.uniform(-100, 100), 0.0005, seed};
      const auto a = pulses(t, SourceTier::lsl);
      for (auto kind : {FitKind::least_squares, FitKind::theil_sen}) {
        FitMethod m;
        m.kind = kind;
        const auto model = fit_clock_model(a, m);
        const bool ok = std::abs(model.offset_s - t.true_offset_s) <= 0.001 &&
                        std::abs(model.drift_ppm - t.true_drift_ppm) <= 2.0;
        (kind == FitKind::least_squares ? ok_ls : ok_ts) += ok ? 1 : 0;
      }
    }
    CHECK(ok_ls >= 19);
    CHECK(ok_ts >= 19);
  }

  TEST_CASE("JSON round trips") {
    const ClockModel m{"tobii_P1", 1.25, -33.5, 60, 0.0004, SourceTier::lsl};
    CHECK(clock_model_from_json(to_json(m)) == m);
    const GroundTruthClock t{"dev", 0.1, 10, 0.0005, 3};
    AnchorPool pool(pulses(t, SourceTier::lsl));
    const auto report = validate_session_alignment(std::vector{fit_clock_model(pulses(t, SourceTier::lsl), FitMethod{})},
                                                   pool, 0.005);
    const auto j = to_json(report);
    CHECK(j.contains("entries"));
    CHECK(j.contains("tolerance_s"));
    CHECK(timing_report_from_json(j).entries == report.entries);
    CHECK(parse_fit_kind("least_squares") == FitKind::least_squares);
    CHECK_FALSE(parse_fit_kind("ransac").has_value());
  }
}
