#include <doctest.h>

#include <cmath>
#include <vector>

#include "minidrive/closedloop.hpp"
#include "minidrive/dataset.hpp"
#include "minidrive/expert.hpp"

using namespace minidrive;

namespace {
const Track& test_track() {
  static const Track t = generate_default_track(0);
  return t;
}
}  // namespace

TEST_CASE("expert is centered and straight on a straight") {
  const Track t = make_stadium_track(8.0, 1.5, 0.375);
  VehicleParams vp;
  ExpertParams ep;
  VehicleState s;
  s.pos = t.point_at(4.0);
  s.heading = t.heading_at(4.0);
  s.speed = 0.7;
  const auto steer = expert_steer(t, s, vp, ep);
  REQUIRE(steer.has_value());
  CHECK(std::fabs(*steer) <= 0.02);
}

TEST_CASE("expert abstains beyond twice the half width") {
  const Track& t = test_track();
  VehicleParams vp;
  ExpertParams ep;
  VehicleState s;
  s.pos = t.point_at(1.0) + unit_from_angle(t.heading_at(1.0)).perp() * (2.5 * t.half_width());
  s.heading = t.heading_at(1.0);
  CHECK_FALSE(expert_steer(t, s, vp, ep).has_value());
}

TEST_CASE("preemption: faster approach steers at least as hard before a turn") {
  const Track& t = test_track();
  VehicleParams vp;
  ExpertParams ep;
  // First left turn; sample the pre-turn window on the centerline.
  const TurnSegment* turn = nullptr;
  for (const auto& seg : t.turn_segments()) {
    if (seg.dir == TurnDir::left) {
      turn = &seg;
      break;
    }
  }
  REQUIRE(turn != nullptr);
  bool strictly_greater_somewhere = false;
  for (double back = 0.6; back >= 0.05; back -= 0.05) {
    const double s = t.wrap_s(turn->start_s - back);
    VehicleState vs;
    vs.pos = t.point_at(s);
    vs.heading = t.heading_at(s);
    vs.speed = 0.70;
    const double slow = *expert_steer(t, vs, vp, ep);
    vs.speed = 1.14;
    const double fast = *expert_steer(t, vs, vp, ep);
    CHECK(std::fabs(fast) >= std::fabs(slow) - 1e-9);
    if (std::fabs(fast) > std::fabs(slow) + 0.02) strictly_greater_somewhere = true;
  }
  CHECK(strictly_greater_somewhere);
}

TEST_CASE("quantized expert snaps to the three-level set") {
  const Track& t = test_track();
  VehicleParams vp;
  ExpertParams ep;
  ep.quantize = true;

  // Construct a pose whose raw normalized command is ~0.6: inside a left turn.
  const TurnSegment* turn = nullptr;
  for (const auto& seg : t.turn_segments()) {
    if (seg.dir == TurnDir::left) {
      turn = &seg;
      break;
    }
  }
  const double mid = 0.5 * (turn->start_s + turn->end_s);
  VehicleState vs;
  vs.pos = t.point_at(mid);
  vs.heading = t.heading_at(mid);
  vs.speed = 0.7;
  ExpertParams raw_params = ep;
  raw_params.quantize = false;
  const double raw = *expert_steer(t, vs, vp, raw_params);
  REQUIRE(std::fabs(raw) > ep.quantize_dead_band);
  const double snapped = *expert_steer(t, vs, vp, ep);
  CHECK(snapped == (raw > 0 ? 1.0 : -1.0));

  // Every quantized output lands in {-1, 0, +1}.
  for (double s = 0.0; s < t.total_length(); s += 0.37) {
    vs.pos = t.point_at(s);
    vs.heading = t.heading_at(s);
    const auto q = expert_steer(t, vs, vp, ep);
    REQUIRE(q.has_value());
    CHECK((*q == 0.0 || *q == 1.0 || *q == -1.0));
  }
}

TEST_CASE("collect_run: slow-lap timing, sample rate, determinism") {
  const Track& t = test_track();
  VehicleParams vp;
  ExpertParams ep;
  SensorConfig sc;
  CollectOptions co;
  co.duration_s = 120.0;
  co.speed_setpoint = 0.70;

  const Recording rec = collect_run(t, vp, ep, sc, co, 9);
  CHECK(rec.manifest.truncated_reason.empty());
  // duration x rate samples, plus the tick at t=0.
  CHECK(rec.samples.size() == doctest::Approx(120.0 * 20.0).epsilon(0.01));

  // Mean lap time in the expected band for 17 m at 0.70 m/s.
  std::vector<double> laps;
  double lap_start = -1.0;
  double max_s = 0.0;
  for (const auto& smp : rec.samples) max_s = std::fmax(max_s, smp.s);
  double prev = rec.samples.front().s;
  for (const auto& smp : rec.samples) {
    if (prev - smp.s > 0.5 * max_s) {
      if (lap_start >= 0.0) laps.push_back(smp.t - lap_start);
      lap_start = smp.t;
    }
    prev = smp.s;
  }
  REQUIRE(laps.size() >= 3);
  double mean = 0.0;
  for (const double v : laps) mean += v;
  mean /= static_cast<double>(laps.size());
  CHECK(mean >= 22.0);
  CHECK(mean <= 27.0);

  // Timestamps on the 20 Hz grid, strictly increasing.
  for (std::size_t i = 1; i < rec.samples.size(); ++i) {
    CHECK(rec.samples[i].t - rec.samples[i - 1].t == doctest::Approx(0.05).epsilon(1e-9));
  }

  // Identical seed: identical bytes.
  const Recording again = collect_run(t, vp, ep, sc, co, 9);
  CHECK(recording_samples_text(rec) == recording_samples_text(again));
  CHECK(rec == again);

  // Different seed: different noise stream.
  const Recording other = collect_run(t, vp, ep, sc, co, 10);
  CHECK(recording_samples_text(rec) != recording_samples_text(other));
}

TEST_CASE("expert completes laps without infractions at all study speeds") {
  const Track& t = test_track();
  VehicleParams vp;
  SensorConfig sc;
  ExpertController controller(t, vp, ExpertParams{});
  for (const double v : {0.70, 1.14, 2.04}) {
    PipelineConfig pc;
    pc.speed_setpoint = v;
    RunOptions opt;
    opt.n_laps = 5;
    opt.seed = 21;
    const LapReport r = run_laps(t, vp, controller, sc, pc, opt);
    CHECK(r.infractions == 0);
    CHECK(r.laps_completed == 5);
  }
}

TEST_CASE("steering leads curvature, and the lead grows with speed") {
  const Track& t = test_track();
  VehicleParams vp;
  ExpertParams ep;
  SensorConfig sc;
  CollectOptions co;
  co.duration_s = 80.0;

  const auto lead_at = [&](double speed) {
    CollectOptions opt = co;
    opt.speed_setpoint = speed;
    const Recording rec = collect_run(t, vp, ep, sc, opt, 31);
    // Bin steering and centerline curvature by s, then find the spatial
    // shift maximizing their correlation.
    const double bin = 0.1;
    const int nbins = static_cast<int>(t.total_length() / bin);
    std::vector<double> steer(nbins, 0.0), count(nbins, 0.0), curv(nbins, 0.0);
    for (const auto& smp : rec.samples) {
      const int b = std::min(nbins - 1, static_cast<int>(smp.s / bin));
      steer[b] += smp.steer;
      count[b] += 1.0;
    }
    for (int b = 0; b < nbins; ++b) {
      if (count[b] > 0) steer[b] /= count[b];
      curv[b] = t.curvature_at((b + 0.5) * bin);
    }
    double best_corr = -2.0;
    int best_lag = 0;
    for (int lag = 0; lag <= 20; ++lag) {  // steering earlier than curvature
      double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
      for (int b = 0; b < nbins; ++b) {
        const double x = steer[b];
        const double y = curv[(b + lag) % nbins];
        sx += x; sy += y; sxx += x * x; syy += y * y; sxy += x * y;
      }
      const double n = nbins;
      const double corr = (n * sxy - sx * sy) /
                          std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
      if (corr > best_corr) {
        best_corr = corr;
        best_lag = lag;
      }
    }
    CHECK(best_corr > 0.8);
    return best_lag * bin;
  };

  const double lead_slow = lead_at(0.70);
  const double lead_fast = lead_at(1.14);
  CHECK(lead_slow > 0.0);
  CHECK(lead_fast > lead_slow);
}
