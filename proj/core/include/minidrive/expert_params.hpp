#pragma once

namespace minidrive {

// Pure-pursuit teacher. The lookahead grows with speed, which is what makes
// the recorded steering preemptive at higher speeds.
struct ExpertParams {
  double base_lookahead = 0.30;      // m
  double lookahead_per_speed = 0.50; // s; lookahead += this * speed
  double steer_gain = 1.5;
  bool quantize = false;             // snap to {-1, 0, +1}
  double quantize_dead_band = 0.15;
  double perturb_prob = 0.02;        // per second, lateral kick injection
  double perturb_sigma = 0.06;       // m
  double perturb_mask_s = 0.25;      // s masked after a kick

  bool operator==(const ExpertParams&) const = default;
};

}  // namespace minidrive
