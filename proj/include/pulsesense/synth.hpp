#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pulsesense/csi.hpp"

namespace pulsesense {

/// Piecewise-constant schedule entry: `rate` (per minute) holds from `start_s` on.
struct RateStep {
  double start_s = 0.0;
  double rate = 0.0;

  friend bool operator==(const RateStep&, const RateStep&) = default;
};

/// Closed interval [start_s, end_s] during which breathing stops.
struct ApneaInterval {
  double start_s = 0.0;
  double end_s = 0.0;

  friend bool operator==(const ApneaInterval&, const ApneaInterval&) = default;
};

/// |h_s(t)| = base * (1 + alpha sin(breath) * gate + beta sin(cardiac)); the complex
/// sample keeps the fixed angle `carrier_phase`.
struct SubcarrierModel {
  double base = 1.0;
  double alpha = 0.0;
  double beta = 0.0;
  double breath_phase = 0.0;
  double cardiac_phase = 0.0;
  double carrier_phase = 0.0;

  friend bool operator==(const SubcarrierModel&, const SubcarrierModel&) = default;
};

inline constexpr double kMaxCardiacToBreathRatio = 0.3;

struct Scenario {
  std::string name = "custom";
  double duration_s = 60.0;
  double sample_rate_hz = 80.0;
  std::size_t subcarriers = 64;
  std::vector<RateStep> hr_bpm{{0.0, 72.0}};
  std::vector<RateStep> br_brpm{{0.0, 15.0}};
  std::vector<ApneaInterval> apnea_intervals;
  double noise_std = 0.5;
  std::uint64_t seed = 0;
  /// One entry per subcarrier; drawn from `seed` when empty.
  std::vector<SubcarrierModel> coefficients;

  friend bool operator==(const Scenario&, const Scenario&) = default;
};

void validate(const Scenario& scenario);

/// The per-subcarrier model actually used by generate().
std::vector<SubcarrierModel> resolve_coefficients(const Scenario& scenario);

/// Schedule value at time t.
double rate_at(const std::vector<RateStep>& schedule, double t);
/// Integral of rate/60 from 0 to t, i.e. elapsed cycles.
double cycles_at(const std::vector<RateStep>& schedule, double t);
bool in_apnea(const std::vector<ApneaInterval>& intervals, double t);

struct SynthRecording {
  CsiStream stream;
  LabelSeries heart;
  LabelSeries breath;
  LabelSeries apnea;
};

/// Labels come at 1 Hz from t = 0 to the last whole second of the recording.
SynthRecording generate(const Scenario& scenario);

/// Fixed, stepped, low-SNR and 20 s / 10 s apnea scenarios at both device
/// profiles (80 Hz / 64 subcarriers and 7.4 Hz / 234 subcarriers).
std::vector<Scenario> scenario_suite();
Scenario suite_scenario(std::string_view name);

/// Accepts a suite name, or an object with scenario fields and an optional
/// "from" naming the suite entry it overrides.
Scenario scenario_from_json(const nlohmann::json& value);
nlohmann::json to_json(const Scenario& scenario);

}  // namespace pulsesense
