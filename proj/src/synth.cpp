#include "pulsesense/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "json_util.hpp"
#include "pulsesense/error.hpp"
#include "random.hpp"

namespace pulsesense {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::InvalidScenario, what); }

void check_schedule(const std::vector<RateStep>& s, double lo, double hi, const char* name) {
  if (s.empty()) invalid(std::string(name) + " schedule is empty");
  if (s.front().start_s != 0.0) invalid(std::string(name) + " schedule must start at t=0");
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!(s[i].rate >= lo && s[i].rate <= hi)) {
      std::ostringstream msg;
      msg << name << " rate " << s[i].rate << " outside [" << lo << ", " << hi << "]";
      invalid(msg.str());
    }
    if (i > 0 && !(s[i].start_s > s[i - 1].start_s)) invalid(std::string(name) + " schedule starts must increase");
  }
}

std::size_t frame_count(const Scenario& s) { return static_cast<std::size_t>(std::llround(s.duration_s * s.sample_rate_hz)); }

// Suite seeds are fixed so every entry regenerates identically.
Scenario profile(Scenario s, bool esp32) {
  if (esp32) {
    s.sample_rate_hz = 80.0;
    s.subcarriers = 64;
    s.name += "-esp32";
  } else {
    s.sample_rate_hz = 7.4;
    s.subcarriers = 234;
    s.name += "-rpi";
    s.seed += 100;
  }
  return s;
}

std::vector<RateStep> schedule_from_json(const nlohmann::json& v, const char* key) {
  std::vector<RateStep> out;
  if (v.is_number()) return {{0.0, v.get<double>()}};
  if (!v.is_array()) throw Error(ErrorCode::ConfigInvalid, std::string("synth.scenario.") + key + " must be a number or list");
  for (const auto& step : v) {
    if (!step.is_array() || step.size() != 2 || !step[0].is_number() || !step[1].is_number()) {
      throw Error(ErrorCode::ConfigInvalid, std::string("synth.scenario.") + key + " entries are [start_s, rate]");
    }
    out.push_back({step[0].get<double>(), step[1].get<double>()});
  }
  return out;
}

}  // namespace

void validate(const Scenario& s) {
  if (!(s.duration_s > 0.0) || !std::isfinite(s.duration_s)) invalid("duration_s must be positive");
  if (!(s.sample_rate_hz > 0.0) || !std::isfinite(s.sample_rate_hz)) invalid("sample_rate_hz must be positive");
  if (s.subcarriers < 1) invalid("need at least one subcarrier");
  if (frame_count(s) < 2) invalid("scenario yields fewer than two frames");
  if (!(s.noise_std >= 0.0) || !std::isfinite(s.noise_std)) invalid("noise_std must be >= 0");
  check_schedule(s.hr_bpm, 48.0, 130.0, "hr_bpm");
  check_schedule(s.br_brpm, 6.0, 30.0, "br_brpm");

  auto intervals = s.apnea_intervals;
  std::sort(intervals.begin(), intervals.end(), [](auto& a, auto& b) { return a.start_s < b.start_s; });
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    const auto& iv = intervals[i];
    if (!(iv.start_s >= 0.0 && iv.start_s < iv.end_s && iv.end_s <= s.duration_s)) {
      invalid("apnea interval outside the recording or empty");
    }
    if (i > 0 && !(iv.start_s > intervals[i - 1].end_s)) invalid("apnea intervals overlap");
  }

  if (!s.coefficients.empty()) {
    if (s.coefficients.size() != s.subcarriers) invalid("coefficient count differs from subcarrier count");
    for (const auto& c : s.coefficients) {
      if (!(c.base > 0.0) || !(c.alpha >= 0.0) || !(c.beta >= 0.0)) invalid("coefficients must be non-negative, base > 0");
      if (c.beta > kMaxCardiacToBreathRatio * c.alpha) invalid("cardiac gain exceeds 0.3 x breathing gain");
    }
  }
}

std::vector<SubcarrierModel> resolve_coefficients(const Scenario& s) {
  if (!s.coefficients.empty()) return s.coefficients;
  std::mt19937_64 rng(detail::derive_seed(s.seed, 0xC0EF));
  std::vector<SubcarrierModel> out(s.subcarriers);
  for (auto& c : out) {
    c.base = detail::uniform(rng, 20.0, 40.0);
    c.alpha = detail::uniform(rng, 0.1, 0.3);
    c.beta = c.alpha * detail::uniform(rng, 0.1, kMaxCardiacToBreathRatio);
    c.breath_phase = detail::uniform(rng, 0.0, kTwoPi);
    c.cardiac_phase = detail::uniform(rng, 0.0, kTwoPi);
    c.carrier_phase = detail::uniform(rng, 0.0, kTwoPi);
  }
  return out;
}

double rate_at(const std::vector<RateStep>& schedule, double t) {
  double rate = schedule.front().rate;
  for (const auto& step : schedule)
    if (step.start_s <= t) rate = step.rate;
  return rate;
}

double cycles_at(const std::vector<RateStep>& schedule, double t) {
  double cycles = 0.0;
  for (std::size_t i = 0; i < schedule.size() && schedule[i].start_s < t; ++i) {
    const double end = i + 1 < schedule.size() ? std::min(t, schedule[i + 1].start_s) : t;
    cycles += schedule[i].rate / 60.0 * (end - schedule[i].start_s);
  }
  return cycles;
}

bool in_apnea(const std::vector<ApneaInterval>& intervals, double t) {
  for (const auto& iv : intervals)
    if (t >= iv.start_s && t <= iv.end_s) return true;
  return false;
}

SynthRecording generate(const Scenario& s) {
  validate(s);
  const auto coeffs = resolve_coefficients(s);
  const std::size_t n = frame_count(s);
  const std::size_t sc = s.subcarriers;

  SynthRecording out;
  out.stream.sample_rate_hz = s.sample_rate_hz;
  out.stream.subcarrier_count = sc;
  out.stream.frames.resize(n);

  std::mt19937_64 noise(detail::derive_seed(s.seed, 0x9015E));
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / s.sample_rate_hz;
    const double breath = kTwoPi * cycles_at(s.br_brpm, t);
    const double cardiac = kTwoPi * cycles_at(s.hr_bpm, t);
    const double gate = in_apnea(s.apnea_intervals, t) ? 0.0 : 1.0;
    auto& frame = out.stream.frames[k];
    frame.timestamp = t;
    frame.subcarriers.resize(sc);
    for (std::size_t j = 0; j < sc; ++j) {
      const auto& c = coeffs[j];
      const double mag = c.base * (1.0 + c.alpha * std::sin(breath + c.breath_phase) * gate +
                                   c.beta * std::sin(cardiac + c.cardiac_phase));
      const double re = mag * std::cos(c.carrier_phase) + s.noise_std * detail::standard_normal(noise);
      const double im = mag * std::sin(c.carrier_phase) + s.noise_std * detail::standard_normal(noise);
      frame.subcarriers[j] = {re, im};
    }
  }

  out.heart.kind = LabelKind::HeartRateBpm;
  out.breath.kind = LabelKind::BreathingRateBrpm;
  out.apnea.kind = LabelKind::ApneaFlag;
  const double last = out.stream.frames.back().timestamp;
  for (double t = 0.0; t <= last; t += 1.0) {
    out.heart.samples.push_back({t, rate_at(s.hr_bpm, t)});
    out.breath.samples.push_back({t, rate_at(s.br_brpm, t)});
    out.apnea.samples.push_back({t, in_apnea(s.apnea_intervals, t) ? 1.0 : 0.0});
  }
  return out;
}

std::vector<Scenario> scenario_suite() {
  Scenario fixed;
  fixed.name = "a-fixed";
  fixed.duration_s = 150.0;
  fixed.noise_std = 0.5;
  fixed.seed = 1;

  Scenario stepped;
  stepped.name = "b-stepped";
  stepped.duration_s = 300.0;
  stepped.hr_bpm = {{0.0, 60.0}, {100.0, 84.0}, {200.0, 108.0}};
  stepped.br_brpm = {{0.0, 10.0}, {100.0, 18.0}, {200.0, 24.0}};
  stepped.noise_std = 0.5;
  stepped.seed = 2;

  Scenario low_snr = fixed;
  low_snr.name = "c-low-snr";
  low_snr.noise_std = 3.0;
  low_snr.seed = 3;

  // Normal breathing for 20 s, then a 10 s hold, repeated.
  Scenario apnea;
  apnea.name = "d-apnea";
  apnea.duration_s = 300.0;
  apnea.noise_std = 0.5;
  apnea.seed = 4;
  for (double start = 20.0; start + 10.0 <= apnea.duration_s; start += 30.0) {
    apnea.apnea_intervals.push_back({start, start + 10.0});
  }

  std::vector<Scenario> suite;
  for (const auto& s : {fixed, stepped, low_snr, apnea}) {
    suite.push_back(profile(s, true));
    suite.push_back(profile(s, false));
  }
  return suite;
}

Scenario suite_scenario(std::string_view name) {
  for (auto& s : scenario_suite())
    if (s.name == name) return s;
  throw Error(ErrorCode::InvalidScenario, "unknown scenario '" + std::string(name) + "'");
}

Scenario scenario_from_json(const nlohmann::json& v) {
  using detail::get_or;
  if (v.is_string()) return suite_scenario(v.get<std::string>());
  constexpr std::string_view where = "synth.scenario";
  detail::require_known_keys(v,
                             {"from", "name", "duration_s", "sample_rate_hz", "subcarriers", "hr_bpm", "br_brpm",
                              "apnea_intervals", "noise_std", "seed", "coefficients"},
                             where);
  Scenario s = v.contains("from") ? suite_scenario(get_or<std::string>(v, "from", "", where)) : Scenario{};
  s.name = get_or<std::string>(v, "name", s.name, where);
  s.duration_s = get_or<double>(v, "duration_s", s.duration_s, where);
  s.sample_rate_hz = get_or<double>(v, "sample_rate_hz", s.sample_rate_hz, where);
  s.subcarriers = get_or<std::size_t>(v, "subcarriers", s.subcarriers, where);
  if (v.contains("hr_bpm")) s.hr_bpm = schedule_from_json(v["hr_bpm"], "hr_bpm");
  if (v.contains("br_brpm")) s.br_brpm = schedule_from_json(v["br_brpm"], "br_brpm");
  if (v.contains("apnea_intervals")) {
    s.apnea_intervals.clear();
    for (const auto& iv : v["apnea_intervals"]) {
      if (!iv.is_array() || iv.size() != 2 || !iv[0].is_number() || !iv[1].is_number()) {
        throw Error(ErrorCode::ConfigInvalid, "synth.scenario.apnea_intervals entries are [start_s, end_s]");
      }
      s.apnea_intervals.push_back({iv[0].get<double>(), iv[1].get<double>()});
    }
  }
  s.noise_std = get_or<double>(v, "noise_std", s.noise_std, where);
  s.seed = get_or<std::uint64_t>(v, "seed", s.seed, where);
  if (v.contains("coefficients")) {
    s.coefficients.clear();
    for (const auto& c : v["coefficients"]) {
      detail::require_known_keys(c, {"base", "alpha", "beta", "breath_phase", "cardiac_phase", "carrier_phase"},
                                 "synth.scenario.coefficients");
      SubcarrierModel m;
      m.base = get_or<double>(c, "base", m.base, where);
      m.alpha = get_or<double>(c, "alpha", m.alpha, where);
      m.beta = get_or<double>(c, "beta", m.beta, where);
      m.breath_phase = get_or<double>(c, "breath_phase", m.breath_phase, where);
      m.cardiac_phase = get_or<double>(c, "cardiac_phase", m.cardiac_phase, where);
      m.carrier_phase = get_or<double>(c, "carrier_phase", m.carrier_phase, where);
      s.coefficients.push_back(m);
    }
  }
  validate(s);
  return s;
}

nlohmann::json to_json(const Scenario& s) {
  auto schedule = [](const std::vector<RateStep>& steps) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& st : steps) a.push_back({st.start_s, st.rate});
    return a;
  };
  nlohmann::json intervals = nlohmann::json::array();
  for (const auto& iv : s.apnea_intervals) intervals.push_back({iv.start_s, iv.end_s});
  nlohmann::json j = {{"name", s.name},
                      {"duration_s", s.duration_s},
                      {"sample_rate_hz", s.sample_rate_hz},
                      {"subcarriers", s.subcarriers},
                      {"hr_bpm", schedule(s.hr_bpm)},
                      {"br_brpm", schedule(s.br_brpm)},
                      {"apnea_intervals", intervals},
                      {"noise_std", s.noise_std},
                      {"seed", s.seed}};
  if (!s.coefficients.empty()) {
    nlohmann::json cs = nlohmann::json::array();
    for (const auto& c : s.coefficients) {
      cs.push_back({{"base", c.base},
                    {"alpha", c.alpha},
                    {"beta", c.beta},
                    {"breath_phase", c.breath_phase},
                    {"cardiac_phase", c.cardiac_phase},
                    {"carrier_phase", c.carrier_phase}});
    }
    j["coefficients"] = cs;
  }
  return j;
}

}  // namespace pulsesense
