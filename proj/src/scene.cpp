#include "spur/scene.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <numbers>

#include <fftw3.h>

#include "fftw_lock.hpp"
#include "spur/common.hpp"
#include "spur/wav.hpp"

namespace spur {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kTimeTol = 1e-9;

double wrap_azimuth(double az) { return az - 360.0 * std::floor((az + 180.0) / 360.0); }

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  Xoshiro256 r(seed ^ (a * 0x9e3779b97f4a7c15ULL) ^ (b * 0xc2b2ae3d27d4eb4fULL));
  return r.next();
}

std::size_t to_samples(double seconds, int sample_rate) {
  return static_cast<std::size_t>(std::llround(seconds * sample_rate));
}

// Linear convolution through FFTW, output length a.size() + b.size() - 1.
std::vector<double> fft_convolve(std::span<const double> a, std::span<const double> b) {
  const std::size_t out_len = a.size() + b.size() - 1;
  std::size_t n = 1;
  while (n < out_len) n <<= 1;
  const std::size_t nc = n / 2 + 1;
  std::vector<double> xa(n, 0.0), xb(n, 0.0), y(n);
  std::vector<std::complex<double>> fa(nc), fb(nc);
  std::copy(a.begin(), a.end(), xa.begin());
  std::copy(b.begin(), b.end(), xb.begin());
  auto* fa_ptr = reinterpret_cast<fftw_complex*>(fa.data());
  auto* fb_ptr = reinterpret_cast<fftw_complex*>(fb.data());
  fftw_plan pa, pb, pi;
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    pa = fftw_plan_dft_r2c_1d(static_cast<int>(n), xa.data(), fa_ptr, FFTW_ESTIMATE);
    pb = fftw_plan_dft_r2c_1d(static_cast<int>(n), xb.data(), fb_ptr, FFTW_ESTIMATE);
    pi = fftw_plan_dft_c2r_1d(static_cast<int>(n), fa_ptr, y.data(), FFTW_ESTIMATE);
  }
  fftw_execute(pa);
  fftw_execute(pb);
  for (std::size_t k = 0; k < nc; ++k) fa[k] *= fb[k];
  fftw_execute(pi);
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(pa);
    fftw_destroy_plan(pb);
    fftw_destroy_plan(pi);
  }
  y.resize(out_len);
  for (double& v : y) v /= static_cast<double>(n);
  return y;
}

// Decorrelated exponentially decaying noise tail, added in place.
void add_diffuse_tail(FoaClip& out, std::span<const double> dry, std::size_t start,
                      const SceneSpec& spec, const EventSpec& ev) {
  const auto len = static_cast<std::size_t>(std::ceil(spec.reverb_rt60 * spec.sample_rate));
  if (len == 0 || dry.empty()) return;
  const Keyframe k0 = ev.trajectory.at(ev.onset);
  const double direct_gain = 1.0 / std::max(k0.distance, kMinDistance);
  Xoshiro256 rng(mix_seed(spec.seed, static_cast<std::uint64_t>(ev.track_index), 0x7e7b));
  // 60 dB decay over rt60.
  const double decay = 3.0 * std::log(10.0) / (spec.reverb_rt60 * spec.sample_rate);
  for (int m = 0; m < 4; ++m) {
    std::vector<double> ir(len);
    double energy = 0.0;
    for (std::size_t k = 0; k < len; ++k) {
      ir[k] = rng.normal() * std::exp(-decay * static_cast<double>(k));
      energy += ir[k] * ir[k];
    }
    // Diffuse SN3D field: each directional channel carries a third of W's energy.
    const double target = std::pow(10.0, spec.reverb_level_db / 10.0) * direct_gain * direct_gain *
                          (m == 0 ? 1.0 : 1.0 / 3.0);
    const double g = std::sqrt(target / energy);
    for (double& v : ir) v *= g;
    const std::vector<double> wet = fft_convolve(dry, ir);
    auto ch = out.channel(m);
    for (std::size_t i = 0; i < wet.size() && start + i < ch.size(); ++i) ch[start + i] += wet[i];
  }
}

}  // namespace

Trajectory Trajectory::fixed(double azimuth, double elevation, double distance) {
  return Trajectory{{Keyframe{0.0, azimuth, elevation, distance}}};
}

void Trajectory::validate() const {
  if (keys.empty()) throw ValidationError("trajectory has no keyframes");
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const auto& k = keys[i];
    if (!std::isfinite(k.time) || !std::isfinite(k.azimuth) || !std::isfinite(k.elevation) ||
        !std::isfinite(k.distance))
      throw ValidationError("trajectory keyframe " + std::to_string(i) + " has a non-finite value");
    if (k.azimuth < -180.0 || k.azimuth >= 180.0)
      throw ValidationError("keyframe azimuth " + std::to_string(k.azimuth) + " outside [-180, 180)");
    if (k.elevation < -90.0 || k.elevation > 90.0)
      throw ValidationError("keyframe elevation " + std::to_string(k.elevation) + " outside [-90, 90]");
    if (!(k.distance > 0.0)) throw ValidationError("keyframe distance must be positive");
    if (i > 0 && k.time < keys[i - 1].time) throw ValidationError("keyframe times must be sorted");
  }
}

Keyframe Trajectory::at(double t) const {
  if (t <= keys.front().time) return keys.front();
  if (t >= keys.back().time) return keys.back();
  const auto hi = std::upper_bound(keys.begin(), keys.end(), t,
                                   [](double v, const Keyframe& k) { return v < k.time; });
  const Keyframe& b = *hi;
  const Keyframe& a = *(hi - 1);
  const double span = b.time - a.time;
  const double f = span > 0.0 ? (t - a.time) / span : 1.0;
  const double daz = wrap_azimuth(b.azimuth - a.azimuth);
  return Keyframe{t, wrap_azimuth(a.azimuth + f * daz), a.elevation + f * (b.elevation - a.elevation),
                  a.distance + f * (b.distance - a.distance)};
}

void SceneSpec::validate() const {
  if (!(duration > 0.0) || !std::isfinite(duration)) throw ValidationError("scene duration must be positive");
  if (sample_rate <= 0) throw ValidationError("scene sample_rate must be positive");
  if (reverb_rt60 < 0.0) throw ValidationError("reverb_rt60 must be >= 0");
  if (noise_snr_db && !std::isfinite(*noise_snr_db)) throw ValidationError("noise_snr_db must be finite");
  std::vector<int> tracks;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& ev = events[i];
    const std::string who = "event '" + ev.name + "'";
    if (ev.class_index < 0 || ev.track_index < 0)
      throw ValidationError(who + ": class and track must be >= 0");
    if (!(ev.onset >= 0.0) || !(ev.onset < ev.offset))
      throw ValidationError(who + ": needs 0 <= onset < offset");
    if (ev.offset > duration + kTimeTol)
      throw ValidationError(who + " ends at " + std::to_string(ev.offset) +
                            " s, past the scene duration of " + std::to_string(duration) + " s");
    try {
      ev.trajectory.validate();
    } catch (const ValidationError& e) {
      throw ValidationError(who + ": " + e.what());
    }
    if (ev.trajectory.keys.front().time > ev.onset + kTimeTol ||
        ev.trajectory.keys.back().time < ev.offset - kTimeTol)
      throw ValidationError(who + ": trajectory keyframes must span [onset, offset]");
    if (std::find(tracks.begin(), tracks.end(), ev.track_index) != tracks.end())
      throw ValidationError(who + ": track " + std::to_string(ev.track_index) + " is used twice");
    tracks.push_back(ev.track_index);
  }
}

FoaClip encode_source(std::span<const double> mono, const Trajectory& traj, int sample_rate, double t0) {
  traj.validate();
  FoaChannels ch;
  for (auto& c : ch) c.resize(mono.size());
  const bool fixed = traj.keys.size() == 1;
  Keyframe k = traj.keys.front();
  for (std::size_t i = 0; i < mono.size(); ++i) {
    if (!fixed) k = traj.at(t0 + static_cast<double>(i) / sample_rate);
    const double g = mono[i] / std::max(k.distance, kMinDistance);
    const double az = k.azimuth * kDeg, el = k.elevation * kDeg;
    ch[0][i] = g;
    ch[1][i] = g * std::cos(az) * std::cos(el);
    ch[2][i] = g * std::sin(az) * std::cos(el);
    ch[3][i] = g * std::sin(el);
  }
  return FoaClip(std::move(ch), sample_rate);
}

std::vector<double> default_source(const EventSpec& ev, std::size_t n_samples, const SceneSpec& spec) {
  std::vector<double> out(n_samples);
  const std::string& src = ev.source;
  if (src == "builtin:noise") {
    Xoshiro256 rng(mix_seed(spec.seed, static_cast<std::uint64_t>(ev.track_index)));
    for (double& v : out) v = 0.1 * rng.normal();
    return out;
  }
  if (src.rfind("builtin:tone:", 0) == 0) {
    double hz = 0.0;
    try {
      hz = std::stod(src.substr(13));
    } catch (...) {
      throw ValidationError("event '" + ev.name + "': bad tone frequency in '" + src + "'");
    }
    for (std::size_t i = 0; i < n_samples; ++i)
      out[i] = 0.5 * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / spec.sample_rate);
    return out;
  }
  if (src.rfind("builtin:", 0) == 0)
    throw ValidationError("event '" + ev.name + "': unknown builtin source '" + src + "'");

  std::filesystem::path path = src;
  if (path.is_relative()) path = spec.base_dir / path;
  int sr = 0;
  std::vector<double> mono;
  try {
    mono = load_mono_wav(path, &sr);
  } catch (const Error& e) {
    throw ValidationError("event '" + ev.name + "': cannot load source: " + e.what());
  }
  if (sr != spec.sample_rate)
    throw ValidationError("event '" + ev.name + "': source is " + std::to_string(sr) +
                          " Hz but the scene is " + std::to_string(spec.sample_rate) + " Hz");
  if (mono.empty()) throw ValidationError("event '" + ev.name + "': source file is empty");
  for (std::size_t i = 0; i < n_samples; ++i) out[i] = mono[i % mono.size()];
  return out;
}

RenderedScene render_scene(const SceneSpec& spec, const SourceLoader& loader) {
  spec.validate();
  const std::size_t n = to_samples(spec.duration, spec.sample_rate);
  FoaClip clip = FoaClip::silence(n, spec.sample_rate);
  for (const auto& ev : spec.events) {
    const std::size_t start = to_samples(ev.onset, spec.sample_rate);
    const std::size_t end = std::min(n, to_samples(ev.offset, spec.sample_rate));
    if (end <= start) continue;
    std::vector<double> mono = loader(ev, end - start, spec);
    const double gain = std::pow(10.0, ev.gain_db / 20.0);
    for (double& v : mono) v *= gain;
    const FoaClip enc =
        encode_source(mono, ev.trajectory, spec.sample_rate, static_cast<double>(start) / spec.sample_rate);
    for (int m = 0; m < 4; ++m) {
      auto dst = clip.channel(m);
      const auto src = enc.channel(m);
      for (std::size_t i = 0; i < src.size(); ++i) dst[start + i] += src[i];
    }
    if (spec.reverb_rt60 > 0.0) add_diffuse_tail(clip, mono, start, spec, ev);
  }

  if (spec.noise_snr_db && n > 0) {
    double p_events = 0.0;
    for (int m = 0; m < 4; ++m)
      for (double v : clip.channel(m)) p_events += v * v;
    p_events /= 4.0 * static_cast<double>(n);
    if (p_events > 0.0) {
      Xoshiro256 rng(mix_seed(spec.seed, 0x6e6f697365ULL));
      FoaClip noise = FoaClip::silence(n, spec.sample_rate);
      double p_noise = 0.0;
      for (int m = 0; m < 4; ++m)
        for (double& v : noise.channel(m)) {
          v = rng.normal();
          p_noise += v * v;
        }
      p_noise /= 4.0 * static_cast<double>(n);
      noise *= std::sqrt(p_events / std::pow(10.0, *spec.noise_snr_db / 10.0) / p_noise);
      clip += noise;
    }
  }
  return RenderedScene{std::move(clip), make_labels(spec)};
}

SeldFrameLabels make_labels(const SceneSpec& spec) {
  SeldFrameLabels labels;
  const int n_frames = static_cast<int>(std::ceil(spec.duration / kLabelFrameSeconds - kTimeTol));
  for (const auto& ev : spec.events) {
    const int first = std::max(0, static_cast<int>(std::floor(ev.onset / kLabelFrameSeconds)));
    const int last = std::min(n_frames - 1, static_cast<int>(std::ceil(ev.offset / kLabelFrameSeconds)));
    for (int f = first; f <= last; ++f) {
      const double lo = f * kLabelFrameSeconds, hi = (f + 1) * kLabelFrameSeconds;
      const double overlap = std::min(hi, ev.offset) - std::max(lo, ev.onset);
      if (overlap < 0.5 * kLabelFrameSeconds - kTimeTol) continue;
      const double centre = std::clamp(lo + 0.5 * kLabelFrameSeconds, ev.onset, ev.offset);
      const Keyframe k = ev.trajectory.at(centre);
      int az = static_cast<int>(std::lround(k.azimuth));
      if (az >= 180) az -= 360;
      labels.rows.push_back(LabelRow{f, ev.class_index, ev.track_index, az,
                                     static_cast<int>(std::lround(k.elevation)),
                                     static_cast<int>(std::lround(k.distance * 100.0))});
    }
  }
  std::sort(labels.rows.begin(), labels.rows.end());
  return labels;
}

SceneSpec random_scene(const RandomSceneConfig& cfg, std::uint64_t seed, const std::string& name) {
  if (cfg.min_events < 0 || cfg.max_events < cfg.min_events)
    throw ValidationError("random scene needs 0 <= min_events <= max_events");
  Xoshiro256 rng(seed);
  SceneSpec spec;
  spec.name = name;
  spec.duration = cfg.duration;
  spec.sample_rate = cfg.sample_rate;
  spec.seed = seed;
  spec.noise_snr_db = cfg.noise_snr_db;
  const int count = cfg.min_events +
                    static_cast<int>(rng.next() % static_cast<std::uint64_t>(cfg.max_events - cfg.min_events + 1));
  for (int i = 0; i < count; ++i) {
    EventSpec ev;
    ev.name = "event" + std::to_string(i);
    ev.source = "builtin:noise";
    ev.class_index = static_cast<int>(rng.next() % static_cast<std::uint64_t>(std::max(1, cfg.n_classes)));
    ev.track_index = i;
    const double len = std::min(cfg.duration, rng.uniform(cfg.min_event_seconds, cfg.max_event_seconds));
    // millisecond grid keeps the CSV and spec round-trippable
    ev.onset = std::round(rng.uniform(0.0, cfg.duration - len) * 1000.0) / 1000.0;
    ev.offset = std::min(cfg.duration, std::round((ev.onset + len) * 1000.0) / 1000.0);
    if (ev.offset <= ev.onset) ev.offset = std::min(cfg.duration, ev.onset + 0.001);
    Keyframe a{ev.onset, rng.uniform(-180.0, 180.0), rng.uniform(cfg.min_elevation, cfg.max_elevation),
               rng.uniform(cfg.min_distance, cfg.max_distance)};
    ev.trajectory.keys.push_back(a);
    if (rng.uniform() < cfg.moving_fraction) {
      Keyframe b{ev.offset, wrap_azimuth(a.azimuth + rng.uniform(-90.0, 90.0)),
                 std::clamp(a.elevation + rng.uniform(-20.0, 20.0), cfg.min_elevation, cfg.max_elevation),
                 a.distance};
      ev.trajectory.keys.push_back(b);
    } else {
      ev.trajectory.keys.push_back(Keyframe{ev.offset, a.azimuth, a.elevation, a.distance});
    }
    spec.events.push_back(std::move(ev));
  }
  return spec;
}

}  // namespace spur
