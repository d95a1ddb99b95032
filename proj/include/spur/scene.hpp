#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spur/foa.hpp"

namespace spur {

/// Minimum source distance used by the 1/rho law.
inline constexpr double kMinDistance = 0.3;
/// Metadata label frame length.
inline constexpr double kLabelFrameSeconds = 0.1;

struct Keyframe {
  double time = 0.0;       // seconds, absolute scene time
  double azimuth = 0.0;    // degrees, [-180, 180), counter-clockwise from front
  double elevation = 0.0;  // degrees, [-90, 90]
  double distance = 1.0;   // metres

  friend bool operator==(const Keyframe&, const Keyframe&) = default;
};

/// Piecewise-linear path; azimuth follows the shorter arc between keyframes.
struct Trajectory {
  std::vector<Keyframe> keys;

  static Trajectory fixed(double azimuth, double elevation, double distance);
  /// Throws ValidationError on non-finite or out-of-range values or unsorted times.
  void validate() const;
  /// Position at time t, clamped to the first/last keyframe.
  Keyframe at(double t) const;
};

struct EventSpec {
  std::string name;    // used in diagnostics; defaults to "event<index>"
  std::string source;  // WAV path, "builtin:noise", or "builtin:tone:<hz>"
  int class_index = 0;
  int track_index = 0;
  double onset = 0.0;
  double offset = 0.0;
  double gain_db = 0.0;
  Trajectory trajectory;
};

struct SceneSpec {
  std::string name = "scene";
  double duration = 10.0;
  int sample_rate = 16000;
  std::vector<EventSpec> events;
  std::optional<double> noise_snr_db;
  std::uint64_t seed = 0;
  /// Optional synthetic exponential-decay diffuse tail per event (0 = anechoic).
  double reverb_rt60 = 0.0;
  double reverb_level_db = -12.0;  // tail energy relative to the direct path
  std::filesystem::path base_dir;  // relative source paths resolve here

  void validate() const;
};

struct LabelRow {
  int frame = 0;
  int class_index = 0;
  int track_index = 0;
  int azimuth = 0;    // degrees, [-180, 180)
  int elevation = 0;  // degrees, [-90, 90]
  int distance = 0;   // centimetres

  friend auto operator<=>(const LabelRow&, const LabelRow&) = default;
};

struct SeldFrameLabels {
  std::vector<LabelRow> rows;  // sorted by (frame, track)

  friend bool operator==(const SeldFrameLabels&, const SeldFrameLabels&) = default;
};

/// Direct-path SN3D panning with 1/max(rho, 0.3 m) gain. Sample i of `mono`
/// sits at time t0 + i / sample_rate on the trajectory.
FoaClip encode_source(std::span<const double> mono, const Trajectory& traj, int sample_rate,
                      double t0 = 0.0);

/// Mono signal for an event, `n_samples` long. Files are looped to length.
using SourceLoader =
    std::function<std::vector<double>(const EventSpec&, std::size_t n_samples, const SceneSpec&)>;
std::vector<double> default_source(const EventSpec& ev, std::size_t n_samples, const SceneSpec& spec);

struct RenderedScene {
  FoaClip audio;
  SeldFrameLabels labels;
};

RenderedScene render_scene(const SceneSpec& spec, const SourceLoader& loader = default_source);

/// Frame rows for every (100 ms frame, event) with at least 50 % activity,
/// position taken at the frame centre clamped to the event span.
SeldFrameLabels make_labels(const SceneSpec& spec);

/// Knobs for random scene generation (batched soundscapes).
struct RandomSceneConfig {
  double duration = 10.0;
  int sample_rate = 16000;
  int min_events = 1;
  int max_events = 3;
  int n_classes = 13;
  double min_event_seconds = 1.0;
  double max_event_seconds = 4.0;
  double moving_fraction = 0.3;  // share of events with a two-keyframe path
  double min_elevation = -60.0;
  double max_elevation = 60.0;
  double min_distance = 0.5;
  double max_distance = 4.0;
  std::optional<double> noise_snr_db = 30.0;
};

SceneSpec random_scene(const RandomSceneConfig& cfg, std::uint64_t seed, const std::string& name);

/// CSV with header `frame,class,track,azimuth,elevation,distance`.
void export_metadata(const SeldFrameLabels& labels, const std::filesystem::path& path);
std::string metadata_csv(const SeldFrameLabels& labels);
/// Throws FormatError naming the 1-based line on malformed or out-of-range rows.
SeldFrameLabels import_metadata(const std::filesystem::path& path);
SeldFrameLabels parse_metadata(const std::string& text, const std::string& source_name);

struct AngleHistograms {
  std::array<std::uint64_t, 36> azimuth{};    // 10-degree bins from -180
  std::array<std::uint64_t, 18> elevation{};  // 10-degree bins from -90
};

AngleHistograms corpus_stats(std::span<const SeldFrameLabels> corpus);
std::string histogram_csv(const AngleHistograms& h, bool azimuth);
/// Two-panel bar chart as standalone SVG.
std::string histogram_svg(const AngleHistograms& h);

}  // namespace spur
