#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "spur/scene.hpp"
#include "spur/sscv.hpp"

namespace spur {

enum class BandWeighting { BandPower, Uniform };

BandWeighting parse_band_weighting(std::string_view name);
std::string to_string(BandWeighting w);

/// Per-frame direction estimates. Frames with zero confidence carry no
/// direction (`valid` is false and `direction` is zero).
struct DoaEstimate {
  std::vector<Eigen::Vector3d> direction;
  std::vector<double> confidence;
  std::vector<bool> valid;
  int hop = 160;
  int sample_rate = 16000;

  std::size_t n_frames() const { return direction.size(); }
  double azimuth_deg(std::size_t n) const;
  double elevation_deg(std::size_t n) const;
};

/// I(n) = sum_b w_b (Re C12, Re C13, Re C14), w_b = C11 (or 1), u = I/|I|.
/// Confidence is the summed band power of the frame.
DoaEstimate intensity_doa(const CovarianceSeries& cov, int hop, int sample_rate,
                          BandWeighting weighting = BandWeighting::BandPower);

Eigen::Vector3d direction_from_angles(double azimuth_deg, double elevation_deg);

/// Great-circle angle in degrees. Throws ValidationError on a zero vector.
double angular_error(const Eigen::Vector3d& est, const Eigen::Vector3d& ref);

/// Pools feature frames into label frames of `frame_seconds` by the
/// confidence-weighted mean of unit vectors. Feature frame n lands in label
/// frame n / k where k = frame_seconds * sample_rate / hop must be an integer.
DoaEstimate aggregate_frames(const DoaEstimate& est, double frame_seconds = kLabelFrameSeconds);

struct SeldMetrics {
  double localization_error_deg = 0.0;  // mean over matched reference rows
  double localization_recall = 0.0;
  double threshold_deg = 20.0;
  std::size_t matched = 0;
  std::size_t reference = 0;
};

/// Every reference row is compared against the estimate of its label frame.
/// Estimates at feature rate are aggregated first.
SeldMetrics evaluate(const DoaEstimate& est, const SeldFrameLabels& ref, double threshold_deg = 20.0);

/// `# hop=<h> sample_rate=<sr>` then `frame,azimuth,elevation,x,y,z,confidence`.
/// Frames without a direction leave the angle and vector fields empty.
std::string doa_csv(const DoaEstimate& est);
void write_doa_csv(const DoaEstimate& est, const std::filesystem::path& path);
DoaEstimate parse_doa_csv(const std::string& text, const std::string& source_name);
DoaEstimate read_doa_csv(const std::filesystem::path& path);

/// Flat `key=value` lines.
std::string metrics_report(const SeldMetrics& m);
/// Header row plus one value row.
std::string metrics_csv(const SeldMetrics& m);

}  // namespace spur
