#include "spur/seld.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>

#include "spur/common.hpp"

namespace spur {
namespace {

constexpr double kDeg = 180.0 / std::numbers::pi;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t next = line.find(sep, pos);
    out.push_back(line.substr(pos, next == std::string::npos ? std::string::npos : next - pos));
    if (next == std::string::npos) return out;
    pos = next + 1;
  }
}

}  // namespace

BandWeighting parse_band_weighting(std::string_view name) {
  if (name == "power") return BandWeighting::BandPower;
  if (name == "uniform") return BandWeighting::Uniform;
  throw ValidationError("unknown band weighting '" + std::string(name) + "' (expected power or uniform)");
}

std::string to_string(BandWeighting w) { return w == BandWeighting::BandPower ? "power" : "uniform"; }

double DoaEstimate::azimuth_deg(std::size_t n) const {
  return std::atan2(direction[n].y(), direction[n].x()) * kDeg;
}

double DoaEstimate::elevation_deg(std::size_t n) const {
  return std::asin(std::clamp(direction[n].z(), -1.0, 1.0)) * kDeg;
}

DoaEstimate intensity_doa(const CovarianceSeries& cov, int hop, int sample_rate, BandWeighting weighting) {
  if (hop <= 0 || sample_rate <= 0) throw ValidationError("hop and sample_rate must be positive");
  DoaEstimate est;
  est.hop = hop;
  est.sample_rate = sample_rate;
  const std::size_t n_frames = cov.n_frames();
  est.direction.assign(n_frames, Eigen::Vector3d::Zero());
  est.confidence.assign(n_frames, 0.0);
  std::vector<char> valid(n_frames, 0);

  parallel_for(n_frames, [&](std::size_t n) {
    Eigen::Vector3d intensity = Eigen::Vector3d::Zero();
    double power = 0.0;
    for (std::size_t b = 0; b < cov.n_bands(); ++b) {
      const Cov4& c = cov.at(n, b);
      const double p = c(0, 0).real();
      const double w = weighting == BandWeighting::BandPower ? p : 1.0;
      intensity += w * Eigen::Vector3d(c(0, 1).real(), c(0, 2).real(), c(0, 3).real());
      power += p;
    }
    const double norm = intensity.norm();
    if (power > 0.0 && norm > 0.0 && std::isfinite(norm)) {
      est.direction[n] = intensity / norm;
      est.confidence[n] = power;
      valid[n] = 1;
    }
  });
  est.valid.assign(valid.begin(), valid.end());
  return est;
}

Eigen::Vector3d direction_from_angles(double azimuth_deg, double elevation_deg) {
  const double az = azimuth_deg / kDeg, el = elevation_deg / kDeg;
  return {std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)};
}

double angular_error(const Eigen::Vector3d& est, const Eigen::Vector3d& ref) {
  const double ne = est.norm(), nr = ref.norm();
  if (!(ne > 0.0) || !(nr > 0.0)) throw ValidationError("angular_error needs non-zero direction vectors");
  return std::acos(std::clamp(est.dot(ref) / (ne * nr), -1.0, 1.0)) * kDeg;
}

DoaEstimate aggregate_frames(const DoaEstimate& est, double frame_seconds) {
  const double ratio = frame_seconds * est.sample_rate / est.hop;
  const long k = std::lround(ratio);
  if (k < 1 || std::abs(ratio - static_cast<double>(k)) > 1e-9)
    throw ValidationError("DoA frame hop of " + std::to_string(est.hop) + " samples at " +
                          std::to_string(est.sample_rate) + " Hz does not divide the " +
                          fmt(frame_seconds * 1000) + " ms label frame");
  if (k == 1) return est;

  DoaEstimate out;
  out.hop = est.hop * static_cast<int>(k);
  out.sample_rate = est.sample_rate;
  const std::size_t n_out = (est.n_frames() + k - 1) / k;
  out.direction.assign(n_out, Eigen::Vector3d::Zero());
  out.confidence.assign(n_out, 0.0);
  out.valid.assign(n_out, false);
  std::vector<Eigen::Vector3d> sum(n_out, Eigen::Vector3d::Zero());
  for (std::size_t n = 0; n < est.n_frames(); ++n) {
    if (!est.valid[n]) continue;
    sum[n / k] += est.confidence[n] * est.direction[n];
    out.confidence[n / k] += est.confidence[n];
  }
  for (std::size_t j = 0; j < n_out; ++j) {
    const double norm = sum[j].norm();
    if (norm > 0.0) {
      out.direction[j] = sum[j] / norm;
      out.valid[j] = true;
    } else {
      out.confidence[j] = 0.0;
    }
  }
  return out;
}

SeldMetrics evaluate(const DoaEstimate& est, const SeldFrameLabels& ref, double threshold_deg) {
  if (!(threshold_deg >= 0.0)) throw ValidationError("threshold must be non-negative");
  const DoaEstimate frames = aggregate_frames(est);
  SeldMetrics m;
  m.threshold_deg = threshold_deg;
  m.reference = ref.rows.size();
  double error_sum = 0.0;
  for (const auto& row : ref.rows) {
    const auto j = static_cast<std::size_t>(row.frame);
    if (j >= frames.n_frames() || !frames.valid[j]) continue;
    const double err = angular_error(frames.direction[j], direction_from_angles(row.azimuth, row.elevation));
    if (err <= threshold_deg) {
      ++m.matched;
      error_sum += err;
    }
  }
  m.localization_recall = m.reference ? static_cast<double>(m.matched) / m.reference : 0.0;
  m.localization_error_deg = m.matched ? error_sum / m.matched : 0.0;
  return m;
}

std::string doa_csv(const DoaEstimate& est) {
  std::ostringstream out;
  out << "# hop=" << est.hop << " sample_rate=" << est.sample_rate << '\n';
  out << "frame,azimuth,elevation,x,y,z,confidence\n";
  for (std::size_t n = 0; n < est.n_frames(); ++n) {
    out << n << ',';
    if (est.valid[n]) {
      const auto& u = est.direction[n];
      out << fmt(est.azimuth_deg(n)) << ',' << fmt(est.elevation_deg(n)) << ',' << fmt(u.x()) << ','
          << fmt(u.y()) << ',' << fmt(u.z());
    } else {
      out << ",,,,";
    }
    out << ',' << fmt(est.confidence[n]) << '\n';
  }
  return out.str();
}

void write_doa_csv(const DoaEstimate& est, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << doa_csv(est);
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

DoaEstimate parse_doa_csv(const std::string& text, const std::string& source_name) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& why) {
    throw FormatError(source_name + ":" + std::to_string(line_no) + ": " + why);
  };
  auto number = [&](const std::string& field) {
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);
    if (field.empty() || end != field.c_str() + field.size() || !std::isfinite(v))
      fail("not a number: '" + field + "'");
    return v;
  };

  DoaEstimate est;
  if (!std::getline(in, line)) throw FormatError(source_name + ": empty file");
  ++line_no;
  if (std::sscanf(line.c_str(), "# hop=%d sample_rate=%d", &est.hop, &est.sample_rate) != 2 ||
      est.hop <= 0 || est.sample_rate <= 0)
    fail("expected '# hop=<samples> sample_rate=<hz>'");
  if (!std::getline(in, line) || (++line_no, line != "frame,azimuth,elevation,x,y,z,confidence"))
    fail("expected header 'frame,azimuth,elevation,x,y,z,confidence'");

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 7) fail("expected 7 columns, found " + std::to_string(f.size()));
    if (number(f[0]) != static_cast<double>(est.n_frames()))
      fail("frames must be consecutive from 0");
    const double conf = number(f[6]);
    if (f[3].empty() && f[4].empty() && f[5].empty()) {
      est.direction.emplace_back(Eigen::Vector3d::Zero());
      est.confidence.push_back(0.0);
      est.valid.push_back(false);
      continue;
    }
    Eigen::Vector3d u(number(f[3]), number(f[4]), number(f[5]));
    const double norm = u.norm();
    if (!(norm > 0.0)) fail("zero direction vector on a frame with a direction");
    est.direction.push_back(u / norm);
    est.confidence.push_back(conf);
    est.valid.push_back(true);
  }
  return est;
}

DoaEstimate read_doa_csv(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_doa_csv(ss.str(), path.string());
}

std::string metrics_report(const SeldMetrics& m) {
  std::ostringstream out;
  out << "localization_error_deg=" << fmt(m.localization_error_deg) << '\n'
      << "localization_recall=" << fmt(m.localization_recall) << '\n'
      << "threshold_deg=" << fmt(m.threshold_deg) << '\n'
      << "matched=" << m.matched << '\n'
      << "reference=" << m.reference << '\n';
  return out.str();
}

std::string metrics_csv(const SeldMetrics& m) {
  std::ostringstream out;
  out << "localization_error_deg,localization_recall,threshold_deg,matched,reference\n"
      << fmt(m.localization_error_deg) << ',' << fmt(m.localization_recall) << ','
      << fmt(m.threshold_deg) << ',' << m.matched << ',' << m.reference << '\n';
  return out.str();
}

}  // namespace spur
