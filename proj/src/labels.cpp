#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "spur/common.hpp"
#include "spur/scene.hpp"

namespace spur {
namespace {

constexpr const char* kHeader = "frame,class,track,azimuth,elevation,distance";

}  // namespace

std::string metadata_csv(const SeldFrameLabels& labels) {
  std::ostringstream out;
  out << kHeader << '\n';
  for (const auto& r : labels.rows)
    out << r.frame << ',' << r.class_index << ',' << r.track_index << ',' << r.azimuth << ','
        << r.elevation << ',' << r.distance << '\n';
  return out.str();
}

void export_metadata(const SeldFrameLabels& labels, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << metadata_csv(labels);
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

SeldFrameLabels parse_metadata(const std::string& text, const std::string& source_name) {
  SeldFrameLabels labels;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& why) {
    throw FormatError(source_name + ":" + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != kHeader) fail(std::string("expected header '") + kHeader + "'");
      continue;
    }
    if (line.empty()) continue;
    int v[6];
    std::size_t col = 0, pos = 0;
    while (true) {
      const std::size_t comma = line.find(',', pos);
      const std::string field = line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
      if (col >= 6) fail("expected 6 columns, found more");
      const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v[col]);
      if (ec != std::errc() || ptr != field.data() + field.size() || field.empty())
        fail("column " + std::to_string(col + 1) + " is not an integer: '" + field + "'");
      ++col;
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (col != 6) fail("expected 6 columns, found " + std::to_string(col));
    LabelRow r{v[0], v[1], v[2], v[3], v[4], v[5]};
    if (r.frame < 0 || r.class_index < 0 || r.track_index < 0)
      fail("frame, class and track must be non-negative");
    if (r.azimuth < -180 || r.azimuth >= 180)
      fail("azimuth " + std::to_string(r.azimuth) + " outside [-180, 180)");
    if (r.elevation < -90 || r.elevation > 90)
      fail("elevation " + std::to_string(r.elevation) + " outside [-90, 90]");
    if (r.distance < 0) fail("distance must be non-negative");
    labels.rows.push_back(r);
  }
  if (line_no == 0) throw FormatError(source_name + ": empty file (missing header)");
  std::sort(labels.rows.begin(), labels.rows.end());
  return labels;
}

SeldFrameLabels import_metadata(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_metadata(ss.str(), path.string());
}

AngleHistograms corpus_stats(std::span<const SeldFrameLabels> corpus) {
  AngleHistograms h;
  for (const auto& labels : corpus)
    for (const auto& r : labels.rows) {
      const int az = std::clamp((r.azimuth + 180) / 10, 0, 35);
      const int el = std::clamp((r.elevation + 90) / 10, 0, 17);
      ++h.azimuth[az];
      ++h.elevation[el];
    }
  return h;
}

std::string histogram_csv(const AngleHistograms& h, bool azimuth) {
  std::ostringstream out;
  out << "bin_start,bin_end,count\n";
  const int origin = azimuth ? -180 : -90;
  const std::size_t n = azimuth ? h.azimuth.size() : h.elevation.size();
  for (std::size_t i = 0; i < n; ++i) {
    const int lo = origin + 10 * static_cast<int>(i);
    out << lo << ',' << lo + 10 << ',' << (azimuth ? h.azimuth[i] : h.elevation[i]) << '\n';
  }
  return out.str();
}

std::string histogram_svg(const AngleHistograms& h) {
  constexpr int width = 760, panel = 220, margin = 40;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << 2 * panel + 3 * margin << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  auto draw = [&](const auto& bins, int origin, int top, const char* title) {
    const std::uint64_t peak = std::max<std::uint64_t>(1, *std::max_element(bins.begin(), bins.end()));
    const double bar = static_cast<double>(width - 2 * margin) / bins.size();
    svg << "<text x=\"" << margin << "\" y=\"" << top - 8 << "\">" << title << "</text>\n";
    svg << "<line x1=\"" << margin << "\" y1=\"" << top + panel << "\" x2=\"" << width - margin
        << "\" y2=\"" << top + panel << "\" stroke=\"black\"/>\n";
    for (std::size_t i = 0; i < bins.size(); ++i) {
      const double hgt = static_cast<double>(panel) * bins[i] / peak;
      svg << "<rect x=\"" << margin + i * bar << "\" y=\"" << top + panel - hgt << "\" width=\""
          << bar * 0.9 << "\" height=\"" << hgt << "\" fill=\"#4a78b5\"/>\n";
      if (i % 3 == 0)
        svg << "<text x=\"" << margin + i * bar << "\" y=\"" << top + panel + 14 << "\">"
            << origin + 10 * static_cast<int>(i) << "</text>\n";
    }
  };
  draw(h.azimuth, -180, margin, "azimuth (deg)");
  draw(h.elevation, -90, 2 * margin + panel, "elevation (deg)");
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace spur
