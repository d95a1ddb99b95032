#include "commands.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "spur/common.hpp"
#include "spur/config.hpp"
#include "spur/encoder.hpp"
#include "spur/scene.hpp"
#include "spur/seld.hpp"
#include "spur/sscv.hpp"
#include "spur/tensor_file.hpp"
#include "spur/wav.hpp"

namespace spur::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string provenance(const PipelineConfig& cfg, int sample_rate, int hop) {
  char buf[kProvenanceBytes + 1];
  std::snprintf(buf, sizeof buf, "spur cfg=%016" PRIx64 " sr=%d hop=%d", cfg.hash(), sample_rate, hop);
  return buf;
}

// Sample rate and hop recorded by `extract`, needed to place SSCV frames in time.
std::pair<int, int> rate_and_hop(const TensorFileHeader& h, const std::string& name) {
  int sr = 0, hop = 0;
  const auto at = h.provenance.find(" sr=");
  if (at == std::string::npos || std::sscanf(h.provenance.c_str() + at, " sr=%d hop=%d", &sr, &hop) != 2 ||
      sr <= 0 || hop <= 0)
    throw ValidationError(name + ": provenance '" + h.provenance + "' does not record sr= and hop=");
  return {sr, hop};
}

PipelineConfig load_config(const std::string& path) {
  return path.empty() ? PipelineConfig{} : load_pipeline_config(path);
}

bool has_magic(const fs::path& path, const char* magic) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  char head[8] = {};
  f.read(head, 8);
  return f.gcount() == 8 && std::memcmp(head, magic, 8) == 0;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

SscvTensor sscv_from_file(const TensorFile& tf, const std::string& name) {
  const auto& d = tf.header.dims;
  if (d.size() != 3 || d[2] != kSscvDim || d[0] == 0 || d[1] == 0)
    throw ValidationError(name + ": expected an SSCV tensor of shape (T, B, 16), got rank " +
                          std::to_string(d.size()));
  SscvTensor s(d[0], d[1], 0.0, kAbsolutePowerFloor);
  std::copy(tf.data.begin(), tf.data.end(), s.values().begin());
  return s;
}

std::vector<std::uint64_t> dims_json(const std::vector<std::uint64_t>& d) { return d; }

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string spec;
  bool random = false;
  int batch = 1;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::string format = "wxyz";
  bool pcm16 = false;
};

json cmd_simulate(const SimulateArgs& a) {
  if (a.spec.empty() == !a.random) throw ValidationError("simulate needs exactly one of a scene spec file or --random");
  if (a.batch < 1) throw ValidationError("--batch must be at least 1");
  const ChannelConvention conv = ChannelConvention::parse(a.format);
  const SampleEncoding enc = a.pcm16 ? SampleEncoding::Pcm16 : SampleEncoding::Float32;

  std::vector<SceneSpec> specs;
  if (!a.spec.empty()) {
    const SceneSpec base = load_scene_spec(a.spec);
    for (int i = 0; i < a.batch; ++i) {
      SceneSpec s = base;
      s.seed = a.seed.value_or(base.seed) + static_cast<std::uint64_t>(i);
      if (a.batch > 1) {
        char suffix[16];
        std::snprintf(suffix, sizeof suffix, "_%03d", i);
        s.name += suffix;
      }
      specs.push_back(std::move(s));
    }
  } else {
    const std::uint64_t seed = a.seed.value_or(0);
    for (int i = 0; i < a.batch; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "scene_%03d", i);
      specs.push_back(random_scene(RandomSceneConfig{}, seed + static_cast<std::uint64_t>(i), name));
    }
  }

  ensure_dir(a.out_dir);
  std::vector<std::string> outputs(2 * specs.size());
  std::vector<std::size_t> rows(specs.size());
  parallel_for(specs.size(), [&](std::size_t i) {
    const RenderedScene scene = render_scene(specs[i]);
    const fs::path wav = fs::path(a.out_dir) / (specs[i].name + ".wav");
    const fs::path csv = fs::path(a.out_dir) / (specs[i].name + ".csv");
    save_foa_wav(scene.audio, wav, conv, enc);
    export_metadata(scene.labels, csv);
    outputs[2 * i] = wav.string();
    outputs[2 * i + 1] = csv.string();
    rows[i] = scene.labels.rows.size();
  });
  json j = {{"command", "simulate"}, {"scenes", specs.size()}, {"outputs", outputs}};
  std::size_t total = 0;
  for (auto r : rows) total += r;
  j["label_rows"] = total;
  return j;
}

// ---------------------------------------------------------------- extract

struct ExtractArgs {
  std::string wav, out, config, convention = "wxyz";
  std::optional<double> alpha;
};

json cmd_extract(const ExtractArgs& a) {
  PipelineConfig cfg = load_config(a.config);
  if (a.alpha) cfg.extraction.alpha = *a.alpha;
  cfg.validate();
  const FoaClip clip = load_foa_wav(a.wav, ChannelConvention::parse(a.convention));
  const SscvTensor s = extract_features(clip, cfg.extraction);
  const std::vector<std::uint64_t> dims = {s.n_frames(), s.n_bands(), kSscvDim};
  const std::vector<float> data(s.values().begin(), s.values().end());
  write_tensor_file(a.out, dims, data, provenance(cfg, clip.sample_rate(), cfg.extraction.stft.hop));
  return {{"command", "extract"}, {"output", a.out}, {"dims", dims_json(dims)}};
}

// ---------------------------------------------------------------- encode

struct EncodeArgs {
  std::string sscv, out, config, weights, save_weights;
  std::optional<std::uint64_t> init_seed;
};

json cmd_encode(const EncodeArgs& a) {
  const PipelineConfig cfg = load_config(a.config);
  if (!a.weights.empty() && a.init_seed) throw ValidationError("give either --weights or --init-seed, not both");
  const TensorFile tf = read_tensor_file(a.sscv);
  const SscvTensor s = sscv_from_file(tf, a.sscv);

  EncoderWeights w;
  if (!a.weights.empty()) {
    w = load_weights(a.weights, cfg.encoder);
  } else if (a.init_seed) {
    w = init_weights(cfg.encoder, *a.init_seed);
  } else if (cfg.weights) {
    w = load_weights(*cfg.weights, cfg.encoder);
  } else {
    throw ValidationError("encode needs --weights, --init-seed, or [paths] weights in the config");
  }
  if (!a.save_weights.empty()) save_weights(w, a.save_weights);

  const TokenSequence tokens = encode(s, w, cfg.encoder);
  const auto& m = tokens.tokens;
  const std::vector<std::uint64_t> dims = {static_cast<std::uint64_t>(m.rows()),
                                           static_cast<std::uint64_t>(m.cols())};
  std::vector<float> data(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data[r * m.cols() + c] = static_cast<float>(m(r, c));
  const auto [sr, hop] = rate_and_hop(tf.header, a.sscv);
  write_tensor_file(a.out, dims, data, provenance(cfg, sr, hop));
  return {{"command", "encode"}, {"output", a.out}, {"dims", dims_json(dims)}};
}

// ---------------------------------------------------------------- doa

struct DoaArgs {
  std::string input, out, config, convention = "wxyz", weighting = "power";
};

json cmd_doa(const DoaArgs& a) {
  const PipelineConfig cfg = load_config(a.config);
  const BandWeighting weighting = parse_band_weighting(a.weighting);
  DoaEstimate est;
  if (has_magic(a.input, "SPURTNSR")) {
    const TensorFile tf = read_tensor_file(a.input);
    const auto [sr, hop] = rate_and_hop(tf.header, a.input);
    est = intensity_doa(devectorize(sscv_from_file(tf, a.input)), hop, sr, weighting);
  } else {
    const FoaClip clip = load_foa_wav(a.input, ChannelConvention::parse(a.convention));
    const auto cov = clip_covariance(clip, cfg.extraction.stft, cfg.extraction.n_mel_bands);
    est = intensity_doa(cov, cfg.extraction.stft.hop, clip.sample_rate(), weighting);
  }
  write_doa_csv(est, a.out);
  const auto valid = std::count(est.valid.begin(), est.valid.end(), true);
  return {{"command", "doa"}, {"output", a.out}, {"frames", est.n_frames()}, {"frames_with_direction", valid}};
}

// ---------------------------------------------------------------- eval / stats

void write_histograms(const AngleHistograms& h, const fs::path& dir) {
  ensure_dir(dir);
  write_text(dir / "azimuth_hist.csv", histogram_csv(h, true));
  write_text(dir / "elevation_hist.csv", histogram_csv(h, false));
  write_text(dir / "angle_hist.svg", histogram_svg(h));
}

struct EvalArgs {
  std::string doa, metadata, report, csv, hist;
  double threshold = 20.0;
};

json cmd_eval(const EvalArgs& a, std::ostream& out, bool quiet) {
  const DoaEstimate est = read_doa_csv(a.doa);
  const SeldFrameLabels ref = import_metadata(a.metadata);
  const SeldMetrics m = evaluate(est, ref, a.threshold);
  if (!a.report.empty()) write_text(a.report, metrics_report(m));
  if (!a.csv.empty()) write_text(a.csv, metrics_csv(m));
  if (!a.hist.empty()) write_histograms(corpus_stats(std::span(&ref, 1)), a.hist);
  if (!quiet) out << metrics_report(m);
  return {{"command", "eval"},
          {"localization_error_deg", m.localization_error_deg},
          {"localization_recall", m.localization_recall},
          {"threshold_deg", m.threshold_deg},
          {"matched", m.matched},
          {"reference", m.reference}};
}

struct StatsArgs {
  std::vector<std::string> inputs;
  std::string out_dir;
};

json cmd_stats(const StatsArgs& a, std::ostream& out, bool quiet) {
  std::vector<fs::path> files;
  for (const auto& in : a.inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(in))
        if (e.is_regular_file() && e.path().extension() == ".csv") found.push_back(e.path());
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.emplace_back(in);
    }
  }
  if (files.empty()) throw ValidationError("stats found no metadata CSV files");
  std::vector<SeldFrameLabels> corpus;
  for (const auto& f : files) corpus.push_back(import_metadata(f));
  const AngleHistograms h = corpus_stats(corpus);
  if (!a.out_dir.empty()) write_histograms(h, a.out_dir);
  if (!quiet) out << histogram_csv(h, true) << '\n' << histogram_csv(h, false);
  std::uint64_t rows = 0;
  for (auto c : h.azimuth) rows += c;
  return {{"command", "stats"}, {"files", files.size()}, {"rows", rows},
          {"azimuth", h.azimuth}, {"elevation", h.elevation}};
}

// ---------------------------------------------------------------- inspect

json cmd_inspect(const std::string& path, std::ostream& out, bool quiet) {
  json j = {{"command", "inspect"}, {"file", path}};
  if (has_magic(path, "SPURTNSR")) {
    const TensorFileHeader h = read_tensor_header(path);
    j["format"] = "SPURTNSR";
    j["version"] = h.version;
    j["dtype"] = "f32";
    j["dims"] = h.dims;
    j["provenance"] = h.provenance;
    if (!quiet) {
      out << "format: SPURTNSR v" << h.version << "\ndtype: f32\ndims: (";
      for (std::size_t i = 0; i < h.dims.size(); ++i) out << (i ? ", " : "") << h.dims[i];
      out << ")\nprovenance: " << h.provenance << '\n';
    }
  } else if (has_magic(path, "SPURWGT1")) {
    const auto tensors = read_weight_tensors(path);
    j["format"] = "SPURWGT1";
    json list = json::array();
    for (const auto& t : tensors) list.push_back({{"name", t.name}, {"shape", t.tensor.shape}});
    j["tensors"] = list;
    if (!quiet) {
      out << "format: SPURWGT1\ntensors: " << tensors.size() << '\n';
      for (const auto& t : tensors) out << "  " << t.name << ' ' << t.tensor.shape_string() << '\n';
    }
  } else {
    const WavAudio w = read_wav(path);
    const std::size_t n = w.channels.empty() ? 0 : w.channels[0].size();
    j["format"] = "WAV";
    j["channels"] = w.channels.size();
    j["sample_rate"] = w.sample_rate;
    j["samples"] = n;
    j["encoding"] = w.encoding == SampleEncoding::Pcm16 ? "pcm16" : "float32";
    if (!quiet)
      out << "format: WAV " << (w.encoding == SampleEncoding::Pcm16 ? "pcm16" : "float32")
          << "\nchannels: " << w.channels.size() << "\nsample_rate: " << w.sample_rate
          << "\nsamples: " << n << '\n';
  }
  return j;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spatial audio feature pipeline: FOA scene synthesis, covariance features, encoder, DoA evaluation",
               "spur"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  app.fallthrough();
  bool as_json = false;
  app.add_flag("--json", as_json, "Print machine-readable results and diagnostics");

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Render FOA scenes and their metadata");
  c_sim->add_option("spec", sim.spec, "Scene spec file");
  c_sim->add_flag("--random", sim.random, "Generate random scenes instead of reading a spec");
  c_sim->add_option("--batch", sim.batch, "Number of scenes (seed + index each)");
  c_sim->add_option("--seed", sim.seed, "Base seed");
  c_sim->add_option("-o,--out-dir", sim.out_dir, "Output directory");
  c_sim->add_option("--format", sim.format, "Output channel convention (wxyz, acn, acn/n3d, ...)");
  c_sim->add_flag("--pcm16", sim.pcm16, "Write 16-bit PCM instead of float32");

  ExtractArgs ext;
  auto* c_ext = app.add_subcommand("extract", "Compute SSCV features from a 4-channel WAV");
  c_ext->add_option("wav", ext.wav, "Input FOA WAV")->required();
  c_ext->add_option("-o,--out", ext.out, "Output tensor file")->required();
  c_ext->add_option("--config", ext.config, "Pipeline config file");
  c_ext->add_option("--alpha", ext.alpha, "Override the smoothing coefficient");
  c_ext->add_option("--convention", ext.convention, "Input channel convention");

  EncodeArgs enc;
  auto* c_enc = app.add_subcommand("encode", "Run the encoder on an SSCV tensor file");
  c_enc->add_option("sscv", enc.sscv, "Input SSCV tensor file")->required();
  c_enc->add_option("-o,--out", enc.out, "Output token tensor file")->required();
  c_enc->add_option("--config", enc.config, "Pipeline config file");
  c_enc->add_option("--weights", enc.weights, "Weights file");
  c_enc->add_option("--init-seed", enc.init_seed, "Use seeded random weights");
  c_enc->add_option("--save-weights", enc.save_weights, "Write the weights used");

  DoaArgs doa;
  auto* c_doa = app.add_subcommand("doa", "Per-frame intensity-vector direction estimates");
  c_doa->add_option("input", doa.input, "FOA WAV or SSCV tensor file")->required();
  c_doa->add_option("-o,--out", doa.out, "Output CSV")->required();
  c_doa->add_option("--config", doa.config, "Pipeline config file");
  c_doa->add_option("--convention", doa.convention, "Input channel convention (WAV input)");
  c_doa->add_option("--weighting", doa.weighting, "Band weighting: power or uniform");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Localization error and recall against metadata");
  c_eval->add_option("doa", ev.doa, "DoA CSV")->required();
  c_eval->add_option("metadata", ev.metadata, "Metadata CSV")->required();
  c_eval->add_option("--threshold", ev.threshold, "Matching threshold in degrees");
  c_eval->add_option("--report", ev.report, "Write the key=value report here");
  c_eval->add_option("--csv", ev.csv, "Write metrics CSV here");
  c_eval->add_option("--hist", ev.hist, "Write angle histograms of the metadata to this directory");

  StatsArgs st;
  auto* c_stats = app.add_subcommand("stats", "Azimuth/elevation histograms over metadata files");
  c_stats->add_option("inputs", st.inputs, "Metadata CSV files or directories")->required();
  c_stats->add_option("-o,--out-dir", st.out_dir, "Write histogram CSVs and SVG here");

  std::string inspect_path;
  auto* c_insp = app.add_subcommand("inspect", "Dump the header of a tensor, weights or WAV file");
  c_insp->add_option("file", inspect_path, "File to inspect")->required();

  std::string command = "spur";
  auto report_error = [&](int code, const char* kind, const std::string& msg) {
    if (as_json)
      err << json{{"status", "error"}, {"command", command}, {"exit_code", code}, {"kind", kind}, {"message", msg}}.dump()
          << '\n';
    else
      err << command << ": error: " << msg << '\n';
    return code;
  };

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    as_json = std::find(args.begin(), args.end(), "--json") != args.end();
    return report_error(kExitInvalid, "usage", e.what());
  }

  try {
    json result;
    const bool quiet = as_json;
    if (c_sim->parsed()) {
      command = "simulate";
      result = cmd_simulate(sim);
    } else if (c_ext->parsed()) {
      command = "extract";
      result = cmd_extract(ext);
    } else if (c_enc->parsed()) {
      command = "encode";
      result = cmd_encode(enc);
    } else if (c_doa->parsed()) {
      command = "doa";
      result = cmd_doa(doa);
    } else if (c_eval->parsed()) {
      command = "eval";
      result = cmd_eval(ev, out, quiet);
    } else if (c_stats->parsed()) {
      command = "stats";
      result = cmd_stats(st, out, quiet);
    } else {
      command = "inspect";
      result = cmd_inspect(inspect_path, out, quiet);
    }
    if (as_json) {
      result["status"] = "ok";
      out << result.dump() << '\n';
    }
    return kExitOk;
  } catch (const ValidationError& e) {
    return report_error(kExitInvalid, "validation", e.what());
  } catch (const IoError& e) {
    return report_error(kExitInvalid, "io", e.what());
  } catch (const std::exception& e) {
    return report_error(kExitInternal, "internal", e.what());
  }
}

}  // namespace spur::cli
