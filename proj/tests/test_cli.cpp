#include <doctest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "commands.hpp"
#include "spur/seld.hpp"
#include "spur/tensor_file.hpp"
#include "spur/wav.hpp"
#include "test_util.hpp"

using namespace spur;
using nlohmann::json;
using spur::test::TempDir;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

void write_text(const std::filesystem::path& p, const std::string& s) { std::ofstream(p) << s; }

const char* kScene =
    "name = \"one\"\nduration = 2\nnoise_snr_db = 30\nseed = 3\n"
    "[[event]]\nsource = \"builtin:noise\"\nonset = 0.2\noffset = 1.8\nazimuth = -45\nelevation = 15\n";

}  // namespace

TEST_CASE("usage errors exit 2") {
  CHECK(run({}).code == cli::kExitInvalid);
  CHECK(run({"frobnicate"}).code == cli::kExitInvalid);
  CHECK(run({"extract"}).code == cli::kExitInvalid);
  const Result r = run({"--json", "extract"});
  CHECK(r.code == cli::kExitInvalid);
  const json j = json::parse(r.err);
  CHECK(j["status"] == "error");
  CHECK(j["kind"] == "usage");
  CHECK(run({"--version"}).code == cli::kExitOk);
}

TEST_CASE("full pipeline through the command layer") {
  TempDir dir("cli");
  write_text(dir / "one.toml", kScene);
  Result r = run({"simulate", (dir / "one.toml").string(), "-o", dir.path().string()});
  REQUIRE(r.code == 0);
  CHECK(std::filesystem::exists(dir / "one.wav"));
  CHECK(import_metadata(dir / "one.csv").rows.size() == 16);

  r = run({"--json", "extract", (dir / "one.wav").string(), "-o", (dir / "one.sscv").string()});
  REQUIRE(r.code == 0);
  json j = json::parse(r.out);
  CHECK(j["dims"] == json::array({198, 64, 16}));
  const TensorFileHeader h = read_tensor_header(dir / "one.sscv");
  CHECK(h.provenance.rfind("spur cfg=", 0) == 0);
  CHECK(h.provenance.find("sr=16000 hop=160") != std::string::npos);

  r = run({"--json", "encode", (dir / "one.sscv").string(), "-o", (dir / "one.tok").string(), "--init-seed", "5",
           "--save-weights", (dir / "w.bin").string()});
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["dims"] == json::array({32, 768}));
  r = run({"encode", (dir / "one.sscv").string(), "-o", (dir / "two.tok").string(), "--weights",
           (dir / "w.bin").string()});
  REQUIRE(r.code == 0);
  CHECK(test::read_bytes(dir / "one.tok") == test::read_bytes(dir / "two.tok"));

  for (const char* input : {"one.wav", "one.sscv"}) {
    r = run({"doa", (dir / input).string(), "-o", (dir / "doa.csv").string()});
    REQUIRE(r.code == 0);
    r = run({"--json", "eval", (dir / "doa.csv").string(), (dir / "one.csv").string(), "--report",
             (dir / "report.txt").string(), "--hist", (dir / "hist").string()});
    REQUIRE(r.code == 0);
    j = json::parse(r.out);
    CHECK(j["localization_recall"] == 1.0);
    CHECK(j["localization_error_deg"].get<double>() < 3.0);
  }
  CHECK(std::filesystem::exists(dir / "hist" / "azimuth_hist.csv"));
  CHECK(std::filesystem::exists(dir / "hist" / "angle_hist.svg"));
  std::ifstream report(dir / "report.txt");
  std::string first;
  std::getline(report, first);
  CHECK(first.rfind("localization_error_deg=", 0) == 0);

  r = run({"eval", (dir / "doa.csv").string(), (dir / "one.csv").string()});
  CHECK(r.out.find("localization_recall=1\n") != std::string::npos);

  for (const char* f : {"one.sscv", "w.bin", "one.wav"}) {
    r = run({"--json", "inspect", (dir / f).string()});
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out)["status"] == "ok");
  }
  r = run({"inspect", (dir / "one.sscv").string()});
  CHECK(r.out.find("dims: (198, 64, 16)") != std::string::npos);
}

TEST_CASE("simulate is deterministic for a seed") {
  TempDir a("cli"), b("cli");
  for (auto* d : {&a, &b})
    REQUIRE(run({"simulate", "--random", "--batch", "2", "--seed", "42", "-o", d->path().string()}).code == 0);
  for (const char* f : {"scene_000.wav", "scene_000.csv", "scene_001.wav", "scene_001.csv"}) {
    const auto x = test::read_bytes(a / f);
    CHECK_FALSE(x.empty());
    CHECK(x == test::read_bytes(b / f));
  }
  CHECK(test::read_bytes(a / "scene_000.wav") != test::read_bytes(a / "scene_001.wav"));
}

TEST_CASE("alpha 0 extraction matches the unsmoothed covariance") {
  TempDir dir("cli");
  const FoaClip clip = test::noise_clip(8000, 77);
  save_foa_wav(clip, dir / "n.wav", ChannelConvention::canonical());
  REQUIRE(run({"extract", (dir / "n.wav").string(), "-o", (dir / "n.sscv").string(), "--alpha", "0"}).code == 0);
  const FoaClip loaded = load_foa_wav(dir / "n.wav", ChannelConvention::canonical());
  const SscvTensor ref = vectorize(clip_covariance(loaded, StftConfig{}, 64), 1e-10);
  const TensorFile t = read_tensor_file(dir / "n.sscv");
  REQUIRE(t.data.size() == ref.values().size());
  for (std::size_t i = 0; i < t.data.size(); ++i) CHECK(t.data[i] == static_cast<float>(ref.values()[i]));
}

TEST_CASE("validation failures exit 2 with a message") {
  TempDir dir("cli");
  write_text(dir / "late.toml",
             "duration = 1\n[[event]]\nname = \"late\"\nsource = \"builtin:noise\"\nonset = 0.5\noffset = 1.5\n");
  Result r = run({"simulate", (dir / "late.toml").string(), "-o", dir.path().string()});
  CHECK(r.code == cli::kExitInvalid);
  CHECK(r.err.find("event 'late'") != std::string::npos);

  write_wav(dir / "stereo.wav", {{0.1, 0.2}, {0.3, 0.4}}, 16000, SampleEncoding::Float32);
  r = run({"--json", "extract", (dir / "stereo.wav").string(), "-o", (dir / "x.sscv").string()});
  CHECK(r.code == cli::kExitInvalid);
  CHECK(json::parse(r.err)["kind"] == "validation");
  CHECK_FALSE(std::filesystem::exists(dir / "x.sscv"));

  r = run({"extract", (dir / "missing.wav").string(), "-o", (dir / "x.sscv").string()});
  CHECK(r.code == cli::kExitInvalid);

  r = run({"simulate", "--random", "--alpha", "3"});
  CHECK(r.code == cli::kExitInvalid);

  r = run({"simulate", (dir / "late.toml").string(), "--random"});
  CHECK(r.code == cli::kExitInvalid);
}

TEST_CASE("weights that do not fit the config are rejected") {
  TempDir dir("cli");
  save_foa_wav(test::noise_clip(16000, 1), dir / "n.wav", ChannelConvention::canonical());
  REQUIRE(run({"extract", (dir / "n.wav").string(), "-o", (dir / "n.sscv").string()}).code == 0);
  write_text(dir / "small.toml", "[encoder]\nembed_dim = 64\nadapter_out_dim = 32\n");
  REQUIRE(run({"encode", (dir / "n.sscv").string(), "-o", (dir / "t.bin").string(), "--config",
               (dir / "small.toml").string(), "--init-seed", "1", "--save-weights", (dir / "small.w").string()})
              .code == 0);
  const Result r = run({"encode", (dir / "n.sscv").string(), "-o", (dir / "t2.bin").string(), "--weights",
                        (dir / "small.w").string()});
  CHECK(r.code == cli::kExitInvalid);
  CHECK(r.err.find("patch.weight") != std::string::npos);
  CHECK(run({"encode", (dir / "n.sscv").string(), "-o", (dir / "t3.bin").string()}).code == cli::kExitInvalid);
}

TEST_CASE("eval rejects DoA frames that do not tile the label frames") {
  TempDir dir("cli");
  write_text(dir / "d.csv",
             "# hop=150 sample_rate=16000\nframe,azimuth,elevation,x,y,z,confidence\n0,0,0,1,0,0,1\n");
  write_text(dir / "m.csv", "frame,class,track,azimuth,elevation,distance\n0,0,0,0,0,100\n");
  const Result r = run({"eval", (dir / "d.csv").string(), (dir / "m.csv").string()});
  CHECK(r.code == cli::kExitInvalid);
  CHECK(r.err.find("does not divide") != std::string::npos);

  write_text(dir / "bad.csv", "frame,class,track,azimuth,elevation,distance\n0,0,0,0,95,100\n");
  CHECK(run({"eval", (dir / "d.csv").string(), (dir / "bad.csv").string()}).code == cli::kExitInvalid);
}

TEST_CASE("stats over a directory") {
  TempDir dir("cli");
  write_text(dir / "a.csv", "frame,class,track,azimuth,elevation,distance\n0,0,0,5,5,100\n1,0,0,-175,-85,100\n");
  write_text(dir / "b.csv", "frame,class,track,azimuth,elevation,distance\n0,0,0,5,5,100\n");
  write_text(dir / "notes.txt", "ignored");
  const Result r = run({"--json", "stats", dir.path().string(), "-o", (dir / "out").string()});
  REQUIRE(r.code == 0);
  const json j = json::parse(r.out);
  CHECK(j["files"] == 2);
  CHECK(j["rows"] == 3);
  CHECK(j["azimuth"][18] == 2);
  CHECK(j["azimuth"][0] == 1);
  CHECK(j["elevation"][0] == 1);
  CHECK(std::filesystem::exists(dir / "out" / "elevation_hist.csv"));
  CHECK(run({"stats", (dir / "empty_dir_missing").string()}).code == cli::kExitInvalid);
}
