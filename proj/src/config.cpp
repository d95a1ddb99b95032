#include "spur/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "spur/common.hpp"

namespace spur {
namespace {

class Parser {
 public:
  Parser(const std::string& text, std::string source) : s_(text), source_(std::move(source)) {}

  ConfigTable parse() {
    ConfigTable root;
    ConfigTable* current = &root;
    std::set<std::string> seen_tables;
    while (true) {
      skip_blank_lines();
      if (at_end()) break;
      if (peek() == '[') {
        const bool array = s_.compare(pos_, 2, "[[") == 0;
        pos_ += array ? 2 : 1;
        skip_inline_space();
        const std::string name = key();
        skip_inline_space();
        expect(array ? "]]" : "]");
        end_of_line();
        if (array) {
          auto& list = root.arrays[name];
          list.emplace_back();
          current = &list.back();
        } else {
          if (!seen_tables.insert(name).second || root.arrays.count(name))
            fail("table [" + name + "] defined twice");
          current = &root.tables[name];
        }
        continue;
      }
      const int line = line_;
      const std::string k = key();
      skip_inline_space();
      expect("=");
      skip_inline_space();
      ConfigValue v = value();
      v.line = line;
      end_of_line();
      if (!current->values.emplace(k, std::move(v)).second) fail("duplicate key '" + k + "'", line);
    }
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& why, int line = 0) const {
    throw FormatError(source_ + ":" + std::to_string(line ? line : line_) + ": " + why);
  }

  bool at_end() const { return pos_ >= s_.size(); }
  char peek() const { return at_end() ? '\0' : s_[pos_]; }

  void advance() {
    if (s_[pos_] == '\n') ++line_;
    ++pos_;
  }

  void skip_inline_space() {
    while (!at_end() && (peek() == ' ' || peek() == '\t')) ++pos_;
  }

  void skip_comment() {
    if (peek() == '#')
      while (!at_end() && peek() != '\n') ++pos_;
  }

  void skip_blank_lines() {
    while (!at_end()) {
      skip_inline_space();
      skip_comment();
      if (peek() == '\r') ++pos_;
      if (peek() != '\n') return;
      advance();
    }
  }

  // Whitespace, comments and newlines, used inside arrays.
  void skip_any_space() {
    while (!at_end()) {
      const char c = peek();
      if (c == ' ' || c == '\t' || c == '\r' || c == '\n')
        advance();
      else if (c == '#')
        skip_comment();
      else
        return;
    }
  }

  void end_of_line() {
    skip_inline_space();
    skip_comment();
    if (peek() == '\r') ++pos_;
    if (at_end()) return;
    if (peek() != '\n') fail(std::string("unexpected '") + peek() + "' after value");
    advance();
  }

  void expect(const std::string& token) {
    if (s_.compare(pos_, token.size(), token) != 0) fail("expected '" + token + "'");
    pos_ += token.size();
  }

  std::string key() {
    const std::size_t start = pos_;
    while (!at_end() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-'))
      ++pos_;
    if (pos_ == start) fail("expected a key");
    return s_.substr(start, pos_ - start);
  }

  ConfigValue value() {
    const char c = peek();
    if (c == '"') return {string()};
    if (c == '[') return {array()};
    if (s_.compare(pos_, 4, "true") == 0) {
      pos_ += 4;
      return {true};
    }
    if (s_.compare(pos_, 5, "false") == 0) {
      pos_ += 5;
      return {false};
    }
    return {number()};
  }

  std::string string() {
    ++pos_;
    std::string out;
    while (true) {
      if (at_end() || peek() == '\n') fail("unterminated string");
      const char c = s_[pos_++];
      if (c == '"') return out;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (at_end()) fail("unterminated string");
      switch (s_[pos_++]) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        default: fail("unsupported escape in string");
      }
    }
  }

  double number() {
    const std::size_t start = pos_;
    while (!at_end() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '+' ||
                         peek() == '-' || peek() == '.'))
      ++pos_;
    const std::string tok = s_.substr(start, pos_ - start);
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (tok.empty() || end != tok.c_str() + tok.size() || !std::isfinite(v))
      fail("invalid value '" + tok + "'");
    return v;
  }

  std::vector<ConfigValue> array() {
    ++pos_;
    std::vector<ConfigValue> out;
    while (true) {
      skip_any_space();
      if (at_end()) fail("unterminated array");
      if (peek() == ']') {
        ++pos_;
        return out;
      }
      ConfigValue v = value();
      v.line = line_;
      out.push_back(std::move(v));
      skip_any_space();
      if (at_end()) fail("unterminated array");
      if (peek() == ',') {
        ++pos_;
      } else if (peek() != ']') {
        fail("expected ',' or ']' in array");
      }
    }
  }

  const std::string& s_;
  std::string source_;
  std::size_t pos_ = 0;
  int line_ = 1;
};

// Typed accessor that remembers which keys were read so leftovers can be
// reported as unknown.
class TableReader {
 public:
  TableReader(const ConfigTable& t, std::string source, std::string where)
      : t_(t), source_(std::move(source)), where_(std::move(where)) {}

  [[noreturn]] void fail(const ConfigValue* v, const std::string& why) const {
    std::string loc = source_;
    if (v && v->line > 0) loc += ":" + std::to_string(v->line);
    throw ValidationError(loc + ": " + why);
  }

  const ConfigValue* find(const std::string& key) {
    used_.insert(key);
    const auto it = t_.values.find(key);
    return it == t_.values.end() ? nullptr : &it->second;
  }

  std::optional<double> number(const std::string& key) {
    const ConfigValue* v = find(key);
    if (!v) return std::nullopt;
    if (const double* d = std::get_if<double>(&v->value)) return *d;
    fail(v, where_ + "'" + key + "' must be a number");
  }

  std::optional<long long> integer(const std::string& key) {
    const auto d = number(key);
    if (!d) return std::nullopt;
    if (std::floor(*d) != *d || std::abs(*d) > 9.007199254740992e15)
      fail(find(key), where_ + "'" + key + "' must be an integer");
    return static_cast<long long>(*d);
  }

  std::optional<std::string> string(const std::string& key) {
    const ConfigValue* v = find(key);
    if (!v) return std::nullopt;
    if (const auto* s = std::get_if<std::string>(&v->value)) return *s;
    fail(v, where_ + "'" + key + "' must be a string");
  }

  void finish() const {
    for (const auto& [k, v] : t_.values)
      if (!used_.count(k)) fail(&v, "unknown key " + where_ + "'" + k + "'");
  }

 private:
  const ConfigTable& t_;
  std::string source_;
  std::string where_;
  std::set<std::string> used_;
};

int to_int(long long v, const std::string& key, const std::string& source) {
  if (v < -2147483647LL || v > 2147483647LL) throw ValidationError(source + ": '" + key + "' out of range");
  return static_cast<int>(v);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<double> number_list(const ConfigValue& v, TableReader& r, const std::string& what) {
  const auto* arr = std::get_if<std::vector<ConfigValue>>(&v.value);
  if (!arr) r.fail(&v, what + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& e : *arr) {
    const double* d = std::get_if<double>(&e.value);
    if (!d) r.fail(&v, what + " must be an array of numbers");
    out.push_back(*d);
  }
  return out;
}

}  // namespace

ConfigTable parse_config_text(const std::string& text, const std::string& source_name) {
  return Parser(text, source_name).parse();
}

void PipelineConfig::validate() const {
  extraction.validate();
  encoder.validate();
}

std::string PipelineConfig::canonical_string() const {
  std::ostringstream out;
  out.precision(17);
  const auto& s = extraction.stft;
  out << "n_fft=" << s.n_fft << ";win_length=" << s.win_length << ";hop=" << s.hop
      << ";window=" << to_string(s.window) << ";n_mel_bands=" << extraction.n_mel_bands
      << ";alpha=" << extraction.alpha << ";epsilon=" << extraction.epsilon << ";conv_channels=";
  for (std::size_t i = 0; i < encoder.conv_channels.size(); ++i)
    out << (i ? "," : "") << encoder.conv_channels[i];
  out << ";embed_dim=" << encoder.embed_dim << ";n_layers=" << encoder.n_layers
      << ";n_heads=" << encoder.n_heads << ";ffn_mult=" << encoder.ffn_mult
      << ";adapter_out_dim=" << encoder.adapter_out_dim << ";max_patches=" << encoder.max_patches
      << ";seed=" << seed << ";";
  return out.str();
}

std::uint64_t PipelineConfig::hash() const { return fnv1a64(canonical_string()); }

PipelineConfig pipeline_config_from_table(const ConfigTable& table, const std::string& source_name,
                                          const std::filesystem::path& base_dir) {
  PipelineConfig cfg;
  TableReader top(table, source_name, "");
  auto& st = cfg.extraction.stft;
  if (auto v = top.integer("n_fft")) st.n_fft = to_int(*v, "n_fft", source_name);
  if (auto v = top.integer("win_length")) st.win_length = to_int(*v, "win_length", source_name);
  if (auto v = top.integer("hop")) st.hop = to_int(*v, "hop", source_name);
  if (auto v = top.string("window")) st.window = parse_window(*v);
  if (auto v = top.integer("n_mel_bands")) cfg.extraction.n_mel_bands = to_int(*v, "n_mel_bands", source_name);
  if (auto v = top.number("alpha")) cfg.extraction.alpha = *v;
  if (auto v = top.number("epsilon")) cfg.extraction.epsilon = *v;
  if (auto v = top.integer("seed")) {
    if (*v < 0) top.fail(top.find("seed"), "'seed' must be non-negative");
    cfg.seed = static_cast<std::uint64_t>(*v);
  }
  top.finish();

  for (const auto& [name, sub] : table.tables) {
    if (name == "encoder") {
      TableReader enc(sub, source_name, "[encoder] ");
      auto& e = cfg.encoder;
      if (const ConfigValue* v = enc.find("conv_channels")) {
        e.conv_channels.clear();
        for (double c : number_list(*v, enc, "[encoder] 'conv_channels'")) {
          if (std::floor(c) != c || c < 1 || c > 1e6)
            enc.fail(v, "[encoder] 'conv_channels' entries must be positive integers");
          e.conv_channels.push_back(static_cast<int>(c));
        }
      }
      if (auto v = enc.integer("embed_dim")) e.embed_dim = to_int(*v, "embed_dim", source_name);
      if (auto v = enc.integer("n_layers")) e.n_layers = to_int(*v, "n_layers", source_name);
      if (auto v = enc.integer("n_heads")) e.n_heads = to_int(*v, "n_heads", source_name);
      if (auto v = enc.integer("ffn_mult")) e.ffn_mult = to_int(*v, "ffn_mult", source_name);
      if (auto v = enc.integer("adapter_out_dim")) e.adapter_out_dim = to_int(*v, "adapter_out_dim", source_name);
      if (auto v = enc.integer("max_patches")) e.max_patches = to_int(*v, "max_patches", source_name);
      enc.finish();
      if (!sub.tables.empty() || !sub.arrays.empty())
        throw ValidationError(source_name + ": [encoder] has no sub-tables");
    } else if (name == "paths") {
      TableReader paths(sub, source_name, "[paths] ");
      if (auto v = paths.string("weights")) {
        std::filesystem::path p(*v);
        cfg.weights = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
      }
      paths.finish();
    } else {
      throw ValidationError(source_name + ": unknown section [" + name + "]");
    }
  }
  if (!table.arrays.empty())
    throw ValidationError(source_name + ": unknown section [[" + table.arrays.begin()->first + "]]");
  try {
    cfg.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(source_name + ": " + e.what());
  }
  return cfg;
}

PipelineConfig parse_pipeline_config(const std::string& text, const std::string& source_name,
                                     const std::filesystem::path& base_dir) {
  return pipeline_config_from_table(parse_config_text(text, source_name), source_name, base_dir);
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  return parse_pipeline_config(read_file(path), path.string(), path.parent_path());
}

SceneSpec scene_spec_from_table(const ConfigTable& table, const std::string& source_name,
                                const std::filesystem::path& base_dir) {
  SceneSpec spec;
  spec.base_dir = base_dir;
  TableReader top(table, source_name, "");
  if (auto v = top.string("name")) spec.name = *v;
  if (auto v = top.number("duration")) spec.duration = *v;
  if (auto v = top.integer("sample_rate")) spec.sample_rate = to_int(*v, "sample_rate", source_name);
  if (auto v = top.number("noise_snr_db")) spec.noise_snr_db = *v;
  if (auto v = top.integer("seed")) {
    if (*v < 0) top.fail(top.find("seed"), "'seed' must be non-negative");
    spec.seed = static_cast<std::uint64_t>(*v);
  }
  if (auto v = top.number("reverb_rt60")) spec.reverb_rt60 = *v;
  if (auto v = top.number("reverb_level_db")) spec.reverb_level_db = *v;
  top.finish();
  if (!table.tables.empty())
    throw ValidationError(source_name + ": unknown section [" + table.tables.begin()->first + "]");
  for (const auto& [name, list] : table.arrays)
    if (name != "event") throw ValidationError(source_name + ": unknown section [[" + name + "]]");

  const auto it = table.arrays.find("event");
  const std::vector<ConfigTable> none;
  const auto& events = it == table.arrays.end() ? none : it->second;
  for (std::size_t i = 0; i < events.size(); ++i) {
    EventSpec ev;
    ev.name = "event" + std::to_string(i);
    TableReader r(events[i], source_name, "[[event]] ");
    if (auto v = r.string("name")) ev.name = *v;
    const auto source = r.string("source");
    if (!source) throw ValidationError(source_name + ": event '" + ev.name + "' has no 'source'");
    ev.source = *source;
    if (auto v = r.integer("class")) ev.class_index = to_int(*v, "class", source_name);
    if (auto v = r.integer("track")) ev.track_index = to_int(*v, "track", source_name);
    else ev.track_index = static_cast<int>(i);
    const auto onset = r.number("onset");
    const auto offset = r.number("offset");
    if (!onset || !offset)
      throw ValidationError(source_name + ": event '" + ev.name + "' needs 'onset' and 'offset'");
    ev.onset = *onset;
    ev.offset = *offset;
    if (auto v = r.number("gain_db")) ev.gain_db = *v;

    const ConfigValue* traj = r.find("trajectory");
    const auto az = r.number("azimuth");
    const auto el = r.number("elevation");
    const auto dist = r.number("distance");
    if (traj) {
      if (az || el || dist)
        r.fail(traj, "event '" + ev.name + "' gives both a trajectory and a static position");
      const auto* rows = std::get_if<std::vector<ConfigValue>>(&traj->value);
      if (!rows || rows->empty()) r.fail(traj, "event '" + ev.name + "' trajectory must be a non-empty array");
      for (const auto& row : *rows) {
        const auto k = number_list(row, r, "event '" + ev.name + "' trajectory row");
        if (k.size() != 4) r.fail(&row, "event '" + ev.name + "' trajectory rows are [time, azimuth, elevation, distance]");
        ev.trajectory.keys.push_back({k[0], k[1], k[2], k[3]});
      }
    } else {
      const Trajectory fixed = Trajectory::fixed(az.value_or(0.0), el.value_or(0.0), dist.value_or(1.0));
      Keyframe a = fixed.keys.front(), b = a;
      a.time = ev.onset;
      b.time = ev.offset;
      ev.trajectory.keys = {a, b};
    }
    r.finish();
    if (!events[i].tables.empty() || !events[i].arrays.empty())
      throw ValidationError(source_name + ": event '" + ev.name + "' has unexpected sub-tables");
    spec.events.push_back(std::move(ev));
  }
  spec.validate();
  return spec;
}

SceneSpec parse_scene_spec(const std::string& text, const std::string& source_name,
                           const std::filesystem::path& base_dir) {
  return scene_spec_from_table(parse_config_text(text, source_name), source_name, base_dir);
}

SceneSpec load_scene_spec(const std::filesystem::path& path) {
  return parse_scene_spec(read_file(path), path.string(), path.parent_path());
}

}  // namespace spur
