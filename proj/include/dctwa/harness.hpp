#pragma once

// Batch front-end: key-value configs, engine dispatch, CSV + JSON output,
// run comparison.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dctwa/engines.hpp"
#include "dctwa/exact_series.hpp"
#include "dctwa/mapping_verifier.hpp"
#include "dctwa/presets.hpp"
#include "dctwa/version.hpp"

namespace dctwa::harness {

struct EngineRun {
  std::string label;
  Engine engine = Engine::DCTWA;
  SamplingScheme scheme = SamplingScheme::ContinuousRing;
  std::size_t n_traj = 1000;
  double dt = 1e-2;
};

struct RunConfig {
  std::string source = "<string>";
  std::string text;
  std::string preset;  // empty for an inline model
  LindbladModel model;
  std::vector<SpinState> initial;
  std::string initial_label = "down";
  Boundary geometry = Boundary::Periodic;
  std::vector<Observable> observables;
  std::vector<EngineRun> engines;
  double t_max = 1.0;
  double output_dt = 0.1;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::string output_dir = "out";
};

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

inline std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

struct Entry {
  std::string value;
  int line = 0;
};

struct Section {
  std::string name;
  int line = 0;
  std::map<std::string, Entry> scalars;
  std::vector<std::pair<std::string, Entry>> ordered;  // every key in file order
};

class Diagnostics {
 public:
  explicit Diagnostics(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(int line, const std::string& field, const std::string& msg,
                         ErrorCode code = ErrorCode::ConfigInvalid) const {
    std::string where = source_;
    if (line > 0) where += ":" + std::to_string(line);
    if (!field.empty()) where += ": field '" + field + "'";
    throw Error(code, where + ": " + msg);
  }

 private:
  std::string source_;
};

inline double to_double(const Diagnostics& d, const std::string& key, const Entry& e) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(e.value, &pos);
    if (pos != e.value.size() || !std::isfinite(v)) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    d.fail(e.line, key, "expected a number, got '" + e.value + "'");
  }
}

inline long long to_integer(const Diagnostics& d, const std::string& key, const Entry& e) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(e.value, &pos);
    if (pos != e.value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    d.fail(e.line, key, "expected an integer, got '" + e.value + "'");
  }
}

inline std::vector<Section> tokenize(const std::string& text, const Diagnostics& d) {
  std::vector<Section> sections(1);
  std::istringstream is(text);
  std::string raw;
  int line = 0;
  while (std::getline(is, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']' || s.size() < 3) d.fail(line, "", "malformed section header '" + s + "'");
      Section sec;
      sec.name = trim(s.substr(1, s.size() - 2));
      sec.line = line;
      for (const auto& other : sections) {
        if (other.name == sec.name) d.fail(line, "", "duplicate section [" + sec.name + "]");
      }
      sections.push_back(std::move(sec));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) d.fail(line, "", "expected 'key = value', got '" + s + "'");
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (key.empty()) d.fail(line, "", "empty key");
    if (value.empty()) d.fail(line, key, "empty value");
    auto& sec = sections.back();
    sec.ordered.push_back({key, {value, line}});
  }
  return sections;
}

inline Engine parse_engine(const std::string& s, const Diagnostics& d, int line) {
  if (s == "dctwa") return Engine::DCTWA;
  if (s == "dtwa") return Engine::DTWA;
  if (s == "osdtwa") return Engine::OSDTWA;
  if (s == "mean_field" || s == "mean-field") return Engine::MeanField;
  if (s == "exact") return Engine::Exact;
  d.fail(line, "engine", "unknown engine '" + s + "' (dctwa, dtwa, osdtwa, mean_field, exact)");
}

inline SamplingScheme parse_scheme(const std::string& s, const Diagnostics& d, int line) {
  if (s == "2p") return SamplingScheme::TwoPoint;
  if (s == "4p") return SamplingScheme::FourPoint;
  if (s == "inf-p" || s == "infp" || s == "ring") return SamplingScheme::ContinuousRing;
  d.fail(line, "sampling", "unknown sampling scheme '" + s + "' (2p, 4p, inf-p)");
}

inline Boundary parse_boundary(const std::string& s, const Diagnostics& d, int line) {
  if (s == "periodic") return Boundary::Periodic;
  if (s == "open") return Boundary::Open;
  d.fail(line, "boundary", "expected periodic or open, got '" + s + "'");
}

inline Observable parse_observable(const std::string& s, const Diagnostics& d, int line) {
  if (s == "Sx") return {ObservableKind::CollectiveX, 0};
  if (s == "Sy") return {ObservableKind::CollectiveY, 0};
  if (s == "Sz") return {ObservableKind::CollectiveZ, 0};
  auto index_after = [&](const std::string& prefix) {
    const std::string rest = s.substr(prefix.size());
    if (rest.empty() || rest.find_first_not_of("0123456789") != std::string::npos) {
      d.fail(line, "observables", "bad index in '" + s + "'");
    }
    return std::stoi(rest);
  };
  if (s.rfind("sz_", 0) == 0) return {ObservableKind::SiteZ, index_after("sz_")};
  if (s.rfind("rr_corr_d", 0) == 0) return {ObservableKind::RydbergCorrelator, index_after("rr_corr_d")};
  d.fail(line, "observables", "unknown observable '" + s + "' (Sx, Sy, Sz, sz_<i>, rr_corr_d<d>)");
}

inline int parse_site(const std::string& s, const Diagnostics& d, int line, const std::string& key) {
  Entry e{s, line};
  return static_cast<int>(to_integer(d, key, e));
}

/// Terms of an inline [model] section.
inline LindbladModel parse_model(const Section& sec, const Diagnostics& d, Boundary& geometry) {
  LindbladModel m;
  m.n_spins = 0;
  for (const auto& [key, e] : sec.ordered) {
    if (key == "n_spins") m.n_spins = static_cast<int>(to_integer(d, key, e));
  }
  if (m.n_spins < 1) d.fail(sec.line, "n_spins", "[model] needs n_spins >= 1");
  auto sites = [&](const std::string& tok, const std::string& key, int line) {
    std::vector<int> out;
    if (tok == "all") {
      for (int s = 0; s < m.n_spins; ++s) out.push_back(s);
    } else {
      out.push_back(parse_site(tok, d, line, key));
    }
    return out;
  };
  for (const auto& [key, e] : sec.ordered) {
    const auto w = words(e.value);
    auto need = [&](std::size_t n, const char* form) {
      if (w.size() != n) d.fail(e.line, key, std::string("expected '") + form + "'");
    };
    auto num = [&](const std::string& tok) { return to_double(d, key, Entry{tok, e.line}); };
    if (key == "n_spins") continue;
    if (key == "boundary") {
      geometry = parse_boundary(e.value, d, e.line);
    } else if (key == "field") {
      need(3, "<site|all> <x|y|z> <coeff>");
      Axis a;
      if (w[1] == "x") a = Axis::X;
      else if (w[1] == "y") a = Axis::Y;
      else if (w[1] == "z") a = Axis::Z;
      else d.fail(e.line, key, "axis must be x, y or z");
      for (int s : sites(w[0], key, e.line)) m.fields.push_back({s, a, num(w[2])});
    } else if (key == "zz" || key == "projector") {
      need(3, "<i> <j> <coeff>");
      const int i = parse_site(w[0], d, e.line, key), j = parse_site(w[1], d, e.line, key);
      if (key == "zz") m.zz.push_back({i, j, num(w[2])});
      else m.projectors.push_back({i, j, num(w[2])});
    } else if (key == "dephasing" || key == "decay" || key == "pump") {
      need(2, "<site|all> <rate>");
      const ChannelKind k = key == "dephasing" ? ChannelKind::Dephasing
                            : key == "decay"   ? ChannelKind::Decay
                                               : ChannelKind::Pump;
      for (int s : sites(w[0], key, e.line)) m.channels.push_back({k, s, num(w[1])});
    } else {
      d.fail(e.line, key, "unsupported model term (field, zz, projector, dephasing, decay, pump)",
             ErrorCode::UnsupportedTerm);
    }
  }
  try {
    m.validate();
  } catch (const Error& err) {
    d.fail(sec.line, "model", err.what());
  }
  return m;
}

inline std::vector<SpinState> parse_initial(const Entry& e, int n, const Diagnostics& d) {
  const auto labels = split(e.value, ',');
  std::vector<SpinState> out;
  try {
    if (labels.size() == 1) {
      out.assign(static_cast<std::size_t>(n), state_from_label(labels[0]));
    } else if (static_cast<int>(labels.size()) == n) {
      for (const auto& l : labels) out.push_back(state_from_label(l));
    } else {
      d.fail(e.line, "initial", "give one label or one per site (" + std::to_string(n) + ")");
    }
  } catch (const Error& err) {
    if (err.code() == ErrorCode::ConfigInvalid) throw;
    d.fail(e.line, "initial", err.what());
  }
  return out;
}

}  // namespace detail

/// Rejects engine/channel combinations and oracle sizes before launch.
inline void validate(const RunConfig& c) {
  detail::Diagnostics d(c.source);
  if (c.engines.empty()) d.fail(0, "engines", "no engines requested");
  for (const auto& e : c.engines) {
    try {
      check_engine_channels(e.engine, c.model);
    } catch (const Error& err) {
      d.fail(0, e.label, err.what(), ErrorCode::EngineChannelMismatch);
    }
    if (e.engine == Engine::Exact && c.model.n_spins > exact::kMaxSpins) {
      d.fail(0, e.label, "exact oracle limited to " + std::to_string(exact::kMaxSpins) + " spins");
    }
    if (e.engine != Engine::Exact && e.engine != Engine::MeanField && e.n_traj < 1) {
      d.fail(0, e.label, "n_traj must be >= 1");
    }
    try {
      make_time_grid(e.dt, c.t_max, c.output_dt);
    } catch (const Error& err) {
      d.fail(0, e.label, err.what());
    }
  }
  for (const auto& o : c.observables) {
    if (o.kind == ObservableKind::SiteZ && (o.index < 0 || o.index >= c.model.n_spins)) {
      d.fail(0, "observables", o.name() + ": site out of range");
    }
    if (o.kind == ObservableKind::RydbergCorrelator && pairs_at_distance(c.model.n_spins, o.index, c.geometry).empty()) {
      d.fail(0, "observables", o.name() + ": no site pairs at this distance");
    }
  }
  if (static_cast<int>(c.initial.size()) != c.model.n_spins) d.fail(0, "initial", "wrong number of sites");
}

inline RunConfig parse_config(const std::string& text, const std::string& source = "<string>") {
  const detail::Diagnostics d(source);
  auto sections = detail::tokenize(text, d);
  for (auto& sec : sections) {
    for (const auto& [key, e] : sec.ordered) {
      const bool repeatable = sec.name == "model" && key != "n_spins" && key != "boundary";
      if (!repeatable && !sec.scalars.emplace(key, e).second) d.fail(e.line, key, "duplicate key");
    }
  }
  const auto& top = sections.front().scalars;
  static const std::set<std::string> top_keys{
      "preset", "n_spins", "omega",  "coupling",    "alpha", "gamma",   "kappa",   "g_over_gamma", "boundary",
      "initial", "t_max",  "dt",     "output_dt",   "seed",  "threads", "output",  "observables",  "engines",
      "n_traj",  "sampling"};
  for (const auto& [key, e] : top) {
    if (!top_keys.count(key)) d.fail(e.line, key, "unknown key");
  }
  const detail::Section* model_sec = nullptr;
  std::map<std::string, const detail::Section*> engine_secs;
  for (std::size_t k = 1; k < sections.size(); ++k) {
    if (sections[k].name == "model") model_sec = &sections[k];
    else engine_secs[sections[k].name] = &sections[k];
  }

  RunConfig c;
  c.source = source;
  c.text = text;
  auto get = [&](const std::string& key) -> const detail::Entry* {
    const auto it = top.find(key);
    return it == top.end() ? nullptr : &it->second;
  };
  auto real = [&](const std::string& key, double fallback) {
    const auto* e = get(key);
    return e ? detail::to_double(d, key, *e) : fallback;
  };

  std::optional<ModelPreset> pre;
  if (const auto* e = get("preset")) {
    if (model_sec) d.fail(model_sec->line, "model", "give either preset or [model], not both");
    PresetOverrides o;
    if (const auto* v = get("n_spins")) o.n_spins = static_cast<int>(detail::to_integer(d, "n_spins", *v));
    if (get("omega")) o.omega = real("omega", 0);
    if (get("coupling")) o.coupling = real("coupling", 0);
    if (get("alpha")) o.alpha = real("alpha", 0);
    if (get("gamma")) o.gamma = real("gamma", 0);
    if (get("kappa")) o.kappa = real("kappa", 0);
    if (get("g_over_gamma")) o.g_over_gamma = real("g_over_gamma", 0);
    if (const auto* b = get("boundary")) o.boundary = detail::parse_boundary(b->value, d, b->line);
    try {
      pre = preset(e->value, o);
    } catch (const Error& err) {
      if (err.code() == ErrorCode::UnknownPreset) throw;
      d.fail(e->line, "preset", err.what());
    }
    c.preset = pre->name;
    c.model = pre->lindblad;
    c.geometry = pre->config.geometry;
    c.initial = pre->initial_states.front().sites;
    c.initial_label = pre->initial_states.front().label;
    c.observables = pre->observables;
    c.t_max = pre->config.t_max;
    c.output_dt = pre->config.output_dt;
    c.seed = pre->config.seed;
  } else if (model_sec) {
    for (const char* k : {"n_spins", "omega", "coupling", "alpha", "gamma", "kappa", "g_over_gamma"}) {
      if (const auto* v = get(k)) d.fail(v->line, k, "preset parameter given without a preset");
    }
    c.model = detail::parse_model(*model_sec, d, c.geometry);
    c.initial.assign(static_cast<std::size_t>(c.model.n_spins), SpinState::down());
    c.observables = collective_observables();
  } else {
    d.fail(0, "preset", "config needs 'preset = <name>' or a [model] section");
  }
  if (const auto* b = get("boundary"); b && !pre) c.geometry = detail::parse_boundary(b->value, d, b->line);
  if (const auto* e = get("initial")) {
    c.initial = detail::parse_initial(*e, c.model.n_spins, d);
    c.initial_label = e->value;
  }
  c.t_max = real("t_max", c.t_max);
  c.output_dt = real("output_dt", c.output_dt);
  if (const auto* e = get("seed")) {
    const long long s = detail::to_integer(d, "seed", *e);
    if (s < 0) d.fail(e->line, "seed", "must be >= 0");
    c.seed = static_cast<std::uint64_t>(s);
  }
  if (const auto* e = get("threads")) {
    const long long t = detail::to_integer(d, "threads", *e);
    if (t < 1) d.fail(e->line, "threads", "must be >= 1");
    c.threads = static_cast<unsigned>(t);
  }
  if (const auto* e = get("output")) c.output_dir = e->value;
  if (const auto* e = get("observables")) {
    c.observables.clear();
    for (const auto& s : detail::split(e->value, ',')) c.observables.push_back(detail::parse_observable(s, d, e->line));
  }
  if (c.observables.empty()) d.fail(0, "observables", "no observables");

  const double default_dt = real("dt", pre ? pre->config.dt : 1e-2);
  long long default_traj = pre ? static_cast<long long>(pre->config.n_traj) : 1000;
  if (const auto* e = get("n_traj")) default_traj = detail::to_integer(d, "n_traj", *e);
  SamplingScheme default_scheme = pre ? pre->config.scheme : SamplingScheme::ContinuousRing;
  if (const auto* e = get("sampling")) default_scheme = detail::parse_scheme(e->value, d, e->line);

  std::vector<std::pair<std::string, int>> labels;
  if (const auto* e = get("engines")) {
    for (const auto& l : detail::split(e->value, ',')) labels.emplace_back(l, e->line);
  } else if (!engine_secs.empty()) {
    for (std::size_t k = 1; k < sections.size(); ++k) {
      if (sections[k].name != "model") labels.emplace_back(sections[k].name, sections[k].line);
    }
  } else if (pre) {
    for (const auto& l : pre->engines) labels.emplace_back(l, 0);
  }
  std::set<std::string> seen;
  for (const auto& [label, line] : labels) {
    if (!seen.insert(label).second) d.fail(line, "engines", "duplicate engine label '" + label + "'");
    EngineRun r;
    r.label = label;
    r.dt = default_dt;
    r.scheme = default_scheme;
    long long traj = default_traj;
    const auto it = engine_secs.find(label);
    if (it != engine_secs.end()) {
      const auto& s = it->second->scalars;
      static const std::set<std::string> keys{"engine", "sampling", "n_traj", "dt"};
      for (const auto& [key, e] : s) {
        if (!keys.count(key)) d.fail(e.line, key, "unknown key in [" + label + "]");
      }
      const auto eng = s.find("engine");
      r.engine = eng == s.end() ? detail::parse_engine(label, d, it->second->line)
                                : detail::parse_engine(eng->second.value, d, eng->second.line);
      if (const auto x = s.find("sampling"); x != s.end()) r.scheme = detail::parse_scheme(x->second.value, d, x->second.line);
      if (const auto x = s.find("n_traj"); x != s.end()) traj = detail::to_integer(d, "n_traj", x->second);
      if (const auto x = s.find("dt"); x != s.end()) r.dt = detail::to_double(d, "dt", x->second);
    } else {
      r.engine = detail::parse_engine(label, d, line);
    }
    if (traj < 1) d.fail(line, "n_traj", "must be >= 1");
    r.n_traj = static_cast<std::size_t>(traj);
    c.engines.push_back(r);
  }
  for (const auto& [name, sec] : engine_secs) {
    if (!seen.count(name)) d.fail(sec->line, name, "section not listed in 'engines'");
  }
  validate(c);
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigInvalid, path + ": cannot open config file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

// ---------------------------------------------------------------------------
// Running

struct EngineOutput {
  EngineRun run;
  ObservableSeries series;
  double wall_time = 0.0;
  std::map<std::string, std::string> files;  // observable -> file name
};

struct RunResult {
  std::string manifest_path;
  std::vector<EngineOutput> outputs;
  double wall_time = 0.0;
};

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_csv(const std::filesystem::path& path, const ObservableSeries& s, std::size_t q) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "time,mean,std_error\n";
  for (std::size_t k = 0; k < s.times.size(); ++k) {
    out << format_double(s.times[k]) << ',' << format_double(s.means[q][k]) << ','
        << format_double(s.std_errors[q][k]) << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

inline ObservableSeries run_engine(const RunConfig& c, const EngineRun& e) {
  EnsembleConfig cfg;
  cfg.engine = e.engine;
  cfg.scheme = e.scheme;
  cfg.n_traj = e.n_traj;
  cfg.dt = e.dt;
  cfg.t_max = c.t_max;
  cfg.output_dt = c.output_dt;
  cfg.seed = c.seed;
  cfg.threads = c.threads;
  cfg.geometry = c.geometry;
  if (e.engine == Engine::Exact) {
    const auto grid = make_time_grid(e.dt, c.t_max, c.output_dt);
    return exact::exact_series(c.model, c.initial, grid.times, c.observables, c.geometry);
  }
  if (e.engine == Engine::MeanField) return mean_field_run(c.model, c.initial, cfg, c.observables);
  return run_ensemble(c.model, c.initial, cfg, c.observables);
}

inline nlohmann::json config_json(const RunConfig& c) {
  nlohmann::json j;
  j["source"] = c.source;
  j["preset"] = c.preset;
  j["n_spins"] = c.model.n_spins;
  j["model"] = c.model.canonical();
  j["geometry"] = to_string(c.geometry);
  j["initial"] = c.initial_label;
  j["t_max"] = c.t_max;
  j["output_dt"] = c.output_dt;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["output"] = c.output_dir;
  std::vector<std::string> obs;
  for (const auto& o : c.observables) obs.push_back(o.name());
  j["observables"] = obs;
  j["text"] = c.text;
  return j;
}

/// Runs every engine of the config and writes one CSV per (engine,
/// observable) plus manifest.json into c.output_dir.
inline RunResult run(const RunConfig& c) {
  validate(c);
  namespace fs = std::filesystem;
  const auto start = std::chrono::steady_clock::now();
  const fs::path dir(c.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
  RunResult result;
  nlohmann::json manifest;
  manifest["version"] = kVersion;
  manifest["model_checksum"] = checksum_hex(c.model.checksum());
  manifest["config"] = config_json(c);
  manifest["engines"] = nlohmann::json::array();
  for (const auto& e : c.engines) {
    const auto t0 = std::chrono::steady_clock::now();
    EngineOutput out;
    out.run = e;
    out.series = run_engine(c, e);
    out.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    nlohmann::json je;
    je["label"] = e.label;
    je["engine"] = to_string(e.engine);
    je["sampling"] = to_string(e.scheme);
    je["n_traj"] = out.series.n_traj;
    je["dt"] = e.dt;
    je["wall_time_s"] = out.wall_time;
    je["model_checksum"] = checksum_hex(c.model.checksum());
    for (std::size_t q = 0; q < out.series.names.size(); ++q) {
      const std::string file = e.label + "_" + out.series.names[q] + ".csv";
      write_csv(dir / file, out.series, q);
      out.files[out.series.names[q]] = file;
      je["files"][out.series.names[q]] = file;
    }
    manifest["engines"].push_back(je);
    result.outputs.push_back(std::move(out));
  }
  result.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  manifest["wall_time_s"] = result.wall_time;
  result.manifest_path = (dir / "manifest.json").string();
  std::ofstream m(result.manifest_path);
  if (!m) throw Error(ErrorCode::IoError, "cannot write " + result.manifest_path);
  m << manifest.dump(2) << '\n';
  if (!m) throw Error(ErrorCode::IoError, "write failed for " + result.manifest_path);
  return result;
}

// ---------------------------------------------------------------------------
// Comparison

struct CsvSeries {
  std::vector<double> time, mean, std_error;
};

inline CsvSeries read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != "time,mean,std_error") {
    throw Error(ErrorCode::IoError, path.string() + ": missing header");
  }
  CsvSeries s;
  int n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split(line, ',');
    if (f.size() != 3) throw Error(ErrorCode::IoError, path.string() + ":" + std::to_string(n) + ": expected 3 columns");
    try {
      s.time.push_back(std::stod(f[0]));
      s.mean.push_back(std::stod(f[1]));
      s.std_error.push_back(std::stod(f[2]));
    } catch (const std::exception&) {
      throw Error(ErrorCode::IoError, path.string() + ":" + std::to_string(n) + ": bad number");
    }
  }
  return s;
}

struct RunSelection {
  std::filesystem::path dir;
  nlohmann::json manifest;
  nlohmann::json engine;
};

/// "path/to/manifest.json#label"; the directory alone also works; the label
/// may be omitted when the run has a single engine.
inline RunSelection select_run(const std::string& spec) {
  namespace fs = std::filesystem;
  std::string path = spec, label;
  if (const auto h = spec.rfind('#'); h != std::string::npos) {
    path = spec.substr(0, h);
    label = spec.substr(h + 1);
  }
  fs::path p(path);
  if (fs::is_directory(p)) p /= "manifest.json";
  std::ifstream in(p);
  if (!in) throw Error(ErrorCode::IoError, "cannot read manifest " + p.string());
  RunSelection r;
  r.dir = p.parent_path();
  try {
    in >> r.manifest;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::IoError, p.string() + ": " + e.what());
  }
  const auto& engines = r.manifest.at("engines");
  if (label.empty()) {
    if (engines.size() != 1) {
      throw Error(ErrorCode::InvalidArgument, p.string() + " holds " + std::to_string(engines.size()) +
                                                  " engines; select one with '#<label>'");
    }
    r.engine = engines[0];
    return r;
  }
  for (const auto& e : engines) {
    if (e.at("label") == label) {
      r.engine = e;
      return r;
    }
  }
  throw Error(ErrorCode::InvalidArgument, "no engine '" + label + "' in " + p.string());
}

struct ObservableComparison {
  std::string name;
  std::vector<double> time, diff, combined_std_error;
  std::vector<bool> within;
  double max_abs_diff = 0.0;
  bool all_within = true;
};

struct CompareReport {
  double k = 3.0;
  bool same_model = true;
  bool all_within = true;
  std::vector<ObservableComparison> observables;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["k"] = k;
    j["same_model"] = same_model;
    j["all_within"] = all_within;
    for (const auto& o : observables) {
      nlohmann::json x;
      x["name"] = o.name;
      x["time"] = o.time;
      x["diff"] = o.diff;
      x["combined_std_error"] = o.combined_std_error;
      x["within"] = o.within;
      x["max_abs_diff"] = o.max_abs_diff;
      x["all_within"] = o.all_within;
      j["observables"].push_back(x);
    }
    return j;
  }
};

/// Per-time-point check |a - b| <= k sqrt(se_a^2 + se_b^2) over the common
/// observables of two runs.
inline CompareReport compare(const std::string& spec_a, const std::string& spec_b, double k) {
  if (!(k >= 0.0)) throw Error(ErrorCode::InvalidArgument, "k must be >= 0");
  const auto a = select_run(spec_a);
  const auto b = select_run(spec_b);
  CompareReport r;
  r.k = k;
  r.same_model = a.manifest.at("model_checksum") == b.manifest.at("model_checksum");
  const auto& fa = a.engine.at("files");
  const auto& fb = b.engine.at("files");
  for (auto it = fa.begin(); it != fa.end(); ++it) {
    if (!fb.contains(it.key())) continue;
    const auto sa = read_csv(a.dir / it.value().get<std::string>());
    const auto sb = read_csv(b.dir / fb.at(it.key()).get<std::string>());
    if (sa.time.size() != sb.time.size()) {
      throw Error(ErrorCode::GridMismatch, it.key() + ": " + std::to_string(sa.time.size()) + " vs " +
                                               std::to_string(sb.time.size()) + " time points");
    }
    ObservableComparison o;
    o.name = it.key();
    for (std::size_t t = 0; t < sa.time.size(); ++t) {
      if (std::abs(sa.time[t] - sb.time[t]) > 1e-9 * std::max(1.0, std::abs(sa.time[t]))) {
        throw Error(ErrorCode::GridMismatch, it.key() + ": time " + format_double(sa.time[t]) + " vs " +
                                                 format_double(sb.time[t]));
      }
      const double diff = sa.mean[t] - sb.mean[t];
      const double se = std::hypot(sa.std_error[t], sb.std_error[t]);
      const bool ok = std::abs(diff) <= k * se;
      o.time.push_back(sa.time[t]);
      o.diff.push_back(diff);
      o.combined_std_error.push_back(se);
      o.within.push_back(ok);
      o.max_abs_diff = std::max(o.max_abs_diff, std::abs(diff));
      o.all_within = o.all_within && ok;
    }
    r.all_within = r.all_within && o.all_within;
    r.observables.push_back(std::move(o));
  }
  if (r.observables.empty()) throw Error(ErrorCode::GridMismatch, "runs share no observables");
  return r;
}

// ---------------------------------------------------------------------------
// Mapping report

inline nlohmann::json verify_mappings_report(int grid = 32) {
  nlohmann::json j;
  bool pass = true;
  const auto id = mapping::kernel_identity_grid(grid);
  j["sigma_z_identity"] = {{"grid", grid}, {"max_abs_residual", id.max_abs_residual},
                           {"mean_abs_residual", id.mean_abs_residual}, {"pass", id.max_abs_residual < 1e-12}};
  pass = pass && id.max_abs_residual < 1e-12;
  const auto angular = mapping::standard_angular_suite();
  const auto stereo = mapping::standard_stereographic_suite();
  for (const auto& m : mapping::all_mappings()) {
    const auto& suite = m.representation == mapping::Representation::Angular ? angular : stereo;
    double worst = 0.0;
    for (const auto& f : suite) worst = std::max(worst, mapping::adjoint_mapping_check(m, f).residual);
    j["mappings"].push_back({{"mapping", mapping::to_string(m)},
                             {"test_functions", suite.size()},
                             {"max_residual", worst},
                             {"pass", worst < 1e-6}});
    pass = pass && worst < 1e-6;
  }
  double gauge = 0.0;
  for (int l = 2; l <= 6; ++l) {
    for (int m = -l; m <= l; ++m) gauge = std::max(gauge, mapping::gauge_orthogonality_residual(l, m));
  }
  j["gauge_orthogonality"] = {{"l_range", {2, 6}}, {"max_residual", gauge}, {"pass", gauge < 1e-10}};
  pass = pass && gauge < 1e-10;
  j["pass"] = pass;
  return j;
}

/// Exit code class of an error: 1 for configuration problems, 2 otherwise.
inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigInvalid:
    case ErrorCode::EngineChannelMismatch:
    case ErrorCode::UnsupportedTerm:
    case ErrorCode::UnknownPreset:
    case ErrorCode::GridMismatch:
    case ErrorCode::InvalidArgument:
      return 1;
    default:
      return 2;
  }
}

}  // namespace dctwa::harness
