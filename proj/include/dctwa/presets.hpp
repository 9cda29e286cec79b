#pragma once

// Named model presets shared by the oracle, the engines and the harness.

#include <charconv>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dctwa/engines.hpp"
#include "dctwa/model.hpp"

namespace dctwa {

struct NamedState {
  std::string label;
  std::vector<SpinState> sites;
};

/// Numeric knobs a preset is built from; unset fields take the preset default.
struct PresetOverrides {
  std::optional<int> n_spins;
  std::optional<double> omega, coupling, alpha, gamma, kappa, g_over_gamma;
  std::optional<Boundary> boundary;
};

/// Resolved parameters of a preset.
struct PresetParams {
  int n_spins = 0;
  double omega = 0.3;
  double coupling = 1.0;
  double alpha = 6.0;
  double gamma = 0.01;
  double kappa = 0.01;
  double g_over_gamma = 2.0;
  Boundary boundary = Boundary::Periodic;
};

struct ModelPreset {
  std::string name;
  PresetParams params;
  LindbladModel lindblad;
  std::vector<NamedState> initial_states;  // first entry is the default
  EnsembleConfig config;
  std::vector<Observable> observables;
  std::vector<double> sweep;  // g/gamma values for the single-spin preset
  std::vector<std::string> engines;
};

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"rydberg_chain_fig2", "rydberg_corr_fig4",       "sampling_fig3",
                                              "single_spin_figD6",  "ising_all_to_all",        "driven_spin_steady_state",
                                              "rydberg_desk"};
  return names;
}

/// Spin state from a short label: up, down, +x, -x, +y, -y, +z, -z.
inline SpinState state_from_label(const std::string& s) {
  static const std::map<std::string, std::array<double, 3>> dirs{
      {"up", {0, 0, 1}},  {"+z", {0, 0, 1}},  {"down", {0, 0, -1}}, {"-z", {0, 0, -1}},
      {"+x", {1, 0, 0}},  {"-x", {-1, 0, 0}}, {"+y", {0, 1, 0}},    {"-y", {0, -1, 0}}};
  const auto it = dirs.find(s);
  if (it == dirs.end()) throw Error(ErrorCode::InvalidArgument, "unknown state label '" + s + "'");
  return SpinState::pure(it->second);
}

namespace detail {

inline std::vector<Observable> rydberg_observables(int n, int max_d) {
  std::vector<Observable> o = collective_observables();
  for (int d = 1; d <= std::min(max_d, n / 2); ++d) o.push_back({ObservableKind::RydbergCorrelator, d});
  return o;
}

inline LindbladModel single_spin_model(double g, double gamma) {
  LindbladModel m;
  m.n_spins = 1;
  m.fields.push_back({0, Axis::X, 0.5 * g});
  m.channels.push_back({ChannelKind::Decay, 0, gamma});
  return m;
}

inline PresetParams resolve(const PresetOverrides& o, PresetParams d) {
  d.n_spins = o.n_spins.value_or(d.n_spins);
  d.omega = o.omega.value_or(d.omega);
  d.coupling = o.coupling.value_or(d.coupling);
  d.alpha = o.alpha.value_or(d.alpha);
  d.gamma = o.gamma.value_or(d.gamma);
  d.kappa = o.kappa.value_or(d.kappa);
  d.g_over_gamma = o.g_over_gamma.value_or(d.g_over_gamma);
  d.boundary = o.boundary.value_or(d.boundary);
  if (d.n_spins < 1) throw Error(ErrorCode::InvalidArgument, "n_spins must be >= 1");
  return d;
}

inline ModelPreset rydberg_preset(std::string name, const PresetOverrides& o, int default_n) {
  PresetParams d;
  d.n_spins = default_n;
  const PresetParams p = resolve(o, d);
  ModelPreset out;
  out.name = std::move(name);
  out.params = p;
  out.lindblad = rydberg_model({p.n_spins, p.omega, p.coupling, p.alpha, p.boundary, p.gamma, p.kappa});
  out.initial_states = {{"down", std::vector<SpinState>(static_cast<std::size_t>(p.n_spins), SpinState::down())}};
  out.config.engine = Engine::DCTWA;
  out.config.scheme = SamplingScheme::ContinuousRing;
  out.config.n_traj = 20000;
  out.config.dt = 1e-2;
  out.config.t_max = 200.0;
  out.config.output_dt = 1.0;
  out.config.geometry = p.boundary;
  out.observables = collective_observables();
  return out;
}

}  // namespace detail

inline ModelPreset preset(const std::string& name, const PresetOverrides& o = {}) {
  if (name == "rydberg_chain_fig2") {
    auto out = detail::rydberg_preset(name, o, 10);
    out.config.scheme = SamplingScheme::TwoPoint;
    out.config.n_traj = 92000;
    out.engines = {"dctwa", "mean_field", "exact"};
    return out;
  }
  if (name == "rydberg_corr_fig4") {
    auto out = detail::rydberg_preset(name, o, 10);
    out.config.scheme = SamplingScheme::TwoPoint;
    out.config.n_traj = 92000;
    out.config.output_dt = 200.0;
    out.observables = detail::rydberg_observables(out.params.n_spins, out.params.n_spins / 2);
    out.engines = {"dctwa", "exact"};
    return out;
  }
  if (name == "sampling_fig3") {
    auto out = detail::rydberg_preset(name, o, 10);
    out.config.n_traj = 92000;
    out.engines = {"dctwa", "exact"};
    return out;
  }
  if (name == "rydberg_desk") {
    auto out = detail::rydberg_preset(name, o, 6);
    out.observables = detail::rydberg_observables(out.params.n_spins, 2);
    out.engines = {"dctwa", "mean_field", "exact"};
    return out;
  }
  if (name == "single_spin_figD6") {
    PresetParams d;
    d.n_spins = 1;
    d.gamma = 1.0;
    d.kappa = 0.0;
    const PresetParams p = detail::resolve(o, d);
    if (p.n_spins != 1) throw Error(ErrorCode::InvalidArgument, "single_spin_figD6 has one spin");
    ModelPreset out;
    out.name = name;
    out.params = p;
    out.lindblad = detail::single_spin_model(p.g_over_gamma * p.gamma, p.gamma);
    out.initial_states = {{"-z", {SpinState::down()}}, {"-y", {state_from_label("-y")}}};
    out.config.engine = Engine::DCTWA;
    out.config.scheme = SamplingScheme::TwoPoint;
    out.config.n_traj = 100000;
    out.config.dt = 1e-3 / p.gamma;
    out.config.t_max = 15.0 / p.gamma;
    out.config.output_dt = 0.25 / p.gamma;
    out.observables = collective_observables();
    out.sweep = {0.25, 0.5, 1.0, 2.0, 4.0, 8.0};
    out.engines = {"dctwa", "osdtwa", "exact"};
    return out;
  }
  if (name == "ising_all_to_all") {
    PresetParams d;
    d.n_spins = 8;
    d.gamma = 0.0;
    d.kappa = 0.0;
    const PresetParams p = detail::resolve(o, d);
    ModelPreset out;
    out.name = name;
    out.params = p;
    out.lindblad = ising_model(all_to_all_couplings(p.n_spins, p.coupling));
    out.initial_states = {{"+x", std::vector<SpinState>(static_cast<std::size_t>(p.n_spins), state_from_label("+x"))}};
    out.config.engine = Engine::DTWA;
    out.config.scheme = SamplingScheme::TwoPoint;
    out.config.n_traj = 1000;
    out.config.dt = 1e-4;
    out.config.t_max = 10.0;
    out.config.output_dt = 0.1;
    out.observables = collective_observables();
    out.engines = {"dtwa", "dctwa"};
    return out;
  }
  if (name == "driven_spin_steady_state") {
    PresetParams d;
    d.n_spins = 1;
    const PresetParams p = detail::resolve(o, d);
    if (p.n_spins != 1) throw Error(ErrorCode::InvalidArgument, "driven_spin_steady_state has one spin");
    ModelPreset out;
    out.name = name;
    out.params = p;
    out.lindblad = rydberg_model({1, p.omega, 0.0, p.alpha, Boundary::Open, p.gamma, p.kappa});
    out.initial_states = {{"down", {SpinState::down()}}};
    out.config.engine = Engine::DCTWA;
    out.config.scheme = SamplingScheme::ContinuousRing;
    out.config.n_traj = 20000;
    out.config.dt = 1e-2;
    out.config.t_max = 1500.0;
    out.config.output_dt = 10.0;
    out.observables = collective_observables();
    out.engines = {"dctwa", "mean_field", "exact"};
    return out;
  }
  throw Error(ErrorCode::UnknownPreset, "'" + name + "'");
}

/// Config-file text that reproduces the preset through the harness parser.
namespace detail {

inline std::string shortest(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace detail

inline std::string to_config_text(const ModelPreset& p) {
  using detail::shortest;
  std::ostringstream o;
  o << "preset = " << p.name << "\n";
  o << "n_spins = " << p.params.n_spins << "\n";
  o << "omega = " << shortest(p.params.omega) << "\n";
  o << "coupling = " << shortest(p.params.coupling) << "\n";
  o << "alpha = " << shortest(p.params.alpha) << "\n";
  o << "gamma = " << shortest(p.params.gamma) << "\n";
  o << "kappa = " << shortest(p.params.kappa) << "\n";
  o << "g_over_gamma = " << shortest(p.params.g_over_gamma) << "\n";
  o << "boundary = " << to_string(p.params.boundary) << "\n";
  o << "initial = " << p.initial_states.front().label << "\n";
  o << "t_max = " << shortest(p.config.t_max) << "\n";
  o << "dt = " << shortest(p.config.dt) << "\n";
  o << "output_dt = " << shortest(p.config.output_dt) << "\n";
  o << "seed = " << p.config.seed << "\n";
  o << "observables = ";
  for (std::size_t k = 0; k < p.observables.size(); ++k) o << (k ? ", " : "") << p.observables[k].name();
  o << "\n";
  o << "engines = ";
  for (std::size_t k = 0; k < p.engines.size(); ++k) o << (k ? ", " : "") << p.engines[k];
  o << "\n";
  for (const auto& e : p.engines) {
    o << "\n[" << e << "]\nengine = " << e << "\n";
    if (e == "dctwa" || e == "dtwa" || e == "osdtwa") {
      o << "sampling = " << to_string(p.config.scheme) << "\n";
      o << "n_traj = " << p.config.n_traj << "\n";
    }
  }
  return o.str();
}

}  // namespace dctwa
