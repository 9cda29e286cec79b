#pragma once

// Exact-oracle counterpart of the ensemble observables.

#include <vector>

#include "dctwa/engines.hpp"
#include "dctwa/exact_oracle.hpp"
#include "dctwa/sampling.hpp"

namespace dctwa::exact {

inline DensityMatrix initial_density(const std::vector<SpinState>& sites) {
  std::vector<Mat2> local;
  local.reserve(sites.size());
  for (const auto& s : sites) local.push_back(density_from_bloch(s.bloch()));
  return product_state(local);
}

/// Observable values of one density matrix, matching the ensemble definitions.
inline double observable_value(const DensityMatrix& rho, int n, const Observable& o, Boundary geometry) {
  switch (o.kind) {
    case ObservableKind::CollectiveX: return collective_moment(rho, n, LocalOp::X);
    case ObservableKind::CollectiveY: return collective_moment(rho, n, LocalOp::Y);
    case ObservableKind::CollectiveZ: return collective_moment(rho, n, LocalOp::Z);
    case ObservableKind::SiteZ: return site_expectation(rho, n, o.index, LocalOp::Z);
    case ObservableKind::RydbergCorrelator: {
      const auto pairs = pairs_at_distance(n, o.index, geometry);
      if (pairs.empty()) throw Error(ErrorCode::InvalidArgument, "no pairs at distance " + std::to_string(o.index));
      double acc = 0.0;
      for (const auto& [i, j] : pairs) acc += connected_correlator(rho, n, i, j, LocalOp::RR);
      return acc / static_cast<double>(pairs.size());
    }
  }
  return 0.0;
}

/// Exact series on the grid `times` (standard errors are zero).
inline ObservableSeries exact_series(const LindbladModel& model, const std::vector<SpinState>& initial,
                                     const std::vector<double>& times, const std::vector<Observable>& observables,
                                     Boundary geometry = Boundary::Periodic, const EvolveOptions& opt = {}) {
  if (static_cast<int>(initial.size()) != model.n_spins) throw Error(ErrorCode::DimensionMismatch, "initial state size");
  const auto snaps = evolve_exact(initial_density(initial), model, times, opt);
  ObservableSeries out;
  out.times = times;
  out.n_traj = 1;
  for (const auto& o : observables) {
    out.names.push_back(o.name());
    std::vector<double> m;
    for (const auto& r : snaps) m.push_back(observable_value(r, model.n_spins, o, geometry));
    out.means.push_back(std::move(m));
    out.std_errors.emplace_back(times.size(), 0.0);
  }
  return out;
}

}  // namespace dctwa::exact
