#pragma once

#include "v2vd2d/errors.hpp"

namespace v2vd2d {

/// Timing coefficients shared by the analytic delay and the simulator. None of
/// these values come from measurements; they are configurable placeholders.
struct DelayModel {
  double t_proc = 0.002;                     ///< s per hop
  double t_access = 0.0005;                  ///< s per neighbor of the sender
  double t_d2d_discovery_on_demand = 0.200;  ///< s, discovery started at the dead end
  double t_d2d_discovery_proactive = 0.0;    ///< s, discovery already done
  double t_d2d_setup = 0.050;                ///< s
  double t_d2d_tx = 0.010;                   ///< s
  double t_cellular_fallback = 0.100;        ///< s, uplink straight to the TCC
  double carry_step = 0.5;                   ///< s, mobility tick while carrying
  double carry_budget = 60.0;                ///< s of carrying before giving up

  void validate() const {
    for (double v : {t_proc, t_access, t_d2d_discovery_on_demand, t_d2d_discovery_proactive, t_d2d_setup,
                     t_d2d_tx, t_cellular_fallback, carry_budget}) {
      if (!(v >= 0.0)) throw DomainError("delay coefficients must be non-negative");
    }
    if (!(carry_step > 0.0)) throw DomainError("carry_step must be > 0");
  }

  bool operator==(const DelayModel&) const = default;
};

}  // namespace v2vd2d
