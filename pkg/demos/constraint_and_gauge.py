"""
The two Gaussian thermostats hold their constraints to rounding, and only
the isokinetic one is blind to how a constant force is split between the
potential and the driving field.

    python demos/constraint_and_gauge.py
"""

from dataclasses import replace

import numpy as np

from gausstat import IntegratorConfig, SystemSpec, ThermostatMode, initialize, run
from gausstat.forces import ForceFieldSpec, total_potential

n = 64
spec = SystemSpec.at_density(n, 0.4)
ff = ForceFieldSpec(1.0, 1.0, (0.5, 0.0), "alternating")

for kind, target in (("IK", 1.0 * n), ("IE", 1.5 * n)):
    mode = ThermostatMode(kind)
    x0 = initialize(1, spec, ff, mode, target)
    for proj in (True, False):
        rec = run(x0, IntegratorConfig(target=target, projection=proj), mode, spec, ff, 20_000, 10)
        obs = rec.K if kind == "IK" else rec.H
        print(f"{kind} projection={proj!s:5}  max |obs/target - 1| = "
              f"{np.max(np.abs(obs / target - 1)):.2e}   residual per step <= {rec.max_residual:.1e}")

# gauge: move g.q from the field into the potential. A wall along x keeps
# g.q single valued, which the IE energy needs.
walled = SystemSpec(1, 1, (np.sqrt(n / 0.4),) * 2, n)
base = ForceFieldSpec(1.0, 1.0, (0.0, 0.5), "alternating")
shifted = replace(base, gauge_shift=(0.3, 0.0))
for kind in ("IK", "IE"):
    mode = ThermostatMode(kind)
    x0 = initialize(2, walled, base, mode, 1.5 * n)
    t_shift = 1.5 * n
    if kind == "IE":
        t_shift += total_potential(x0, walled, shifted) - total_potential(x0, walled, base)
    a = run(x0, IntegratorConfig(target=1.5 * n), mode, walled, base, 10_000, 10_000).final_state
    b = run(x0, IntegratorConfig(target=t_shift), mode, walled, shifted, 10_000, 10_000).final_state
    print(f"{kind}: max state difference after 10^4 steps with shifted gauge = "
          f"{max(np.abs(a.q - b.q).max(), np.abs(a.p - b.p).max()):.3e}")
