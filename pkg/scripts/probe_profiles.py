"""Contrast bounded and diverging perturbation profiles on the registry.

The perturbed-KKT probe records, per radius r, the worst ratio
distance(solution, reference)/r over tilt/shift perturbations of norm r.
An isolated-calm solution map keeps the profile flat; the critical
multiplier of the squared-equality toy problem produces the r^(-1/2)
blow-up predicted by its closed-form perturbed solutions.
"""

import numpy as np

from conesqp import diagnostics, registry
from conesqp.problem import KKTPair

CASES = [
    ("ex55", KKTPair([0.0], [0.0])),
    ("ex55", KKTPair([2.0], [0.0])),
    ("qp_orthant", None),
    ("soc_toy", None),
    ("critical_toy", KKTPair([0.0], [-1.0])),
]


def main():
    for name, z in CASES:
        p = registry.load_problem(name)
        z = z or p.reference
        probe = diagnostics.probe_isolated_calmness(p, z)
        radii = " ".join(f"{s.max_ratio:>9.3g}" for s in probe.samples)
        print(f"{name:<14} lam={np.round(z.lam, 3)!s:<16} {radii}   -> {probe.profile}")
    print("\ncolumns: max ratio at r = " +
          ", ".join(f"{r:.0e}" for r in diagnostics.DiagnosticsConfig().probe_radii))


if __name__ == "__main__":
    main()
