"""Limit-point versus limit-circle on the two textbook potentials.

-u'' + x^2 u is limit point at both ends, so the minimal operator has a single
self-adjoint extension.  For -u'' - x^4 u the solutions oscillate ever faster
but stay square integrable, which is the limit-circle signature.

Run with ``python3 demos/weyl_probe.py``.
"""

import math

from cauchy_spectral.probe import weyl_classify

LINE = (("-", -math.inf), ("+", math.inf))

for V in ("x^2", "-x^4"):
    for step in (0.05, 0.025):
        v = weyl_classify("1", "1", V, LINE, step=step)
        kinds = ", ".join(f"{e.side}: {e.classification}" for e in v.ends)
        print(f"V = {V:5s} step {step:<6} {kinds}; esa = {v.esa}; "
              f"Wronskian drift {v.wronskian_drift:.1e}")
