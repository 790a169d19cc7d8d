"""Why a complete spatial slice is not enough.

The slice with metric dx^2 on [0, inf) is complete, but with lapse N = exp(x)
the rescaled metric exp(-2x) dx^2 reaches infinity at finite length.  The
certificate therefore refuses the scenario while the cosh-lapse one passes.

Run with ``python3 demos/exponential_lapse.py``.
"""

from cauchy_spectral.completeness import ghcomp_verdict
from cauchy_spectral.hypotheses import esa_certificate
from cauchy_spectral.scenarios import load_catalog

for name in ("static-cosh-lapse", "kay-exp-lapse"):
    sc = load_catalog(name)
    verdict = ghcomp_verdict(sc.foliation, globally_hyperbolic=False)
    print(f"{name}: rescaled slice {verdict.verdict} ({verdict.provenance})")
    for end in verdict.ends:
        length = end.evidence.get("length_estimate")
        extra = "" if length is None else f", length to the end ~ {length}"
        print(f"    end {end.side}: {end.verdict}{extra}")
    print(f"    certificate: {esa_certificate(sc).overall}")
