"""Discrete spatial Klein-Gordon operators on foliated spacetimes.

The package assembles ``w^2 = -Delta~ + N^2 V`` on the conformally rescaled
slice ``(Sigma, N^-2 h, N^-1 sqrt|h|)``, checks the hypotheses under which it
is essentially self-adjoint, probes one-dimensional cases with Weyl's
alternative, and evolves the Klein-Gordon equation.
"""

from .completeness import (CompletenessVerdict, EndVerdict, check_assumption_bounds,
                           end_length_1d, geodesic_shoot, ghcomp_verdict)
from .conformal import (ConformalPair, conformal_transform, divergence_form_laplacian,
                        lapse_rescaling_identity_check)
from .evolution import (CauchyData, Trajectory, conservation_check, evolve_kg,
                        friction_coefficient, symplectic_form)
from .expressions import Expr, ExpressionError, parse
from .hypotheses import (CertificateReport, PotentialClassification, classify_l2loc,
                         esa_certificate, semiboundedness_bound)
from .manifold import (Foliation, Grid, MetricExpr, MetricField, ScalarField, WeightedManifold,
                       build_grid, tilde_manifold, weighted_inner_product)
from .operators import (SymmetricSparseOperator, assemble_w2, assemble_w2_expanded,
                        assemble_weighted_laplacian, dirichlet_form, verify_green_formula)
from .probe import WeylVerdict, weyl_classify, weyl_classify_scenario
from .report import ReportEnvelope
from .scenarios import Scenario, ScenarioError, load_catalog, parse_scenario
from .spectral import SpectralSummary, operator_sqrt_inverse, smallest_eigenpairs

__version__ = "0.1.0"

__all__ = [
    "CompletenessVerdict", "EndVerdict", "check_assumption_bounds", "end_length_1d",
    "geodesic_shoot", "ghcomp_verdict", "ConformalPair", "conformal_transform",
    "divergence_form_laplacian", "lapse_rescaling_identity_check", "CauchyData", "Trajectory",
    "conservation_check", "evolve_kg", "friction_coefficient", "symplectic_form", "Expr",
    "ExpressionError", "parse", "CertificateReport", "PotentialClassification", "classify_l2loc",
    "esa_certificate", "semiboundedness_bound", "Foliation", "Grid", "MetricExpr", "MetricField",
    "ScalarField", "WeightedManifold", "build_grid", "tilde_manifold", "weighted_inner_product",
    "SymmetricSparseOperator", "assemble_w2", "assemble_w2_expanded", "assemble_weighted_laplacian",
    "dirichlet_form", "verify_green_formula", "WeylVerdict", "weyl_classify",
    "weyl_classify_scenario", "ReportEnvelope", "Scenario", "ScenarioError", "load_catalog",
    "parse_scenario", "SpectralSummary", "operator_sqrt_inverse", "smallest_eigenpairs",
]
