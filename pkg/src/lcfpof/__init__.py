"""Probability of LCF crack initiation from finite-element results.

Pipeline: surface extraction and quadrature on quadratic tetrahedral
meshes (:mod:`lcfpof.field_mesh`), temperature-dependent material tables
and Neuber correction (:mod:`lcfpof.material`), strain-life inversion
(:mod:`lcfpof.strain_life`), Weibull hazard and scale integral
(:mod:`lcfpof.hazard`), censored maximum-likelihood calibration
(:mod:`lcfpof.calibration`) and the parametric bootstrap
(:mod:`lcfpof.bootstrap`).
"""

__version__ = "0.1.0"
