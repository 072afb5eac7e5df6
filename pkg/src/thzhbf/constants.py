"""Numerical tolerances shared across the package.

Every invariant check and test tolerance in the package refers to one of
these names, so changing a value here changes it everywhere.
"""

# numerics
SVD_RECON_TOL = 1e-9
HERMITIAN_TOL = 1e-10
INVERSE_RESIDUAL_TOL = 1e-8
CONDITION_CAP = 1e12

# precoder invariants
MODULUS_TOL = 1e-12
POWER_TOL = 1e-9
PHASE_TOL = 1e-9

# regularizer added to F_BB F_BB^H, relative to its mean diagonal
ALPHA_REL = 1e-8

# solver defaults
REL_TOL = 1e-3
MAX_ITERS = 10
MONOTONE_SLACK = 1e-6

# rate-level comparisons (dominance, feasible-set inclusion)
RATE_SLACK = 1e-6
