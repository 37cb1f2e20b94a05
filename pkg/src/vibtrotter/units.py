"""Physical constants and unit conversions (atomic units throughout)."""

HARTREE_TO_CM1 = 219474.6313632
AU_TIME_TO_FS = 0.02418884326585747

# Pruning threshold: absolute for model coefficients (Hartree), relative for
# cancellations when Pauli words are combined.
PRUNE_TOL = 1e-14


def cm1_to_hartree(x):
    return x / HARTREE_TO_CM1


def hartree_to_cm1(x):
    return x * HARTREE_TO_CM1
