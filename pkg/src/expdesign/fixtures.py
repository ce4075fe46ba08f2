"""Built-in datasets used by the acceptance suite and the ``--fixture`` CLI flag."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .core import StrataPartition

# (stratum, treated count, treated smokers, control count, control smokers)
SIMPSON_COUNTS = (
    ("Geneva", 931, 350, 4257, 1979),
    ("Palo Alto", 157, 5, 2484, 122),
)


def simpson_observed() -> dict:
    """Unit-level binary outcomes for the two-city smoking example.

    Units are listed stratum by stratum, treated before control, smokers first.
    """
    w, y, s = [], [], []
    for label, (name, n1, k1, n0, k0) in enumerate(SIMPSON_COUNTS):
        for n_arm, k_arm, arm in ((n1, k1, 1), (n0, k0, 0)):
            w += [arm] * n_arm
            y += [1.0] * k_arm + [0.0] * (n_arm - k_arm)
            s += [label] * n_arm
    return {
        "units": list(range(1, len(w) + 1)),
        "w": np.array(w, dtype=np.int8),
        "y": np.array(y),
        "stratum": np.array(s, dtype=float),
        "stratum_names": [c[0] for c in SIMPSON_COUNTS],
    }


def simpson_exact() -> dict:
    """Exact rational values of the per-stratum, pooled and aggregated differences in means."""
    per = []
    tot = [0, 0, 0, 0]
    sizes = []
    for name, n1, k1, n0, k0 in SIMPSON_COUNTS:
        per.append(Fraction(k1, n1) - Fraction(k0, n0))
        sizes.append(n1 + n0)
        tot = [tot[0] + n1, tot[1] + k1, tot[2] + n0, tot[3] + k0]
    n = sum(sizes)
    return {
        "per_stratum": per,
        "combined": Fraction(tot[1], tot[0]) - Fraction(tot[3], tot[2]),
        "aggregate": sum((Fraction(s, n) * d for s, d in zip(sizes, per)), Fraction(0)),
    }


def partition_from_labels(labels) -> StrataPartition:
    """Strata from a per-unit label vector, ordered by first appearance."""
    labels = np.asarray(labels)
    order: dict = {}
    for i, lab in enumerate(labels.tolist()):
        order.setdefault(lab, []).append(i)
    return StrataPartition(tuple(tuple(v) for v in order.values()), labels.size)
