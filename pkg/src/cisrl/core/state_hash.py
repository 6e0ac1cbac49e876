# state_hash — same states, same hash, every run

"""
Fingerprint a list of initial states so every training variant can prove it was tested
on the same list. Values go through the 17-digit writer format first, so two lists
that reload bit-identically hash identically.
"""

import hashlib

import numpy as np


def normalize_states(states) -> str:
    """One line per state, fixed repr. -0.0 folds into 0.0 so sign noise doesn't split hashes."""
    X = np.atleast_2d(np.asarray(states, dtype=float))
    X = np.where(X == 0.0, 0.0, X)
    return "\n".join(" ".join("%.17g" % v for v in row) for row in X)


def compute_state_hash(states) -> str:
    """sha256 of the normalized list. Order matters, it's a protocol list not a set."""
    return hashlib.sha256(normalize_states(states).encode("utf-8")).hexdigest()
