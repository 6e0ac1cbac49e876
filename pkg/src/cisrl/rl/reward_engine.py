# reward_engine — stay inside, get paid

"""
Membership-gated rewards. The caller decides inside/outside (margin or worst-case check);
we only turn that verdict plus the current state into a number.
outside -> r2, inside -> r1 where r1 depends on the variant.
"""

import logging
import math

import numpy as np

from src.cisrl.core.errors import RewardSpecError
from src.cisrl.core.geometry import BoxSet, HPolytope, sample_many, vertices_2d
from src.cisrl.core.models import RewardSpec

log = logging.getLogger(__name__)


def economic_stage(x, V: float = 100.0) -> float:
    """Reactant converted: 100 (1 - cA) V."""
    return 100.0 * (1.0 - float(x[0])) * V


def zone_stage(T: float, weight: float = 300.0, band: tuple[float, float] = (348.0, 352.0)) -> float:
    """0 inside the band, quadratic penalty to the nearer edge outside it."""
    lo, hi = band
    if T < lo:
        return -weight * (lo - T) ** 2
    if T > hi:
        return -weight * (hi - T) ** 2
    return 0.0


def _zone_distance(T: float, band: tuple[float, float]) -> float:
    lo, hi = band
    return max(0.0, lo - T, T - hi)


def safe_reward(spec: RewardSpec, x) -> float:
    """r1 for a state whose next step was judged inside the set."""
    x = np.asarray(x, dtype=float).reshape(-1)
    band = (spec.zone_lo, spec.zone_hi)
    match spec.variant:
        case "Invariance":
            return spec.r1
        case "SetPoint":
            d = np.linalg.norm(x - np.asarray(spec.x_s, dtype=float), ord=spec.p)
            return -float(d) ** spec.q
        case "Economic":
            return economic_stage(x, spec.V)
        case "EconomicZone":
            return economic_stage(x, spec.V) + zone_stage(float(x[1]), spec.zone_weight, band)
        case "Zone":
            return -_zone_distance(float(x[1]), band) ** spec.q
    raise RewardSpecError(f"unknown reward variant {spec.variant!r}")


def reward(spec: RewardSpec, x_next_pred, inside: bool, x) -> float:
    """
    inside=False -> r2. Otherwise r1 per variant, evaluated on the current state x.
    x_next_pred is accepted for the record; no variant reads it.
    """
    if not inside:
        return spec.r2
    return safe_reward(spec, x)


def graded_penalty(spec: RewardSpec, J: float, scale: float) -> float:
    """
    r2 pushed further down by how far the checked state lands outside (J > 0).
    Stays in [r2 - max(|r2|, 1), r2], so still below every safe reward.
    """
    if scale <= 0.0:
        raise ValueError(f"scale must be positive, got {scale}")
    return spec.r2 - max(abs(spec.r2), 1.0) * math.tanh(max(J, 0.0) / scale)


def episode_economics(states, V: float = 100.0) -> float:
    """L_e = sum over the trajectory of 100 (1 - cA_k) V."""
    X = np.atleast_2d(np.asarray(states, dtype=float))
    if X.size == 0:
        raise ValueError("empty trajectory")
    return float(np.sum(100.0 * (1.0 - X[:, 0]) * V))


def zone_violation(states, weight: float = 300.0, band: tuple[float, float] = (348.0, 352.0)) -> float:
    """Accumulated zone penalty as a positive number. 0 when the whole trajectory sits in the band."""
    X = np.atleast_2d(np.asarray(states, dtype=float))
    return float(-sum(zone_stage(float(T), weight, band) for T in X[:, 1]))


def validate_reward_spec(spec: RewardSpec, P: HPolytope, bb: BoxSet | None = None,
                         samples: int = 10_000, seed: int = 0) -> float:
    """
    Sweep the set and make sure no safe reward falls to r2 or below.
    Returns the smallest safe reward seen. Raises RewardSpecError otherwise.
    """
    X = sample_many(P, bb or P.bbox, np.random.default_rng(seed), samples)
    # set corners are where zone/economic stages bottom out
    if P.n == 2:
        X = np.vstack([X, vertices_2d(P)])
    worst = min(safe_reward(spec, x) for x in X)
    if worst <= spec.r2:
        raise RewardSpecError(
            f"{spec.variant}: safe reward drops to {worst:.6g}, not above r2={spec.r2}"
        )
    log.info(f"reward spec {spec.variant} ok: min safe reward {worst:.6g} > r2 {spec.r2}")
    return worst
