"""Instance families: analytic counterexamples, random instances and synthetic food rescue."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import CbbInstance

# Minimum gap used when clipping collapses a fatigue/recovery pair onto one value.
ORDER_GAP = 1e-3


def gen_theorem1(N: int) -> tuple[CbbInstance, int]:
    """Always-active arms where a rare context pays ``N`` per pull; budget 1.

    Uniform per-context budgets can pull one arm in the rare context, whereas
    the allocation ``(0, N)`` pulls every arm there at the same expected usage.
    """
    if N < 2:
        raise ValueError("N must be at least 2")
    f = np.array([1.0 - 1.0 / N, 1.0 / N])
    reward = np.zeros((N, 2, 2, 2))
    reward[:, 0, 1, 1] = 1.0 / N
    reward[:, 1, 1, 1] = float(N)
    transition = np.ones((N, 2, 2, 2))
    return CbbInstance(f, reward, transition, name=f"theorem1_N{N}"), 1


def _two_context_base(epsilon: float, recover: float, name: str) -> CbbInstance:
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    p = np.zeros((1, 2, 2, 2))
    p[0, :, 0, :] = recover
    p[0, 0, 1, 1] = 1.0 - epsilon
    p[0, 0, 1, 0] = 1.0
    p[0, 1, 1, 1] = 0.0
    p[0, 1, 1, 0] = 1.0
    r = np.zeros((1, 2, 2, 2))
    r[0, 0, 1, 1] = 1.0
    r[0, 1, 1, 1] = 1.0 + epsilon
    return CbbInstance(np.array([0.5, 0.5]), r, p, name=name)


def gen_fivesix(epsilon: float = 0.01) -> tuple[CbbInstance, float]:
    """Single arm type where the LP-induced budgets reach only 5/6 of the optimum.

    Returns the base instance and the budget as a fraction of the arm count.
    """
    return _two_context_base(epsilon, 1.0, f"fivesix_eps{epsilon:g}"), 1.0 / 3.0


def gen_appendixA_example2(epsilon: float = 0.01) -> tuple[CbbInstance, float]:
    """Like :func:`gen_fivesix` but inactive arms recover with probability 1/2; budget 1/4."""
    return _two_context_base(epsilon, 0.5, f"example2_eps{epsilon:g}"), 0.25


def _enforce_order(low: np.ndarray, high: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return arrays with ``low < high`` elementwise by swapping, then separating ties."""
    lo = np.minimum(low, high)
    hi = np.maximum(low, high)
    tie = hi - lo < ORDER_GAP
    if np.any(tie):
        mid = np.clip((lo[tie] + hi[tie]) / 2, ORDER_GAP / 2, 1.0 - ORDER_GAP / 2)
        lo[tie] = mid - ORDER_GAP / 2
        hi[tie] = mid + ORDER_GAP / 2
    return lo, hi


def gen_random(N: int, K: int, seed: int = 0) -> CbbInstance:
    """Completely random instance with fatigue and recovery orderings enforced.

    Per context, each (s, a) transition entry and the pull reward have their
    own normal distribution whose mean and scale are drawn from U[0, 1].
    """
    if N < 1 or K < 1:
        raise ValueError("N and K must be positive")
    rng = np.random.default_rng(seed)
    mu_p = rng.random((K, 2, 2))
    sd_p = rng.random((K, 2, 2))
    mu_r = rng.random(K)
    sd_r = rng.random(K)

    p = np.clip(rng.normal(mu_p, sd_p, size=(N, K, 2, 2)), 0.0, 1.0)
    # fatigue: P(1|1,1) < P(1|1,0); recovery: P(1|0,1) > P(1|0,0)
    p[:, :, 1, 1], p[:, :, 1, 0] = _enforce_order(p[:, :, 1, 1], p[:, :, 1, 0])
    p[:, :, 0, 0], p[:, :, 0, 1] = _enforce_order(p[:, :, 0, 0], p[:, :, 0, 1])

    r = np.zeros((N, K, 2, 2))
    r[:, :, 1, 1] = rng.normal(mu_r, sd_r, size=(N, K))
    w = rng.random(K)
    while w.sum() <= 0:
        w = rng.random(K)
    f = w / w.sum()
    return CbbInstance(f, r, p, name=f"random_N{N}_K{K}_s{seed}")


@dataclass
class OrganicParams:
    alpha: float = 0.5
    gamma: float = 2.0
    beta: float = 0.5
    h_max: float = 20.0
    history_mean: float = 5.0  # mean of the geometric history length
    recovery: float = 0.3
    idle_stay: float = 1.0  # P(stay active | active, not notified)

    def validate(self):
        if self.h_max <= 0:
            raise ValueError("h_max must be positive")
        if self.history_mean < 1:
            raise ValueError("history_mean must be at least 1")
        for name in ("recovery", "idle_stay"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


@dataclass
class ChurnerParams:
    preferred_contexts: tuple | None = None  # None: drawn from the seed
    preferred_mean: float = 0.95
    disliked_mean: float = 0.05
    recovery_mean: float = 0.2
    jitter: float = 0.05
    uplift: float = 1.5
    idle_stay: float = 1.0

    def validate(self, K: int):
        for name in ("preferred_mean", "disliked_mean", "recovery_mean", "idle_stay"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.preferred_contexts is not None:
            pref = set(self.preferred_contexts)
            if not pref or not pref <= set(range(K)):
                raise ValueError("preferred_contexts must be a nonempty subset of the contexts")
            if K > 1 and len(pref) == K:
                raise ValueError("preferred_contexts must be a proper subset")


@dataclass
class BlendedParams:
    abundance: float = 0.5
    organic: OrganicParams = field(default_factory=OrganicParams)
    churner: ChurnerParams = field(default_factory=ChurnerParams)


@dataclass
class _Population:
    """Shared synthetic world: locations, popularity, histories and context frequencies."""

    volunteer_xy: np.ndarray
    region_xy: np.ndarray
    popularity: np.ndarray
    history_len: np.ndarray
    context_probs: np.ndarray
    preferred: np.ndarray  # bool mask over contexts for churners


def _population(N: int, K: int, seed: int, op: OrganicParams, cp: ChurnerParams) -> tuple[_Population, list]:
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)]
    world, hist_rng = streams[0], streams[1]
    volunteer_xy = world.random((N, 2))
    region_xy = world.random((K, 2))
    popularity = world.random(K)
    if cp.preferred_contexts is not None:
        pref = np.zeros(K, dtype=bool)
        pref[list(cp.preferred_contexts)] = True
    elif K == 1:
        pref = np.ones(1, dtype=bool)
    else:
        n_pref = int(world.integers(1, K))
        pref = np.zeros(K, dtype=bool)
        pref[world.permutation(K)[:n_pref]] = True

    # geometric history lengths; past pick-up regions drawn by popularity
    history_len = hist_rng.geometric(1.0 / op.history_mean, size=N)
    weights = (popularity + 1e-3) / (popularity + 1e-3).sum()
    counts = np.zeros(K)
    for n in history_len:
        counts += np.bincount(hist_rng.choice(K, size=int(n), p=weights), minlength=K)
    f = (1.0 + counts) / (1.0 + counts).sum()
    pop = _Population(volunteer_xy, region_xy, popularity, history_len, f, pref)
    return pop, streams[2:]


def _organic_tables(pop: _Population, op: OrganicParams, rng: np.random.Generator):
    N, K = pop.volunteer_xy.shape[0], pop.region_xy.shape[0]
    d = np.linalg.norm(pop.volunteer_xy[:, None, :] - pop.region_xy[None, :, :], axis=-1)
    act = np.minimum(pop.history_len / op.h_max, 1.0)
    with np.errstate(over="ignore"):
        rate = np.exp(op.alpha * pop.popularity[None, :] - op.gamma * d + op.beta * act[:, None])
    rate = np.clip(rate, 0.0, 1.0)
    p = np.zeros((N, K, 2, 2))
    p[:, :, 1, 1] = 1.0 - rate
    p[:, :, 1, 0] = op.idle_stay
    p[:, :, 0, :] = op.recovery
    r = np.zeros((N, K, 2, 2))
    r[:, :, 1, 1] = pop.popularity[None, :] * rate
    return r, p, rate


def _churner_tables(pop: _Population, cp: ChurnerParams, rng: np.random.Generator):
    N, K = pop.volunteer_xy.shape[0], pop.region_xy.shape[0]
    means = np.where(pop.preferred, cp.preferred_mean, cp.disliked_mean)
    rate = np.clip(means[None, :] + rng.uniform(-cp.jitter, cp.jitter, size=(N, K)), 0.0, 1.0)
    q = np.clip(cp.recovery_mean + rng.uniform(-cp.jitter, cp.jitter, size=N), 0.0, 1.0)
    p = np.zeros((N, K, 2, 2))
    p[:, :, 1, 1] = 1.0 - rate
    p[:, :, 1, 0] = cp.idle_stay
    p[:, :, 0, :] = q[:, None, None]
    r = np.zeros((N, K, 2, 2))
    r[:, :, 1, 1] = rate * np.where(pop.preferred, cp.uplift, 1.0)[None, :]
    return r, p, rate


def gen_blended(
    N: int,
    K: int,
    abundance: float = 0.5,
    seed: int = 0,
    organic: OrganicParams | None = None,
    churner: ChurnerParams | None = None,
) -> CbbInstance:
    """First ``floor(abundance * N)`` arms follow organic dynamics, the rest churn."""
    if not 0.0 <= abundance <= 1.0:
        raise ValueError("abundance must lie in [0, 1]")
    if N < 1 or K < 1:
        raise ValueError("N and K must be positive")
    op = organic or OrganicParams()
    cp = churner or ChurnerParams()
    op.validate()
    cp.validate(K)
    pop, (org_rng, churn_rng) = _population(N, K, seed, op, cp)
    r_o, p_o, _ = _organic_tables(pop, op, org_rng)
    r_c, p_c, _ = _churner_tables(pop, cp, churn_rng)
    n_org = math.floor(abundance * N)
    r = np.concatenate([r_o[:n_org], r_c[n_org:]])
    p = np.concatenate([p_o[:n_org], p_c[n_org:]])
    return CbbInstance(pop.context_probs, r, p, name=f"blended_N{N}_K{K}_a{abundance:g}_s{seed}")


def gen_organic(N: int, K: int, seed: int = 0, params: OrganicParams | None = None) -> CbbInstance:
    return gen_blended(N, K, 1.0, seed, organic=params)


def gen_churner(N: int, K: int, seed: int = 0, params: ChurnerParams | None = None) -> CbbInstance:
    return gen_blended(N, K, 0.0, seed, churner=params)


def organic_pickup_rates(N: int, K: int, seed: int = 0, params: OrganicParams | None = None) -> np.ndarray:
    """Clipped pick-up rates ``p[i, k]`` behind :func:`gen_organic`."""
    op = params or OrganicParams()
    op.validate()
    pop, (org_rng, _) = _population(N, K, seed, op, ChurnerParams())
    return _organic_tables(pop, op, org_rng)[2]
