"""Whittle indices for two-state arms via value iteration and bisection.

All routines accept batches: reward and transition tables of shape
``(..., 2, 2)`` and a subsidy broadcastable to the batch shape ``...``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import CbbInstance

DEFAULT_GAMMA = 0.95


@dataclass
class SingleArmMdp:
    reward: np.ndarray  # (..., 2, 2) indexed [s, a]
    transition: np.ndarray  # (..., 2, 2) P(next = 1 | s, a)
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        self.reward = np.asarray(self.reward, dtype=float)
        self.transition = np.asarray(self.transition, dtype=float)
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if np.any((self.transition < 0) | (self.transition > 1)):
            raise ValueError("transition probabilities must lie in [0, 1]")


@dataclass
class ValueIterationResult:
    V: np.ndarray  # (..., 2)
    Q: np.ndarray  # (..., 2, 2)
    sweeps: int
    deltas: list


def _bellman(mdp: SingleArmMdp, w, V):
    p1 = mdp.transition
    ev = (1.0 - p1) * V[..., None, None, 0] + p1 * V[..., None, None, 1]
    Q = mdp.reward + mdp.gamma * ev
    Q[..., 1] -= np.asarray(w)[..., None]
    return Q


def value_iteration(mdp: SingleArmMdp, w=0.0, tol: float = 1e-10, max_sweeps: int = 100_000, V0=None):
    """Iterate ``Q(s,a) = r(s,a) - w*a + gamma * E[V(s')]`` until the sup-norm change is at most ``tol``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    w = np.asarray(w, dtype=float)
    batch = np.broadcast_shapes(mdp.reward.shape[:-2], w.shape)
    V = np.zeros(batch + (2,)) if V0 is None else np.array(V0, dtype=float)
    deltas = []
    for sweep in range(1, max_sweeps + 1):
        Q = _bellman(mdp, w, V)
        V_new = Q.max(axis=-1)
        delta = float(np.max(np.abs(V_new - V))) if V.size else 0.0
        V = V_new
        deltas.append(delta)
        if delta <= tol:
            break
    return ValueIterationResult(V, _bellman(mdp, w, V), sweep, deltas)


@dataclass
class IndexResult:
    index: np.ndarray
    indexable: np.ndarray  # bool mask
    lower: float
    upper: float


def bisection_bracket(reward, gamma: float) -> tuple[float, float]:
    r_max = float(np.max(np.abs(reward))) if np.size(reward) else 0.0
    half = 2.0 * r_max / (1.0 - gamma) + 1.0
    return -half, half


def whittle_index(mdp: SingleArmMdp, s, tol: float = 1e-6) -> IndexResult:
    """Subsidy at which pulling and idling are indifferent in state ``s``.

    Bisection looks for the sign change of ``Q_w(s,1) - Q_w(s,0)``.  Entries
    without a sign change over the bracket are reported non-indexable and
    carry index ``-inf``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    gamma = mdp.gamma
    batch = mdp.reward.shape[:-2]
    s = np.broadcast_to(np.asarray(s, dtype=np.int64), batch)
    lo_b, hi_b = bisection_bracket(mdp.reward, gamma)
    vi_tol = tol * (1.0 - gamma) ** 2 / 10.0

    def gap(w):
        Q = value_iteration(mdp, w, tol=vi_tol).Q
        Qs = np.take_along_axis(Q, s[..., None, None], axis=-2)[..., 0, :]
        return Qs[..., 1] - Qs[..., 0]

    lo = np.full(batch, lo_b)
    hi = np.full(batch, hi_b)
    ok = (gap(lo) >= 0) & (gap(hi) <= 0)
    # shrink until |gap| <= tol is guaranteed (gap is 1/(1-gamma)-Lipschitz in w)
    width_goal = tol * (1.0 - gamma)
    while np.max(hi - lo) > width_goal:
        mid = 0.5 * (lo + hi)
        g = gap(mid)
        pos = g > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    index = np.where(ok, 0.5 * (lo + hi), -np.inf)
    return IndexResult(index, ok, lo_b, hi_b)


@dataclass
class WhittleTable:
    index: np.ndarray  # (N, K, 2) indexed [arm, context, state]
    indexable: np.ndarray
    gamma: float
    mode: str = "context"

    def __post_init__(self):
        self.index.setflags(write=False)


def compute_whittle_table(
    inst: CbbInstance, gamma: float = DEFAULT_GAMMA, tol: float = 1e-6, mode: str = "context"
) -> WhittleTable:
    """Whittle index for every (arm, context, state).

    ``mode="context"`` uses each context's own tables; ``mode="averaged"``
    averages reward and transition over the context distribution so every
    context shares one index column.
    """
    N, K = inst.num_arms, inst.num_contexts
    if mode == "context":
        r, p = inst.reward, inst.transition
    elif mode == "averaged":
        f = inst.context_probs[None, :, None, None]
        r = np.broadcast_to((inst.reward * f).sum(axis=1, keepdims=True), inst.reward.shape)
        p = np.broadcast_to((inst.transition * f).sum(axis=1, keepdims=True), inst.transition.shape)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    # batch over (i, k, s)
    r_b = np.broadcast_to(r[:, :, None], (N, K, 2, 2, 2))
    p_b = np.broadcast_to(p[:, :, None], (N, K, 2, 2, 2))
    s = np.broadcast_to(np.arange(2), (N, K, 2))
    res = whittle_index(SingleArmMdp(r_b, p_b, gamma), s, tol=tol)
    return WhittleTable(np.array(res.index), np.array(res.indexable), gamma, mode)
