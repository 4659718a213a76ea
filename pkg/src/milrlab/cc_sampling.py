"""Sampling protocols for hashed-input one-way communication problems.

Alice holds ``X_1..X_n`` and Bob holds ``G_1..G_n``.  For the majority target
the value is ``MAJ(<G_1, X_1>, ..., <G_n, X_n>)`` with inner products mod 2
(ties go to 1).  For the ``sum3`` target the inputs are elements of GF(3)
and the value is ``sum_i X_i * G_i mod 3``.

A sampling protocol sends ``k`` of Alice's coordinates; Bob outputs the
empirical majority of the sampled inner products, or the partial sum for
``sum3``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, InvalidParameter

TARGETS = ("majority", "sum3")


def parity64(v) -> np.ndarray:
    """Bit parity of each uint64 entry."""
    v = np.asarray(v, dtype=np.uint64).copy()
    for shift in (32, 16, 8, 4, 2, 1):
        v ^= v >> np.uint64(shift)
    return (v & np.uint64(1)).astype(np.uint8)


def chance_level(target: str) -> float:
    return 1 / 3 if target == "sum3" else 0.5


@dataclass(frozen=True, eq=False)
class CCInstance:
    n: int
    lam: int
    alice: np.ndarray
    bob: np.ndarray
    target: str = "majority"

    def __post_init__(self):
        if self.target not in TARGETS:
            raise InvalidParameter(f"unknown target {self.target!r}; choose from {TARGETS}")
        if self.alice.shape != (self.n,) or self.bob.shape != (self.n,):
            raise InvalidInput("alice and bob must each hold n values")
        top = 3 if self.target == "sum3" else 1 << self.lam
        if np.any(self.alice >= top) or np.any(self.bob >= top):
            raise InvalidInput("input values exceed the coordinate width")


def random_instance(n: int, lam: int, rng, target: str = "majority") -> CCInstance:
    top = 3 if target == "sum3" else 1 << lam
    return CCInstance(n, lam, rng.integers(0, top, size=n, dtype=np.uint64),
                      rng.integers(0, top, size=n, dtype=np.uint64), target)


def coordinate_values(inst: CCInstance, idx=None) -> np.ndarray:
    a = inst.alice if idx is None else inst.alice[idx]
    b = inst.bob if idx is None else inst.bob[idx]
    if inst.target == "sum3":
        return (a * b) % np.uint64(3)
    return parity64(a & b)


def _combine(values, target):
    if target == "sum3":
        return int(values.sum(dtype=np.int64) % 3)
    return int(2 * int(values.sum(dtype=np.int64)) >= values.shape[0])


def eval_target(inst: CCInstance) -> int:
    return _combine(coordinate_values(inst), inst.target)


def sampling_protocol(inst: CCInstance, k: int, rng) -> int:
    if not 0 <= k <= inst.n:
        raise InvalidParameter(f"sample count {k} outside 0..{inst.n}")
    if k == 0:
        return int(rng.integers(0, 3 if inst.target == "sum3" else 2))
    idx = rng.choice(inst.n, size=k, replace=False)
    return _combine(coordinate_values(inst, idx), inst.target)


def simulate_success(n: int, lam: int, k: int, trials: int, rng, target: str = "majority") -> int:
    """Number of successes of the k-sample protocol over fresh random instances.

    Vectorised over trials; draws follow the same law as ``sampling_protocol``.
    """
    if not 0 <= k <= n:
        raise InvalidParameter(f"sample count {k} outside 0..{n}")
    if target not in TARGETS:
        raise InvalidParameter(f"unknown target {target!r}")
    top = 3 if target == "sum3" else 1 << lam
    a = rng.integers(0, top, size=(trials, n), dtype=np.uint64)
    b = rng.integers(0, top, size=(trials, n), dtype=np.uint64)
    vals = ((a * b) % np.uint64(3)).astype(np.int64) if target == "sum3" else parity64(a & b).astype(np.int64)
    if target == "sum3":
        truth = vals.sum(axis=1) % 3
    else:
        truth = (2 * vals.sum(axis=1) >= n).astype(np.int64)
    if k == 0:
        guess = rng.integers(0, 3 if target == "sum3" else 2, size=trials)
    else:
        if k == n:
            picked = vals
        else:
            idx = np.argpartition(rng.random((trials, n)), k - 1, axis=1)[:, :k]
            picked = np.take_along_axis(vals, idx, axis=1)
        if target == "sum3":
            guess = picked.sum(axis=1) % 3
        else:
            guess = (2 * picked.sum(axis=1) >= k).astype(np.int64)
    return int(np.count_nonzero(guess == truth))


@dataclass(frozen=True)
class CurvePoint:
    k: int
    trials: int
    successes: int
    target: str = "majority"

    @property
    def success(self) -> float:
        return self.successes / self.trials

    @property
    def advantage(self) -> float:
        return self.success - chance_level(self.target)

    @property
    def sigma(self) -> float:
        p = self.success
        return math.sqrt(max(p * (1 - p), 0.0) / self.trials)

    @property
    def halfwidth(self) -> float:
        """95% normal-approximation confidence half-width."""
        return 1.96 * self.sigma


def advantage_curve(n: int, lam: int, k_grid, trials: int, rng, target: str = "majority",
                    map_fn=map) -> list[CurvePoint]:
    ks = list(k_grid)
    if any(not 0 <= k <= n for k in ks):
        raise InvalidParameter(f"k grid must lie within 0..{n}")
    seeds = [int(s) for s in rng.integers(0, 1 << 63, size=len(ks))]
    counts = list(map_fn(_curve_job, [(n, lam, k, trials, s, target) for k, s in zip(ks, seeds)]))
    return [CurvePoint(k, trials, c, target) for k, c in zip(ks, counts)]


def _curve_job(args):
    n, lam, k, trials, seed, target = args
    return simulate_success(n, lam, k, trials, np.random.default_rng(seed), target)


@dataclass(frozen=True)
class SqrtFit:
    c: float
    r_squared: float
    residuals: tuple


def fit_sqrt_law(points, n: int) -> SqrtFit:
    """Least-squares fit of ``eta = c * sqrt(k/n)`` through the origin, with centered R^2."""
    x = np.array([math.sqrt(p.k / n) for p in points])
    y = np.array([p.advantage for p in points])
    denom = float(x @ x)
    if denom == 0:
        raise InvalidInput("need at least one k > 0 to fit")
    c = float(x @ y) / denom
    resid = y - c * x
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else float("nan")
    return SqrtFit(c, r2, tuple(float(r) for r in resid))


def monotone_within(points, z: float = 3.0) -> bool:
    """Success never drops by more than ``z`` combined standard errors along the grid."""
    pts = sorted(points, key=lambda p: p.k)
    return all(b.success >= a.success - z * math.hypot(a.sigma, b.sigma) for a, b in zip(pts, pts[1:]))
