"""Limit constants of color-avoiding percolation on colored ER graphs."""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .colored_graph import ColorParams
from .errors import DomainError, RegimeError

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class Regime(enum.Enum):
    SUPERCRITICAL = "supercritical"
    CRITICAL_TOP = "critical-top"
    INTERMEDIATE_STRICT = "intermediate-strict"
    INTERMEDIATE = "intermediate"
    CRITICAL_BOTTOM = "critical-bottom"
    SUBCRITICAL = "subcritical"


def classify_regime(params: ColorParams) -> Regime:
    """Regime tag from the sorted ``lambda_star`` (exact comparisons with 1)."""
    ls = params.lambda_star
    low, top, second = ls[0], ls[-1], ls[-2]
    if low > 1:
        return Regime.SUPERCRITICAL
    if low == 1:
        return Regime.CRITICAL_TOP
    if top < 1:
        return Regime.SUBCRITICAL
    if top == 1 and second < 1:
        return Regime.CRITICAL_BOTTOM
    if top > 1 and second < 1:
        return Regime.INTERMEDIATE_STRICT
    # top > 1 with second >= 1, or top == second == 1
    return Regime.INTERMEDIATE


# ----------------------------------------------------------------------------
# rate functions


def rate_I(lam: float) -> float:
    """Cluster-size rate ``lam - 1 - log(lam)``."""
    if not lam > 0:
        raise DomainError(f"lambda must be positive, got {lam}")
    return lam - 1.0 - math.log(lam)


def entropy_J(q: float, x: float) -> float:
    """Binomial rate J_q(x) on [q, 1], with J_q(1) = log(1/q)."""
    if not 0 < q < 1:
        raise DomainError(f"q must lie in (0, 1), got {q}")
    if not q <= x <= 1:
        raise DomainError(f"x must lie in [q, 1], got {x}")
    if x == 1:
        return -math.log(q)
    if x == q:
        return 0.0
    return x * math.log(x / q) + (1.0 - x) * math.log((1.0 - x) / (1.0 - q))


def _check_q_lam(q: float, lam: float):
    if not 0 < q < 1:
        raise DomainError(f"q must lie in (0, 1), got {q}")
    if not 0 < lam < 1:
        raise DomainError(f"lambda must lie in (0, 1), got {lam}")


def golden_section(f, a: float, b: float, tol: float = 1e-12, max_iter: int = 500):
    """Minimize ``f`` on ``[a, b]``; returns ``(x, f(x))``."""
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    candidates = [(fc, c), (fd, d), (f(a), a), (f(b), b)]
    fx, x = min(candidates)
    return x, fx


def rho_argmin(q: float, lam: float, grid_step: float = 1e-3) -> tuple[float, float]:
    """``(rho, x*)`` with rho = min over x in [q, 1] of (I_lam + J_q(x)) / x.

    No unimodality is assumed: a global grid scan picks the best cell, then
    golden-section search refines inside its two neighboring cells.
    """
    _check_q_lam(q, lam)
    i_lam = rate_I(lam)

    def obj(x: float) -> float:
        return (i_lam + entropy_J(q, min(max(x, q), 1.0))) / x

    steps = max(2, int(math.ceil((1.0 - q) / grid_step)))
    grid = np.linspace(q, 1.0, steps + 1)
    vals = [obj(x) for x in grid]
    j = int(np.argmin(vals))
    lo, hi = grid[max(j - 1, 0)], grid[min(j + 1, steps)]
    x, fx = golden_section(obj, lo, hi, tol=1e-13)
    if vals[j] < fx:
        x, fx = grid[j], vals[j]
    return fx, x


def rho(q: float, lam: float) -> float:
    return rho_argmin(q, lam)[0]


def a_of(q: float, lam: float) -> float:
    """Black-cluster constant ``1 / rho(q, lam)``."""
    return 1.0 / rho(q, lam)


def mu(lam: float, tol: float = 1e-13) -> float:
    """Survival probability of a Poisson(lam) branching process."""
    if not lam > 0:
        raise DomainError(f"lambda must be positive, got {lam}")
    if lam <= 1:
        return 0.0

    def f(t):
        return 1.0 - math.exp(-lam * t) - t

    lo = 0.5
    while f(lo) <= 0:
        lo /= 2
        if lo < 1e-300:
            return 0.0
    hi = 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ----------------------------------------------------------------------------
# subset extinction system


def subset_fixed_points(params: ColorParams, tol: float = 1e-12, max_iter: int = 1_000_000) -> dict[frozenset[int], float]:
    """Minimal solution of x_S = exp(sum_j lam_j (x_{S - {j}} - 1)), x_{} = 1.

    ``x_S`` is the probability that, on the colored Poisson(Lambda) tree,
    the root's component avoiding color ``i`` is finite for every ``i`` in
    ``S``.  Colors with ``lambda_star <= 1`` give a.s. finite components, so
    they are dropped from ``S`` exactly; the rest is solved by monotone
    iteration from 0 followed by a Newton polish of each scalar equation.
    """
    k = params.k
    lam = np.asarray(params.lambdas)
    ls = params.lambda_star
    live = [i for i in range(k) if ls[i] > 1]
    m = len(live)
    # index subsets of the live colors by bitmask over positions in `live`
    size = 1 << m
    x = np.zeros(size)
    x[0] = 1.0
    # contrib[S][j] = index of S - {live j} (or S itself)
    drop = np.array([[s & ~(1 << j) for j in range(m)] for s in range(size)], dtype=np.int64)
    lam_live = lam[live] if m else np.zeros(0)
    lam_dead = lam.sum() - lam_live.sum()
    for _ in range(max_iter):
        if m == 0:
            break
        # colors outside `live` never leave S, so they contribute lam_j (x_S - 1)
        new = np.exp((lam_live * (x[drop] - 1.0)).sum(axis=1) + lam_dead * (x - 1.0))
        new[0] = 1.0
        if np.any(new < x - 1e-15):
            raise ArithmeticError("subset iteration lost monotonicity")
        step = float(np.max(np.abs(new - x)))
        x = new
        if step < tol * 1e-3:
            break
    # Newton polish in order of |S|: x = exp(c + L (x - 1)), L = weight kept in S
    for s in sorted(range(1, size), key=lambda s: bin(s).count("1")):
        inside = [j for j in range(m) if s >> j & 1]
        c = sum(lam_live[j] * (x[drop[s, j]] - 1.0) for j in inside)
        L = lam.sum() - sum(lam_live[j] for j in inside)
        xs = x[s]
        for _ in range(50):
            e = math.exp(c + L * (xs - 1.0))
            g = xs - e
            dg = 1.0 - L * e
            if dg == 0:
                break
            nxt = xs - g / dg
            if abs(nxt - xs) < 1e-16:
                xs = nxt
                break
            xs = nxt
        if abs(xs - x[s]) < 1e-6:
            x[s] = xs
    out: dict[frozenset[int], float] = {}
    for bits in itertools.product((0, 1), repeat=k):
        S = frozenset(i for i in range(k) if bits[i])
        mask = 0
        for pos, i in enumerate(live):
            if i in S:
                mask |= 1 << pos
        out[S] = float(x[mask])
    return out


def a1(params: ColorParams, fixed_points: dict[frozenset[int], float] | None = None) -> float:
    """Limit fraction of the largest CA-component (0 unless lambda_1^* > 1)."""
    if params.lambda_star[0] <= 1:
        return 0.0
    xs = fixed_points if fixed_points is not None else subset_fixed_points(params)
    total = math.fsum((-1) ** len(S) * v for S, v in xs.items())
    return min(max(total, 0.0), 1.0)


def a2(params: ColorParams) -> float:
    """Logarithmic constant a(mu_{lambda_k^*}, lambda_k) of the strict intermediate regime."""
    reg = classify_regime(params)
    if reg is not Regime.INTERMEDIATE_STRICT:
        raise RegimeError(f"a2 needs the intermediate-strict regime, got {reg.value}")
    return a_of(mu(params.lambda_star[-1]), params.lambdas[-1])


def gamma_m(params: ColorParams, m: int) -> float:
    """Poisson mean of repeated edges (m = 2) or of m-cycles (m >= 3)."""
    if m < 2:
        raise DomainError(f"m must be at least 2, got {m}")
    lam = params.lambdas
    if m == 2:
        return 0.5 * math.fsum(a * b for a, b in itertools.combinations(lam, 2))
    return params.Lambda**m / (2 * m)


def beta_top(params: ColorParams) -> float:
    """Poisson mean of the number of CA-components of size k."""
    for x in params.lambdas:
        if x >= 1:
            raise DomainError(f"beta_k needs every lambda < 1, got {x}")
    k = params.k
    value = math.factorial(k - 1) / 2 * math.prod(x / (1 - x) for x in params.lambdas)
    if k == 2:
        value += gamma_m(params, 2)
    return value


# ----------------------------------------------------------------------------
# aggregate


@dataclass
class TheoryConstants:
    regime: Regime
    I: dict[float, float]
    mu: dict[float, float]
    a1: float
    a2: float | None
    beta_k: float | None
    gamma: dict[int, float]
    subset_fixed_points: dict[frozenset[int], float]
    rho: float | None = None
    a: float | None = None
    extras: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        def key(S):
            return "{" + ",".join(str(i) for i in sorted(S)) + "}"

        return {
            "regime": self.regime.value,
            "I": {repr(k): v for k, v in self.I.items()},
            "mu": {repr(k): v for k, v in self.mu.items()},
            "a1": self.a1,
            "a2": self.a2,
            "beta_k": self.beta_k,
            "gamma": {str(m): v for m, v in self.gamma.items()},
            "subset_fixed_points": {key(S): v for S, v in sorted(self.subset_fixed_points.items(), key=lambda t: (len(t[0]), sorted(t[0])))},
            "rho": self.rho,
            "a": self.a,
            **self.extras,
        }


def constants(params: ColorParams, max_cycle_len: int = 16, q: float | None = None, lam: float | None = None) -> TheoryConstants:
    """Every limit constant that is defined for ``params``."""
    reg = classify_regime(params)
    values = sorted(set(params.lambdas) | set(params.lambda_star))
    I = {v: rate_I(v) for v in values}
    mus = {v: mu(v) for v in sorted(set(params.lambda_star))}
    fps = subset_fixed_points(params)
    sub = reg is Regime.SUBCRITICAL
    out = TheoryConstants(
        regime=reg,
        I=I,
        mu=mus,
        a1=a1(params, fps),
        a2=a2(params) if reg is Regime.INTERMEDIATE_STRICT else None,
        beta_k=beta_top(params) if sub else None,
        gamma={m: gamma_m(params, m) for m in range(2, max_cycle_len + 1)} if sub else {},
        subset_fixed_points=fps,
    )
    if q is not None or lam is not None:
        if q is None or lam is None:
            raise DomainError("rho needs both q and lambda")
        out.rho = rho(q, lam)
        out.a = 1.0 / out.rho
    return out
