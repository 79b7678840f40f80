"""Macroscopic state equations for HMM, AMM and the composed AWM recall.

Indexing.  States ``x^s`` exist for ``s = 0..t_max`` and, in AWM mode, the
feature input at ``s = -1``.  The field that produces ``x^{s+1}`` has signal
``m_s`` (``gamma * m_*`` at ``s = -1``) and Gaussian crosstalk ``z_s`` with
variance ``sigma_s^2``.  Tables are dicts keyed by these integer times:

* ``m[s]``, ``sigma2[s]`` for ``s >= -1`` (AWM) or ``s >= 0`` (AMM)
* ``U[s]`` for ``s >= 0``
* ``q[(s, r)]`` with ``s >= r``: ``E[x^s x^r]``
* ``C[(s, r)]`` with ``s > r``: ``E[z_s z_r]``

The crosstalk obeys ``z_s = w_s + U_s z_{s-1}`` with source covariance
``E[w_a w_b] = alpha q_{a,b}``.  Two boundary sources need explicit values:

* AWM: ``w_{-1} = z_*`` has variance ``alpha * gamma`` and is uncorrelated with
  every later source because ``q_{s,-1} = 0`` (feature and watermark layers
  are independent).  There is no field before it, so ``U_{-1} = 0``.
* AMM: ``x^0`` is set directly, not produced by a field, so ``U_0 = 0`` and no
  ``z_{-1}`` exists; ``sigma_0^2 = alpha`` follows.

With these, the generic ``sigma`` and ``C`` recursions below reproduce the
HMM step ``sigma_0^2 = alpha + sigma_*^2 U_0^2`` and need no special cases
beyond clipping indices that fall before the first field.

State correlations beyond the truncation horizon (referenced by the ``C``
recursion for ``order >= 5``) take the factorized value ``m_a m_b``, the
exact ``q`` when the noise correlation is dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Literal, NamedTuple, TextIO

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.special import erf, ndtr, owens_t

Mode = Literal["AWM", "AMM"]
QMethod = Literal["orthant", "hermite"]

DEFAULT_GH_NODES = 96
SUCCESS_THRESHOLD = 0.95
CRITICAL_HORIZON = 50
CRITICAL_TOL = 1e-3
EQUILIBRIUM_TOL = 1e-10
EQUILIBRIUM_MAX_T = 200
CAPACITY_TOL = 1e-4

# Correlation ratios within this distance outside [0, 1] are rounding noise
# (seen at ~1e-10 near perfect recall) and are clamped.
_RATIO_SLACK = 1e-8
_TINY = 1e-150


class TheoryError(ArithmeticError):
    pass


class SingularVarianceError(TheoryError):
    pass


class InvariantError(TheoryError):
    """A computed quantity left its admissible range (upstream bug)."""


@dataclass(frozen=True)
class TheoryParams:
    alpha: float
    gamma: float = 1.0
    order: int = 4
    t_max: int = 20
    q_method: QMethod = "orthant"
    gh_nodes: int = DEFAULT_GH_NODES

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be finite and > 0, got {self.alpha}")
        if not (math.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError(f"gamma must be finite and > 0, got {self.gamma}")
        if self.order < 1:
            raise ValueError(f"order must be >= 1, got {self.order}")
        if self.t_max < 0:
            raise ValueError(f"t_max must be >= 0, got {self.t_max}")
        if self.q_method not in ("orthant", "hermite"):
            raise ValueError(f"unknown q_method {self.q_method!r}")

    def with_alpha(self, alpha: float) -> "TheoryParams":
        return replace(self, alpha=alpha)


@dataclass
class MacroState:
    mode: Mode
    params: TheoryParams
    m: dict[int, float] = field(default_factory=dict)
    sigma2: dict[int, float] = field(default_factory=dict)
    U: dict[int, float] = field(default_factory=dict)
    C: dict[tuple[int, int], float] = field(default_factory=dict)
    q: dict[tuple[int, int], float] = field(default_factory=dict)

    @property
    def floor(self) -> int:
        """Earliest time index that carries a field."""
        return -1 if self.mode == "AWM" else 0

    @property
    def last(self) -> int:
        return max(self.m)

    def overlaps(self) -> list[float]:
        """``m_0 .. m_last``."""
        return [self.m[t] for t in range(0, self.last + 1)]

    def signal(self, s: int) -> float:
        if s == -1:
            return self.params.gamma * self.m[-1]
        return self.m[s]


# --- the q integral -----------------------------------------------------------


def _bvn_lower(h: float, k: float, rho: float) -> float:
    """``P(X < h, Y < k)`` for standard normals with correlation ``rho``.

    Owen's T reduction; exact to ~1e-15.
    """
    if rho >= 1.0:
        return float(ndtr(min(h, k)))
    if h == 0.0 and k == 0.0:
        return 0.25 + math.asin(rho) / (2 * math.pi)
    s = math.sqrt((1.0 - rho) * (1.0 + rho))

    def t_term(x: float, num: float) -> float:
        if x == 0.0:
            return math.copysign(0.25, num) if num != 0.0 else 0.0
        return float(owens_t(x, num / (x * s)))

    # sign tests, not h * k: the product underflows for tiny arguments
    if h == 0.0 or k == 0.0:
        beta = 0.5 if h + k < 0 else 0.0
    else:
        beta = 0.0 if (h > 0) == (k > 0) else 0.5
    return 0.5 * float(ndtr(h)) + 0.5 * float(ndtr(k)) - t_term(h, k - rho * h) - t_term(k, h - rho * k) - beta


def q_orthant(a: float, b: float, ratio: float) -> float:
    """``E[sgn(a + U) sgn(b + V)]`` with ``corr(U, V) = ratio``, closed form."""
    # below this the result differs from the a = 0 limit by O(a); subnormal
    # arguments would otherwise wreck the Owen's T ratio
    a = 0.0 if abs(a) < _TINY else a
    b = 0.0 if abs(b) < _TINY else b
    if ratio >= 1.0:
        return 1.0 - 2.0 * abs(float(ndtr(a)) - float(ndtr(b)))
    if ratio == 0.0:
        return float(erf(a / math.sqrt(2)) * erf(b / math.sqrt(2)))
    return (
        1.0
        - 2.0 * float(ndtr(-a))
        - 2.0 * float(ndtr(-b))
        + 4.0 * _bvn_lower(-a, -b, ratio)
    )


_GH_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gh_standard_normal(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights with ``sum w f(z) ~ int Dz f(z)``."""
    if n not in _GH_CACHE:
        x, w = hermgauss(n)
        _GH_CACHE[n] = (math.sqrt(2.0) * x, w / math.sqrt(math.pi))
    return _GH_CACHE[n]


def q_hermite(a: float, b: float, ratio: float, nodes: int = DEFAULT_GH_NODES) -> float:
    """Gauss-Hermite over ``c`` of ``erf((a + d1 c)/(sqrt2 d0)) erf((b + d1 c)/(sqrt2 d0))``.

    Loses accuracy as ``ratio -> 1`` (the erf factors become steps); use
    :func:`q_orthant` for production values.
    """
    if ratio >= 1.0:
        return 1.0 - 2.0 * abs(float(ndtr(a)) - float(ndtr(b)))
    z, w = gh_standard_normal(nodes)
    d1 = math.sqrt(ratio)
    d0 = math.sqrt(1.0 - ratio)
    s = math.sqrt(2.0) * d0
    return float(np.sum(w * erf((a + d1 * z) / s) * erf((b + d1 * z) / s)))


def q_integral(a: float, b: float, ratio: float, method: QMethod = "orthant", nodes: int = DEFAULT_GH_NODES) -> float:
    if method == "orthant":
        return q_orthant(a, b, ratio)
    return q_hermite(a, b, ratio, nodes)


# --- table accessors with boundary conventions --------------------------------


def _U(state: MacroState, k: int) -> float:
    return state.U.get(k, 0.0)


def _uprod(state: MacroState, lo: int, hi: int) -> float:
    """``prod_{k=lo}^{hi} U_k`` (1 for an empty range)."""
    p = 1.0
    for k in range(lo, hi + 1):
        p *= _U(state, k)
    return p


def _q(state: MacroState, a: int, b: int) -> float:
    if a < b:
        a, b = b, a
    if a == b:
        return 1.0
    if b < 0:
        # AWM: the feature layer is uncorrelated with every watermark state.
        return 0.0
    got = state.q.get((a, b))
    if got is not None:
        return got
    # beyond the truncation horizon: noise correlation dropped
    return state.m[a] * state.m[b]


def _source(state: MacroState, a: int, b: int) -> float:
    """``E[w_a w_b]``."""
    floor = state.floor
    if a < floor or b < floor:
        return 0.0
    alpha = state.params.alpha
    if a == -1 or b == -1:
        return alpha * state.params.gamma if a == b else 0.0
    return alpha * _q(state, a, b)


def _C(state: MacroState, a: int, b: int) -> float:
    if a < b:
        a, b = b, a
    if b < state.floor:
        return 0.0
    if a == b:
        return state.sigma2[a]
    return state.C.get((a, b), 0.0)


def c_recursion(state: MacroState, t: int, tau: int, order: int | None = None) -> float:
    """``C_{t, tau-1}`` by the three-case truncated expansion."""
    n = state.params.order if order is None else order
    if tau - 1 < state.floor:
        return 0.0
    if tau == t - n + 1:
        return 0.0
    if n >= 2 and tau == t - n + 2:
        return _source(state, t, tau - 1) + _U(state, t) * _C(state, t - 1, tau - 1)
    if n >= 3 and t - n + 3 <= tau <= t:
        c = _source(state, t, tau - 1) + _U(state, t) * _U(state, tau - 1) * _C(state, t - 1, tau - 2)
        for eta in range(tau - n + 1, tau - 1):
            c += _source(state, t, eta) * _uprod(state, eta + 1, tau - 1)
        for eta in range(tau - n + 1, t):
            c += _source(state, eta, tau - 1) * _uprod(state, eta + 1, t)
        return c
    raise TheoryError(f"no C recursion case for t={t}, tau={tau}, order={n}")


def correlation_ratio(state: MacroState, t: int, tau: int) -> float:
    c = _C(state, t, tau - 1)
    r = c / math.sqrt(state.sigma2[t] * state.sigma2[tau - 1])
    if -_RATIO_SLACK <= r < 0.0:
        return 0.0
    if 1.0 < r <= 1.0 + _RATIO_SLACK:
        return 1.0
    if not 0.0 <= r <= 1.0:
        raise InvariantError(f"C/(sigma sigma) = {r} outside [0, 1] at t={t}, tau={tau}")
    return r


def q_correlation(state: MacroState, t: int, tau: int) -> float:
    """``q_{t+1, tau} = E[x^{t+1} x^tau]`` from the already-filled ``C_{t, tau-1}``."""
    if tau - 1 < state.floor:
        # AMM initial state: its flips are independent of every crosstalk term
        return state.m[t + 1] * state.m[tau]
    r = correlation_ratio(state, t, tau)
    a = state.signal(t) / math.sqrt(state.sigma2[t])
    b = state.signal(tau - 1) / math.sqrt(state.sigma2[tau - 1])
    p = state.params
    return q_integral(a, b, r, p.q_method, p.gh_nodes)


# --- one-step maps ------------------------------------------------------------


class HmmStep(NamedTuple):
    m0: float
    sigma0_sq: float
    U0: float


def hmm_theory_step(params: TheoryParams, m_star: float) -> HmmStep:
    """Overlap, crosstalk variance and ``U`` after the hetero layer."""
    s2 = params.alpha * params.gamma
    if not s2 > 0:
        raise SingularVarianceError("alpha * gamma must be > 0")
    g = params.gamma
    m0 = math.erf(g * m_star / (math.sqrt(2.0) * math.sqrt(s2)))
    u0 = math.sqrt(2.0 / (math.pi * s2)) * math.exp(-(g * m_star) ** 2 / (2.0 * s2))
    return HmmStep(m0, params.alpha + s2 * u0 * u0, u0)


def initial_state(params: TheoryParams, m_init: float, mode: Mode) -> MacroState:
    """State at ``t = 0``: after the HMM (AWM) or seeded with ``m_0`` (AMM)."""
    if not -1.0 <= m_init <= 1.0:
        raise ValueError(f"initial overlap must lie in [-1, 1], got {m_init}")
    st = MacroState(mode=mode, params=params)
    if mode == "AWM":
        step = hmm_theory_step(params, m_init)
        st.m[-1] = m_init
        st.sigma2[-1] = params.alpha * params.gamma
        st.m[0] = step.m0
        st.U[0] = step.U0
        st.sigma2[0] = step.sigma0_sq
    elif mode == "AMM":
        st.m[0] = m_init
        st.sigma2[0] = params.alpha
    else:
        raise ValueError(f"mode must be 'AWM' or 'AMM', got {mode!r}")
    st.q[(0, 0)] = 1.0
    return st


def amm_theory_step(params: TheoryParams, state: MacroState, t: int) -> MacroState:
    """Fill time ``t + 1`` in place and return ``state``."""
    if t != state.last:
        raise TheoryError(f"state holds times up to {state.last}, cannot step from {t}")
    s2 = state.sigma2[t]
    if not s2 > 0:
        raise TheoryError(f"sigma_{t}^2 = {s2} is not positive")
    mt = state.m[t]
    state.m[t + 1] = math.erf(mt / math.sqrt(2.0 * s2))
    state.U[t + 1] = math.sqrt(2.0 / (math.pi * s2)) * math.exp(-mt * mt / (2.0 * s2))
    state.q[(t + 1, t + 1)] = 1.0

    n = params.order
    # the tau = -1 term would carry q_{t+1,-1} = 0
    taus = range(max(t - n + 1, 0), t + 1)
    for tau in taus:
        if tau - 1 >= state.floor:
            state.C[(t, tau - 1)] = c_recursion(state, t, tau, n)
        state.q[(t + 1, tau)] = q_correlation(state, t, tau)

    u_next = state.U[t + 1]
    cross = sum(state.q[(t + 1, tau)] * _uprod(state, tau + 1, t + 1) for tau in taus)
    state.sigma2[t + 1] = params.alpha + u_next * u_next * s2 + 2.0 * params.alpha * cross
    return state


def trajectory(params: TheoryParams, m_init: float, mode: Mode = "AWM") -> MacroState:
    """Iterate to ``params.t_max``; ``m_init`` is ``m_*`` (AWM) or ``m_0`` (AMM)."""
    st = initial_state(params, m_init, mode)
    for t in range(params.t_max):
        amm_theory_step(params, st, t)
    return st


def final_overlap(params: TheoryParams, m_init: float, mode: Mode, horizon: int) -> float:
    st = initial_state(params, m_init, mode)
    for t in range(horizon):
        amm_theory_step(params, st, t)
    return st.m[horizon]


# --- derived curves -----------------------------------------------------------


def critical_overlap(
    params: TheoryParams,
    mode: Mode = "AWM",
    *,
    threshold: float = SUCCESS_THRESHOLD,
    horizon: int = CRITICAL_HORIZON,
    tol: float = CRITICAL_TOL,
) -> float | None:
    """Smallest initial overlap whose ``m_horizon`` reaches ``threshold``.

    Bisection on ``[0, 1]``; returns the upper bracket once it is within
    ``tol`` of the lower one, or ``None`` when even ``1.0`` fails (load above
    capacity).
    """
    recalls = lambda m: final_overlap(params, m, mode, horizon) >= threshold
    if not recalls(1.0):
        return None
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if recalls(mid):
            hi = mid
        else:
            lo = mid
    return hi


class Equilibrium(NamedTuple):
    m: float
    steps: int
    converged: bool


def equilibrium_overlap(
    params: TheoryParams,
    mode: Mode = "AMM",
    *,
    tol: float = EQUILIBRIUM_TOL,
    max_t: int = EQUILIBRIUM_MAX_T,
) -> Equilibrium:
    """Iterate from initial overlap 1 until ``|m_{t+1} - m_t| < tol``.

    ``converged`` is False when ``max_t`` is reached first.
    """
    st = initial_state(params, 1.0, mode)
    for t in range(max_t):
        amm_theory_step(params, st, t)
        if abs(st.m[t + 1] - st.m[t]) < tol:
            return Equilibrium(st.m[t + 1], t + 1, True)
    return Equilibrium(st.m[max_t], max_t, False)


def storage_capacity(
    params: TheoryParams,
    mode: Mode = "AMM",
    *,
    threshold: float = SUCCESS_THRESHOLD,
    tol: float = CAPACITY_TOL,
    bracket: tuple[float, float] = (1e-3, 0.5),
) -> float:
    """Largest ``alpha`` whose equilibrium overlap stays ``>= threshold``.

    ``params.alpha`` is ignored.
    """
    stable = lambda a: equilibrium_overlap(params.with_alpha(a), mode).m >= threshold
    lo, hi = bracket
    if not stable(lo):
        return lo
    if stable(hi):
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if stable(mid):
            lo = mid
        else:
            hi = mid
    return lo


@dataclass
class BasinCurve:
    model: Mode
    gamma: float
    alphas: list[float]
    m_critical: list[float | None]
    m_equilibrium: list[float]


def basin_curve(params: TheoryParams, alphas: Iterable[float], mode: Mode) -> BasinCurve:
    alphas = [float(a) for a in alphas]
    crit, eq = [], []
    for a in alphas:
        p = params.with_alpha(a)
        crit.append(critical_overlap(p, mode))
        eq.append(equilibrium_overlap(p, mode).m)
    return BasinCurve(mode, params.gamma, alphas, crit, eq)


# --- CSV ----------------------------------------------------------------------


def fmt(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def write_trajectory_csv(fh: TextIO, state: MacroState) -> None:
    fh.write("t,m,sigma2,U\n")
    for t in sorted(state.m):
        fh.write(f"{t},{fmt(state.m[t])},{fmt(state.sigma2.get(t))},{fmt(state.U.get(t))}\n")


def write_basin_csv(fh: TextIO, curves: Iterable[BasinCurve]) -> None:
    """Rows ``alpha,m_critical,m_equilibrium,model``; ``none`` marks no recall."""
    fh.write("alpha,m_critical,m_equilibrium,model\n")
    for c in curves:
        for a, mc, me in zip(c.alphas, c.m_critical, c.m_equilibrium):
            mc_s = "none" if mc is None else fmt(mc)
            fh.write(f"{fmt(a)},{mc_s},{fmt(me)},{c.model}\n")
