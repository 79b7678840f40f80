"""Experiment drivers that emit the figure data as CSV.

Every random draw is keyed by ``(seed, domain, grid index, trial)``, so the
output does not depend on worker count or scheduling; workers only change
wall time.  ``AWM_THREADS`` caps the thread pool (0 or unset = all cores).
"""

from __future__ import annotations

import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

from awm import theory
from awm.attacks import JpegParams, NoiseParams, gaussian_attack, jpeg_attack
from awm.imageio import list_corpus, read_image
from awm.memory import PatternStore, amm_recall, awm_recall
from awm.patterns import (
    EXPERIMENT_DOMAIN,
    ber_from_overlap,
    check_seed,
    flip_count,
    make_rng,
    overlap,
    random_bipolar,
    random_patterns,
)
from awm.theory import TheoryParams, fmt
from awm.watermark import extract_features, info_cost_awm, info_cost_zero, zw_extract, zw_map

T = TypeVar("T")
R = TypeVar("R")

DEFAULT_M_STARS = tuple(round(0.1 * i, 1) for i in range(1, 10))
DEFAULT_ALPHAS = tuple(round(0.02 * i, 2) for i in range(1, 7))

# stream sub-keys under EXPERIMENT_DOMAIN
_EVOLUTION = 0
_BASIN = 1
_PADDING = 2


class ConfigError(ValueError):
    pass


def _ratio(x: float) -> Fraction:
    return Fraction(repr(float(x)))


def _ratio_matches(x: float, count: int, n: int) -> bool:
    """``x`` names ``count / n`` as its printed decimal or as the rounded quotient."""
    return _ratio(x) == Fraction(count, n) or float(x) == count / n


def _size_from_ratio(x: float, n: int, name: str) -> int:
    count = round(_ratio(x) * n)
    if not _ratio_matches(x, count, n):
        raise ConfigError(f"{name}={x} gives a non-integer size for N={n}")
    return int(count)


@dataclass
class ExperimentConfig:
    N: int = 2000
    K: int | None = None
    P: int | None = None
    alpha: float | None = None
    gamma: float | None = None
    trials: int = 20
    seed: int = 0
    t_max: int = 20
    order: int = 4
    m_stars: tuple[float, ...] = DEFAULT_M_STARS
    alphas: tuple[float, ...] = DEFAULT_ALPHAS
    gammas: tuple[float, ...] = (1.0,)
    engine: str = "auto"
    threads: int | None = None
    simulate: bool = False

    def __post_init__(self):
        self.resolve()

    def resolve(self) -> "ExperimentConfig":
        """Fill ``K, P, alpha, gamma`` from each other and check consistency.

        ``alpha = P / N`` and ``gamma = K / N`` must hold exactly, reading a
        ratio either as the decimal it prints as (``0.08``) or as the
        correctly rounded quotient (``1 / 3``).
        """
        if self.N < 1:
            raise ConfigError(f"N must be >= 1, got {self.N}")
        n = self.N
        if self.K is None:
            self.K = n if self.gamma is None else _size_from_ratio(self.gamma, n, "gamma")
        if self.gamma is None:
            self.gamma = self.K / n
        elif not _ratio_matches(self.gamma, self.K, n):
            raise ConfigError(f"gamma={self.gamma} disagrees with K/N={self.K}/{n}")
        if self.P is None:
            if self.alpha is None:
                raise ConfigError("need P or alpha")
            self.P = _size_from_ratio(self.alpha, n, "alpha")
        if self.alpha is None:
            self.alpha = self.P / n
        elif not _ratio_matches(self.alpha, self.P, n):
            raise ConfigError(f"alpha={self.alpha} disagrees with P/N={self.P}/{n}")
        if self.K < 1 or self.P < 1:
            raise ConfigError(f"K and P must be >= 1, got K={self.K}, P={self.P}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if self.t_max < 0:
            raise ConfigError(f"t_max must be >= 0, got {self.t_max}")
        check_seed(self.seed)
        return self

    def theory_params(self, **kw) -> TheoryParams:
        base = dict(alpha=self.alpha, gamma=self.gamma, order=self.order, t_max=self.t_max)
        base.update(kw)
        return TheoryParams(**base)


@dataclass
class TrialSummary:
    """Per-time mean and population standard deviation over ``trials`` runs."""

    mean: np.ndarray
    std: np.ndarray
    trials: int

    @classmethod
    def from_runs(cls, runs: np.ndarray) -> "TrialSummary":
        """Column statistics with correctly rounded sums (order-independent)."""
        runs = np.asarray(runs, dtype=np.float64)
        k = runs.shape[0]
        mean = np.array([math.fsum(col) / k for col in runs.T])
        var = [math.fsum((col - mu) ** 2) / k for col, mu in zip(runs.T, mean)]
        return cls(mean, np.sqrt(var), k)


def worker_count(requested: int | None = None) -> int:
    if requested is None:
        requested = int(os.environ.get("AWM_THREADS", "0") or 0)
    return requested if requested > 0 else (os.cpu_count() or 1)


def pool_map(fn: Callable[[T], R], items: Iterable[T], threads: int | None = None) -> list[R]:
    """Ordered map over a thread pool (numpy matmuls release the GIL)."""
    items = list(items)
    n = worker_count(threads)
    if n == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def _degrade(v: np.ndarray, target: float, rng: np.random.Generator) -> np.ndarray:
    f = flip_count(v.size, target)
    out = v.astype(np.int8, copy=True)
    if f:
        idx = rng.choice(v.size, size=f, replace=False)
        out[idx] = -out[idx]
    return out


def _random_store(P: int, K: int, N: int, rng: np.random.Generator) -> PatternStore:
    return PatternStore(random_patterns(P, K, rng), random_patterns(P, N, rng))


def simulate_recall(cfg: ExperimentConfig, m_star: float, grid_index: int, trial: int) -> list[float]:
    """One random AWM instance recalled from a key degraded to ``m_star``.

    Returns ``[m_*, m_0, ..., m_t_max]`` for stored pair 0.
    """
    rng = make_rng(cfg.seed, EXPERIMENT_DOMAIN, _EVOLUTION, grid_index, trial)
    store = _random_store(cfg.P, cfg.K, cfg.N, rng)
    y = _degrade(store.key(0), m_star, rng)
    tr = awm_recall(y, store=store, t_max=cfg.t_max, reference=0, engine=cfg.engine)
    return [tr.feature_overlap] + tr.state_overlaps


def _rows_to_csv(header: str, rows: Iterable[Sequence[object]]) -> str:
    buf = io.StringIO()
    buf.write(header + "\n")
    for row in rows:
        buf.write(",".join(fmt(v) if isinstance(v, float) else str(v) for v in row) + "\n")
    return buf.getvalue()


@dataclass
class EvolutionResult:
    csv: str
    summaries: dict[float, TrialSummary]
    runs: dict[float, np.ndarray]
    theory: dict[float, list[float]]

    def dump_csv(self) -> str:
        """Per-trial overlaps: ``m_star,trial,t,overlap``."""
        rows = []
        for ms, runs in self.runs.items():
            for k, run in enumerate(runs):
                for t, v in enumerate(run, start=-1):
                    rows.append((float(ms), k, t, float(v)))
        return _rows_to_csv("m_star,trial,t,overlap", rows)


def exp_overlap_evolution(cfg: ExperimentConfig) -> EvolutionResult:
    """Simulated mean/std overlap per time next to the order-``n`` theory.

    Columns ``m_star,t,mean,std,theory``; ``t`` runs from -1 (feature layer)
    to ``t_max``, so each grid value contributes ``t_max + 2`` rows.
    """
    params = cfg.theory_params()
    jobs = [(g, ms, k) for g, ms in enumerate(cfg.m_stars) for k in range(cfg.trials)]
    results = pool_map(lambda j: simulate_recall(cfg, j[1], j[0], j[2]), jobs, cfg.threads)
    summaries, runs_by, theo = {}, {}, {}
    rows = []
    for g, ms in enumerate(cfg.m_stars):
        runs = np.array(results[g * cfg.trials : (g + 1) * cfg.trials])
        summ = TrialSummary.from_runs(runs)
        st = theory.trajectory(params, ms, "AWM")
        th = [st.m[t] for t in range(-1, cfg.t_max + 1)]
        for i, t in enumerate(range(-1, cfg.t_max + 1)):
            rows.append((float(ms), t, float(summ.mean[i]), float(summ.std[i]), float(th[i])))
        summaries[ms], runs_by[ms], theo[ms] = summ, runs, th
    csv = _rows_to_csv("m_star,t,mean,std,theory", rows)
    return EvolutionResult(csv, summaries, runs_by, theo)


def simulate_equilibrium(cfg: ExperimentConfig, mode: str, grid_index: int, trial: int) -> float:
    """``m_t_max`` from a perfect start: ``y = eta`` (AWM) or ``x^0 = xi`` (AMM)."""
    rng = make_rng(cfg.seed, EXPERIMENT_DOMAIN, _BASIN, grid_index, trial, 0 if mode == "AMM" else 1)
    store = _random_store(cfg.P, cfg.K, cfg.N, rng)
    if mode == "AWM":
        tr = awm_recall(store.key(0), store=store, t_max=cfg.t_max, reference=0, engine=cfg.engine)
        return tr.state_overlaps[-1]
    tr = amm_recall(store.associate(0), store=store, t_max=cfg.t_max, reference=0, engine=cfg.engine)
    return tr.state_overlaps[-1]


def exp_basin(cfg: ExperimentConfig) -> str:
    """Critical and equilibrium overlaps per ``(gamma, alpha, model)``.

    Columns ``gamma,alpha,model,m_critical,m_equilibrium,sim_mean,sim_std``.
    ``m_critical`` is ``none`` above capacity; simulation columns are empty
    unless ``cfg.simulate``.
    """
    points = [(g, a, mode) for g in cfg.gammas for a in cfg.alphas for mode in ("AMM", "AWM")]

    def solve(pt):
        g, a, mode = pt
        p = TheoryParams(alpha=a, gamma=g, order=cfg.order, t_max=cfg.t_max)
        return theory.critical_overlap(p, mode), theory.equilibrium_overlap(p, mode).m

    theo = pool_map(solve, points, cfg.threads)
    sims: list[tuple[float, float] | None] = [None] * len(points)
    if cfg.simulate:
        def sim(ix):
            g, a, mode = points[ix]
            sub = replace(cfg, K=None, P=None, alpha=a, gamma=g).resolve()
            vals = [simulate_equilibrium(sub, mode, ix, k) for k in range(cfg.trials)]
            return float(np.mean(vals)), float(np.std(vals))

        sims = pool_map(sim, range(len(points)), cfg.threads)
    rows = []
    for (g, a, mode), (mc, me), s in zip(points, theo, sims):
        rows.append(
            (
                float(g),
                float(a),
                mode,
                "none" if mc is None else float(mc),
                float(me),
                "" if s is None else float(s[0]),
                "" if s is None else float(s[1]),
            )
        )
    return _rows_to_csv("gamma,alpha,model,m_critical,m_equilibrium,sim_mean,sim_std", rows)


@dataclass(frozen=True)
class AttackSpec:
    kind: str = "none"  # none | jpeg | noise
    quality: int = 5
    mean: float = 100.0
    std: float = 100.0
    clamp: bool = False

    def __post_init__(self):
        if self.kind not in ("none", "jpeg", "noise"):
            raise ConfigError(f"unknown attack {self.kind!r}")
        if self.kind == "jpeg":
            JpegParams(self.quality)

    def apply(self, img: np.ndarray, seed: int, index: int) -> np.ndarray:
        if self.kind == "jpeg":
            return jpeg_attack(img, JpegParams(self.quality))
        if self.kind == "noise":
            return gaussian_attack(img, NoiseParams(self.mean, self.std, seed, self.clamp, stream=index))
        return np.asarray(img, dtype=np.float64)


NA = "n/a"


@dataclass
class BerRow:
    image: str
    m_star: float
    ber_zero: float | None
    ber_hmm: float
    ber_awm: float
    theory_hmm: float
    theory_awm: float

    def cells(self) -> tuple:
        return (
            self.image,
            self.m_star,
            NA if self.ber_zero is None else self.ber_zero,
            self.ber_hmm,
            self.ber_awm,
            self.theory_hmm,
            self.theory_awm,
        )


BER_HEADER = "image,m_star,ber_zero,ber_hmm,ber_awm,theory_hmm,theory_awm"


def exp_ber(
    cfg: ExperimentConfig, corpus: str | Path | Sequence[Path], attack: AttackSpec
) -> tuple[str, list[BerRow]]:
    """BER of zero-watermarking, the HMM output and the AWM output per image.

    Each corpus image gets a random watermark from its own stream; the store
    is padded with random pattern pairs up to ``cfg.P``.  The zero-watermark
    column reads ``n/a`` when ``K != N``.
    """
    files = list_corpus(corpus) if isinstance(corpus, (str, Path)) else [Path(p) for p in corpus]
    images = [read_image(f) for f in files]
    if len(images) > cfg.P:
        raise ConfigError(f"{len(images)} images exceed P={cfg.P}")
    feats = [extract_features(img, cfg.K) for img in images]
    wms = [random_bipolar(cfg.N, cfg.seed, stream=i) for i in range(len(images))]
    n_pad = cfg.P - len(images)
    keys = np.stack([f.signs for f in feats])
    assoc = np.stack(wms)
    if n_pad:
        rng = make_rng(cfg.seed, EXPERIMENT_DOMAIN, _PADDING)
        keys = np.vstack([keys, random_patterns(n_pad, cfg.K, rng)])
        assoc = np.vstack([assoc, random_patterns(n_pad, cfg.N, rng)])
    store = PatternStore(keys, assoc)
    params = cfg.theory_params()

    def one(i: int) -> BerRow:
        attacked = attack.apply(images[i], cfg.seed, i)
        y = extract_features(attacked, cfg.K).signs
        tr = awm_recall(y, store=store, t_max=cfg.t_max, reference=i, engine=cfg.engine)
        m_star = tr.feature_overlap
        ber_zero = None
        if cfg.K == cfg.N:
            key = zw_map(feats[i], wms[i])
            ber_zero = ber_from_overlap(overlap(wms[i], zw_extract(y, key)))
        hmm = theory.hmm_theory_step(params, m_star).m0
        awm_th = theory.trajectory(params, m_star, "AWM").m[cfg.t_max]
        return BerRow(
            files[i].name,
            m_star,
            ber_zero,
            ber_from_overlap(tr.state_overlaps[0]),
            ber_from_overlap(tr.state_overlaps[-1]),
            ber_from_overlap(hmm),
            ber_from_overlap(awm_th),
        )

    rows = pool_map(one, range(len(images)), cfg.threads)
    return _rows_to_csv(BER_HEADER, (r.cells() for r in rows)), rows


def exp_info_cost(P: int, K: int, N: int) -> str:
    """Storage of both schemes; ``ratio`` is AWM bits over zero-watermark bits."""
    cz = info_cost_zero(P, K)
    ca = info_cost_awm(P, K, N)
    rows = [
        ("P", P),
        ("K", K),
        ("N", N),
        ("bit_width", (P - 1).bit_length()),
        ("cost_zero", cz),
        ("cost_awm", ca),
        ("ratio", ca / cz),
    ]
    return _rows_to_csv("quantity,value", rows)
