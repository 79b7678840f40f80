"""Hebbian hetero- and auto-associative layers and the composed AWM recall.

Weights are stored as integer Hebbian sums; the ``1/N`` factor never matters
under ``sgn`` so it is dropped.  Two evaluation engines give bit-identical
outputs:

* dense: multiply by the trained weight matrix, ``O(NK)`` / ``O(N^2)``;
* pattern-space: ``h = xi^T (eta y)`` and ``h = xi^T (xi x) - P x``, which
  costs ``O(P (N + K))`` and never forms a weight matrix.

The ``- P x`` term removes exactly the diagonal ``W_ii = P`` that the auto
layer's ``j != i`` sum leaves out.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from os import PathLike
from typing import BinaryIO, Literal

import numpy as np

from awm.patterns import DimensionError, as_bipolar, overlap, sgn

Engine = Literal["auto", "dense", "pattern"]

WEIGHTS_MAGIC = b"AWMW1"
DEFAULT_T_MAX = 20


class TrainingError(ValueError):
    pass


def _weight_dtype(p: int) -> np.dtype:
    return np.dtype(np.int16) if p <= np.iinfo(np.int16).max else np.dtype(np.int32)


def _bipolar_matrix(rows: np.ndarray, name: str) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(rows))
    if arr.size == 0:
        raise TrainingError(f"{name} is empty")
    if not np.all(np.abs(arr) == 1):
        raise TrainingError(f"{name} must be bipolar")
    arr = arr.astype(np.int8)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class PatternStore:
    """Index-aligned key patterns (``P x K``) and associates (``P x N``)."""

    keys: np.ndarray
    associates: np.ndarray

    def __post_init__(self):
        keys = _bipolar_matrix(self.keys, "keys")
        assoc = _bipolar_matrix(self.associates, "associates")
        if keys.shape[0] != assoc.shape[0]:
            raise TrainingError(
                f"{keys.shape[0]} keys but {assoc.shape[0]} associates; lists must align"
            )
        object.__setattr__(self, "keys", keys)
        object.__setattr__(self, "associates", assoc)

    @property
    def P(self) -> int:
        return self.keys.shape[0]

    @property
    def K(self) -> int:
        return self.keys.shape[1]

    @property
    def N(self) -> int:
        return self.associates.shape[1]

    def key(self, mu: int) -> np.ndarray:
        return self.keys[mu]

    def associate(self, mu: int) -> np.ndarray:
        return self.associates[mu]


@dataclass(frozen=True)
class HeteroWeights:
    """``N x K`` matrix with entries ``sum_mu xi_i^mu eta_k^mu``."""

    matrix: np.ndarray
    P: int

    @property
    def N(self) -> int:
        return self.matrix.shape[0]

    @property
    def K(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class AutoWeights:
    """Symmetric ``N x N`` matrix ``sum_mu xi_i^mu xi_j^mu``.

    The diagonal holds ``P`` but recall never reads it.
    """

    matrix: np.ndarray
    P: int

    @property
    def N(self) -> int:
        return self.matrix.shape[0]


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def train_hetero(store: PatternStore) -> HeteroWeights:
    xi = store.associates.astype(np.int64)
    eta = store.keys.astype(np.int64)
    w = (xi.T @ eta).astype(_weight_dtype(store.P))
    return HeteroWeights(_freeze(w), store.P)


def train_auto(store: PatternStore) -> AutoWeights:
    xi = store.associates.astype(np.int64)
    w = (xi.T @ xi).astype(_weight_dtype(store.P))
    return AutoWeights(_freeze(w), store.P)


def _check_len(v: np.ndarray, n: int, what: str) -> np.ndarray:
    v = np.asarray(v)
    if v.ndim != 1 or v.size != n:
        raise DimensionError(f"{what} expects a length-{n} vector, got shape {v.shape}")
    return v


def hetero_field(w: HeteroWeights, y: np.ndarray) -> np.ndarray:
    y = _check_len(y, w.K, "hetero layer")
    return w.matrix.astype(np.int64) @ y.astype(np.int64)


def hetero_recall(w: HeteroWeights, y: np.ndarray) -> np.ndarray:
    """HMM output ``x^0 = sgn(W^h y)``."""
    return sgn(hetero_field(w, y))


def auto_field(w: AutoWeights, x: np.ndarray) -> np.ndarray:
    x = _check_len(x, w.N, "auto layer").astype(np.int64)
    m = w.matrix.astype(np.int64)
    return m @ x - np.diagonal(m) * x


def auto_step(w: AutoWeights, x: np.ndarray) -> np.ndarray:
    """One synchronous update ``x_i <- sgn(sum_{j != i} W_ij x_j)``."""
    return sgn(auto_field(w, x))


def pattern_space_hetero_field(store: PatternStore, y: np.ndarray) -> np.ndarray:
    y = _check_len(y, store.K, "hetero layer").astype(np.int64)
    return store.associates.T.astype(np.int64) @ (store.keys.astype(np.int64) @ y)


def pattern_space_hetero(store: PatternStore, y: np.ndarray) -> np.ndarray:
    return sgn(pattern_space_hetero_field(store, y))


def pattern_space_auto_field(store: PatternStore, x: np.ndarray) -> np.ndarray:
    x = _check_len(x, store.N, "auto layer").astype(np.int64)
    xi = store.associates.astype(np.int64)
    return xi.T @ (xi @ x) - store.P * x


def pattern_space_auto(store: PatternStore, x: np.ndarray) -> np.ndarray:
    return sgn(pattern_space_auto_field(store, x))


def prefer_pattern_space(P: int, N: int, K: int) -> bool:
    return P * (N + K) < N * K


@dataclass
class RecallTrace:
    """Overlaps of one AWM recall from the feature layer through ``t_max``.

    ``state_overlaps[t]`` is ``m_t`` for ``t = 0..t_max``.  Once a fixed point
    is hit at ``converged_at`` the remaining entries repeat its overlap, since
    further synchronous steps cannot move the state.  ``states`` holds the
    states actually computed (up to convergence) when requested.
    """

    t_max: int
    feature_overlap: float | None = None
    state_overlaps: list[float] | None = None
    states: list[np.ndarray] | None = None
    converged_at: int | None = None
    two_cycle: bool = False
    final_state: np.ndarray | None = field(default=None, repr=False)

    @property
    def final_overlap(self) -> float | None:
        return None if self.state_overlaps is None else self.state_overlaps[-1]


def _engines(
    hetero: HeteroWeights | None,
    auto: AutoWeights | None,
    store: PatternStore | None,
    engine: Engine,
    need_hetero: bool,
):
    if engine == "auto":
        if store is not None and prefer_pattern_space(store.P, store.N, store.K):
            engine = "pattern"
        else:
            engine = "dense"
    if engine == "pattern":
        if store is None:
            raise ValueError("pattern-space engine needs a PatternStore")
        return (lambda v: pattern_space_hetero(store, v)), (lambda v: pattern_space_auto(store, v))
    if engine == "dense":
        if (need_hetero and hetero is None) or auto is None:
            if store is None:
                raise ValueError("dense engine needs trained weights or a PatternStore")
            if need_hetero and hetero is None:
                hetero = train_hetero(store)
            if auto is None:
                auto = train_auto(store)
        first = (lambda v: hetero_recall(hetero, v)) if need_hetero else None
        return first, (lambda v: auto_step(auto, v))
    raise ValueError(f"unknown engine {engine!r}")


def _run(x, step, t_max, target, trace: RecallTrace, keep_states: bool) -> RecallTrace:
    prev = None
    states = [x]
    overlaps = None if target is None else [overlap(target, x)]
    for t in range(1, t_max + 1):
        nxt = step(x)
        if np.array_equal(nxt, x):
            trace.converged_at = t
            break
        if prev is not None and np.array_equal(nxt, prev):
            trace.two_cycle = True
        prev, x = x, nxt
        states.append(x)
        if overlaps is not None:
            overlaps.append(overlap(target, x))
    if overlaps is not None:
        overlaps.extend([overlaps[-1]] * (t_max + 1 - len(overlaps)))
        trace.state_overlaps = overlaps
    trace.final_state = x
    if keep_states:
        trace.states = states
    return trace


def awm_recall(
    y: np.ndarray,
    *,
    hetero: HeteroWeights | None = None,
    auto: AutoWeights | None = None,
    store: PatternStore | None = None,
    t_max: int = DEFAULT_T_MAX,
    reference: int | None = None,
    engine: Engine = "auto",
    keep_states: bool = False,
) -> RecallTrace:
    """Feature ``y`` -> hetero layer -> up to ``t_max`` synchronous auto steps.

    Pass trained weights (dense engine), a pattern store (pattern-space
    engine) or both.  ``reference`` selects the stored pair ``mu`` whose
    overlaps are recorded and requires ``store``.  Iteration stops early at a
    fixed point; a 2-cycle runs to ``t_max`` and sets ``two_cycle``.
    """
    if t_max < 0:
        raise ValueError(f"t_max must be >= 0, got {t_max}")
    first, step = _engines(hetero, auto, store, engine, need_hetero=True)
    trace = RecallTrace(t_max=t_max)
    target = None
    if reference is not None:
        if store is None:
            raise ValueError("reference overlaps need the PatternStore")
        trace.feature_overlap = overlap(store.key(reference), y)
        target = store.associate(reference)
    return _run(first(y), step, t_max, target, trace, keep_states)


def amm_recall(
    x0: np.ndarray,
    *,
    auto: AutoWeights | None = None,
    store: PatternStore | None = None,
    t_max: int = DEFAULT_T_MAX,
    reference: int | None = None,
    engine: Engine = "auto",
    keep_states: bool = False,
) -> RecallTrace:
    """Auto layer alone, started from ``x0`` at ``t = 0``."""
    if t_max < 0:
        raise ValueError(f"t_max must be >= 0, got {t_max}")
    _, step = _engines(None, auto, store, engine, need_hetero=False)
    x0 = _check_len(x0, auto.N if auto is not None else store.N, "auto layer")
    target = None
    if reference is not None:
        if store is None:
            raise ValueError("reference overlaps need the PatternStore")
        target = store.associate(reference)
    return _run(as_bipolar(x0), step, t_max, target, RecallTrace(t_max=t_max), keep_states)


# --- weight serialization ----------------------------------------------------
#
# magic "AWMW1", rows u32, cols u32, symmetric u8, integer width in bytes u8,
# then row-major little-endian signed entries.


def write_weights(fh: BinaryIO, w: HeteroWeights | AutoWeights) -> None:
    m = np.asarray(w.matrix)
    rows, cols = m.shape
    symmetric = isinstance(w, AutoWeights)
    width = m.dtype.itemsize
    fh.write(WEIGHTS_MAGIC)
    fh.write(struct.pack("<IIBB", rows, cols, int(symmetric), width))
    fh.write(m.astype(np.dtype(f"<i{width}")).tobytes())


def read_weights(fh: BinaryIO, P: int | None = None) -> HeteroWeights | AutoWeights:
    """Inverse of :func:`write_weights`.

    The format does not carry ``P``; when not given it is recovered as the
    largest absolute entry of an auto matrix diagonal, or left as the bound
    ``max |W|`` for hetero weights.
    """
    magic = fh.read(len(WEIGHTS_MAGIC))
    if magic != WEIGHTS_MAGIC:
        raise ValueError(f"not an AWMW1 stream (magic {magic!r})")
    rows, cols, symmetric, width = struct.unpack("<IIBB", fh.read(10))
    if width not in (1, 2, 4, 8):
        raise ValueError(f"unsupported integer width {width}")
    raw = fh.read(rows * cols * width)
    if len(raw) != rows * cols * width:
        raise ValueError("truncated weight file")
    m = np.frombuffer(raw, dtype=np.dtype(f"<i{width}")).reshape(rows, cols)
    m = _freeze(m.astype(m.dtype.newbyteorder("=")))
    if symmetric:
        if rows != cols or not np.array_equal(m, m.T):
            raise ValueError("symmetric flag set on a non-symmetric matrix")
        p = int(m[0, 0]) if P is None else P
        return AutoWeights(m, p)
    p = int(np.abs(m).max()) if P is None else P
    return HeteroWeights(m, p)


def save_weights(path: str | PathLike, w: HeteroWeights | AutoWeights) -> None:
    with open(path, "wb") as fh:
        write_weights(fh, w)


def load_weights(path: str | PathLike, P: int | None = None) -> HeteroWeights | AutoWeights:
    with open(path, "rb") as fh:
        return read_weights(fh, P)


__all__ = [
    "AutoWeights",
    "HeteroWeights",
    "PatternStore",
    "RecallTrace",
    "TrainingError",
    "as_bipolar",
    "auto_step",
    "amm_recall",
    "awm_recall",
    "hetero_recall",
    "pattern_space_auto",
    "pattern_space_hetero",
    "train_auto",
    "train_hetero",
]
