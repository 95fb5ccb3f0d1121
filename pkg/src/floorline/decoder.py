"""Flooding message-passing decoders with clipping and optional fixed point.

Messages are stored per edge in the row-major edge order of
:class:`~floorline.code_model.SparseParityCheck`, one row per frame, so a
whole batch of received words advances in lock step.  Frames whose hard
decision satisfies every check drop out of the active batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .code_model import SparseParityCheck
from .validation import check_llrs, check_parity_matrix

SUM_PRODUCT = "sum-product"
CORRECTED_MIN_SUM = "corrected-min-sum"
_ALIASES = {"sp": SUM_PRODUCT, "tanh": SUM_PRODUCT, SUM_PRODUCT: SUM_PRODUCT,
            "cms": CORRECTED_MIN_SUM, "min-sum": CORRECTED_MIN_SUM,
            CORRECTED_MIN_SUM: CORRECTED_MIN_SUM}
SATURATION_EPS = 1e-12


class DecoderConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DecoderConfig:
    algorithm: str = SUM_PRODUCT
    max_iters: int = 50
    clip: float = 10.0
    bits: int | None = None          # None means floating point
    early_stop: bool = True

    def __post_init__(self):
        algo = _ALIASES.get(str(self.algorithm).lower())
        if algo is None:
            raise DecoderConfigError(f"unknown algorithm {self.algorithm!r}")
        object.__setattr__(self, "algorithm", algo)
        if not (isinstance(self.max_iters, (int, np.integer)) and self.max_iters >= 1):
            raise DecoderConfigError("max_iters must be an integer >= 1")
        if not self.clip > 0:
            raise DecoderConfigError("clip must be positive")
        if self.bits is not None:
            if not (isinstance(self.bits, (int, np.integer)) and self.bits >= 2):
                raise DecoderConfigError("bits must be an integer >= 2")
            if not math.isfinite(self.clip):
                raise DecoderConfigError("fixed point needs a finite clip")

    @property
    def fixed_point(self) -> bool:
        return self.bits is not None

    def to_dict(self) -> dict:
        return {"algorithm": self.algorithm, "max_iters": int(self.max_iters),
                "clip": float(self.clip), "bits": self.bits, "early_stop": self.early_stop}


@dataclass
class DecodeOutcome:
    decoded: np.ndarray
    converged: bool
    iterations_used: int
    trace: np.ndarray | None = None       # (iterations, tracked) accumulated LLRs
    tracked: tuple = ()


@dataclass
class BatchOutcome:
    decoded: np.ndarray                   # (frames, n) uint8
    converged: np.ndarray                 # (frames,) bool
    iterations_used: np.ndarray           # (frames,) int
    trace: np.ndarray | None = None       # (iterations, frames, tracked)
    tracked: tuple = ()
    message_means: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.converged)

    def __getitem__(self, k) -> DecodeOutcome:
        tr = None if self.trace is None else self.trace[: self.iterations_used[k], k, :]
        return DecodeOutcome(self.decoded[k], bool(self.converged[k]),
                             int(self.iterations_used[k]), tr, self.tracked)


# ---------------------------------------------------------------- scalar rules

def quantize(llr, bits: int, clip: float):
    """Uniform symmetric quantizer with levels k*clip/(2^(bits-1)-1)."""
    if bits < 2:
        raise ValueError("bits must be >= 2")
    levels = 2 ** (bits - 1) - 1
    step = clip / levels
    x = np.asarray(llr, dtype=float) / step
    k = np.sign(x) * np.floor(np.abs(x) + 0.5)
    out = np.clip(k, -levels, levels) * step
    return out if out.ndim else float(out)


def _sign(x):
    return np.where(x < 0, -1.0, 1.0)


def check_update_tanh(incoming, clip: float = np.inf) -> np.ndarray:
    """Extrinsic outputs of one check under the tanh rule."""
    lam = np.asarray(incoming, dtype=float)
    out = _tanh_rule(lam[None, :], np.zeros(len(lam), dtype=np.int64), np.array([0]), clip)
    return out[0]


def check_update_cms(incoming, d_c: int | None = None, clip: float = np.inf) -> np.ndarray:
    """Extrinsic outputs of one check under corrected min-sum."""
    lam = np.asarray(incoming, dtype=float)
    if d_c is not None and d_c != len(lam):
        raise ValueError("incoming length must equal d_c")
    out = _cms_rule(lam[None, :], np.zeros(len(lam), dtype=np.int64), np.array([0]),
                    np.array([len(lam)]), clip)
    return out[0]


def cms_correction(min_mag, d_c):
    """Degree-dependent offset applied to the min-sum magnitude."""
    d_c = np.asarray(d_c, dtype=float)
    lg = np.log(np.maximum(d_c - 1, 1.0))
    return np.where(np.asarray(min_mag) >= 3 * lg / 8, -lg / 4, 0.0)


def variable_update(intrinsic: float, incoming, clip: float = np.inf):
    """Return (outgoing messages, accumulated LLR) for one variable node."""
    inc = np.asarray(incoming, dtype=float)
    total = intrinsic + inc.sum()
    return np.clip(total - inc, -clip, clip), float(np.clip(total, -clip, clip))


# --------------------------------------------------------------- batched rules

def _tanh_rule(msg, seg, starts, clip):
    """Vectorised tanh rule; ``seg`` maps each edge to its check segment."""
    t = np.tanh(msg / 2.0)
    mag = np.abs(t)
    zero = mag == 0.0
    logm = np.log(np.where(zero, 1.0, mag))
    neg = (t < 0).astype(np.int64)
    s_log = np.add.reduceat(logm, starts, axis=1)[:, seg]
    s_zero = np.add.reduceat(zero.astype(np.int64), starts, axis=1)[:, seg]
    s_neg = np.add.reduceat(neg, starts, axis=1)[:, seg]
    excl = np.exp(s_log - logm)
    excl = np.where(s_zero - zero > 0, 0.0, excl)
    sign = np.where((s_neg - neg) % 2 == 1, -1.0, 1.0)
    excl = np.minimum(excl, 1.0 - SATURATION_EPS)
    return np.clip(sign * 2.0 * np.arctanh(excl), -clip, clip) + 0.0


def _cms_rule(msg, seg, starts, degree, clip):
    mag = np.abs(msg)
    e = msg.shape[1]
    min1 = np.minimum.reduceat(mag, starts, axis=1)
    at_min = mag == min1[:, seg]
    pos = np.where(at_min, np.arange(e), e)
    first = np.minimum.reduceat(pos, starts, axis=1)
    is_first = np.arange(e)[None, :] == first[:, seg]
    min2 = np.minimum.reduceat(np.where(is_first, np.inf, mag), starts, axis=1)
    m = np.where(is_first, min2[:, seg], min1[:, seg])
    m = np.where(np.isinf(m), 0.0, m)      # degree-1 checks carry no extrinsic
    m = np.maximum(m + cms_correction(m, degree[seg]), 0.0)
    neg = (msg < 0).astype(np.int64)
    s_neg = np.add.reduceat(neg, starts, axis=1)[:, seg]
    sign = np.where((s_neg - neg) % 2 == 1, -1.0, 1.0)
    return np.clip(sign * m, -clip, clip) + 0.0


class _Layout:
    """Index bookkeeping shared by every decode call on one matrix."""

    def __init__(self, matrix: SparseParityCheck):
        self.matrix = matrix
        self.n = matrix.n_cols
        ec, ev = matrix.edge_check, matrix.edge_var
        rows_used, self.check_seg = np.unique(ec, return_inverse=True)
        self.check_starts = np.searchsorted(ec, rows_used)
        self.check_degree = np.bincount(ec, minlength=matrix.n_rows)[rows_used]
        self.var_perm = np.argsort(ev, kind="stable")
        ev_sorted = ev[self.var_perm]
        self.vars_used, vseg = np.unique(ev_sorted, return_inverse=True)
        self.var_starts = np.searchsorted(ev_sorted, self.vars_used)
        self.var_seg_sorted = vseg
        self.edge_var = ev
        self.csr = matrix.csr()

    def var_sums(self, msg):
        s = np.add.reduceat(msg[:, self.var_perm], self.var_starts, axis=1)
        out = np.zeros((msg.shape[0], self.n))
        out[:, self.vars_used] = s
        return out

    def syndrome_ok(self, bits):
        return ~np.asarray((self.csr @ bits.T.astype(np.int64)) % 2, dtype=bool).any(axis=0)


_LAYOUTS: dict = {}


def _layout(matrix: SparseParityCheck) -> _Layout:
    key = id(matrix)
    hit = _LAYOUTS.get(key)
    if hit is None or hit.matrix is not matrix:
        hit = _Layout(matrix)
        if len(_LAYOUTS) > 16:
            _LAYOUTS.clear()
        _LAYOUTS[key] = hit
    return hit


def decode_batch(matrix, llrs, config: DecoderConfig = DecoderConfig(), track=None,
                 record_means: bool = False) -> BatchOutcome:
    """Decode every row of ``llrs``.

    ``track`` lists variable indices whose accumulated LLR is recorded each
    iteration.  ``record_means`` stores the average check-to-variable and
    variable-to-check message per iteration over all frames still active.
    """
    H = check_parity_matrix(matrix)
    lay = _layout(H)
    llrs = np.atleast_2d(check_llrs(llrs, H.n_cols))
    frames = llrs.shape[0]
    tau = config.clip
    q = (lambda x: quantize(x, config.bits, tau)) if config.fixed_point else (lambda x: x)

    lam = q(np.clip(llrs, -tau, tau))
    track = tuple(int(v) for v in (track or ()))
    if any(not 0 <= v < H.n_cols for v in track):
        raise ValueError("tracked variable out of range")

    decoded = (lam < 0).astype(np.uint8)
    converged = np.zeros(frames, dtype=bool)
    used = np.full(frames, config.max_iters, dtype=np.int64)
    trace = np.full((config.max_iters, frames, len(track)), np.nan) if track else None
    means = {"check_to_var": [], "var_to_check": []}

    active = np.arange(frames)
    v2c = lam[:, lay.edge_var]
    lam_a = lam
    for it in range(1, config.max_iters + 1):
        if config.algorithm == SUM_PRODUCT:
            c2v = _tanh_rule(v2c, lay.check_seg, lay.check_starts, tau)
        else:
            c2v = _cms_rule(v2c, lay.check_seg, lay.check_starts, lay.check_degree, tau)
        c2v = q(c2v)
        total = lam_a + lay.var_sums(c2v)
        acc = q(np.clip(total, -tau, tau))
        v2c = q(np.clip(total[:, lay.edge_var] - c2v, -tau, tau))
        if record_means:
            means["check_to_var"].append(float(c2v.mean()))
            means["var_to_check"].append(float(v2c.mean()))
        hard = (acc < 0).astype(np.uint8)
        decoded[active] = hard
        if trace is not None:
            trace[it - 1, active, :] = acc[:, list(track)]
        if not config.early_stop and it < config.max_iters:
            continue
        ok = lay.syndrome_ok(hard)
        if ok.any():
            done = active[ok]
            converged[done] = True
            used[done] = it
            keep = ~ok
            active, v2c, lam_a = active[keep], v2c[keep], lam_a[keep]
            if active.size == 0:
                break
    if not config.early_stop:
        # a full run is reported as converged when its final word is a codeword
        converged = lay.syndrome_ok(decoded)
    return BatchOutcome(decoded, converged, used, trace, track,
                        {k: np.array(v) for k, v in means.items()} if record_means else {})


def decode(matrix, llrs, config: DecoderConfig = DecoderConfig(), track=None) -> DecodeOutcome:
    """Decode a single received word."""
    llrs = np.asarray(llrs, dtype=float)
    if llrs.ndim != 1:
        raise ValueError("decode expects a single word; use decode_batch")
    return decode_batch(matrix, llrs[None, :], config, track)[0]


class BeliefPropagationDecoder(BaseEstimator):
    """Estimator wrapper: ``fit(H)`` binds the code, ``predict(llrs)`` returns
    hard decisions, ``transform(llrs)`` the accumulated-LLR signs as +-1."""

    def __init__(self, algorithm=SUM_PRODUCT, max_iters=50, clip=10.0, bits=None,
                 early_stop=True):
        self.algorithm = algorithm
        self.max_iters = max_iters
        self.clip = clip
        self.bits = bits
        self.early_stop = early_stop

    def _config(self):
        return DecoderConfig(self.algorithm, self.max_iters, self.clip, self.bits,
                             self.early_stop)

    def fit(self, X, y=None):
        self.config_ = self._config()
        self.matrix_ = check_parity_matrix(X)
        self.n_features_in_ = self.matrix_.n_cols
        return self

    def decode(self, llrs, track=None) -> BatchOutcome:
        from sklearn.utils.validation import check_is_fitted
        check_is_fitted(self, "matrix_")
        return decode_batch(self.matrix_, llrs, self.config_, track)

    def predict(self, X):
        return self.decode(np.atleast_2d(X)).decoded

    def transform(self, X):
        return 1.0 - 2.0 * self.predict(X)

    def score(self, X, y=None):
        """Fraction of frames decoded to a codeword (or to ``y`` when given)."""
        out = self.decode(np.atleast_2d(X))
        if y is None:
            return float(out.converged.mean())
        return float(np.all(out.decoded == np.atleast_2d(y), axis=1).mean())


__all__ = ["DecoderConfig", "DecoderConfigError", "DecodeOutcome", "BatchOutcome",
           "quantize", "check_update_tanh", "check_update_cms", "variable_update",
           "cms_correction", "decode", "decode_batch", "BeliefPropagationDecoder",
           "SUM_PRODUCT", "CORRECTED_MIN_SUM"]
