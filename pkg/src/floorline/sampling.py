"""Mean-shift importance sampling of decoder failures on BPSK/AWGN.

The all-zero codeword is sent as +1 symbols.  Under the biased density the
symbols of the target bits are pulled toward -1 by ``shift``.  With several
target sets each trial is drawn from one set's shifted density in
round-robin order and weighted by the balance heuristic, i.e. against the
equal mixture of all shifted densities, which keeps the estimator unbiased.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import logsumexp, ndtr
from scipy.stats import norm
from sklearn.base import BaseEstimator

from .code_model import SparseParityCheck, gf2_rank
from .decoder import DecoderConfig, decode_batch
from .validation import check_parity_matrix

CHUNK = 2048
ROUND_ROBIN = "round-robin"
FIXED = "fixed"


def noise_sigma(ebn0_db: float, rate: float) -> float:
    return math.sqrt(1.0 / (2.0 * rate * 10 ** (ebn0_db / 10)))


def code_rate(matrix: SparseParityCheck) -> float:
    return 1.0 - gf2_rank(matrix) / matrix.n_cols


@dataclass(frozen=True)
class BiasSpec:
    target_sets: tuple = ()
    shift: float = 0.0
    selection: str = ROUND_ROBIN

    def __post_init__(self):
        sets = tuple(tuple(sorted(int(v) for v in getattr(s, "variables", s)))
                     for s in self.target_sets)
        object.__setattr__(self, "target_sets", sets)
        if not self.shift >= 0:
            raise ValueError("shift must be non-negative")
        if self.selection not in (ROUND_ROBIN, FIXED):
            raise ValueError(f"selection must be {ROUND_ROBIN!r} or {FIXED!r}")
        if self.shift > 0 and not sets:
            raise ValueError("a positive shift needs at least one target set")
        if any(len(s) == 0 for s in sets):
            raise ValueError("empty target set")

    @property
    def active_sets(self) -> tuple:
        if self.shift == 0 or not self.target_sets:
            return ()
        return self.target_sets if self.selection == ROUND_ROBIN else self.target_sets[:1]

    def validate(self, n: int):
        for s in self.target_sets:
            if s[0] < 0 or s[-1] >= n:
                raise ValueError("bias target bit out of range")
        return self

    def mask(self, n: int) -> np.ndarray:
        m = np.zeros((max(1, len(self.active_sets)), n), dtype=bool)
        for k, s in enumerate(self.active_sets):
            m[k, list(s)] = True
        return m

    def to_dict(self):
        return {"target_sets": [list(s) for s in self.target_sets], "shift": self.shift,
                "selection": self.selection}


@dataclass
class ISEstimate:
    ebn0_db: float
    ber: float
    fer: float
    ber_var: float
    fer_var: float
    samples: int
    raw_errors: int
    attribution: dict = field(default_factory=dict)
    exact_set_fraction: float = float("nan")
    no_events: bool = False

    @property
    def rel_halfwidth(self) -> float:
        """Relative 95% confidence half-width of the BER estimate."""
        if self.ber <= 0:
            return float("inf")
        return 1.96 * math.sqrt(max(self.ber_var, 0.0)) / self.ber

    def row(self) -> dict:
        return {"EbN0_dB": self.ebn0_db, "BER": self.ber, "FER": self.fer,
                "var": self.ber_var, "rel_halfwidth": self.rel_halfwidth,
                "raw_errors": self.raw_errors}


def log_weights(y: np.ndarray, sigma: float, shift: float, mask: np.ndarray) -> np.ndarray:
    """log p(y)/q(y) with q the equal mixture of the shifted densities.

    Shifting bit j by -s changes its log-density by (2 s (y_j - 1) + s^2) / (2 sigma^2)
    relative to the unbiased one, so log q_k - log p = -sum over set k of that.
    """
    if shift == 0:
        return np.zeros(len(y))
    per_bit = (2.0 * shift * (y - 1.0) + shift * shift) / (2.0 * sigma * sigma)
    log_q_over_p = -(per_bit @ mask.T.astype(float))          # (trials, K)
    return -(logsumexp(log_q_over_p, axis=1) - math.log(mask.shape[0]))


def log_weights_reference(y: np.ndarray, sigma: float, shift: float, mask: np.ndarray) -> np.ndarray:
    """Same quantity from full Gaussian log-densities (slow, for checking)."""
    log_p = norm.logpdf(y, loc=1.0, scale=sigma).sum(axis=1)
    comps = []
    for k in range(mask.shape[0]):
        mean = np.where(mask[k], 1.0 - shift, 1.0)
        comps.append(norm.logpdf(y, loc=mean, scale=sigma).sum(axis=1))
    log_q = logsumexp(np.stack(comps, axis=1), axis=1) - math.log(mask.shape[0])
    return log_p - log_q


def _stream(seed: int, point: int, chunk: int) -> np.random.Generator:
    # counter-based stream keyed by (seed, point, chunk): independent of scheduling
    ss = np.random.SeedSequence([int(seed), int(point), int(chunk)])
    return np.random.Generator(np.random.Philox(ss))


def draw_chunk(n: int, sigma: float, bias: BiasSpec, seed: int, point: int, chunk: int,
               size: int, first_trial: int):
    """Received symbols and log-weights for trials first_trial .. first_trial+size-1."""
    rng = _stream(seed, point, chunk)
    y = 1.0 + sigma * rng.standard_normal((size, n))
    mask = bias.mask(n)
    if bias.active_sets:
        k = (first_trial + np.arange(size)) % mask.shape[0]
        y -= bias.shift * mask[k]
    return y, log_weights(y, sigma, bias.shift if bias.active_sets else 0.0, mask)


@dataclass
class _ChunkResult:
    ber_terms: np.ndarray
    fer_terms: np.ndarray
    supports: list


def _run_chunk(args) -> _ChunkResult:
    matrix, config, sigma, bias, seed, point, chunk, size, first = args
    y, logw = draw_chunk(matrix.n_cols, sigma, bias, seed, point, chunk, size, first)
    out = decode_batch(matrix, 2.0 * y / sigma ** 2, config)
    err = out.decoded.astype(bool)
    nerr = err.sum(axis=1)
    fail = nerr > 0
    w = np.exp(logw[fail])
    supports = [tuple(np.flatnonzero(row)) for row in err[fail]]
    return _ChunkResult(w * nerr[fail] / matrix.n_cols, w, supports)


def _workers(n_jobs):
    if n_jobs is None:
        n_jobs = int(os.environ.get("FLOORLINE_WORKERS", "1") or 1)
    return max(1, int(n_jobs))


def _estimate(snr, budget, parts, bias) -> ISEstimate:
    ber_terms = np.concatenate([p.ber_terms for p in parts]) if parts else np.empty(0)
    fer_terms = np.concatenate([p.fer_terms for p in parts]) if parts else np.empty(0)
    supports = [s for p in parts for s in p.supports]

    def moments(terms):
        mean = math.fsum(terms) / budget
        if budget < 2:
            return mean, float("inf")
        second = math.fsum(terms * terms) / budget
        return mean, max(second - mean * mean, 0.0) / (budget - 1)

    ber, ber_var = moments(ber_terms)
    fer, fer_var = moments(fer_terms)
    lookup = {s: k for k, s in enumerate(bias.target_sets)}
    attribution = {k: 0 for k in range(len(bias.target_sets))}
    attribution["other"] = 0
    for s in supports:
        key = lookup.get(s, "other")
        attribution[key] += 1
    raw = len(supports)
    exact = (raw - attribution["other"]) / raw if raw else float("nan")
    return ISEstimate(float(snr), ber, fer, ber_var, fer_var, int(budget), raw,
                      attribution, exact, no_events=raw == 0)


def run_campaign(matrix, config: DecoderConfig, snr_grid, bias: BiasSpec, budget: int,
                 seed: int = 0, rate: float | None = None, chunk: int = CHUNK,
                 n_jobs=None) -> list[ISEstimate]:
    """Weighted failure estimates (bit and frame) at each Eb/N0 in ``snr_grid``."""
    H = check_parity_matrix(matrix)
    if int(budget) < 1:
        raise ValueError("budget must be at least 1")
    budget = int(budget)
    bias.validate(H.n_cols)
    rate = code_rate(H) if rate is None else float(rate)
    results = []
    workers = _workers(n_jobs)
    for point, snr in enumerate(np.atleast_1d(snr_grid)):
        sigma = noise_sigma(float(snr), rate)
        tasks = []
        for c, first in enumerate(range(0, budget, chunk)):
            size = min(chunk, budget - first)
            tasks.append((H, config, sigma, bias, seed, point, c, size, first))
        if workers > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(workers) as pool:
                parts = list(pool.map(_run_chunk, tasks))
        else:
            parts = [_run_chunk(t) for t in tasks]
        results.append(_estimate(snr, budget, parts, bias))
    return results


@dataclass
class OverbiasRow:
    shift: float
    estimate: float
    variance: float
    stable: bool


def overbias_scan(matrix, config, snr: float, bias: BiasSpec, shifts, budget: int,
                  seed: int = 0, rate=None, measure: str = "ber", n_jobs=None) -> list[OverbiasRow]:
    """Run one campaign per shift at a single SNR.

    A row is stable when its estimate agrees with every neighbouring row
    within three combined standard errors.
    """
    shifts = [float(s) for s in shifts]
    if len(shifts) < 1:
        raise ValueError("need at least one shift")
    est = []
    for s in shifts:
        b = BiasSpec(bias.target_sets, s, bias.selection)
        r = run_campaign(matrix, config, [snr], b, budget, seed, rate, n_jobs=n_jobs)[0]
        est.append((r.ber, r.ber_var) if measure == "ber" else (r.fer, r.fer_var))
    rows = []
    for k, (e, v) in enumerate(est):
        ok = True
        for j in (k - 1, k + 1):
            if 0 <= j < len(est):
                e2, v2 = est[j]
                if abs(e - e2) > 3 * math.sqrt(v + v2):
                    ok = False
        rows.append(OverbiasRow(shifts[k], e, v, ok and not (e == 0 and shifts[k] > 0)))
    return rows


def quantization_sweep(matrix, bias: BiasSpec, taus, bits_list, snr_grid, budget: int,
                       algorithm="corrected-min-sum", max_iters=50, seed=0, rate=None,
                       n_jobs=None) -> dict:
    """Estimates keyed by (tau, bits); ``bits=None`` is the floating-point run.

    Every configuration reuses the same seed, so all of them see the same
    noise realisations.
    """
    grid = {}
    for tau in taus:
        for bits in bits_list:
            cfg = DecoderConfig(algorithm, max_iters, float(tau), bits)
            grid[(float(tau), bits)] = run_campaign(matrix, cfg, snr_grid, bias, budget,
                                                    seed, rate, n_jobs=n_jobs)
    return grid


# ------------------------------------------------------------------ toy oracle

def repetition_code(n: int = 7) -> SparseParityCheck:
    """Length-n repetition code as a chain of n - 1 two-bit checks (cycle free)."""
    return SparseParityCheck.from_rows(n, [[k, k + 1] for k in range(n - 1)],
                                       label=f"repetition-{n}")


def repetition_config(n: int = 7, clip: float = 1000.0) -> DecoderConfig:
    """Sum-product run long enough to reach the ends of the chain; on a tree
    this gives exact bitwise MAP decisions, i.e. the sign of the LLR sum."""
    return DecoderConfig("sum-product", max(1, n - 1), clip, None, early_stop=False)


def repetition_failure_probability(n: int, ebn0_db: float, method: str = "quad") -> float:
    """Exact frame (= bit) error probability of MAP decoding, by integration.

    The decision is wrong when the symbol sum is negative; the sum is
    N(n, n sigma^2).  ``quad`` integrates its density numerically, ``closed``
    uses the normal tail directly.
    """
    sigma = noise_sigma(ebn0_db, 1.0 / n)
    mu, sd = float(n), sigma * math.sqrt(n)
    if method == "closed":
        return float(ndtr(-mu / sd))
    val, _ = integrate.quad(lambda t: norm.pdf(t, mu, sd), -np.inf, 0.0,
                            epsabs=0, epsrel=1e-12, limit=200)
    return float(val)


class ImportanceSampler(BaseEstimator):
    """``fit(H)`` binds a code; ``predict(snr_grid)`` returns BER estimates."""

    def __init__(self, algorithm="corrected-min-sum", max_iters=50, clip=10.0, bits=None,
                 target_sets=(), shift=0.0, selection=ROUND_ROBIN, budget=10000, seed=0,
                 rate=None, n_jobs=None):
        self.algorithm = algorithm
        self.max_iters = max_iters
        self.clip = clip
        self.bits = bits
        self.target_sets = target_sets
        self.shift = shift
        self.selection = selection
        self.budget = budget
        self.seed = seed
        self.rate = rate
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        self.matrix_ = check_parity_matrix(X)
        self.config_ = DecoderConfig(self.algorithm, self.max_iters, self.clip, self.bits)
        self.bias_ = BiasSpec(tuple(self.target_sets), self.shift, self.selection)
        self.bias_.validate(self.matrix_.n_cols)
        self.n_features_in_ = self.matrix_.n_cols
        return self

    def estimate(self, snr_grid) -> list[ISEstimate]:
        from sklearn.utils.validation import check_is_fitted
        check_is_fitted(self, "matrix_")
        return run_campaign(self.matrix_, self.config_, snr_grid, self.bias_, self.budget,
                            self.seed, self.rate, n_jobs=self.n_jobs)

    def predict(self, X):
        return np.array([e.ber for e in self.estimate(np.ravel(X))])
