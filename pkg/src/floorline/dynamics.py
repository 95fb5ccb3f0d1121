"""Linearized message dynamics inside an absorption set.

Messages on the internal edges of a set evolve as ``x_l = g_l V C x_{l-1}
+ lambda + lambda_ex_l``: ``C`` reflects each message through its satisfied
check to the partner edge and ``V`` adds the other incoming messages at each
variable.  The set is in error after ``I`` iterations when the messages are
negative; the probability follows from Gaussian statistics of the channel
and extrinsic inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .absorption import SetTopology

RAYLEIGH_TOL = 1e-12
RESIDUAL_TOL = 1e-11


class ConvergenceError(RuntimeError):
    pass


def q_function(x: float) -> float:
    """Gaussian tail probability Pr(N(0,1) > x)."""
    return 0.5 * math.erfc(float(x) / math.sqrt(2.0))


def llr_mean(ebn0_db, rate: float):
    """Mean of the BPSK/AWGN channel LLR, 2/sigma^2 = 4 R Eb/N0."""
    return 4.0 * rate * 10.0 ** (np.asarray(ebn0_db, dtype=float) / 10.0)


def noise_variance(ebn0_db, rate: float):
    return 1.0 / (2.0 * rate * 10.0 ** (np.asarray(ebn0_db, dtype=float) / 10.0))


@dataclass
class SetLinearModel:
    topology: SetTopology
    V: np.ndarray
    C: np.ndarray
    ext_count: np.ndarray
    owner_matrix: np.ndarray
    mu_max: float = float("nan")
    v_max: np.ndarray | None = None
    eigen_iterations: int = 0

    @property
    def dim(self) -> int:
        return self.V.shape[0]

    @property
    def ext_mask(self) -> np.ndarray:
        return (self.ext_count > 0).astype(np.int64)

    @property
    def VC(self) -> np.ndarray:
        return self.V @ self.C


@dataclass
class ErrorFloorInputs:
    """Channel and extrinsic statistics for one operating point.

    ``m_ext[i-1]`` and ``g[i]`` belong to iteration ``i`` (1..I); ``g[0]``
    is fixed to 1.  Means are saturated at ``tau`` before use and every
    Gaussian input has variance twice its (saturated) mean.
    """

    m_lambda: float
    m_ext: np.ndarray
    g: np.ndarray | None = None
    tau: float = math.inf
    iterations: int = field(init=False)

    def __post_init__(self):
        self.m_ext = np.atleast_1d(np.asarray(self.m_ext, dtype=float))
        self.iterations = len(self.m_ext)
        if self.g is None:
            self.g = np.ones(self.iterations + 1)
        self.g = np.asarray(self.g, dtype=float)
        if len(self.g) != self.iterations + 1:
            raise ValueError("g needs I + 1 entries (g[0] = 1)")
        if self.g[0] != 1.0:
            raise ValueError("g[0] must be 1")
        if (self.g <= 0).any() or (self.g > 1).any():
            raise ValueError("gain factors must lie in (0, 1]")
        if self.m_lambda < 0 or (self.m_ext < 0).any():
            raise ValueError("means must be non-negative")
        if not self.tau > 0:
            raise ValueError("tau must be positive")

    @classmethod
    def constant(cls, m_lambda, m_ext, iterations, tau=math.inf, g=None):
        return cls(m_lambda, np.full(iterations, float(m_ext)), g=g, tau=tau)

    @property
    def m_lambda_c(self) -> float:
        return min(self.m_lambda, self.tau)

    @property
    def m_ext_c(self) -> np.ndarray:
        return np.minimum(self.m_ext, self.tau)

    def replace(self, **kw) -> "ErrorFloorInputs":
        args = dict(m_lambda=self.m_lambda, m_ext=self.m_ext, g=self.g, tau=self.tau)
        args.update(kw)
        return ErrorFloorInputs(**args)


# ---------------------------------------------------------------------------
# model construction and eigen-analysis
# ---------------------------------------------------------------------------

def build_model(topology: SetTopology) -> SetLinearModel:
    dim, a = topology.dim, topology.a
    owners = np.asarray(topology.edge_owner)
    same = owners[:, None] == owners[None, :]
    V = (same & ~np.eye(dim, dtype=bool)).astype(float)
    C = np.zeros((dim, dim))
    C[np.arange(dim), topology.partner] = 1.0
    P = np.zeros((dim, a))
    P[np.arange(dim), owners] = 1.0
    ext = np.asarray(topology.ext_degree, dtype=float)[owners]
    return SetLinearModel(topology, V, C, ext, P)


def dominant_eigen(model: SetLinearModel, max_iter: int = 200000) -> tuple[float, np.ndarray]:
    """Perron pair of V C by power iteration from the all-ones vector.

    Iterates on ``V C + I`` (same eigenvectors, no periodic oscillation for
    non-negative matrices).  The eigenvector is unit length with positive sum.
    """
    M = model.VC
    dim = M.shape[0]
    shifted = M + np.eye(dim)
    v = np.ones(dim) / math.sqrt(dim)
    rho_prev = math.inf
    for it in range(1, max_iter + 1):
        w = shifted @ v
        rho = float(v @ w)
        norm = np.linalg.norm(w)
        if norm == 0:
            raise ConvergenceError("V C annihilates the start vector")
        w /= norm
        residual = np.linalg.norm(M @ w - (rho - 1.0) * w)
        if abs(rho - rho_prev) < RAYLEIGH_TOL and residual < RESIDUAL_TOL:
            v = w
            break
        rho_prev = rho
        v = w
    else:
        raise ConvergenceError(
            f"power iteration did not settle in {max_iter} steps; dominant pair may be complex")
    mu = float(v @ (M @ v))
    if v.sum() < 0:
        v = -v
    model.mu_max, model.v_max, model.eigen_iterations = mu, v, it
    return mu, v


def _ensure_eigen(model: SetLinearModel):
    if model.v_max is None:
        dominant_eigen(model)


@dataclass(frozen=True)
class TopologyCoefficients:
    A: float
    B: float
    C: float
    D: float


def topology_coefficients(model: SetLinearModel) -> TopologyCoefficients:
    """Eigenvector sums: A over all edges, B over extrinsic-fed edges, C and D
    over squared per-variable sums (D weighted by the extrinsic count)."""
    _ensure_eigen(model)
    v = model.v_max
    per_var = model.owner_matrix.T @ v
    ext_var = np.asarray(model.topology.ext_degree, dtype=float)
    return TopologyCoefficients(
        A=float(v.sum()),
        B=float(v @ model.ext_count),
        C=float(per_var @ per_var),
        D=float(ext_var @ per_var ** 2),
    )


# ---------------------------------------------------------------------------
# failure probabilities
# ---------------------------------------------------------------------------

def _spectral_terms(mu: float, inputs: ErrorFloorInputs, with_gain: bool):
    """Weights of the intrinsic and extrinsic terms, normalised by the final growth."""
    I = inputs.iterations
    g = inputs.g if with_gain else np.ones(I + 1)
    inv_gain = np.cumprod(1.0 / g)                 # prod_{l=0}^{i} 1/g_l
    powers = mu ** -np.arange(I + 1, dtype=float)
    intrinsic = math.fsum(powers * inv_gain)
    w_ext = powers[1:] * inv_gain[1:]              # g_0 = 1 so prod from l=1
    m_ext = inputs.m_ext_c
    mean_ext = math.fsum(m_ext * w_ext)
    var_ext = math.fsum(m_ext * w_ext ** 2)
    return intrinsic, mean_ext, var_ext


def _spectral_probability(coeffs, mu, inputs, with_gain):
    s1, s2, s3 = _spectral_terms(mu, inputs, with_gain)
    m = inputs.m_lambda_c
    num = coeffs.A * m * s1 + coeffs.B * s2
    den2 = 2 * coeffs.C * m * s1 ** 2 + 2 * coeffs.D * s3
    if den2 <= 0:
        return 0.0 if num > 0 else 1.0
    return q_function(num / math.sqrt(den2))


def p_as_basic(coeffs: TopologyCoefficients, mu_max: float, inputs: ErrorFloorInputs) -> float:
    """Q-function estimate from the summed messages and the spectral approximation."""
    return _spectral_probability(coeffs, mu_max, inputs, with_gain=False)


def p_as_refined(coeffs: TopologyCoefficients, mu_max: float, inputs: ErrorFloorInputs) -> float:
    """As p_as_basic with each check pass attenuated by its gain factor g_l."""
    return _spectral_probability(coeffs, mu_max, inputs, with_gain=True)


@dataclass
class ComponentStatistics:
    means: np.ndarray
    index: int
    mean: float
    std: float
    probability: float


def _gain_products(g, I):
    # prod_{l=t+1}^{I} g_l for t = 0..I
    tail = np.ones(I + 1, dtype=np.longdouble)
    for t in range(I - 1, -1, -1):
        tail[t] = tail[t + 1] * np.longdouble(g[t + 1])
    return tail


def component_statistics(model: SetLinearModel, inputs: ErrorFloorInputs,
                         variance: str = "exact") -> ComponentStatistics:
    """Mean vector of x_I by explicit matrix powers and the Gaussian tail of
    its largest-mean component.

    ``variance="exact"`` propagates the coefficient of every independent
    Gaussian input (one channel LLR per set variable, one extrinsic per
    unsatisfied check and iteration).  ``variance="spectral"`` uses the
    dominant-eigenvector variance ``v_j^2 (2 C m S1^2 + 2 D S2)``.
    Extended precision keeps large I and growth rates finite.
    """
    _ensure_eigen(model)
    I = inputs.iterations
    ld = np.longdouble
    VC = model.VC.astype(ld)
    P = model.owner_matrix.astype(ld)
    ext_var = np.asarray(model.topology.ext_degree, dtype=ld)
    m_l = ld(inputs.m_lambda_c)
    m_ex = inputs.m_ext_c.astype(ld)
    tail = _gain_products(inputs.g, I)

    # rows[t] = prod_{l>t} g_l * (VC)^(I-t), built from t = I downwards
    powers = [np.eye(model.dim, dtype=ld)]
    for _ in range(I):
        powers.append(VC @ powers[-1])
    ones = np.ones(model.dim, dtype=ld)
    e_ext = P @ ext_var
    means = np.zeros(model.dim, dtype=ld)
    for t in range(I + 1):
        means += tail[t] * (powers[I - t] @ (m_l * ones))
        if t >= 1:
            means += tail[t] * m_ex[t - 1] * (powers[I - t] @ e_ext)
    top = float(np.max(means))
    j = int(np.flatnonzero(means >= top - abs(top) * 1e-12)[0])

    if variance == "exact":
        coef_l = np.zeros(model.topology.a, dtype=ld)
        var = ld(0)
        for t in range(I + 1):
            row = tail[t] * (powers[I - t][j] @ P)     # per-variable coefficients
            coef_l += row
            if t >= 1:
                var += 2 * m_ex[t - 1] * (ext_var @ row ** 2)
        var += 2 * m_l * (coef_l @ coef_l)
    elif variance == "spectral":
        coeffs = topology_coefficients(model)
        mu = ld(model.mu_max)
        grow = np.array([tail[t] * mu ** (I - t) for t in range(I + 1)], dtype=ld)
        var = ld(model.v_max[j]) ** 2 * (
            2 * ld(coeffs.C) * m_l * grow.sum() ** 2
            + 2 * ld(coeffs.D) * (m_ex * grow[1:] ** 2).sum())
    else:
        raise ValueError(f"unknown variance mode {variance!r}")
    mean = means[j]
    std = np.sqrt(var)
    if std == 0:
        prob = 0.0 if mean > 0 else 1.0
    else:
        prob = q_function(float(mean / std))
    return ComponentStatistics(means.astype(float), j, float(mean), float(std), prob)


def p_as_matrix(model: SetLinearModel, inputs: ErrorFloorInputs, variance: str = "exact") -> float:
    return component_statistics(model, inputs, variance).probability


def simulate_linear_model(model: SetLinearModel, inputs: ErrorFloorInputs, trials: int,
                          rng=None, batch: int = 200000) -> tuple[float, float, float]:
    """Monte-Carlo run of the linear recursion with Gaussian inputs.

    Returns (Pr(max component <= 0), Pr(largest-mean component <= 0),
    standard error of the first).  Inputs are drawn with mean m and
    variance 2m, channel values shared by all edges of a variable and one
    extrinsic per unsatisfied check per iteration.
    """
    rng = np.random.default_rng(rng)
    I = inputs.iterations
    VC = model.VC
    P = model.owner_matrix
    ext_var = np.asarray(model.topology.ext_degree)
    ext_nodes = np.flatnonzero(ext_var)
    m_l = inputs.m_lambda_c
    m_ex = inputs.m_ext_c
    j = component_statistics(model, inputs).index
    scale = max(model.mu_max, 1.0)
    all_neg = one_neg = 0
    done = 0
    while done < trials:
        k = min(batch, trials - done)
        lam = rng.normal(m_l, math.sqrt(2 * m_l), size=(k, model.topology.a)) @ P.T
        # x holds x_l / scale**l so long runs stay finite
        x = lam.copy()
        growth = 1.0
        for l in range(1, I + 1):
            growth *= scale
            inj = np.zeros((k, model.topology.a))
            mu_e = m_ex[l - 1]
            if mu_e > 0:
                for node in ext_nodes:
                    cnt = ext_var[node]
                    inj[:, node] = rng.normal(mu_e * cnt, math.sqrt(2 * mu_e * cnt), size=k)
            x = inputs.g[l] * (x @ VC.T) / scale + (lam + inj @ P.T) / growth
        all_neg += int(np.count_nonzero((x <= 0).all(axis=1)))
        one_neg += int(np.count_nonzero(x[:, j] <= 0))
        done += k
    p = all_neg / trials
    return p, one_neg / trials, math.sqrt(max(p * (1 - p), 0.0) / trials)


def ber_estimate(sets, inputs: ErrorFloorInputs, n: int, formula: str = "refined") -> float:
    """Union-style floor: sum of multiplicity * (a / n) * P_AS, clipped to [0, 1].

    ``sets`` holds (signature, multiplicity, model) triples or pre-computed
    (signature, multiplicity, probability) triples.
    """
    total = []
    for signature, mult, item in sets:
        a = signature[0]
        prob = item if isinstance(item, (float, int)) else set_failure_probability(item, inputs, formula)
        total.append(mult * a / n * prob)
    return float(min(max(math.fsum(total), 0.0), 1.0))


def set_failure_probability(model: SetLinearModel, inputs: ErrorFloorInputs, formula: str) -> float:
    _ensure_eigen(model)
    if formula == "basic":
        return p_as_basic(topology_coefficients(model), model.mu_max, inputs)
    if formula == "refined":
        return p_as_refined(topology_coefficients(model), model.mu_max, inputs)
    if formula == "matrix":
        return p_as_matrix(model, inputs)
    raise ValueError(f"unknown formula {formula!r}")


def operating_point(ebn0_db: float, rate: float, d_v: int, d_c: int, tau: float,
                    iterations: int, gain_mode: str = "density", half_bins=None) -> ErrorFloorInputs:
    """Formula inputs at one Eb/N0, with extrinsic means and gains from density evolution."""
    from .density import DEFAULT_HALF_BINS, evolve

    s2 = noise_variance(ebn0_db, rate)
    res = evolve(d_v, d_c, s2, tau, iterations, half_bins or DEFAULT_HALF_BINS)
    return ErrorFloorInputs(2.0 / s2, res.m_ext, res.gains(gain_mode), tau)


class ErrorFloorPredictor(BaseEstimator):
    """Floor BER from set topologies.

    ``fit(X)`` takes one topology or a list of them (``multiplicities``
    aligned with it) and builds their linear models; ``predict(snr_db)``
    evaluates the chosen formula at each Eb/N0.
    """

    def __init__(self, n=155, rate=None, d_v=3, d_c=5, tau=10.0, iterations=50,
                 formula="refined", gain_mode="density", multiplicities=None):
        self.n = n
        self.rate = rate
        self.d_v = d_v
        self.d_c = d_c
        self.tau = tau
        self.iterations = iterations
        self.formula = formula
        self.gain_mode = gain_mode
        self.multiplicities = multiplicities

    def fit(self, X, y=None):
        tops = [X] if isinstance(X, SetTopology) else list(X)
        if not tops:
            raise ValueError("need at least one set topology")
        mult = self.multiplicities if self.multiplicities is not None else [1] * len(tops)
        if len(mult) != len(tops):
            raise ValueError("multiplicities must align with the topologies")
        if self.formula not in ("basic", "refined", "matrix"):
            raise ValueError(f"unknown formula {self.formula!r}")
        self.models_ = [build_model(t) for t in tops]
        for m in self.models_:
            dominant_eigen(m)
        self.multiplicities_ = [int(k) for k in mult]
        return self

    def _rate(self):
        return self.rate if self.rate is not None else 1.0 - self.d_v / self.d_c

    def inputs(self, ebn0_db) -> ErrorFloorInputs:
        return operating_point(ebn0_db, self._rate(), self.d_v, self.d_c, self.tau,
                               self.iterations, self.gain_mode)

    def predict(self, X):
        from sklearn.utils.validation import check_is_fitted
        check_is_fitted(self, "models_")
        out = []
        for snr in np.ravel(np.asarray(X, dtype=float)):
            inp = self.inputs(snr)
            triples = [((m.topology.a, m.topology.b), k, m)
                       for m, k in zip(self.models_, self.multiplicities_)]
            out.append(ber_estimate(triples, inp, self.n, self.formula))
        return np.array(out)
