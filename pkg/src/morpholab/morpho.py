"""Weight-morphology diagnostics and the statistics used to judge them.

Connectivity conventions: for hidden layer l (1-based, l in 1..H-1) the
in-fraction of node n is its share of the total absolute weight in weight
layer l, the out-fraction its share of weight layer l+1, and the
connectivity r is their product. Entropy uses natural log. Correlations
are sample Pearson coefficients; a constant input has no defined
correlation and raises instead of returning NaN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import (
    ConfigError,
    DegenerateLayerError,
    DomainError,
    PreconditionError,
    UndefinedCorrelationError,
)
from .netcore import Dataset, LayeredNetwork, forward_trace

THRESHOLD_MEDIAN = "median"
THRESHOLD_MEAN = "mean"


@dataclass
class ConnectivityField:
    """Per hidden layer: in/out weight fractions and their product r.

    Lists are indexed by hidden layer in natural order (layer 1 first).
    """

    omega_in: list[np.ndarray]
    omega_out: list[np.ndarray]
    r: list[np.ndarray]

    @property
    def n_hidden(self) -> int:
        return len(self.r)

    def pooled_omegas(self) -> tuple[np.ndarray, np.ndarray]:
        """All hidden nodes' (omega_in, omega_out) pairs, concatenated."""
        return np.concatenate(self.omega_in), np.concatenate(self.omega_out)


@dataclass
class EntropyProfile:
    """Shannon entropy per hidden layer and its per-gap increments."""

    S: np.ndarray
    dS: np.ndarray


def connectivities(net: LayeredNetwork) -> ConnectivityField:
    """In/out absolute-weight fractions and connectivities of all hidden nodes."""
    H = net.arch.depth
    totals = []
    for p, w in enumerate(net.weights, start=1):
        tot = float(np.sum(np.abs(w)))
        if tot == 0.0:
            raise DegenerateLayerError(f"weight layer {p} is all zero; fractions undefined")
        totals.append(tot)
    omega_in, omega_out, r = [], [], []
    for l in range(1, H):
        w_in = np.abs(net.weights[l - 1]).sum(axis=0) / totals[l - 1]
        w_out = np.abs(net.weights[l]).sum(axis=1) / totals[l]
        omega_in.append(w_in)
        omega_out.append(w_out)
        r.append(w_in * w_out)
    return ConnectivityField(omega_in, omega_out, r)


def layer_entropy(r: np.ndarray) -> float:
    """Shannon entropy of the normalized connectivity distribution, 0 ln 0 = 0."""
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 0.0):
        raise DomainError("connectivities must be nonnegative")
    total = r.sum()
    if total == 0.0:
        raise PreconditionError("all connectivities are zero; entropy undefined")
    p = r[r > 0.0] / total
    return float(-np.sum(p * np.log(p)))


def entropy_profile(field: ConnectivityField) -> EntropyProfile:
    S = np.array([layer_entropy(r) for r in field.r])
    return EntropyProfile(S=S, dS=np.diff(S))


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    """Sample Pearson correlation coefficient."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape or x.size < 2:
        raise PreconditionError("pearson needs two equal-length vectors of size >= 2")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = float(np.sqrt(np.dot(dx, dx)))
    sy = float(np.sqrt(np.dot(dy, dy)))
    if sx == 0.0 or sy == 0.0:
        raise UndefinedCorrelationError("correlation of a constant vector is undefined")
    return float(np.dot(dx, dy) / (sx * sy))


def increment_autocorrelation(dS: np.ndarray, lag: int) -> float:
    """Pearson correlation of (dS_t, dS_{t+lag}) over all valid t."""
    dS = np.asarray(dS, dtype=np.float64)
    if lag < 1:
        raise PreconditionError("lag must be >= 1")
    if dS.size <= lag + 1:
        raise PreconditionError(f"need more than {lag + 1} increments for lag {lag}")
    return pearson(dS[:-lag], dS[lag:])


@dataclass
class CorrelationEstimate:
    value: float
    n_pairs: int
    ci_low: float
    ci_high: float


def fisher_z_interval(value: float, n_pairs: int, z: float = 1.96) -> tuple[float, float]:
    """Confidence interval for a correlation via the Fisher z-transform."""
    if n_pairs < 4:
        raise PreconditionError("need at least 4 pairs for a z-interval")
    if abs(value) >= 1.0:
        return value, value
    half = z / math.sqrt(n_pairs - 3)
    zt = math.atanh(value)
    return math.tanh(zt - half), math.tanh(zt + half)


def pooled_increment_autocorrelation(series: list[np.ndarray], lag: int = 1) -> CorrelationEstimate:
    """Lag autocorrelation with pairs pooled across runs before correlating.

    Each series contributes its (dS_t, dS_{t+lag}) pairs; a single series may
    be shorter than the standalone op allows as long as the pool has >= 4
    pairs for the confidence interval.
    """
    if lag < 1:
        raise PreconditionError("lag must be >= 1")
    xs, ys = [], []
    for dS in series:
        dS = np.asarray(dS, dtype=np.float64)
        if dS.size > lag:
            xs.append(dS[:-lag])
            ys.append(dS[lag:])
    if not xs:
        raise PreconditionError(f"no series long enough for lag {lag}")
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    value = pearson(x, y)
    lo, hi = fisher_z_interval(value, x.size)
    return CorrelationEstimate(value=value, n_pairs=int(x.size), ci_low=lo, ci_high=hi)


def accessible_nodes(net: LayeredNetwork, threshold_rule: str = THRESHOLD_MEDIAN) -> np.ndarray:
    """Nodes per layer reachable from the output after magnitude pruning.

    The threshold is the median (or mean) of |w| over all weights in the
    network; weights strictly below it are pruned. Counts are reported from
    the output side: index 0 is the first hidden layer before the output,
    the last entry is the input layer. The output node itself is not listed.
    """
    if threshold_rule == THRESHOLD_MEDIAN:
        threshold = float(np.median(np.concatenate([np.abs(w).ravel() for w in net.weights])))
    elif threshold_rule == THRESHOLD_MEAN:
        threshold = float(np.mean(np.concatenate([np.abs(w).ravel() for w in net.weights])))
    else:
        raise ConfigError(f"unknown threshold_rule {threshold_rule!r}")
    H = net.arch.depth
    reachable = np.ones(1, dtype=bool)
    counts = []
    for l in range(H - 1, -1, -1):
        survives = np.abs(net.weights[l]) >= threshold
        reachable = np.any(survives & reachable[None, :], axis=1)
        counts.append(int(np.count_nonzero(reachable)))
    return np.array(counts, dtype=np.int64)


def embedding_dimension(net: LayeredNetwork, data: Dataset) -> np.ndarray:
    """Per hidden layer (natural order): max over samples of strictly active nodes."""
    if len(data) < 1:
        raise PreconditionError("embedding dimension of an empty dataset is undefined")
    _, post = forward_trace(net, data.features)
    dims = [int((post[l - 1] > 0.0).sum(axis=1).max()) for l in net.arch.hidden_layers()]
    return np.array(dims, dtype=np.int64)


def bimodality_coefficient(values: np.ndarray) -> float:
    """(skewness^2 + 1) / kurtosis with population moments; > 5/9 leans bimodal."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size < 4:
        raise PreconditionError("need at least 4 values")
    d = v - v.mean()
    m2 = float(np.mean(d**2))
    if m2 == 0.0:
        raise PreconditionError("zero variance; bimodality undefined")
    skew = float(np.mean(d**3)) / m2**1.5
    kurt = float(np.mean(d**4)) / m2**2
    return float((skew**2 + 1.0) / kurt)


@dataclass(frozen=True)
class ContingencyTable2x2:
    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        for name in ("a", "b", "c", "d"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 0:
                raise ConfigError(f"cell {name} must be a nonnegative integer, got {v!r}")
        if self.a + self.b + self.c + self.d < 1:
            raise ConfigError("table must contain at least one observation")


def _log_choose(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def fisher_exact(table: ContingencyTable2x2) -> float:
    """Two-sided Fisher's exact test via log-factorials.

    Sums the hypergeometric probabilities of every table with the observed
    margins whose probability does not exceed the observed one (with 1e-7
    relative slack for float comparison).
    """
    r1 = table.a + table.b
    r2 = table.c + table.d
    c1 = table.a + table.c
    n = r1 + r2

    def log_prob(k: int) -> float:
        return _log_choose(r1, k) + _log_choose(r2, c1 - k) - _log_choose(n, c1)

    k_lo = max(0, c1 - r2)
    k_hi = min(r1, c1)
    cutoff = log_prob(table.a) + math.log1p(1e-7)
    p = sum(math.exp(log_prob(k)) for k in range(k_lo, k_hi + 1) if log_prob(k) <= cutoff)
    return min(1.0, p)


@dataclass
class StructureThresholds:
    rho_min: float = 0.5
    autocorr_max: float = -0.2


@dataclass
class MorphologyReport:
    """Everything the analyze pipeline measures on one network."""

    field: ConnectivityField
    profile: EntropyProfile
    accessible: np.ndarray
    embedding: np.ndarray | None
    omega_correlation: float | None
    lag_autocorrelations: dict[int, float | None]
    structure_formed: bool | None
    thresholds: StructureThresholds = dc_field(default_factory=StructureThresholds)
    threshold_rule: str = THRESHOLD_MEDIAN


def structure_classifier(report: MorphologyReport, thresholds: StructureThresholds | None = None) -> bool:
    """True when in/out fractions correlate and the entropy profile alternates.

    Requires omega correlation >= rho_min and lag-1 entropy-increment
    autocorrelation <= autocorr_max; raises when either statistic was
    undefined for this network.
    """
    th = thresholds if thresholds is not None else report.thresholds
    rho = report.omega_correlation
    a1 = report.lag_autocorrelations.get(1)
    if rho is None or a1 is None:
        raise UndefinedCorrelationError("unclassifiable: correlation statistics undefined")
    return bool(rho >= th.rho_min and a1 <= th.autocorr_max)


def build_report(
    net: LayeredNetwork,
    data: Dataset | None = None,
    threshold_rule: str = THRESHOLD_MEDIAN,
    thresholds: StructureThresholds | None = None,
    lags: tuple[int, ...] = (1, 2),
) -> MorphologyReport:
    """Measure one network; statistics that are undefined for it become None."""
    th = thresholds if thresholds is not None else StructureThresholds()
    field = connectivities(net)
    profile = entropy_profile(field)
    accessible = accessible_nodes(net, threshold_rule)
    embedding = embedding_dimension(net, data) if data is not None else None
    pooled_in, pooled_out = field.pooled_omegas()
    try:
        omega_corr: float | None = pearson(pooled_in, pooled_out)
    except UndefinedCorrelationError:
        omega_corr = None
    lag_ac: dict[int, float | None] = {}
    for lag in lags:
        try:
            lag_ac[lag] = increment_autocorrelation(profile.dS, lag)
        except (PreconditionError, UndefinedCorrelationError):
            lag_ac[lag] = None
    report = MorphologyReport(
        field=field,
        profile=profile,
        accessible=accessible,
        embedding=embedding,
        omega_correlation=omega_corr,
        lag_autocorrelations=lag_ac,
        structure_formed=None,
        thresholds=th,
        threshold_rule=threshold_rule,
    )
    try:
        report.structure_formed = structure_classifier(report)
    except UndefinedCorrelationError:
        report.structure_formed = None
    return report


def report_to_dict(report: MorphologyReport) -> dict:
    """JSON-ready view of a report, thresholds included."""
    return {
        "omega_in": [[float(v) for v in layer] for layer in report.field.omega_in],
        "omega_out": [[float(v) for v in layer] for layer in report.field.omega_out],
        "connectivity": [[float(v) for v in layer] for layer in report.field.r],
        "entropy": [float(v) for v in report.profile.S],
        "entropy_increments": [float(v) for v in report.profile.dS],
        "accessible_nodes": [int(v) for v in report.accessible],
        "embedding_dimension": None
        if report.embedding is None
        else [int(v) for v in report.embedding],
        "omega_correlation": report.omega_correlation,
        "lag_autocorrelations": {str(k): v for k, v in report.lag_autocorrelations.items()},
        "structure_formed": report.structure_formed,
        "thresholds": {
            "rho_min": report.thresholds.rho_min,
            "autocorr_max": report.thresholds.autocorr_max,
        },
        "threshold_rule": report.threshold_rule,
    }
