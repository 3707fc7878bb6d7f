"""Exact path-activity formalism for zero-bias ReLU networks.

A path picks one node per layer 0..H (the output layer has a single node,
index 0). Its activity is the product of Heaviside gates over the hidden
nodes it visits, theta(0) = 1; input and output nodes are ungated. The
network output is the sum over active paths of the input value times the
product of the traversed weights. Everything here is exact, not sampled,
and is intended as an oracle and analysis tool, not a fast evaluator.

Closed forms used below: with h the post-activations (h at layer 0 is the
input) and suffix(n, l) the derivative of the output w.r.t. h_n at layer l,
a sum over partial paths that enter node n at layer s and leave node n' at
layer t collapses to h_n * theta(n', t) * suffix(n', t). Both coupling
directions of a weight pair share one value: the coupling is the mixed
second derivative of the output in the two weights at frozen activities,
and mixed partials commute.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, PreconditionError, ShapeError
from .netcore import BIAS_ZERO, Dataset, LayeredNetwork, NetworkArch, forward_trace

KIND_ADJACENT = "adjacent"
KIND_SEPARATED = "separated"

DEFAULT_PATH_CAP = 10**6

# (p, a, b): weight layer p in 1..H from node a in layer p-1 to node b in layer p
WeightId = tuple[int, int, int]


@dataclass(frozen=True)
class PathSet:
    """Complete enumeration of input-to-output node sequences.

    paths has shape (total, H+1); paths[q, l] is the node visited in layer l.
    Rows are lexicographic with the leftmost (input) index most significant.
    """

    arch: NetworkArch
    paths: np.ndarray
    gamma: int
    total: int


@dataclass
class PathActivityTable:
    """Binary path activities for a batch plus the pre-activations behind them.

    activities[m, q] is 1 exactly when every hidden node on path q has
    pre-activation >= 0 for sample m. pre_activations[p-1] has shape (M, n_p).
    """

    path_set: PathSet
    activities: np.ndarray
    pre_activations: list[np.ndarray]


@dataclass
class UTerm:
    """Sum of input-times-weight products over active partial paths.

    The partial paths enter node ``entry_node`` in layer p-2 and exit node
    ``exit_node`` in layer p+1; weight layers p-1, p, p+1 are excluded from
    the product.
    """

    layer: int
    entry_node: int
    exit_node: int
    sample: int
    value: float


@dataclass
class CouplingConstant:
    """Coefficient of the target weight inside the one-step update of source.

    value folds in eta and delta_y. kind is "adjacent" (weight layers p and
    p+1 sharing a node) or "separated" (layers p and p+2).
    """

    source: WeightId
    target: WeightId
    sample: int
    value: float
    kind: str


def enumerate_paths(arch: NetworkArch, cap: int = DEFAULT_PATH_CAP) -> PathSet:
    """All paths of an architecture, refusing combinatorial blowups beyond cap."""
    sizes = arch.layer_sizes
    gamma = 1
    for n in sizes[1:]:
        gamma *= n
    total = sizes[0] * gamma
    if total > cap:
        raise CapacityError(f"path count {total} exceeds cap {cap}")
    grid = np.indices(sizes)
    paths = grid.reshape(len(sizes), total).T.astype(np.int64)
    return PathSet(arch=arch, paths=paths, gamma=gamma, total=total)


def _require_zero_bias(net: LayeredNetwork) -> None:
    if net.arch.bias_mode != BIAS_ZERO:
        raise PreconditionError("path formalism requires bias_mode 'zero'")


def _check_paths_match(net: LayeredNetwork, paths: PathSet) -> None:
    if paths.arch.layer_sizes != net.arch.layer_sizes:
        raise ShapeError(
            f"paths enumerated for {paths.arch.layer_sizes}, network is {net.arch.layer_sizes}"
        )


def path_activity_table(net: LayeredNetwork, features: np.ndarray, paths: PathSet) -> PathActivityTable:
    """Activity of every path for every sample in the batch."""
    _check_paths_match(net, paths)
    X = np.asarray(features, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    pre, _ = forward_trace(net, X)
    A = np.ones((X.shape[0], paths.total))
    for l in range(1, net.arch.depth):
        gates = pre[l - 1] >= 0.0
        A *= gates[:, paths.paths[:, l]]
    return PathActivityTable(path_set=paths, activities=A, pre_activations=pre)


def path_output(net: LayeredNetwork, x: np.ndarray, paths: PathSet) -> float:
    """Network output as the sum over active paths of input times weight product.

    Agrees with forward() to float64 roundoff on any zero-bias network.
    """
    _require_zero_bias(net)
    _check_paths_match(net, paths)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.arch.n_features,):
        raise ShapeError(f"expected a {net.arch.n_features}-vector, got shape {x.shape}")
    table = path_activity_table(net, x, paths)
    P = paths.paths
    prod = np.ones(paths.total)
    for k in range(1, net.arch.depth + 1):
        prod *= net.weights[k - 1][P[:, k - 1], P[:, k]]
    return float(np.sum(x[P[:, 0]] * table.activities[0] * prod))


def path_gradient(net: LayeredNetwork, data: Dataset, weight: WeightId) -> float:
    """Loss gradient for one weight, summed over the paths that traverse it.

    Returns dL/dw for the halved MSE over the dataset:
    -(1/M) sum_m (y_m - yhat_m) * sum over paths through (p, a, b) of
    X * A * product of the other weights. Matches backprop_gradient.
    """
    _require_zero_bias(net)
    p, a, b = weight
    H = net.arch.depth
    sizes = net.arch.layer_sizes
    if not 1 <= p <= H:
        raise IndexError(f"weight layer must be in 1..{H}, got {p}")
    if not (0 <= a < sizes[p - 1] and 0 <= b < sizes[p]):
        raise IndexError(f"weight ({p},{a},{b}) out of range for {sizes}")
    paths = enumerate_paths(net.arch)
    P = paths.paths
    sel = P[(P[:, p - 1] == a) & (P[:, p] == b)]

    X = data.features
    pre, post = forward_trace(net, X)
    delta_y = data.targets - post[-1][:, 0]

    A = np.ones((X.shape[0], sel.shape[0]))
    for l in range(1, H):
        A *= (pre[l - 1] >= 0.0)[:, sel[:, l]]
    prod = np.ones(sel.shape[0])
    for k in range(1, H + 1):
        if k != p:
            prod *= net.weights[k - 1][sel[:, k - 1], sel[:, k]]
    per_sample = np.sum(X[:, sel[:, 0]] * A * prod, axis=1)
    return float(-np.mean(delta_y * per_sample))


def _prefix_suffix(net: LayeredNetwork, x: np.ndarray):
    """Per-layer post-activations, gates and output sensitivities for one input.

    posts[l] is h at layer l (posts[0] = x). gates[l] is the Heaviside of the
    pre-activations for hidden layers, ones at the output layer. suffix[l][n]
    is the derivative of the output w.r.t. h_n at layer l (suffix[H] = [1]).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.arch.n_features,):
        raise ShapeError(f"expected a {net.arch.n_features}-vector, got shape {x.shape}")
    H = net.arch.depth
    pre, post = forward_trace(net, x)
    posts = [x] + [post[p - 1][0] for p in range(1, H + 1)]
    gates: list[np.ndarray | None] = [None] * (H + 1)
    for l in range(1, H):
        gates[l] = (pre[l - 1][0] >= 0.0).astype(np.float64)
    gates[H] = np.ones(1)
    suffix = [np.empty(0)] * (H + 1)
    suffix[H] = np.ones(1)
    for l in range(H - 1, -1, -1):
        suffix[l] = net.weights[l] @ (gates[l + 1] * suffix[l + 1])
    return posts, gates, suffix


def compute_U(net: LayeredNetwork, x: np.ndarray, p: int, n: int, n_prime: int) -> UTerm:
    """Partial-path sum entering node n (layer p-2) and exiting n' (layer p+1).

    Collapses to h_n at layer p-2 times the gated output sensitivity of n' at
    layer p+1; for H=3, p=2 both side products are empty and the value is x_n.
    """
    _require_zero_bias(net)
    H = net.arch.depth
    sizes = net.arch.layer_sizes
    if not 2 <= p <= H - 1:
        raise IndexError(f"p must be in 2..{H - 1}, got {p}")
    if not 0 <= n < sizes[p - 2]:
        raise IndexError(f"entry node {n} out of range for layer {p - 2} of width {sizes[p - 2]}")
    if not 0 <= n_prime < sizes[p + 1]:
        raise IndexError(f"exit node {n_prime} out of range for layer {p + 1} of width {sizes[p + 1]}")
    posts, gates, suffix = _prefix_suffix(net, x)
    value = posts[p - 2][n] * gates[p + 1][n_prime] * suffix[p + 1][n_prime]
    return UTerm(layer=p, entry_node=n, exit_node=n_prime, sample=0, value=float(value))


def _check_weight_id(arch: NetworkArch, wid: WeightId) -> None:
    p, a, b = wid
    sizes = arch.layer_sizes
    if not 1 <= p <= arch.depth:
        raise IndexError(f"weight layer must be in 1..{arch.depth}, got {p}")
    if not (0 <= a < sizes[p - 1] and 0 <= b < sizes[p]):
        raise IndexError(f"weight ({p},{a},{b}) out of range for {sizes}")


def coupling_adjacent(
    net: LayeredNetwork,
    x: np.ndarray,
    delta_y: float,
    first: WeightId,
    second: WeightId,
    eta: float = 1.0,
) -> tuple[CouplingConstant, CouplingConstant]:
    """Coupling between w_ab in layer p and w_bc in layer p+1, both directions.

    The value is the coefficient of the partner weight in the one-step update
    eta * delta_y * d(output)/d(weight) of the other, with activities frozen
    at the given input. The two directions coincide.
    """
    _check_weight_id(net.arch, first)
    _check_weight_id(net.arch, second)
    p, a, b = first
    q, b2, c = second
    if q != p + 1:
        raise PreconditionError(f"adjacent coupling needs consecutive weight layers, got {p} and {q}")
    if b2 != b:
        raise PreconditionError(f"adjacent coupling needs a shared node, got {first} and {second}")
    posts, gates, suffix = _prefix_suffix(net, x)
    value = float(eta * delta_y * posts[p - 1][a] * gates[p][b] * gates[p + 1][c] * suffix[p + 1][c])
    return (
        CouplingConstant(first, second, 0, value, KIND_ADJACENT),
        CouplingConstant(second, first, 0, value, KIND_ADJACENT),
    )


def coupling_separated(
    net: LayeredNetwork,
    x: np.ndarray,
    delta_y: float,
    first: WeightId,
    second: WeightId,
    eta: float = 1.0,
) -> tuple[CouplingConstant, CouplingConstant]:
    """Coupling between w_ab in layer p and w_de in layer p+2, both directions.

    Same construction as coupling_adjacent with the connecting weight w_bd of
    the layer in between as an extra factor.
    """
    _check_weight_id(net.arch, first)
    _check_weight_id(net.arch, second)
    p, a, b = first
    q, d, e = second
    if q != p + 2:
        raise PreconditionError(f"separated coupling needs weight layers p and p+2, got {p} and {q}")
    posts, gates, suffix = _prefix_suffix(net, x)
    value = float(
        eta
        * delta_y
        * posts[p - 1][a]
        * gates[p][b]
        * net.weights[p][b, d]
        * gates[p + 1][d]
        * gates[p + 2][e]
        * suffix[p + 2][e]
    )
    return (
        CouplingConstant(first, second, 0, value, KIND_SEPARATED),
        CouplingConstant(second, first, 0, value, KIND_SEPARATED),
    )


def coupling_ratio(net: LayeredNetwork, x: np.ndarray, delta_y: float, p: int) -> float:
    """Ratio separated/adjacent coupling strength at weight layer p.

    Requires the idealized construction the ratio law is derived for: every
    weight matrix constant with positive entries, constant hidden width, and
    every hidden node active at x. Then the ratio is w^(p+1) / w^(p+2) divided
    by the width of layer p+2, independent of the node indices.
    """
    H = net.arch.depth
    sizes = net.arch.layer_sizes
    if not 1 <= p <= H - 2:
        raise PreconditionError(f"need 1 <= p <= H-2 for both coupling kinds, got p={p} with H={H}")
    if len(set(sizes[1:H])) != 1:
        raise PreconditionError(f"constant hidden width required, got {sizes}")
    for k, w in enumerate(net.weights, start=1):
        lo, hi = float(w.min()), float(w.max())
        if lo != hi or lo <= 0.0:
            raise PreconditionError(f"weight layer {k} must be constant and positive")
    pre, _ = forward_trace(net, np.asarray(x, dtype=np.float64)[None, :])
    for l in range(1, H):
        if np.any(pre[l - 1][0] < 0.0):
            raise PreconditionError(f"inactive node in hidden layer {l}; ratio law assumes all active")
    adj = coupling_adjacent(net, x, delta_y, (p, 0, 0), (p + 1, 0, 0))[0].value
    sep = coupling_separated(net, x, delta_y, (p, 0, 0), (p + 2, 0, 0))[0].value
    if adj == 0.0:
        raise PreconditionError("adjacent coupling is zero; ratio undefined")
    return sep / adj
