"""ODE models of connectivity dynamics inside and across layers.

Three right-hand sides: single-layer bounded growth with mutual repression,
the same dynamics driven by couplings to neighboring layers, and the
per-layer channel-amplitude equation with lateral inhibition. All are
integrated with a fixed-step explicit 5th-order Runge-Kutta scheme
(Fehlberg stage coefficients; the embedded 4th-order weights are unused):

    c      = (0, 1/4, 3/8, 12/13, 1, 1/2)
    a21    = 1/4
    a3x    = 3/32, 9/32
    a4x    = 1932/2197, -7200/2197, 7296/2197
    a5x    = 439/216, -8, 3680/513, -845/4104
    a6x    = -8/27, 2, -3544/2565, 1859/4104, -11/40
    b      = 16/135, 0, 6656/12825, 28561/56430, -9/50, 2/55

Simulations clamp the state back into its admissible domain after every
step (r >= 0, amplitudes inside [1/N, 1]) and count how many components
were clamped, so step-size problems are visible instead of silent.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DivergenceError, DomainError, PreconditionError

R_INIT_HOMOGENEOUS = "homogeneous"
R_INIT_UNIFORM = "uniform_perturbed"


def derive_seed(master_seed: int, index: int) -> int:
    """Independent per-run seed: first 8 bytes of sha256("master:index")."""
    digest = hashlib.sha256(f"{master_seed}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass
class LayerState:
    """Connectivities r and growth constants c of one layer."""

    r: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=np.float64)
        self.c = np.asarray(self.c, dtype=np.float64)
        if self.r.ndim != 1 or self.r.shape != self.c.shape or self.r.size == 0:
            raise ConfigError("r and c must be equal-length nonempty vectors")
        if np.any(self.c <= 0.0):
            raise DomainError("growth constants must be positive")

    @property
    def width(self) -> int:
        return self.r.size


def _check_nonnegative(r: np.ndarray) -> None:
    if np.any(r < 0.0):
        raise DomainError("negative connectivity; r must be >= 0")


def _intralayer_raw(r: np.ndarray, c: np.ndarray) -> np.ndarray:
    return r * (c - np.dot(np.sqrt(r), c))


def intralayer_rhs(state: LayerState) -> np.ndarray:
    """Bounded growth against the connectivity-weighted mean growth rate.

    dr_j/dt = r_j (1 - sqrt(r_j)) c_j - r_j sum_{i != j} sqrt(r_i) c_i.
    Folding the i = j repression term into the growth factor gives the
    equivalent form used here, r_j (c_j - sum_i sqrt(r_i) c_i).
    """
    _check_nonnegative(state.r)
    return _intralayer_raw(state.r, state.c)


@dataclass
class LayerStackState:
    """L same-width layers with per-layer neighbor couplings.

    c_next[l][j, k] couples node j of layer l+1 (1-based l) to node k of the
    layer to its right; c_prev[l][i, j] couples node i of the layer to the
    left to node j. Boundary entries (c_next of the last layer, c_prev of
    the first) are unused and may be None. The per-layer growth constants
    inside the LayerStates are not used by the coupled dynamics; the
    effective growth rates come entirely from the neighbor terms.
    """

    layers: list[LayerState]
    c_right: list[np.ndarray]
    c_left: list[np.ndarray]
    c_next: list[np.ndarray | None]
    c_prev: list[np.ndarray | None]

    def __post_init__(self):
        L = len(self.layers)
        if L < 1:
            raise ConfigError("stack needs at least one layer")
        N = self.layers[0].width
        if any(layer.width != N for layer in self.layers):
            raise ConfigError("all layers must have the same width")
        for name, seq in (("c_right", self.c_right), ("c_left", self.c_left)):
            if len(seq) != L or any(np.shape(v) != (N,) for v in seq):
                raise ConfigError(f"{name} must hold one length-{N} vector per layer")
        if len(self.c_next) != L or len(self.c_prev) != L:
            raise ConfigError("c_next and c_prev must hold one entry per layer")
        for l in range(L - 1):
            if np.shape(self.c_next[l]) != (N, N):
                raise ConfigError(f"c_next[{l}] must be an {N}x{N} matrix")
        for l in range(1, L):
            if np.shape(self.c_prev[l]) != (N, N):
                raise ConfigError(f"c_prev[{l}] must be an {N}x{N} matrix")

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def width(self) -> int:
        return self.layers[0].width


def _coupled_growth(stack: LayerStackState, l: int) -> np.ndarray:
    """Effective growth rates g of layer l (1-based), boundary terms omitted."""
    L = stack.n_layers
    g = np.zeros(stack.width)
    if l < L:
        r_next = stack.layers[l].r
        _check_nonnegative(r_next)
        g += stack.c_right[l - 1] * (stack.c_next[l - 1] @ np.sqrt(r_next))
    if l > 1:
        r_prev = stack.layers[l - 2].r
        _check_nonnegative(r_prev)
        g += stack.c_left[l - 1] * (stack.c_prev[l - 1].T @ np.sqrt(r_prev))
    return g


def coupled_rhs(stack: LayerStackState, l: int) -> np.ndarray:
    """Layer-l connectivity dynamics with neighbor-driven growth rates.

    Same structure as intralayer_rhs with c replaced by
    g_j = c_right_j sum_k c_next[j,k] sqrt(r_next_k)
        + c_left_j  sum_i c_prev[i,j] sqrt(r_prev_i);
    a missing neighbor contributes nothing.
    """
    if not 1 <= l <= stack.n_layers:
        raise IndexError(f"layer must be in 1..{stack.n_layers}, got {l}")
    this = stack.layers[l - 1]
    _check_nonnegative(this.r)
    g = _coupled_growth(stack, l)
    return this.r * (g - np.dot(np.sqrt(this.r), g))


@dataclass
class AmplitudeState:
    """Per-layer channel amplitudes with scalar left/right inhibition strengths."""

    R: np.ndarray
    c_left: float
    c_right: float
    N: int

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=np.float64)
        if self.R.ndim != 1 or self.R.size == 0:
            raise ConfigError("R must be a nonempty vector")
        if self.N < 1:
            raise ConfigError("width N must be >= 1")
        if self.c_left <= 0.0 or self.c_right <= 0.0:
            raise DomainError("inhibition strengths must be positive")

    @property
    def n_layers(self) -> int:
        return self.R.size


def amplitude_rhs(state: AmplitudeState, l: int) -> float:
    """Leading-order amplitude change of layer l (1-based).

    dR/dt = R/(N sqrt(N)) (1 - sqrt(R N)) (c_right sqrt(R_next) + c_left
    sqrt(R_prev)); never positive on the admissible domain, and zero at the
    lower bound R = 1/N. Boundary layers use only their existing neighbor.
    """
    L = state.n_layers
    if not 1 <= l <= L:
        raise IndexError(f"layer must be in 1..{L}, got {l}")
    lo = 1.0 / state.N
    if np.any(state.R < lo) or np.any(state.R > 1.0):
        raise DomainError(f"amplitudes must lie in [{lo}, 1]")
    coupling = 0.0
    if l < L:
        coupling += state.c_right * np.sqrt(state.R[l])
    if l > 1:
        coupling += state.c_left * np.sqrt(state.R[l - 2])
    R_l = state.R[l - 1]
    return float(R_l / (state.N * np.sqrt(state.N)) * (1.0 - np.sqrt(R_l * state.N)) * coupling)


# ---------------------------------------------------------------------------
# integrator

_RK_A = (
    (),
    (1.0 / 4.0,),
    (3.0 / 32.0, 9.0 / 32.0),
    (1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0),
    (439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0),
    (-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0),
)
_RK_B = (16.0 / 135.0, 0.0, 6656.0 / 12825.0, 28561.0 / 56430.0, -9.0 / 50.0, 2.0 / 55.0)


def _rk_step_raw(rhs, y: np.ndarray, dt: float) -> np.ndarray:
    """One unclamped 5th-order step; raises on a non-finite result."""
    stages: list[np.ndarray] = []
    for row in _RK_A:
        yi = y
        for a, k in zip(row, stages):
            yi = yi + dt * a * k
        stages.append(np.asarray(rhs(yi), dtype=np.float64))
    out = y
    for b, k in zip(_RK_B, stages):
        if b != 0.0:
            out = out + dt * b * k
    if not np.all(np.isfinite(out)):
        raise DivergenceError("state became non-finite during integration")
    return out


def rk_step(rhs, state: np.ndarray, dt: float) -> np.ndarray:
    """One fixed 5th-order step; negative components are clamped to zero."""
    if dt <= 0.0:
        raise ConfigError("dt must be positive")
    y = np.asarray(state, dtype=np.float64)
    return np.maximum(_rk_step_raw(rhs, y, dt), 0.0)


# ---------------------------------------------------------------------------
# simulation configs and trajectories


@dataclass
class SimConfig:
    """Shared knobs of all three simulations.

    r_init "homogeneous" puts every connectivity at 1/N^2 times
    (1 + perturbation_scale * uniform(-1, 1)) and fixes all growth constants
    at the midpoint of [c_init_low, c_init_high], so perturbation_scale = 0
    sits exactly on the fixed point. "uniform_perturbed" draws r uniform on
    (0, 1) rescaled so sum(sqrt(r)) = 1 and draws the constants uniformly;
    perturbation_scale is ignored. The amplitude simulation draws its two
    inhibition strengths from the same c range.
    """

    dt: float = 0.004
    steps: int = 250
    seed: int = 0
    r_init: str = R_INIT_UNIFORM
    perturbation_scale: float = 0.01
    c_init_low: float = 0.5
    c_init_high: float = 1.5

    def __post_init__(self):
        if self.dt <= 0.0 or not np.isfinite(self.dt * self.steps):
            raise ConfigError("dt must be positive and dt*steps finite")
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if self.r_init not in (R_INIT_HOMOGENEOUS, R_INIT_UNIFORM):
            raise ConfigError(f"unknown r_init {self.r_init!r}")
        if self.perturbation_scale < 0.0:
            raise ConfigError("perturbation_scale must be >= 0")
        if not 0.0 < self.c_init_low <= self.c_init_high:
            raise ConfigError("need 0 < c_init_low <= c_init_high")


def _init_layer(rng: np.random.Generator, N: int, config: SimConfig) -> tuple[np.ndarray, np.ndarray]:
    """Initial (r, c) for one layer; r is drawn before c."""
    if config.r_init == R_INIT_HOMOGENEOUS:
        if config.perturbation_scale > 1.0:
            raise ConfigError("homogeneous init needs perturbation_scale <= 1 to keep r >= 0")
        base = 1.0 / N**2
        r = base * (1.0 + config.perturbation_scale * rng.uniform(-1.0, 1.0, size=N))
        c = np.full(N, 0.5 * (config.c_init_low + config.c_init_high))
    else:
        raw = rng.uniform(0.0, 1.0, size=N)
        r = raw / np.sum(np.sqrt(raw)) ** 2
        c = rng.uniform(config.c_init_low, config.c_init_high, size=N)
    return r, c


@dataclass
class IntralayerTrajectory:
    r: np.ndarray  # (steps+1, N)
    c: np.ndarray  # (N,)
    dt: float
    seed: int
    clamp_events: int
    config: SimConfig

    def final_state(self) -> LayerState:
        return LayerState(self.r[-1].copy(), self.c.copy())

    def csv_rows(self):
        for t in range(self.r.shape[0]):
            for n in range(self.r.shape[1]):
                yield t, 1, n, self.r[t, n]

    def summary(self) -> dict:
        return {
            "kind": "intralayer",
            "width": int(self.r.shape[1]),
            "dt": self.dt,
            "steps": int(self.r.shape[0] - 1),
            "seed": self.seed,
            "clamp_events": self.clamp_events,
            "c": [float(v) for v in self.c],
            "final_r": [float(v) for v in self.r[-1]],
        }


@dataclass
class CoupledTrajectory:
    r: np.ndarray  # (steps+1, L, N)
    stack: LayerStackState  # initial stack; couplings stay fixed during a run
    dt: float
    seed: int
    clamp_events: int
    config: SimConfig

    def csv_rows(self):
        T, L, N = self.r.shape
        for t in range(T):
            for l in range(L):
                for n in range(N):
                    yield t, l + 1, n, self.r[t, l, n]

    def summary(self) -> dict:
        return {
            "kind": "coupled",
            "n_layers": int(self.r.shape[1]),
            "width": int(self.r.shape[2]),
            "dt": self.dt,
            "steps": int(self.r.shape[0] - 1),
            "seed": self.seed,
            "clamp_events": self.clamp_events,
            "final_r": [[float(v) for v in layer] for layer in self.r[-1]],
        }


@dataclass
class AmplitudeTrajectory:
    R: np.ndarray  # (steps+1, L)
    N: int
    c_left: float
    c_right: float
    dt: float
    seed: int
    clamp_events: int
    config: SimConfig

    def final_profile(self) -> np.ndarray:
        return self.R[-1].copy()

    def csv_rows(self):
        for t in range(self.R.shape[0]):
            for l in range(self.R.shape[1]):
                yield t, l + 1, 0, self.R[t, l]

    def summary(self) -> dict:
        return {
            "kind": "amplitude",
            "n_layers": int(self.R.shape[1]),
            "width": self.N,
            "dt": self.dt,
            "steps": int(self.R.shape[0] - 1),
            "seed": self.seed,
            "c_left": self.c_left,
            "c_right": self.c_right,
            "clamp_events": self.clamp_events,
            "final_profile": [float(v) for v in self.R[-1]],
        }


def simulate_intralayer(config: SimConfig, N: int) -> IntralayerTrajectory:
    """Integrate the single-layer dynamics, recording r at every step.

    Stage evaluations clamp transiently negative components to zero so the
    square roots stay defined; only post-step clamps are counted.
    """
    if N < 1:
        raise ConfigError("N must be >= 1")
    rng = np.random.default_rng(config.seed)
    r0, c = _init_layer(rng, N, config)
    traj = np.empty((config.steps + 1, N))
    traj[0] = r0
    clamps = 0
    y = r0

    def rhs(r):
        return _intralayer_raw(np.maximum(r, 0.0), c)

    for t in range(1, config.steps + 1):
        y = _rk_step_raw(rhs, y, config.dt)
        below = y < 0.0
        if np.any(below):
            clamps += int(np.count_nonzero(below))
            y = np.maximum(y, 0.0)
        traj[t] = y
    return IntralayerTrajectory(traj, c, config.dt, config.seed, clamps, config)


def _init_stack(rng: np.random.Generator, N: int, L: int, config: SimConfig) -> LayerStackState:
    """Initial stack; draw order is all layer (r, c) pairs, then per layer
    c_right, c_left, c_next, c_prev (the latter two only where a neighbor exists)."""
    layers = [LayerState(*_init_layer(rng, N, config)) for _ in range(L)]
    mid = 0.5 * (config.c_init_low + config.c_init_high)
    homogeneous = config.r_init == R_INIT_HOMOGENEOUS

    def vec():
        return np.full(N, mid) if homogeneous else rng.uniform(config.c_init_low, config.c_init_high, N)

    def mat():
        return np.full((N, N), mid) if homogeneous else rng.uniform(config.c_init_low, config.c_init_high, (N, N))

    c_right, c_left, c_next, c_prev = [], [], [], []
    for l in range(L):
        c_right.append(vec())
        c_left.append(vec())
        c_next.append(mat() if l < L - 1 else None)
        c_prev.append(mat() if l > 0 else None)
    return LayerStackState(layers, c_right, c_left, c_next, c_prev)


def simulate_coupled(config: SimConfig, N: int, L: int) -> CoupledTrajectory:
    """Integrate the neighbor-coupled stack; couplings are frozen at their
    initial values for the whole run."""
    if N < 1 or L < 1:
        raise ConfigError("N and L must be >= 1")
    rng = np.random.default_rng(config.seed)
    stack = _init_stack(rng, N, L, config)
    traj = np.empty((config.steps + 1, L, N))
    y = np.stack([layer.r for layer in stack.layers])
    traj[0] = y
    clamps = 0

    def rhs(flat):
        r2 = np.maximum(flat, 0.0)
        root = np.sqrt(r2)
        g = np.zeros_like(r2)
        for l in range(L):
            if l + 1 < L:
                g[l] += stack.c_right[l] * (stack.c_next[l] @ root[l + 1])
            if l > 0:
                g[l] += stack.c_left[l] * (stack.c_prev[l].T @ root[l - 1])
        return r2 * (g - np.sum(root * g, axis=1, keepdims=True))

    for t in range(1, config.steps + 1):
        y = _rk_step_raw(rhs, y, config.dt)
        below = y < 0.0
        if np.any(below):
            clamps += int(np.count_nonzero(below))
            y = np.maximum(y, 0.0)
        traj[t] = y
    return CoupledTrajectory(traj, stack, config.dt, config.seed, clamps, config)


def _amplitude_raw(R: np.ndarray, c_left: float, c_right: float, N: int) -> np.ndarray:
    """Vectorized amplitude rhs over the layer axis (last axis)."""
    root = np.sqrt(np.maximum(R, 0.0))
    coupling = np.zeros_like(R)
    coupling[..., :-1] += c_right * root[..., 1:]
    coupling[..., 1:] += c_left * root[..., :-1]
    return R / (N * np.sqrt(N)) * (1.0 - np.sqrt(np.maximum(R * N, 0.0))) * coupling


def simulate_amplitude(config: SimConfig, N: int, L: int) -> AmplitudeTrajectory:
    """Integrate the amplitude equation with R clamped into [1/N, 1].

    Initial amplitudes are uniform over the full admissible range [1/N, 1];
    the two inhibition strengths are drawn uniformly from
    [c_init_low, c_init_high] after R. The wide initial spread is what seeds
    the two-layer alternation; narrow spreads leave the residual profile
    dominated by the slower-decaying boundary layers.
    """
    if N < 1 or L < 1:
        raise ConfigError("N and L must be >= 1")
    rng = np.random.default_rng(config.seed)
    lo = 1.0 / N
    R0 = rng.uniform(lo, 1.0, size=L)
    c_left = float(rng.uniform(config.c_init_low, config.c_init_high))
    c_right = float(rng.uniform(config.c_init_low, config.c_init_high))
    traj = np.empty((config.steps + 1, L))
    traj[0] = R0
    clamps = 0
    y = R0

    def rhs(R):
        return _amplitude_raw(R, c_left, c_right, N)

    for t in range(1, config.steps + 1):
        y = _rk_step_raw(rhs, y, config.dt)
        outside = (y < lo) | (y > 1.0)
        if np.any(outside):
            clamps += int(np.count_nonzero(outside))
            y = np.clip(y, lo, 1.0)
        traj[t] = y
    return AmplitudeTrajectory(traj, N, c_left, c_right, config.dt, config.seed, clamps, config)


def ensemble_intralayer_finals(config: SimConfig, N: int, runs: int) -> np.ndarray:
    """Final r of `runs` independent simulations, seeds derived from config.seed."""
    finals = np.empty((runs, N))
    for i in range(runs):
        cfg = dataclasses.replace(config, seed=derive_seed(config.seed, i))
        finals[i] = simulate_intralayer(cfg, N).r[-1]
    return finals


def ensemble_amplitude_finals(config: SimConfig, N: int, L: int, runs: int) -> np.ndarray:
    """Final amplitude profiles of `runs` independent simulations.

    All runs are stepped together as one batch; elementwise this performs
    exactly the same float operations as simulate_amplitude does per run, so
    row i equals the final profile for the seed derive_seed(config.seed, i).
    """
    lo = 1.0 / N
    R = np.empty((runs, L))
    c_left = np.empty((runs, 1))
    c_right = np.empty((runs, 1))
    for i in range(runs):
        rng = np.random.default_rng(derive_seed(config.seed, i))
        R[i] = rng.uniform(lo, 1.0, size=L)
        c_left[i] = rng.uniform(config.c_init_low, config.c_init_high)
        c_right[i] = rng.uniform(config.c_init_low, config.c_init_high)

    def rhs(R2):
        return _amplitude_raw(R2, c_left, c_right, N)

    for t in range(config.steps):
        R = np.clip(_rk_step_raw(rhs, R, config.dt), lo, 1.0)
    return R


def growth_criterion(state: LayerState, j: int) -> bool:
    """True when node j grows: c_j strictly above the sqrt(r)-weighted mean c.

    The weights are normalized internally; the result then agrees with the
    sign of intralayer_rhs on the normalized state wherever r_j > 0.
    """
    if not 0 <= j < state.width:
        raise IndexError(f"node {j} out of range for width {state.width}")
    _check_nonnegative(state.r)
    root = np.sqrt(state.r)
    total = root.sum()
    if total == 0.0:
        raise PreconditionError("all connectivities are zero; criterion undefined")
    return bool(state.c[j] > np.dot(root / total, state.c))


def linear_perturbation_rhs(delta_c: np.ndarray, delta_r: np.ndarray, c: float, N: int) -> np.ndarray:
    """Linearized dynamics around the homogeneous state:
    (delta_c_j - mean(delta_c)) / N^2 - c * mean(delta_r) / 2."""
    delta_c = np.asarray(delta_c, dtype=np.float64)
    delta_r = np.asarray(delta_r, dtype=np.float64)
    if delta_c.shape != (N,) or delta_r.shape != (N,):
        raise ConfigError(f"perturbations must be length-{N} vectors")
    return (delta_c - delta_c.mean()) / N**2 - 0.5 * c * delta_r.mean()


def write_trajectory_csv(traj, path, provenance: str | None = None) -> None:
    """CSV serialization (step, layer, node, value) shared by all trajectory kinds."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if provenance:
            fh.write(f"# provenance: {provenance}\n")
        fh.write("step,layer,node,value\n")
        for step, layer, node, value in traj.csv_rows():
            fh.write(f"{step},{layer},{node},{repr(float(value))}\n")
