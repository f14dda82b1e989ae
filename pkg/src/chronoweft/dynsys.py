"""Chaotic-system catalog, fixed-step integration, and trajectory preprocessing.

The catalog holds 31 autonomous flows: nine named 3-D systems, the nineteen
minimal Sprott flows (cases 0-18), and the three deployment targets
(three-species food chain, Lorenz, 4-D competitive Lotka-Volterra). Each
entry carries its vector field, parameter values, and a per-dimension box
from which initial conditions are drawn. Trajectories are integrated with
classical RK4 at a fixed step, then preprocessed into min-max normalized,
subsampled matrices suitable for model training.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DegenerateDimensionError,
    DivergenceError,
    IntegrationError,
    ValidationError,
)

DIVERGENCE_LIMIT = 1e6
DEFAULT_TRANSIENT_CUT = 50_000  # integration steps discarded before sampling

VectorField = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class SystemSpec:
    """A named autonomous ODE with bound parameter values."""

    name: str
    dim: int
    vector_field: VectorField
    params: dict[str, float]
    default_init_box: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if self.dim < 3:
            raise ValidationError(f"system '{self.name}': dim must be >= 3, got {self.dim}")
        if len(self.default_init_box) != self.dim:
            raise ValidationError(f"system '{self.name}': init box must have {self.dim} intervals")

    def random_init(self, rng: np.random.Generator) -> np.ndarray:
        lo = np.array([b[0] for b in self.default_init_box])
        hi = np.array([b[1] for b in self.default_init_box])
        return lo + (hi - lo) * rng.random(self.dim)


@dataclass
class RawTrajectory:
    """States at integration resolution; row k is the state after k+1 steps."""

    data: np.ndarray
    t0: float
    dt: float

    def __len__(self):
        return self.data.shape[0]


@dataclass
class TrajectoryMatrix:
    """Uniformly sampled, min-max normalized state sequence."""

    data: np.ndarray
    dt_effective: float
    norm_stats: np.ndarray  # shape (2, D): row 0 mins, row 1 maxs
    clipped: bool = False  # set by closed-loop prediction when output left bounds

    def __len__(self):
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def denormalize(self) -> np.ndarray:
        lo, hi = self.norm_stats
        return self.data * (hi - lo) + lo


def rk4_step(field: VectorField, x: np.ndarray, t: float, dt: float) -> np.ndarray:
    """One classical 4th-order Runge-Kutta update."""
    if dt <= 0:
        raise ValidationError(f"rk4_step: dt must be positive, got {dt}")
    half = 0.5 * dt
    k1 = field(x, t)
    k2 = field(x + half * k1, t + half)
    k3 = field(x + half * k2, t + half)
    k4 = field(x + dt * k3, t + dt)
    out = x + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
    if not np.all(np.isfinite(out)):
        raise IntegrationError("vector field produced a non-finite value", state=np.asarray(x))
    return out


def simulate(
    spec: SystemSpec,
    x0: Sequence[float] | None,
    n_steps: int,
    dt: float = 0.01,
    seed: int | None = None,
    t0: float = 0.0,
) -> RawTrajectory:
    """Integrate n_steps RK4 steps; x0=None draws from the system's init box using seed."""
    if x0 is None:
        x0 = spec.random_init(np.random.default_rng(seed))
    x = np.asarray(x0, dtype=np.float64)
    if x.shape != (spec.dim,):
        raise ValidationError(
            f"simulate: x0 has shape {x.shape}, expected ({spec.dim},) for '{spec.name}'"
        )
    out = np.empty((n_steps, spec.dim), dtype=np.float64)
    f = spec.vector_field
    t = t0
    half = 0.5 * dt
    sixth = dt / 6.0
    check_every = 512  # amortized divergence scan; NaN/inf propagate until caught
    block_start = 0
    for k in range(n_steps):
        k1 = f(x, t)
        k2 = f(x + half * k1, t + half)
        k3 = f(x + half * k2, t + half)
        k4 = f(x + dt * k3, t + dt)
        x = x + sixth * (k1 + 2.0 * (k2 + k3) + k4)
        out[k] = x
        t += dt
        if k + 1 - block_start >= check_every or k == n_steps - 1:
            block = out[block_start : k + 1]
            bad = ~(np.isfinite(block).all(axis=1) & (np.abs(block).max(axis=1) <= DIVERGENCE_LIMIT))
            if bad.any():
                raise DivergenceError(spec.name, block_start + int(np.argmax(bad)))
            block_start = k + 1
    return RawTrajectory(data=out, t0=t0, dt=dt)


def preprocess(
    raw: RawTrajectory,
    transient_cut: int = DEFAULT_TRANSIENT_CUT,
    subsample: int = 10,
    project_dims: Sequence[int] | None = None,
) -> TrajectoryMatrix:
    """Cut the transient, subsample, project to 3-D if needed, then normalize to [0,1]."""
    if subsample < 1:
        raise ValidationError(f"preprocess: subsample must be >= 1, got {subsample}")
    if len(raw) <= transient_cut:
        raise ValidationError(
            f"preprocess: trajectory has {len(raw)} rows, needs more than transient_cut={transient_cut}"
        )
    data = raw.data[transient_cut::subsample]
    if project_dims is None and data.shape[1] > 3:
        project_dims = range(3)
    if project_dims is not None:
        data = data[:, list(project_dims)]
    lo = data.min(axis=0)
    hi = data.max(axis=0)
    span = hi - lo
    if np.any(span == 0.0):
        dead = int(np.flatnonzero(span == 0.0)[0])
        raise DegenerateDimensionError(
            f"preprocess: dimension {dead} is constant ({lo[dead]}); cannot min-max normalize"
        )
    norm = (data - lo) / span
    return TrajectoryMatrix(
        data=norm,
        dt_effective=raw.dt * subsample,
        norm_stats=np.vstack([lo, hi]),
    )


# ---------------------------------------------------------------------------
# Catalog
# ---------------------------------------------------------------------------

_BOX_UNIT3 = (((0.0, 1.0),) * 3)


def _aizawa(p):
    a, b, c, d, e, f = p["a"], p["b"], p["c"], p["d"], p["e"], p["f"]

    def field(s, t):
        x, y, z = s
        return np.array([
            (z - b) * x - d * y,
            d * x + (z - b) * y,
            c + a * z - z ** 3 / 3.0 - (x * x + y * y) * (1.0 + e * z) + f * z * x ** 3,
        ])

    return field


def _bouali(p):
    al, be, a, b, c, s_ = p["alpha"], p["beta"], p["a"], p["b"], p["c"], p["s"]

    def field(s, t):
        x, y, z = s
        return np.array([
            x * (a - y) + al * z,
            -y * (b - x * x),
            -x * (c - s_ * z) - be * z,
        ])

    return field


def _chua(p):
    al, ga, be, m0, m1 = p["alpha"], p["gamma"], p["beta"], p["mu0"], p["mu1"]

    def field(s, t):
        x, y, z = s
        ht = m1 * x + 0.5 * (m0 - m1) * (abs(x + 1.0) - abs(x - 1.0))
        return np.array([al * (y - x - ht), ga * (x - y + z), -be * y])

    return field


def _dadras(p):
    a, b, c, d, e = p["a"], p["b"], p["c"], p["d"], p["e"]

    def field(s, t):
        x, y, z = s
        return np.array([y - a * x + b * y * z, c * y - x * z + z, d * x * y - e * z])

    return field


def _four_wing(p):
    a, b, c = p["a"], p["b"], p["c"]

    def field(s, t):
        x, y, z = s
        return np.array([a * x + y * z, b * x + c * y - x * z, -z - x * y])

    return field


def _hastings_powell(p):
    a1, a2, b1, b2, d1, d2 = p["a1"], p["a2"], p["b1"], p["b2"], p["d1"], p["d2"]

    def field(s, t):
        v, h, pr = s
        g1 = a1 * v * h / (b1 * v + 1.0)
        g2 = a2 * h * pr / (b2 * h + 1.0)
        return np.array([v * (1.0 - v) - g1, g1 - g2 - d1 * h, g2 - d2 * pr])

    return field


def _rikitake(p):
    mu, a = p["mu"], p["a"]

    def field(s, t):
        x, y, z = s
        return np.array([-mu * x + z * y, -mu * y + x * (z - a), 1.0 - x * y])

    return field


def _rossler(p):
    a, b, c = p["a"], p["b"], p["c"]

    def field(s, t):
        x, y, z = s
        return np.array([-(y + z), x + a * y, b + z * (x - c)])

    return field


def _wang(p):
    a = p["a"]

    def field(s, t):
        x, y, z = s
        return np.array([x - y * z, x - y + x * z, -a * z + x * y])

    return field


def _food_chain(p):
    k, xc, yc, xp, yp, r0, c0 = (
        p["K"], p["x_c"], p["y_c"], p["x_p"], p["y_p"], p["R0"], p["C0"],
    )

    def field(s, t):
        r, c, pr = s
        fr = yc * r / (r + r0)
        fc = yp * c / (c + c0)
        return np.array([
            r * (1.0 - r / k) - xc * c * fr,
            xc * c * (fr - 1.0) - xp * pr * fc,
            xp * pr * (fc - 1.0),
        ])

    return field


def _lorenz(p):
    sig, rho, beta = p["sigma"], p["rho"], p["beta"]

    def field(s, t):
        x, y, z = s
        return np.array([sig * (y - x), x * (rho - z) - y, x * y - beta * z])

    return field


def _lotka_volterra(p):
    r = np.array([p["r1"], p["r2"], p["r3"], p["r4"]])
    a = np.array([[p[f"a{i}{j}"] for j in range(1, 5)] for i in range(1, 5)])

    def field(s, t):
        return r * s * (1.0 - a @ s)

    return field


# Sprott cases 0-18, transcribed row by row. Case 6's middle equation is the
# z-equation in the source table; the field below honors the left-hand sides.
_SPROTT_FIELDS = [
    lambda x, y, z: (y, -x + y * z, 1.0 - y * y),                 # 0
    lambda x, y, z: (y * z, x - y, 1.0 - x * y),                  # 1
    lambda x, y, z: (y * z, x - y, 1.0 - x * x),                  # 2
    lambda x, y, z: (-y, x + z, x * z + 3.0 * y * y),             # 3
    lambda x, y, z: (y * z, x * x - y, 1.0 - 4.0 * x),            # 4
    lambda x, y, z: (y + z, -x + 0.5 * y, x * x - z),             # 5
    lambda x, y, z: (0.4 * x + z, -x + y, x * z - y),             # 6
    lambda x, y, z: (-y + z * z, x + 0.5 * y, x * z),             # 7
    lambda x, y, z: (-0.2 * y, x + z, x + y * y - z),             # 8
    lambda x, y, z: (2.0 * z, -2.0 * y + z, -x + y + y * y),      # 9
    lambda x, y, z: (x * y - z, x - y, x + 0.3 * z),              # 10
    lambda x, y, z: (y + 3.9 * z, 0.9 * x * x - y, 1.0 - x),      # 11
    lambda x, y, z: (-z, -x * x - y, 1.7 + 1.7 * x + y),          # 12
    lambda x, y, z: (-2.0 * y, x + z * z, 1.0 + y - 2.0 * z),     # 13
    lambda x, y, z: (y, x - z, x + x * z + 2.7 * y),              # 14
    lambda x, y, z: (2.7 * y + z, -x + y * y, x + y),             # 15
    lambda x, y, z: (-z, x - y, 3.1 * x + y * y + 0.5 * z),       # 16
    lambda x, y, z: (0.9 - y, 0.4 + z, x * y - z),                # 17
    lambda x, y, z: (-x - 4.0 * y, x + z * z, 1.0 + x),           # 18
]


def _sprott(case: int):
    g = _SPROTT_FIELDS[case]

    def field(s, t):
        return np.array(g(s[0], s[1], s[2]))

    return field


# Canonical chaotic Lorenz parameters; an alternate literal set circulates in
# some sources but sits at a stable fixed point, so it is kept only as a
# named constant for reproducibility experiments.
LORENZ_PARAMS = {"sigma": 10.0, "rho": 28.0, "beta": 8.0 / 3.0}
LORENZ_ALT_PARAMS = {"sigma": 10.0, "rho": 2.67, "beta": 26.0}

# McCann-Yodzis food chain in its chaotic regime. K sits just below the
# boundary crisis: at K=1.0 the predator goes extinct from generic initial
# conditions, while K=0.99 keeps the aperiodic coexistence attractor alive.
FOOD_CHAIN_PARAMS = {
    "K": 0.99,
    "x_c": 0.4,
    "y_c": 2.009,
    "x_p": 0.08,
    "y_p": 2.876,
    "R0": 0.16129,
    "C0": 0.5,
}

_NAMED_SYSTEMS = [
    ("aizawa", _aizawa,
     {"a": 0.95, "b": 0.7, "c": 0.6, "d": 3.5, "e": 0.25, "f": 0.1},
     (((-0.1, 0.1),) * 2 + ((0.0, 0.5),))),
    ("bouali", _bouali,
     {"alpha": 0.3, "beta": 0.05, "a": 4.0, "b": 1.0, "c": 1.5, "s": 1.0},
     ((0.2, 0.4), (0.2, 0.4), (-0.1, 0.1))),
    ("chua", _chua,
     {"alpha": 15.6, "gamma": 1.0, "beta": 28.0, "mu0": -1.143, "mu1": -0.714},
     ((0.5, 0.9), (-0.2, 0.2), (-0.2, 0.2))),
    ("dadras", _dadras,
     {"a": 3.0, "b": 2.7, "c": 1.7, "d": 2.0, "e": 9.0},
     _BOX_UNIT3),
    ("four_wing", _four_wing,
     {"a": 0.2, "b": 0.01, "c": -0.4},
     _BOX_UNIT3),
    ("hastings_powell", _hastings_powell,
     {"a1": 5.0, "a2": 0.1, "b1": 3.0, "b2": 2.0, "d1": 0.4, "d2": 0.01},
     ((0.5, 1.0), (0.1, 0.5), (8.0, 10.0))),
    ("rikitake", _rikitake, {"mu": 2.0, "a": 5.0},
     _BOX_UNIT3),
    ("rossler", _rossler, {"a": 0.2, "b": 0.2, "c": 5.7},
     ((-1.0, 1.0), (-1.0, 1.0), (0.0, 0.5))),
    ("wang", _wang, {"a": 3.0},
     ((0.5, 1.5), (0.5, 1.5), (0.5, 1.5))),
]

_TARGET_SYSTEMS = [
    # Init box sits on the coexistence attractor; the basin is small and
    # most of the unit cube flows to predator extinction.
    ("food_chain", _food_chain, FOOD_CHAIN_PARAMS,
     ((0.7, 0.9), (0.15, 0.3), (0.6, 0.8))),
    ("lorenz", _lorenz, LORENZ_PARAMS, _BOX_UNIT3),
    ("lotka_volterra", _lotka_volterra,
     {"r1": 1.0, "r2": 0.72, "r3": 1.53, "r4": 1.27,
      "a11": 1.0, "a12": 1.09, "a13": 1.52, "a14": 0.0,
      "a21": 0.0, "a22": 1.0, "a23": 0.44, "a24": 1.36,
      "a31": 2.33, "a32": 0.0, "a33": 1.0, "a34": 0.47,
      "a41": 1.21, "a42": 0.51, "a43": 0.35, "a44": 1.0},
     (((0.1, 0.9),) * 4)),
]

_SPROTT_BOX = (((-0.2, 0.2),) * 3)
# Cases whose trajectories wander far from the origin need their own box.
_SPROTT_BOX_OVERRIDES: dict[int, tuple] = {}


def _build_catalog() -> list[SystemSpec]:
    specs = []
    for name, factory, params, box in _NAMED_SYSTEMS:
        specs.append(SystemSpec(name, 3, factory(params), dict(params), box))
    for case in range(19):
        box = _SPROTT_BOX_OVERRIDES.get(case, _SPROTT_BOX)
        specs.append(SystemSpec(f"sprott_{case}", 3, _sprott(case), {}, box))
    for name, factory, params, box in _TARGET_SYSTEMS:
        dim = 4 if name == "lotka_volterra" else 3
        specs.append(SystemSpec(name, dim, factory(params), dict(params), box))
    return specs


TARGET_NAMES = ("food_chain", "lorenz", "lotka_volterra")


def catalog() -> list[SystemSpec]:
    """All 31 systems: 9 named flows, Sprott cases 0-18, then the 3 targets."""
    return _build_catalog()


def system(name: str, params: dict[str, float] | None = None) -> SystemSpec:
    """Look up a catalog entry by (case-insensitive) name, optionally rebinding params."""
    key = name.lower()
    for spec in _build_catalog():
        if spec.name == key:
            if params is None:
                return spec
            merged = {**spec.params, **params}
            factory = _factory_for(key)
            return replace(spec, vector_field=factory(merged), params=merged)
    known = ", ".join(s.name for s in _build_catalog())
    raise ValidationError(f"unknown system '{name}'; catalog has: {known}")


def _factory_for(key: str):
    for name, factory, _, _ in _NAMED_SYSTEMS + _TARGET_SYSTEMS:
        if name == key:
            return factory
    if key.startswith("sprott_"):
        case = int(key.split("_", 1)[1])
        return lambda _params: _sprott(case)
    raise ValidationError(f"unknown system '{key}'")
