"""
Synthetic functional manifolds: two-peak amplitude model composed with domain warpings.

Each observation is x(t) = b(w(t; p); a) evaluated on a shared grid, where the
active entries of theta = (a, p) are drawn either from a box (linear settings)
or from a benchmark manifold rescaled into the valid parameter box.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np
from scipy.special import betainc

logger = logging.getLogger(__name__)

PARAM_NAMES = ("a1", "a2", "a3", "a4", "p1", "p2", "p3", "p4")

# Inactive parameters. a2 = a3 = 1 keeps both peaks; p-defaults make every warp the identity
# except p1, which only matters for the linear warp and is never inactive there.
DEFAULTS = {"a1": 1.0, "a2": 1.0, "a3": 1.0, "a4": 0.0, "p1": 0.5, "p2": 1.0, "p3": 1.0, "p4": 1.0}

# Sampling ranges of the linear settings; also the target box of the manifold rescaling.
PARAM_BOX = (0.5, 3.0)
P1_RANGE = (0.01, 0.99)

# helix1d: number of turns and total height of the unit-radius helix
HELIX_TURNS = 3
HELIX_HEIGHT = 0.7

WARP_KINDS = ("identity", "linear", "power", "betacdf")
LINEAR_BOX = "linear-box"

_PEAK_SCALE = 1.0 / np.sqrt(0.1 * np.pi)


def _peak(t, mu):
    return np.exp(-((t - mu) ** 2) / 0.1)


def _amplitude(t, a1, a2, a3, a4):
    return a1 * _PEAK_SCALE * (a2 * _peak(t, 0.25) + a3 * _peak(t, 0.75)) + a4


def amplitude_curve(t, a) -> Union[float, np.ndarray]:
    """
    Two-peak amplitude model b(t; a) = a1/sqrt(0.1 pi) * {a2 n(t, .25) + a3 n(t, .75)} + a4.

    Args:
        t: point(s) in [0, 1].
        a: the four amplitude parameters (a1, a2, a3, a4).
    """
    t_arr = np.asarray(t, dtype=float)
    a_arr = np.asarray(a, dtype=float)
    if a_arr.shape != (4,):
        raise ValueError(f"amplitude parameters must be a 4-vector, got shape {a_arr.shape}")
    if not (np.all(np.isfinite(t_arr)) and np.all(np.isfinite(a_arr))):
        raise ValueError("amplitude_curve() got non-finite input")
    value = _amplitude(t_arr, *a_arr)
    return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True)
class WarpSpec:
    """Monotone map of [0, 1] onto itself; only the parameters of `kind` are used."""

    kind: str = "identity"
    p1: Optional[float] = None
    p2: Optional[float] = None
    p3: Optional[float] = None
    p4: Optional[float] = None

    def __post_init__(self):
        if self.kind not in WARP_KINDS:
            raise ValueError(f"Unknown warp kind {self.kind!r}: one of {WARP_KINDS} is supported")
        required = {"identity": (), "linear": ("p1",), "power": ("p2",), "betacdf": ("p3", "p4")}
        for name in required[self.kind]:
            value = getattr(self, name)
            if value is None or not np.isfinite(value):
                raise ValueError(f"{self.kind} warp requires a finite {name}, got {value}")
        if self.kind == "linear" and not 0.0 < self.p1 < 1.0:
            raise ValueError(f"linear warp requires p1 in (0, 1), got {self.p1}")
        if self.kind == "power" and self.p2 <= 0:
            raise ValueError(f"power warp requires p2 > 0, got {self.p2}")
        if self.kind == "betacdf" and (self.p3 <= 0 or self.p4 <= 0):
            raise ValueError(f"betacdf warp requires p3, p4 > 0, got ({self.p3}, {self.p4})")


def _warp_values(t, kind, p1=None, p2=None, p3=None, p4=None):
    # broadcasts t against per-observation parameter columns
    if kind == "identity":
        return np.broadcast_to(t, np.broadcast(t, p1 if p1 is not None else t).shape).astype(float)
    if kind == "linear":
        return np.where(t <= 0.5, p1 * t, (2.0 - p1) * (t - 1.0) + 1.0)
    if kind == "power":
        return np.power(t, p2)
    if kind == "betacdf":
        return betainc(p3, p4, t)
    raise ValueError(f"Unknown warp kind {kind!r}")


def warp(t, w: WarpSpec) -> Union[float, np.ndarray]:
    """Evaluate the warping w(t; p) for point(s) t in [0, 1]."""
    t_arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t_arr)) or np.any(t_arr < 0.0) or np.any(t_arr > 1.0):
        raise ValueError("warp() is only defined for finite t in [0, 1]")
    value = _warp_values(t_arr, w.kind, w.p1, w.p2, w.p3, w.p4)
    return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True)
class SettingSpec:
    """
    One simulation setting. `columns` are the sampled parameter columns in order;
    a coupled column feeding several parameters is labelled "a1=p2".
    """

    name: str
    df: int
    space: str
    variation: str
    columns: Tuple[str, ...]
    warp: str
    defaults: Tuple[Tuple[str, float], ...] = field(default=tuple(DEFAULTS.items()))

    def __post_init__(self):
        if len(self.columns) != self.df:
            raise ValueError(f"setting {self.name}: {len(self.columns)} columns for {self.df} df")
        if self.warp not in WARP_KINDS:
            raise ValueError(f"setting {self.name}: unknown warp {self.warp!r}")

    @property
    def is_linear(self) -> bool:
        return self.space == LINEAR_BOX

    def targets(self, column: str) -> Tuple[str, ...]:
        return tuple(column.split("="))


SETTINGS: Dict[str, SettingSpec] = {
    s.name: s
    for s in (
        SettingSpec("a1-l", 1, LINEAR_BOX, "amplitude", ("a1",), "identity"),
        SettingSpec("p1-l", 1, LINEAR_BOX, "phase", ("p1",), "linear"),
        SettingSpec("c1-l", 1, LINEAR_BOX, "coupled", ("a1=p2",), "power"),
        SettingSpec("a2-l", 2, LINEAR_BOX, "amplitude", ("a2", "a3"), "identity"),
        SettingSpec("p2-l", 2, LINEAR_BOX, "phase", ("p3", "p4"), "betacdf"),
        SettingSpec("i2-l", 2, LINEAR_BOX, "independent", ("a1", "p2"), "power"),
        SettingSpec("a2-sr", 2, "swiss1d", "amplitude", ("a1", "a2"), "identity"),
        SettingSpec("a3-hx", 3, "helix1d", "amplitude", ("a1", "a2", "a3"), "identity"),
        SettingSpec("a3-sr", 3, "swiss2d", "amplitude", ("a2", "a3", "a4"), "identity"),
        SettingSpec("a3-sc", 3, "scurve2d", "amplitude", ("a2", "a3", "a4"), "identity"),
        SettingSpec("a3-tp", 3, "twopeaks2d", "amplitude", ("a2", "a3", "a4"), "identity"),
    )
}


def get_setting(setting: Union[str, SettingSpec]) -> SettingSpec:
    if isinstance(setting, SettingSpec):
        return setting
    try:
        return SETTINGS[setting]
    except KeyError:
        raise ValueError(f"Unknown setting {setting!r}: one of {list(SETTINGS)} is supported") from None


def _param_range(column: str) -> Tuple[float, float]:
    return P1_RANGE if column.split("=")[0] == "p1" else PARAM_BOX


@dataclass(frozen=True)
class ParamSample:
    """Ground-truth generator coordinates theta_i, one row per observation."""

    values: np.ndarray
    manifold_id: str
    active_params: Tuple[str, ...]
    intrinsic: Optional[np.ndarray] = None
    ambient_min: Optional[np.ndarray] = None
    ambient_max: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float, ndmin=2)
        if values.shape[1] != len(self.active_params):
            raise ValueError(
                f"ParamSample has {values.shape[1]} columns but {len(self.active_params)} active parameters"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("ParamSample contains non-finite values")
        for j, column in enumerate(self.active_params):
            lo, hi = _param_range(column)
            if values[:, j].min() < lo - 1e-12 or values[:, j].max() > hi + 1e-12:
                raise ValueError(f"ParamSample column {column} leaves its range [{lo}, {hi}]")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        for name in ("intrinsic", "ambient_min", "ambient_max"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.array(arr, dtype=float)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def full_parameters(self) -> Dict[str, np.ndarray]:
        """All eight generator parameters per observation, inactive ones at their defaults."""
        theta = {name: np.full(self.n, DEFAULTS[name]) for name in PARAM_NAMES}
        for j, column in enumerate(self.active_params):
            for name in column.split("="):
                theta[name] = self.values[:, j]
        return theta


@dataclass(frozen=True)
class FunctionalDataset:
    """n observations evaluated on a shared grid of m points in [0, 1]."""

    grid: np.ndarray
    values: np.ndarray
    provenance: str = "external"

    def __post_init__(self):
        grid = np.array(self.grid, dtype=float)
        values = np.array(self.values, dtype=float)
        if grid.ndim != 1 or grid.size < 2:
            raise ValueError(f"grid must be 1-D with at least 2 points, got shape {grid.shape}")
        if not np.all(np.diff(grid) > 0):
            raise ValueError("grid must be strictly increasing")
        if grid[0] < 0.0 or grid[-1] > 1.0:
            raise ValueError(f"grid must lie in [0, 1], got [{grid[0]}, {grid[-1]}]")
        if values.ndim != 2 or values.shape[1] != grid.size:
            raise ValueError(f"values of shape {values.shape} do not match a grid of {grid.size} points")
        if values.shape[0] < 3:
            raise ValueError(f"need at least 3 observations, got {values.shape[0]}")
        if not np.all(np.isfinite(values)):
            raise ValueError("FunctionalDataset contains non-finite values")
        grid.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.grid.size


def sample_linear_params(setting: Union[str, SettingSpec], n: int, seed: int = 1) -> ParamSample:
    """Draw n i.i.d. uniform parameter vectors from the setting's box."""
    spec = get_setting(setting)
    if not spec.is_linear:
        raise ValueError(f"sample_linear_params() got nonlinear setting {spec.name} ({spec.space})")
    rng = np.random.default_rng(seed)
    columns = [rng.uniform(*_param_range(column), size=n) for column in spec.columns]
    return ParamSample(np.column_stack(columns), LINEAR_BOX, spec.columns)


def _swiss1d(rng, n):
    u = rng.uniform(1.5 * np.pi, 4.5 * np.pi, size=n)
    return u[:, None], np.column_stack([u * np.cos(u), u * np.sin(u)])


def _swiss2d(rng, n):
    u = rng.uniform(1.5 * np.pi, 4.5 * np.pi, size=n)
    h = rng.uniform(0.0, 20.0, size=n)
    return np.column_stack([u, h]), np.column_stack([u * np.cos(u), h, u * np.sin(u)])


def _helix1d(rng, n):
    # three turns of a unit-radius cylindrical helix; the height comes first so it feeds a1
    u = rng.uniform(0.0, 1.0, size=n)
    angle = 2.0 * np.pi * HELIX_TURNS * u
    return u[:, None], np.column_stack([HELIX_HEIGHT * u, np.cos(angle), np.sin(angle)])


def _scurve2d(rng, n):
    u = rng.uniform(-1.5 * np.pi, 1.5 * np.pi, size=n)
    h = rng.uniform(0.0, 2.0, size=n)
    return np.column_stack([u, h]), np.column_stack([np.sin(u), h, np.sign(u) * (np.cos(u) - 1.0)])


def _twopeaks2d(rng, n):
    u = rng.uniform(-1.0, 1.0, size=n)
    v = rng.uniform(-1.0, 1.0, size=n)
    peak = np.exp(-((u + 0.5) ** 2 + v**2) / 0.08) + np.exp(-((u - 0.5) ** 2 + v**2) / 0.08)
    return np.column_stack([u, v]), np.column_stack([u, v, peak])


# manifolds rescaled as one rigid shape instead of column by column
SHAPE_PRESERVING = frozenset({"helix1d"})

# manifold id -> sampler(rng, n) returning (intrinsic coordinates, ambient coordinates)
MANIFOLDS: Dict[str, Callable[[np.random.Generator, int], Tuple[np.ndarray, np.ndarray]]] = {
    "swiss1d": _swiss1d,
    "swiss2d": _swiss2d,
    "helix1d": _helix1d,
    "scurve2d": _scurve2d,
    "twopeaks2d": _twopeaks2d,
}


def rescale_to_box(ambient: np.ndarray, box: Tuple[float, float] = PARAM_BOX, shared: bool = False):
    """
    Affinely map each column onto `box` using its sample min/max. With `shared`, the
    sample's bounding cube is mapped onto the box instead, so every column gets the same
    offset and scale and the shape is kept; columns then lie inside the box without all
    of them reaching both ends.
    """
    lo, hi = ambient.min(axis=0), ambient.max(axis=0)
    if shared:
        lo, hi = np.full_like(lo, lo.min()), np.full_like(hi, hi.max())
    if np.any(hi <= lo):
        raise ValueError("cannot rescale a constant ambient coordinate")
    scaled = box[0] + (box[1] - box[0]) * (ambient - lo) / (hi - lo)
    return scaled, lo, hi


def sample_manifold_params(setting: Union[str, SettingSpec], n: int, seed: int = 1) -> ParamSample:
    """
    Sample n points uniformly in the intrinsic chart of the setting's manifold, map them
    to ambient coordinates and rescale every coordinate into [0.5, 3].
    """
    spec = get_setting(setting)
    if spec.is_linear:
        raise ValueError(f"sample_manifold_params() got linear setting {spec.name}")
    if spec.space not in MANIFOLDS:
        raise ValueError(f"Unknown manifold {spec.space!r}: one of {list(MANIFOLDS)} is supported")
    rng = np.random.default_rng(seed)
    intrinsic, ambient = MANIFOLDS[spec.space](rng, n)
    if ambient.shape[1] != len(spec.columns):
        raise ValueError(
            f"manifold {spec.space} has ambient dimension {ambient.shape[1]}, "
            f"setting {spec.name} expects {len(spec.columns)}"
        )
    scaled, lo, hi = rescale_to_box(ambient, shared=spec.space in SHAPE_PRESERVING)
    return ParamSample(scaled, spec.space, spec.columns, intrinsic=intrinsic, ambient_min=lo, ambient_max=hi)


def generate_setting(
    setting: Union[str, SettingSpec], n: int = 1000, m: int = 200, seed: int = 1
) -> Tuple[FunctionalDataset, ParamSample]:
    """
    Generate the functional data set of one simulation setting.

    Returns:
        (FunctionalDataset, ParamSample): the observed curves on m equispaced grid points
        including 0 and 1, and the ground truth that generated them.
    """
    spec = get_setting(setting)
    if n < 3 or m < 2:
        raise ValueError(f"generate_setting() needs n >= 3 and m >= 2, got n={n}, m={m}")
    params = sample_linear_params(spec, n, seed) if spec.is_linear else sample_manifold_params(spec, n, seed)
    theta = {name: col[:, None] for name, col in params.full_parameters().items()}
    grid = np.linspace(0.0, 1.0, m)
    warped = _warp_values(grid[None, :], spec.warp, theta["p1"], theta["p2"], theta["p3"], theta["p4"])
    values = _amplitude(warped, theta["a1"], theta["a2"], theta["a3"], theta["a4"])
    logger.info(f"Generated setting {spec.name}: n={n}, m={m}, seed={seed}")
    return FunctionalDataset(grid, values, provenance=spec.name), params
