"""Post-selection statistics: sub-ensembles, empirical most likely paths,
histograms, weak functions and the most-likely-time distribution."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .detector import DetectorModel
from .dynamics import sampling_z
from .errors import InsufficientStatisticsError
from .mlp import path_action
from .simulator import TrajectorySet

MIN_MLP_SAMPLES = 20


@dataclass(frozen=True)
class PostSelection:
    """Final-state window. ``mode="z"`` ignores the x target."""

    x_f: float
    z_f: float
    window: float
    t_f: float
    mode: str = "xz"

    def __post_init__(self):
        if not self.window > 0:
            raise ValueError("post-selection window must be positive")
        if self.mode not in ("xz", "z"):
            raise ValueError("mode must be 'xz' or 'z'")
        if self.t_f < 0:
            raise ValueError("t_f must be non-negative")


@dataclass
class SubEnsemble:
    """Trajectories of a set restricted to [0, t_f] and to selected runs."""

    source: TrajectorySet
    indices: np.ndarray
    n_steps: int
    selection: PostSelection | None = None

    @property
    def n(self) -> int:
        return int(self.indices.size)

    def __len__(self):
        return self.n

    @property
    def params(self):
        return self.source.params

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.source.params.dt

    @property
    def x(self) -> np.ndarray:
        return self.source.x[self.indices, : self.n_steps + 1]

    @property
    def z(self) -> np.ndarray:
        return self.source.z[self.indices, : self.n_steps + 1]

    @property
    def readouts(self) -> np.ndarray:
        return self.source.readouts[self.indices, : self.n_steps]


def whole(tset: TrajectorySet, t_f: float | None = None) -> SubEnsemble:
    """The unselected ensemble as a SubEnsemble, optionally cut at ``t_f``."""
    k = tset.n_steps if t_f is None else tset.step_index(t_f)
    return SubEnsemble(tset, np.arange(tset.n_traj), k)


def postselect(tset: TrajectorySet, sel: PostSelection) -> SubEnsemble:
    """Runs whose filtered state at ``sel.t_f`` falls inside the window.

    An empty selection is returned as a SubEnsemble with n == 0.
    """
    k = tset.step_index(sel.t_f)
    ok = np.abs(tset.z[:, k] - sel.z_f) <= sel.window
    if sel.mode == "xz":
        ok &= np.abs(tset.x[:, k] - sel.x_f) <= sel.window
    return SubEnsemble(tset, np.flatnonzero(ok), k, sel)


def _require(sub: SubEnsemble, minimum: int, what: str):
    if sub.n < minimum:
        raise InsufficientStatisticsError(
            f"{what} needs at least {minimum} trajectories, got {sub.n}", sub.n
        )


def trajectory_log_likelihoods(sub: SubEnsemble) -> np.ndarray:
    """Summed readout log-likelihood of each run in ``sub``.

    Each readout is scored against the state it was conditioned on.
    """
    p = sub.params
    zc = sampling_z(sub.x[:, :-1], sub.z[:, :-1], p)
    return np.atleast_1d(path_action(zc, sub.readouts, DetectorModel.from_params(p)))


@dataclass
class EmpiricalPath:
    times: np.ndarray
    x: np.ndarray
    z: np.ndarray
    x_se: np.ndarray
    z_se: np.ndarray
    n_top: int
    n_total: int
    threshold: float  # lowest log-likelihood among the averaged runs
    indices: np.ndarray  # into the source set, best first


def empirical_mlp(sub: SubEnsemble, percentile: float = 5.0) -> EmpiricalPath:
    """Pointwise average of the most likely ``percentile`` % of runs."""
    if not 1.0 <= percentile <= 20.0:
        raise ValueError("percentile must be between 1 and 20")
    _require(sub, MIN_MLP_SAMPLES, "empirical most likely path")
    ll = trajectory_log_likelihoods(sub)
    n_top = max(1, math.ceil(sub.n * percentile / 100.0))
    order = np.argsort(-ll, kind="stable")[:n_top]
    x, z = sub.x[order], sub.z[order]
    se = (lambda a: a.std(axis=0, ddof=1) / math.sqrt(n_top)) if n_top > 1 else (lambda a: np.zeros(a.shape[1]))
    return EmpiricalPath(
        sub.times, x.mean(axis=0), z.mean(axis=0), se(x), se(z),
        n_top, sub.n, float(ll[order[-1]]), sub.indices[order],
    )


def path_rms(times, x, z, path) -> float:
    """RMS Bloch-plane distance between a sampled series and a theory path.

    The theory path is linearly interpolated at ``times``.
    """
    s = path.sample(times)
    return float(np.sqrt(np.mean((np.asarray(x) - s["x"]) ** 2 + (np.asarray(z) - s["z"]) ** 2)))


def median_path(sub: SubEnsemble):
    """Per-time-step medians of x and z: (times, x_median, z_median)."""
    _require(sub, 1, "median path")
    return sub.times, np.median(sub.x, axis=0), np.median(sub.z, axis=0)


@dataclass
class Histogram2D:
    time_edges: np.ndarray
    value_edges: np.ndarray
    counts: np.ndarray  # (n_times, n_bins)
    coordinate: str
    normalization: str = "counts"


def histogram(sub: SubEnsemble | TrajectorySet, coordinate: str = "z", bins: int = 50,
              value_range=(-1.05, 1.05), normalization: str = "counts") -> Histogram2D:
    """Time-resolved histogram of one Bloch coordinate.

    Values outside ``value_range`` are clipped into the edge bins so each
    time column holds exactly one entry per trajectory.
    """
    if isinstance(sub, TrajectorySet):
        sub = whole(sub)
    if coordinate not in ("x", "z"):
        raise ValueError("coordinate must be 'x' or 'z'")
    if bins < 2:
        raise ValueError("bins must be at least 2")
    if normalization not in ("counts", "fraction"):
        raise ValueError("normalization must be 'counts' or 'fraction'")
    data = getattr(sub, coordinate)
    lo, hi = value_range
    edges = np.linspace(lo, hi, bins + 1)
    idx = np.clip(np.searchsorted(edges, data, side="right") - 1, 0, bins - 1)
    n_t = data.shape[1]
    counts = np.zeros((n_t, bins))
    for k in range(n_t):
        counts[k] = np.bincount(idx[:, k], minlength=bins)
    if normalization == "fraction" and sub.n:
        counts /= sub.n
    dt = sub.params.dt
    t_edges = (np.arange(n_t + 1) - 0.5) * dt
    return Histogram2D(t_edges, edges, counts, coordinate, normalization)


@dataclass
class WeakFunction:
    """Conditioned mean readout; ``times`` are sampling-interval midpoints."""

    times: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n: int

    def exceeds_unit_range(self) -> bool:
        return bool(np.max(np.abs(self.mean)) > 1.0)


def _moving_average(a, w):
    if w is None or w <= 1:
        return a
    kernel = np.ones(w)
    num = np.apply_along_axis(lambda row: np.convolve(row, kernel, mode="same"), -1, a)
    den = np.convolve(np.ones(a.shape[-1]), kernel, mode="same")
    return num / den


def weak_function(sub: SubEnsemble, smoothing_window: int | None = None) -> WeakFunction:
    """Average dimensionless readout over the sub-ensemble at each step.

    Optional centred moving average (``smoothing_window`` steps) is applied
    per run before averaging, so the standard errors stay consistent.
    """
    _require(sub, 1, "weak function")
    r = _moving_average(sub.readouts, smoothing_window)
    se = r.std(axis=0, ddof=1) / math.sqrt(sub.n) if sub.n > 1 else np.full(r.shape[1], np.nan)
    t = (np.arange(r.shape[1]) + 0.5) * sub.params.dt
    return WeakFunction(t, r.mean(axis=0), se, sub.n)


# --- most likely time (zero drive) ------------------------------------------


def _atanh_checked(z, name):
    z = np.asarray(z, dtype=float)
    if np.any(np.abs(z) >= 1.0):
        raise ValueError(f"|{name}| must be < 1")
    return np.arctanh(z)


def mlt_density(z_f, z_i, T, tau):
    """Density of the final z after measuring for T with zero drive.

    Broadcasts over ``z_f`` and ``T``.
    """
    a_f = _atanh_checked(z_f, "z_f")
    a_i = _atanh_checked(z_i, "z_i")
    T = np.asarray(T, dtype=float)
    if np.any(T <= 0):
        raise ValueError("T must be positive")
    z_f = np.asarray(z_f, dtype=float)
    rbar = tau / T * (a_f - a_i)
    expo = -T / (2.0 * tau) * (rbar**2 + 1.0) + 0.5 * np.log((1.0 - z_i**2) / (1.0 - z_f**2))
    out = np.sqrt(tau / (2.0 * np.pi * T)) / (1.0 - z_f**2) * np.exp(expo)
    return float(out) if out.ndim == 0 else out


def mlt_cdf(z_f, z_i, T, tau):
    """CDF of the final z, from the two-Gaussian time-averaged readout."""
    a_f = np.arctanh(np.clip(np.asarray(z_f, dtype=float), -1.0, 1.0))
    a_i = _atanh_checked(z_i, "z_i")
    rbar = tau / T * (a_f - a_i)
    s = math.sqrt(tau / T)
    return 0.5 * (1 + z_i) * stats.norm.cdf((rbar - 1.0) / s) + 0.5 * (1 - z_i) * stats.norm.cdf((rbar + 1.0) / s)


def most_likely_time(z_f: float, z_i: float, tau: float) -> float:
    """Horizon maximizing the final-z density for fixed endpoints."""
    for v, name in ((z_f, "z_f"), (z_i, "z_i")):
        if abs(v) >= 1.0:
            raise ValueError(f"|{name}| must be < 1")
    gbar = math.atanh((z_f - z_i) / (1.0 - z_i * z_f))
    return tau * (math.sqrt(1.0 + 4.0 * gbar * gbar) - 1.0) / 2.0


def terminal_z_chi2(z_samples, z_i: float, T: float, tau: float, bins: int = 40,
                    min_expected: float = 5.0):
    """Pearson chi-square of terminal z samples against the closed form.

    Bin edges are equiprobable under the model; returns (chi2, dof, p).
    """
    z_samples = np.asarray(z_samples, dtype=float)
    n = z_samples.size
    bins = int(min(bins, n // min_expected))
    if bins < 3:
        raise InsufficientStatisticsError("too few samples for a chi-square test", n)
    # equiprobable edges by inverting the CDF on a fine atanh grid
    a = np.linspace(-12, 12, 20001)
    grid = np.tanh(a)
    cdf = mlt_cdf(grid, z_i, T, tau)
    q = np.linspace(0, 1, bins + 1)[1:-1]
    inner = np.interp(q, cdf, grid)
    edges = np.concatenate([[-1.0], inner, [1.0]])
    observed = np.histogram(np.clip(z_samples, -1, 1), bins=edges)[0]
    probs = np.diff(np.concatenate([[0.0], mlt_cdf(inner, z_i, T, tau), [1.0]]))
    expected = n * probs
    chi2 = float(np.sum((observed - expected) ** 2 / expected))
    dof = bins - 1
    return chi2, dof, float(stats.chi2.sf(chi2, dof))
