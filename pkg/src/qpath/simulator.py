"""Monte Carlo trajectory ensembles and conditioned tomography."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .detector import DetectorModel, ReadoutRecord, mixture_readout, trajectory_rng
from .dynamics import BlochState, PhysicalParams, sampling_z, step_xz
from .errors import InsufficientStatisticsError

FORMAT_VERSION = 1


def n_steps_for(duration: float, dt: float) -> int:
    """Number of sampling intervals in ``duration``; must be a whole number."""
    if duration < 0:
        raise ValueError("duration must be non-negative")
    n = round(duration / dt)
    if abs(n * dt - duration) > 1e-6 * dt:
        raise ValueError(f"duration {duration:g} s is not a multiple of dt = {dt:g} s")
    return int(n)


def propagate(x0, z0, readouts, params: PhysicalParams):
    """Filter states for a batch of records.

    ``readouts`` has shape (n_traj, n_steps) (or (n_steps,)); returns x and z
    arrays with one more column than ``readouts``.
    """
    r = np.asarray(readouts, dtype=float)
    single = r.ndim == 1
    r = np.atleast_2d(r)
    n, m = r.shape
    xs = np.empty((n, m + 1))
    zs = np.empty((n, m + 1))
    xs[:, 0] = x0
    zs[:, 0] = z0
    for k in range(m):
        xs[:, k + 1], zs[:, k + 1] = step_xz(xs[:, k], zs[:, k], r[:, k], params)
    if single:
        return xs[0], zs[0]
    return xs, zs


def _simulate_batch(x0, z0, uniforms, normals, params: PhysicalParams):
    n, m = uniforms.shape
    var = params.readout_variance
    r = np.empty((n, m))
    x = np.full(n, float(x0))
    z = np.full(n, float(z0))
    for k in range(m):
        r[:, k] = mixture_readout(sampling_z(x, z, params), uniforms[:, k], normals[:, k], var)
        x, z = step_xz(x, z, r[:, k], params)
    return r


def _draws(master_seed, indices, n_steps):
    u = np.empty((len(indices), n_steps))
    g = np.empty((len(indices), n_steps))
    for row, i in enumerate(indices):
        rng = trajectory_rng(master_seed, int(i))
        u[row] = rng.random(n_steps)
        g[row] = rng.standard_normal(n_steps)
    return u, g


def _draws_from(rng, n_steps):
    return rng.random(n_steps)[None, :], rng.standard_normal(n_steps)[None, :]


def _simulate_chunk(args):
    x0, z0, params, n_steps, master_seed, start, stop = args
    u, g = _draws(master_seed, range(start, stop), n_steps)
    return _simulate_batch(x0, z0, u, g, params)


@dataclass
class Trajectory:
    """One run: initial state, readout record and the filtered states."""

    params: PhysicalParams
    initial: BlochState
    record: ReadoutRecord

    @cached_property
    def _xz(self):
        return propagate(self.initial.x, self.initial.z, self.record.values, self.params)

    @property
    def x(self) -> np.ndarray:
        return self._xz[0]

    @property
    def z(self) -> np.ndarray:
        return self._xz[1]

    @property
    def readouts(self) -> np.ndarray:
        return self.record.values

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.record) + 1) * self.params.dt

    @property
    def states(self) -> list:
        return [BlochState(float(a), float(b)) for a, b in zip(self.x, self.z)]


@dataclass
class EmptyTrajectory:
    """Zero-duration run: only the initial state."""

    params: PhysicalParams
    initial: BlochState
    x: np.ndarray = field(init=False)
    z: np.ndarray = field(init=False)
    readouts: np.ndarray = field(init=False)

    def __post_init__(self):
        self.x = np.array([self.initial.x])
        self.z = np.array([self.initial.z])
        self.readouts = np.empty(0)

    @property
    def times(self):
        return np.zeros(1)

    @property
    def states(self):
        return [self.initial]


@dataclass
class TrajectorySet:
    """An ensemble stored as initial state plus readout matrix.

    States are materialized on first access and cached.
    """

    params: PhysicalParams
    initial: BlochState
    readouts: np.ndarray  # (n_traj, n_steps)
    master_seed: int | None = None

    def __post_init__(self):
        self.readouts = np.atleast_2d(np.asarray(self.readouts, dtype=float))

    @property
    def n_traj(self) -> int:
        return self.readouts.shape[0]

    @property
    def n_steps(self) -> int:
        return self.readouts.shape[1]

    @property
    def duration(self) -> float:
        return self.n_steps * self.params.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.params.dt

    @cached_property
    def _xz(self):
        return propagate(self.initial.x, self.initial.z, self.readouts, self.params)

    @property
    def x(self) -> np.ndarray:
        return self._xz[0]

    @property
    def z(self) -> np.ndarray:
        return self._xz[1]

    def step_index(self, t: float) -> int:
        k = n_steps_for(t, self.params.dt)
        if k > self.n_steps:
            raise ValueError(f"t = {t:g} s is beyond the trajectory horizon {self.duration:g} s")
        return k

    def trajectory(self, i: int) -> Trajectory:
        return Trajectory(self.params, self.initial, ReadoutRecord(self.params.dt, self.readouts[i]))

    def subset(self, mask_or_indices) -> "TrajectorySet":
        idx = np.asarray(mask_or_indices)
        sub = TrajectorySet(self.params, self.initial, self.readouts[idx], self.master_seed)
        if "_xz" in self.__dict__:
            sub.__dict__["_xz"] = (self.x[idx], self.z[idx])
        return sub

    def manifest(self) -> dict:
        p = self.params
        return {
            "format_version": FORMAT_VERSION,
            "params": {
                "omega": p.omega,
                "tau": p.tau,
                "gamma_ens": p.gamma_ens,
                "dt": p.dt,
                "delta_v": p.delta_v,
                "scheme": p.scheme,
            },
            "initial": {"x": self.initial.x, "z": self.initial.z},
            "master_seed": self.master_seed,
            "n_traj": self.n_traj,
            "n_steps": self.n_steps,
            "duration": self.duration,
        }


def simulate_trajectory(initial: BlochState, params: PhysicalParams, duration: float, rng):
    """Sample one run: alternate detector draws and state updates.

    The readout of each step is drawn from the state it will update
    (see ``dynamics.sampling_z``).
    """
    n = n_steps_for(duration, params.dt)
    if n == 0:
        return EmptyTrajectory(params, initial)
    u, g = _draws_from(rng, n)
    r = _simulate_batch(initial.x, initial.z, u, g, params)[0]
    return Trajectory(params, initial, ReadoutRecord(params.dt, r))


def simulate_ensemble(
    initial: BlochState,
    params: PhysicalParams,
    duration: float,
    n_traj: int,
    master_seed: int,
    workers: int = 1,
    chunk_size: int = 20000,
) -> TrajectorySet:
    """Simulate ``n_traj`` independent runs.

    Trajectory i draws from ``trajectory_rng(master_seed, i)`` and batches
    are concatenated in index order, so the result is identical for any
    ``workers`` and ``chunk_size``.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be at least 1")
    if workers < 1:
        raise ValueError("workers must be at least 1")
    n = n_steps_for(duration, params.dt)
    bounds = list(range(0, n_traj, chunk_size)) + [n_traj]
    jobs = [
        (initial.x, initial.z, params, n, master_seed, a, b)
        for a, b in zip(bounds[:-1], bounds[1:])
    ]
    if workers == 1 or len(jobs) == 1:
        parts = [_simulate_chunk(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_simulate_chunk, jobs))
    readouts = np.concatenate(parts, axis=0) if n else np.empty((n_traj, 0))
    if readouts.shape != (n_traj, n):
        raise RuntimeError("ensemble generation returned an incomplete result")
    return TrajectorySet(params, initial, readouts, master_seed)


def reconstruct_from_record(initial: BlochState, params: PhysicalParams, record: ReadoutRecord):
    """Filter an externally supplied record into a state trajectory."""
    if abs(record.dt - params.dt) > 1e-6 * params.dt:
        raise ValueError(f"record dt = {record.dt:g} s does not match params dt = {params.dt:g} s")
    return Trajectory(params, initial, record)


def ensemble_mean(tset: TrajectorySet):
    """Per-step means and standard errors of x and z."""
    n = tset.n_traj
    out = {}
    for name, arr in (("x", tset.x), ("z", tset.z)):
        out[name] = arr.mean(axis=0)
        out[name + "_se"] = arr.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(arr.shape[1])
    return out


@dataclass(frozen=True)
class TomographyResult:
    x: float
    y: float
    z: float
    x_se: float
    y_se: float
    z_se: float
    counts: dict
    n_selected: int


def conditioned_tomography(
    tset: TrajectorySet,
    target_x: float,
    target_z: float,
    t: float,
    window: float = 0.03,
    rng=None,
    readout_fidelity: float = 1.0,
) -> TomographyResult:
    """Projective-measurement check of the filtered states.

    Runs whose filtered state at ``t`` lies within ``window`` of the target in
    both x and z are kept. Each kept run is measured once, in a basis drawn
    uniformly from {x, y, z}, with outcome probabilities set by its filtered
    state. The basis averages estimate the Bloch vector. A
    ``readout_fidelity`` below 1 flips outcomes with probability 1 - F and
    corrects the averages by 1 / (2F - 1).
    """
    if window <= 0:
        raise ValueError("window must be positive")
    if not 0.5 < readout_fidelity <= 1.0:
        raise ValueError("readout_fidelity must be in (0.5, 1]")
    rng = np.random.default_rng() if rng is None else rng
    k = tset.step_index(t)
    xs, zs = tset.x[:, k], tset.z[:, k]
    sel = (np.abs(xs - target_x) <= window) & (np.abs(zs - target_z) <= window)
    n_sel = int(sel.sum())
    if n_sel == 0:
        raise InsufficientStatisticsError("no trajectories inside the tomography window", 0)
    basis = rng.integers(0, 3, size=n_sel)
    u = rng.random(n_sel)
    expect = np.stack([xs[sel], np.zeros(n_sel), zs[sel]])[basis, np.arange(n_sel)]
    outcome = np.where(u < 0.5 * (1.0 + expect), 1.0, -1.0)
    if readout_fidelity < 1.0:
        flip = rng.random(n_sel) >= readout_fidelity
        outcome = np.where(flip, -outcome, outcome)
    contrast = 2.0 * readout_fidelity - 1.0
    est, se, counts = {}, {}, {}
    for b, name in enumerate("xyz"):
        o = outcome[basis == b]
        counts[name] = int(o.size)
        if o.size == 0:
            raise InsufficientStatisticsError(f"no runs measured in the {name} basis", n_sel)
        m = o.mean() / contrast
        est[name] = float(m)
        # binomial standard error of a +-1 mean
        se[name] = float(math.sqrt(max(1.0 - o.mean() ** 2, 1.0 / o.size) / o.size) / contrast)
    return TomographyResult(
        est["x"], est["y"], est["z"], se["x"], se["y"], se["z"], counts, n_sel
    )
