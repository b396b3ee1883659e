"""Gaussian detector model, readout sampling and tau/dV calibration."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import NORM_SLACK, PhysicalParams
from .errors import CalibrationError


@dataclass(frozen=True)
class DetectorModel:
    """Two-Gaussian readout model for one sampling interval.

    Internally everything is in dimensionless units r = 2 V / delta_v: the
    |0> and |1> components are centred at +1 and -1 with variance tau / dt.
    """

    tau: float
    dt: float
    delta_v: float = 1.0

    def __post_init__(self):
        if not (self.tau > 0 and self.dt > 0 and self.delta_v > 0):
            raise ValueError("tau, dt and delta_v must be positive")

    @classmethod
    def from_params(cls, params: PhysicalParams) -> "DetectorModel":
        return cls(tau=params.tau, dt=params.dt, delta_v=params.delta_v)

    @property
    def variance(self) -> float:
        return self.tau / self.dt

    @property
    def sigma2_step(self) -> float:
        """Per-sample voltage variance dV^2 tau / (4 dt)."""
        return self.delta_v**2 * self.tau / (4.0 * self.dt)

    def to_volts(self, r):
        return 0.5 * self.delta_v * np.asarray(r)

    def to_readout(self, v):
        return 2.0 * np.asarray(v) / self.delta_v


@dataclass(frozen=True)
class ReadoutRecord:
    """Uniformly sampled dimensionless readouts r_k = 2 V_k / dV."""

    dt: float
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size == 0:
            raise ValueError("a readout record must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(vals)):
            raise ValueError("readout record contains non-finite values")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self)) * self.dt


def _check_z(z):
    z = np.asarray(z, dtype=float)
    if np.any(np.abs(z) > 1.0 + NORM_SLACK):
        raise ValueError("z must lie in [-1, 1]")
    return np.clip(z, -1.0, 1.0)


def trajectory_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent counter-based stream for trajectory ``index``.

    The Philox key is derived from the master seed; the trajectory index sits
    in the top word of the 256-bit counter, so streams never overlap and do
    not depend on how trajectories are split across workers.
    """
    key = np.random.SeedSequence(master_seed).generate_state(2, np.uint64)
    counter = np.array([0, 0, 0, index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def mixture_readout(z, uniform, normal, variance):
    """Map pre-drawn uniforms/normals to mixture readouts for states ``z``.

    Component +1 is chosen when ``uniform < (1 + z) / 2``.
    """
    sign = np.where(uniform < 0.5 * (1.0 + z), 1.0, -1.0)
    return sign + math.sqrt(variance) * normal


def sample_readout(z, model: DetectorModel, rng: np.random.Generator):
    """Draw dimensionless readouts conditioned on ``z`` (scalar or array)."""
    z = _check_z(z)
    u = rng.random(z.shape)
    g = rng.standard_normal(z.shape)
    r = mixture_readout(z, u, g, model.variance)
    return float(r) if r.ndim == 0 else r


def readout_log_likelihood(r, z, model: DetectorModel):
    """log P(r | z) per sample, normalized as a density in r.

    Evaluated as a log-sum-exp of the two weighted Gaussian components; a
    zero-weight component (z = +-1) contributes nothing.
    """
    z = _check_z(z)
    r = np.asarray(r, dtype=float)
    k = model.dt / (2.0 * model.tau)
    with np.errstate(divide="ignore"):
        lw_plus = np.log(0.5 * (1.0 + z))
        lw_minus = np.log(0.5 * (1.0 - z))
    ll = np.logaddexp(lw_plus - k * (r - 1.0) ** 2, lw_minus - k * (r + 1.0) ** 2)
    ll = ll + 0.5 * math.log(model.dt / (2.0 * math.pi * model.tau))
    return float(ll) if np.ndim(ll) == 0 else ll


@dataclass(frozen=True)
class Calibration:
    delta_v: float
    tau: float
    times: np.ndarray
    snr: np.ndarray  # S = dV^2 / sigma^2 at each integration time
    separations: np.ndarray


def calibrate_tau(v_ground, v_excited, dt: float, steps=None) -> Calibration:
    """Recover (dV, tau) from voltage records of the two prepared eigenstates.

    Parameters
    ----------
    v_ground, v_excited : array_like, shape (n_records, n_samples)
        Per-sample voltages for preparations |0> and |1>.
    dt : float
        Sampling interval.
    steps : sequence of int, optional
        Integration lengths (in samples) at which to fit the histograms.
        Defaults to every length from 1 to n_samples.

    Each integration length t gives the time-averaged signal of every record;
    the two histograms are summarized by their means and pooled variance
    and S = dV^2 / sigma^2 is regressed through the origin against 4 t / tau.
    """
    g = np.atleast_2d(np.asarray(v_ground, dtype=float))
    e = np.atleast_2d(np.asarray(v_excited, dtype=float))
    if g.shape[1] != e.shape[1]:
        raise CalibrationError("ground and excited records differ in length")
    n_samples = g.shape[1]
    if steps is None:
        steps = np.arange(1, n_samples + 1)
    steps = np.unique(np.asarray(steps, dtype=int))
    if steps.size < 3:
        raise CalibrationError("need at least 3 integration times to fit tau")
    if steps[0] < 1 or steps[-1] > n_samples:
        raise CalibrationError("integration steps out of range")
    if min(g.shape[0], e.shape[0]) < 2:
        raise CalibrationError("need at least 2 records per preparation")

    cg = np.cumsum(g, axis=1)[:, steps - 1] / steps
    ce = np.cumsum(e, axis=1)[:, steps - 1] / steps
    sep = cg.mean(axis=0) - ce.mean(axis=0)
    var = 0.5 * (cg.var(axis=0, ddof=1) + ce.var(axis=0, ddof=1))
    times = steps * dt
    delta_v = float(np.mean(sep))
    if np.all(var == 0):
        # noiseless records: separation is exact, measurement is infinitely strong
        return Calibration(delta_v, 0.0, times, np.full(times.shape, np.inf), sep)
    snr = sep**2 / var
    slope = float(np.dot(snr, times) / np.dot(times, times))
    if not slope > 0 or not math.isfinite(slope):
        raise CalibrationError(f"non-positive fitted slope {slope:g}")
    return Calibration(delta_v, 4.0 / slope, times, snr, sep)
