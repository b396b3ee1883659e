"""Qubit state representation and the measurement-conditioned state update.

States live in the x-z plane of the Bloch sphere (y = 0 throughout), with
z = +1 the |0> state. Density-matrix elements are recovered as
rho_11 = (1 - z) / 2 and rho_01 = x / 2.

Readouts are handled in dimensionless units r = 2 V / dV, for which the
two detector outcome distributions have means +1 (|0>) and -1 (|1>) and
per-sample variance tau / dt.

Two propagators are provided:

``"symmetric"`` (default)
    half an exact Rabi rotation, the Bayesian measurement update, then the
    second half rotation. The ensemble average of this map tracks the
    Lindblad solution to second order in dt.
``"first_order"``
    the lab two-step procedure: a first-order rotation of the coherence and
    population followed by the Bayesian update. Its splitting error is
    first order in dt and visible at dt = 16 ns.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

NORM_SLACK = 1e-9
SCHEMES = ("symmetric", "first_order")


@dataclass(frozen=True)
class BlochState:
    """Qubit coordinates on or inside the Bloch sphere.

    Only x-z plane states are produced by this package; ``y`` is kept so the
    type round-trips to a full Bloch vector.
    """

    x: float
    z: float
    y: float = 0.0

    def __post_init__(self):
        for name in ("x", "y", "z"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"BlochState.{name} must be finite")
        if self.norm2 > 1.0 + NORM_SLACK:
            raise ValueError(
                f"state ({self.x}, {self.y}, {self.z}) lies outside the Bloch sphere"
            )

    @property
    def norm2(self) -> float:
        return self.x * self.x + self.y * self.y + self.z * self.z

    @property
    def purity(self) -> float:
        """Tr[rho^2] = (1 + |r|^2) / 2."""
        return 0.5 * (1.0 + self.norm2)

    @property
    def rho11(self) -> float:
        return 0.5 * (1.0 - self.z)

    @property
    def rho00(self) -> float:
        return 0.5 * (1.0 + self.z)

    @property
    def rho01(self) -> float:
        return 0.5 * self.x

    @classmethod
    def from_rho(cls, rho11: float, rho01: float) -> "BlochState":
        return cls(x=2.0 * rho01, z=1.0 - 2.0 * rho11)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.z])


@dataclass(frozen=True)
class PhysicalParams:
    """Drive, measurement and sampling parameters, all in SI units.

    Parameters
    ----------
    omega : float
        Rabi frequency in rad/s (not Omega / 2 pi).
    tau : float
        Characteristic measurement time in seconds.
    gamma_ens : float
        Ensemble dephasing rate Gamma in 1/s. The extra, unobserved
        coherence decay is derived as ``gamma_ens - 1 / (2 tau)``.
    dt : float
        Readout sampling interval in seconds.
    delta_v : float
        Detector peak separation, only used when converting to volts.
    scheme : {"symmetric", "first_order"}
        Discrete propagator used for state updates.
    """

    omega: float
    tau: float
    gamma_ens: float
    dt: float = 16e-9
    delta_v: float = 1.0
    scheme: str = "symmetric"

    def __post_init__(self):
        for name in ("omega", "tau", "gamma_ens", "dt", "delta_v"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.delta_v <= 0:
            raise ValueError("delta_v must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        # relative slack so that gamma_ens = 1/(2 tau) typed in decimal is accepted
        if self.gamma_ens - 0.5 / self.tau < -1e-9 * self.gamma_ens:
            raise ValueError(
                f"gamma_ens = {self.gamma_ens:g} /s is below the measurement-induced "
                f"rate 1/(2 tau) = {0.5 / self.tau:g} /s (efficiency > 1)"
            )
        if self.dt > self.tau / 5:
            warnings.warn(
                f"dt = {self.dt:g} s is not small against tau = {self.tau:g} s",
                stacklevel=3,
            )

    @classmethod
    def from_lab(cls, omega_hz: float, tau: float, gamma_ens: float, **kwargs):
        """Build from a drive quoted as Omega / 2 pi in Hz."""
        return cls(omega=2.0 * math.pi * omega_hz, tau=tau, gamma_ens=gamma_ens, **kwargs)

    @property
    def gamma_extra(self) -> float:
        return max(self.gamma_ens - 0.5 / self.tau, 0.0)

    @property
    def eta_tot(self) -> float:
        return efficiency(self.tau, self.gamma_ens)

    @property
    def omega_hz(self) -> float:
        return self.omega / (2.0 * math.pi)

    @property
    def readout_variance(self) -> float:
        """Per-sample variance of r in dimensionless units."""
        return self.tau / self.dt

    def with_(self, **changes) -> "PhysicalParams":
        return replace(self, **changes)


def efficiency(tau: float, gamma_ens: float) -> float:
    """Total quantum efficiency 1 / (2 tau Gamma)."""
    if tau <= 0 or gamma_ens <= 0:
        raise ValueError("tau and gamma_ens must be positive")
    return 1.0 / (2.0 * tau * gamma_ens)


def env_dephasing_efficiency(kappa: float, chi: float, nbar: float, t2star: float) -> float:
    """Efficiency factor from extra environmental dephasing.

    ``kappa`` and ``chi`` are angular rates (rad/s), ``t2star`` in seconds.
    """
    for name, val in (("kappa", kappa), ("nbar", nbar), ("t2star", t2star)):
        if val <= 0:
            raise ValueError(f"{name} must be positive")
    if chi == 0:
        raise ValueError("chi must be non-zero")
    return 1.0 / (1.0 + kappa / (8.0 * chi**2 * nbar * t2star))


def measurement_time(kappa: float, chi: float, nbar: float, eta_col: float, eta_amp: float) -> float:
    """tau = kappa / (16 chi^2 nbar eta_col eta_amp), rates in rad/s."""
    if min(kappa, nbar, eta_col, eta_amp) <= 0 or chi == 0:
        raise ValueError("kappa, nbar and efficiencies must be positive, chi non-zero")
    return kappa / (16.0 * chi**2 * nbar * eta_col * eta_amp)


# --- array kernels -----------------------------------------------------------
# These operate elementwise on float arrays (or scalars) so the simulator can
# advance a whole ensemble per call.


def rotate_xz(x, z, angle):
    """Exact rotation generated by the sigma_y drive: xdot = W z, zdot = -W x."""
    c, s = math.cos(angle), math.sin(angle)
    return x * c + z * s, z * c - x * s


def euler_rotate_xz(x, z, omega, dt):
    # rho'_01 = rho_01 + (W/2)(rho_00 - rho_11) dt, then rho'_11 from rho'_01
    x1 = x + omega * z * dt
    z1 = z - omega * x1 * dt
    return x1, z1


def bayes_xz(x, z, r, dt, tau, gamma):
    """Quantum Bayes update of (x, z) for readout ``r`` over ``dt``.

    Written as the likelihood-ratio update of rho_11 with the coherence
    rescaled by sqrt(rho_11 rho_00) before/after. Both ratios are evaluated
    in a form that never divides by a vanishing population, which makes
    eigenstates fixed points of the z update.
    """
    s = 2.0 * np.asarray(r, dtype=float) * (dt / tau)
    p11 = 0.5 * (1.0 - z)
    p00 = 0.5 * (1.0 + z)
    neg = s < 0
    # multiply numerator and denominator by e^{s} where e^{-s} would overflow
    e = np.exp(np.where(neg, s, -s))
    denom = np.where(neg, p00 * e + p11, p00 + p11 * e)
    # denom underflows to 0 only for an exact eigenstate pushed hard towards
    # the other pole; the state is then left where it is
    dead = denom == 0.0
    safe = np.where(dead, 1.0, denom)
    p11_new = np.where(dead, p11, np.where(neg, p11, p11 * e) / safe)
    coh = np.where(dead, 0.0, np.exp(-0.5 * np.abs(s)) / safe)
    x_new = x * coh * math.exp(-gamma * dt)
    z_new = 1.0 - 2.0 * p11_new
    if np.ndim(x_new) == 0:
        return float(x_new), float(z_new)
    return x_new, z_new


def _renormalize(x, z):
    n2 = x * x + z * z
    over = n2 > (1.0 + NORM_SLACK) ** 2
    if np.any(over):
        f = np.where(over, 1.0 / np.sqrt(np.where(over, n2, 1.0)), 1.0)
        x, z = x * f, z * f
        if np.ndim(x) == 0:
            x, z = float(x), float(z)
    return x, z


def pre_measurement(x, z, params: PhysicalParams):
    """State transformation applied before the Bayesian update in one step."""
    if params.scheme == "symmetric":
        return rotate_xz(x, z, 0.5 * params.omega * params.dt)
    x1, z1 = euler_rotate_xz(x, z, params.omega, params.dt)
    return _renormalize(x1, z1)


def post_measurement(x, z, params: PhysicalParams):
    if params.scheme == "symmetric":
        return rotate_xz(x, z, 0.5 * params.omega * params.dt)
    return x, z


def sampling_z(x, z, params: PhysicalParams):
    """The z value the detector readout of the coming step is conditioned on.

    For the first-order scheme this is the state at the start of the step
    (readout before rotation); for the symmetric scheme it is the state the
    Bayesian update is applied to.
    """
    if params.scheme == "symmetric":
        return pre_measurement(x, z, params)[1]
    return z


def step_xz(x, z, r, params: PhysicalParams):
    """One full sampling interval: rotation(s) and the Bayesian update."""
    x, z = pre_measurement(x, z, params)
    x, z = bayes_xz(x, z, r, params.dt, params.tau, params.gamma_extra)
    return post_measurement(x, z, params)


# --- scalar state API --------------------------------------------------------


def unitary_step(state: BlochState, omega: float, dt: float, exact: bool = False) -> BlochState:
    """Advance ``state`` under the Rabi drive alone for ``dt``.

    The default is the first-order update of rho_01 followed by rho_11 using
    the already-updated coherence. ``exact=True`` applies the rotation
    matrix instead.
    """
    if state.y != 0.0:
        raise ValueError("only x-z plane states are supported")
    if exact:
        x, z = rotate_xz(state.x, state.z, omega * dt)
    else:
        x, z = euler_rotate_xz(state.x, state.z, omega, dt)
    return BlochState(*_renormalize(x, z))


def bayes_step(state: BlochState, r: float, params: PhysicalParams) -> BlochState:
    """Condition ``state`` on one dimensionless readout ``r``.

    Includes the extra coherence decay exp(-gamma_extra dt).
    """
    x, z = bayes_xz(state.x, state.z, r, params.dt, params.tau, params.gamma_extra)
    return BlochState(x, z)


def propagate_step(state: BlochState, r: float, params: PhysicalParams) -> BlochState:
    x, z = step_xz(state.x, state.z, r, params)
    return BlochState(float(x), float(z))


def continuum_derivatives(x, z, r, params: PhysicalParams):
    """Time derivatives of (x, z) for a continuous readout r(t)."""
    g, om, tau = params.gamma_extra, params.omega, params.tau
    dx = -g * x + om * z - x * z * r / tau
    dz = -om * x + (1.0 - z * z) * r / tau
    return dx, dz


def lindblad_ensemble(x0: float, z0: float, omega: float, gamma_ens: float, t):
    """Closed-form ensemble average for xdot = -G x + W z, zdot = -W x.

    ``t`` may be a scalar or an array of non-negative times. Underdamped and
    overdamped regimes are evaluated with cos/sin and cosh/sinh respectively,
    so the result is real by construction.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    half = 0.5 * gamma_ens
    disc = omega * omega - half * half
    lam = math.sqrt(abs(disc))
    if disc > 0:
        c = np.cos(lam * t)
        s_over = np.sin(lam * t) / lam
    elif disc < 0:
        c = np.cosh(lam * t)
        s_over = np.sinh(lam * t) / lam
    else:
        c = np.ones_like(t)
        s_over = t.copy()
    env = np.exp(-half * t)
    x = env * (x0 * c - 0.5 * (gamma_ens * x0 - 2.0 * omega * z0) * s_over)
    z = env * (z0 * c + 0.5 * (gamma_ens * z0 - 2.0 * omega * x0) * s_over)
    if x.ndim == 0:
        return float(x), float(z)
    return x, z
