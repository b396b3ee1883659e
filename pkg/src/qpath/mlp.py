"""Most likely paths between pre- and post-selected states.

The optimal path extremizes the readout log-likelihood subject to the
state-update dynamics. With conjugate variables (p_x, p_z) the problem
becomes the Hamiltonian system

    xdot  = -g x + W z - x z r / tau
    zdot  = -W x + (1 - z^2) r / tau
    pxdot = +g p_x + W p_z + p_x z r / tau
    pzdot = -W p_x + (p_x x + 2 p_z z - 1) r / tau

with the optimal readout r = z + p_z (1 - z^2) - p_x x z and g the extra
(unobserved) dephasing rate. Boundary conditions fix (x, z) at both ends,
so the unknowns are the initial multipliers, found by shooting.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .detector import DetectorModel, readout_log_likelihood
from .dynamics import NORM_SLACK, PhysicalParams, bayes_xz, step_xz
from .errors import ConvergenceError

P_LIMIT = 1e6
ATANH_CLAMP = 1e-12
DEFAULT_GRID = (-3.0, -1.5, 0.0, 1.5, 3.0)
# variational offsets are quoted per microsecond
DELTA_UNIT = 1e6


@dataclass(frozen=True)
class PhasePoint:
    x: float
    z: float
    px: float
    pz: float

    @property
    def r(self) -> float:
        return optimal_readout(self.x, self.z, self.px, self.pz)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.z, self.px, self.pz])


@dataclass(frozen=True)
class BoundaryConditions:
    x_i: float
    z_i: float
    x_f: float
    z_f: float
    T: float

    def __post_init__(self):
        for a, b, name in ((self.x_i, self.z_i, "initial"), (self.x_f, self.z_f, "final")):
            if not (math.isfinite(a) and math.isfinite(b)):
                raise ValueError(f"{name} state must be finite")
            if a * a + b * b > 1.0 + NORM_SLACK:
                raise ValueError(f"{name} state ({a}, {b}) lies outside the Bloch disk")
        if not self.T > 0:
            raise ValueError("horizon T must be positive")


@dataclass
class OptimalPath:
    """Sampled solution of the optimal-path equations.

    ``log_likelihood`` is the continuum path functional
    -int (r^2 - 2 r z + 1) / (2 tau) dt, i.e. the summed readout
    log-likelihood with the per-sample normalization removed.
    """

    times: np.ndarray
    x: np.ndarray
    z: np.ndarray
    px: np.ndarray
    pz: np.ndarray
    r: np.ndarray
    energy: np.ndarray
    log_likelihood: float
    residual: float = 0.0
    tau: float = float("nan")
    start: tuple = ()
    iterations: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def initial_multipliers(self) -> tuple:
        return float(self.px[0]), float(self.pz[0])

    @property
    def energy_drift(self) -> float:
        """max |E(t) - E(0)| relative to |E(0)| (or 1/tau if E(0) ~ 0)."""
        e0 = self.energy[0]
        scale = abs(e0) if abs(e0) * self.tau > 1e-12 else 1.0 / self.tau
        return float(np.max(np.abs(self.energy - e0)) / scale)

    def sample(self, times) -> dict:
        """Linear interpolation of the path at ``times``."""
        return {
            name: np.interp(times, self.times, getattr(self, name))
            for name in ("x", "z", "px", "pz", "r")
        }

    def as_table(self) -> np.ndarray:
        return np.column_stack([self.times, self.x, self.z, self.px, self.pz, self.r, self.energy])


# --- equations of motion -----------------------------------------------------


def optimal_readout(x, z, px, pz):
    return z + pz * (1.0 - z * z) - px * x * z


def decay_rate(params: PhysicalParams, decay: str = "extra") -> float:
    """Dephasing rate used in the x equation: gamma_extra or the full Gamma."""
    if decay == "extra":
        return params.gamma_extra
    if decay == "ensemble":
        return params.gamma_ens
    raise ValueError("decay must be 'extra' or 'ensemble'")


@nb.njit(cache=True)
def _rhs(x, z, px, pz, om, g, tau, d1, d2):
    r = z + pz * (1.0 - z * z) - px * x * z
    k = r / tau
    return (
        -g * x + om * z - x * z * k,
        -om * x + (1.0 - z * z) * k,
        g * px + om * pz + px * z * k + d1,
        -om * px + (px * x + 2.0 * pz * z - 1.0) * k + d2,
    )


@nb.njit(cache=True)
def _rk4(y0, n, h, om, g, tau, d1, d2, full):
    """Classic RK4. Returns (samples, last_valid_index); samples has n+1 rows
    when ``full`` else 2 rows (start, end)."""
    out = np.empty((n + 1 if full else 2, 4))
    out[0, :] = y0
    x, z, px, pz = y0[0], y0[1], y0[2], y0[3]
    for i in range(n):
        a1, b1, c1, e1 = _rhs(x, z, px, pz, om, g, tau, d1, d2)
        a2, b2, c2, e2 = _rhs(x + 0.5 * h * a1, z + 0.5 * h * b1, px + 0.5 * h * c1, pz + 0.5 * h * e1, om, g, tau, d1, d2)
        a3, b3, c3, e3 = _rhs(x + 0.5 * h * a2, z + 0.5 * h * b2, px + 0.5 * h * c2, pz + 0.5 * h * e2, om, g, tau, d1, d2)
        a4, b4, c4, e4 = _rhs(x + h * a3, z + h * b3, px + h * c3, pz + h * e3, om, g, tau, d1, d2)
        x = x + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        z = z + h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        px = px + h / 6.0 * (c1 + 2.0 * c2 + 2.0 * c3 + c4)
        pz = pz + h / 6.0 * (e1 + 2.0 * e2 + 2.0 * e3 + e4)
        row = i + 1 if full else 1
        out[row, 0] = x
        out[row, 1] = z
        out[row, 2] = px
        out[row, 3] = pz
        if not (abs(px) <= 1e6 and abs(pz) <= 1e6 and abs(x) <= 1e6 and abs(z) <= 1e6):
            return out, i + 1
    return out, n


def ode_rhs(point: PhasePoint, params: PhysicalParams, decay: str = "extra", delta=(0.0, 0.0)):
    """d/dt (x, z, p_x, p_z) at ``point``; ``delta`` (1/s) is added to the
    multiplier equations."""
    return np.array(
        _rhs(point.x, point.z, point.px, point.pz, params.omega,
             decay_rate(params, decay), params.tau, float(delta[0]), float(delta[1]))
    )


def stochastic_energy(point, params: PhysicalParams, decay: str = "extra"):
    """Conserved quantity E = p . qdot - (r^2 - 2 r z + 1) / (2 tau).

    Accepts a PhasePoint or arrays (x, z, px, pz).
    """
    if isinstance(point, PhasePoint):
        x, z, px, pz = point.x, point.z, point.px, point.pz
    else:
        x, z, px, pz = point
    g, om, tau = decay_rate(params, decay), params.omega, params.tau
    r = optimal_readout(x, z, px, pz)
    xdot = -g * x + om * z - x * z * r / tau
    zdot = -om * x + (1.0 - z * z) * r / tau
    return px * xdot + pz * zdot - (r * r - 2.0 * r * z + 1.0) / (2.0 * tau)


def continuum_log_likelihood(times, z, r, tau) -> float:
    """-int (r^2 - 2 r z + 1) / (2 tau) dt by the trapezoid rule."""
    integrand = -(r * r - 2.0 * r * z + 1.0) / (2.0 * tau)
    if len(times) < 2:
        return 0.0
    return float(np.trapezoid(integrand, times))


def _steps(T, step):
    n = round(T / step)
    if abs(n * step - T) > 1e-6 * step:
        raise ValueError(f"horizon {T:g} s is not a multiple of the step {step:g} s")
    return int(n)


def _build_path(samples, step, params, decay, **kw) -> OptimalPath:
    x, z, px, pz = samples.T
    times = np.arange(samples.shape[0]) * step
    r = optimal_readout(x, z, px, pz)
    energy = stochastic_energy((x, z, px, pz), params, decay)
    ll = continuum_log_likelihood(times, z, r, params.tau)
    return OptimalPath(times, x, z, px, pz, r, energy, ll, tau=params.tau, **kw)


class PathDivergenceError(ConvergenceError):
    pass


def integrate_path(
    start: PhasePoint,
    T: float,
    params: PhysicalParams,
    step: float = 1e-9,
    decay: str = "extra",
    delta=(0.0, 0.0),
) -> OptimalPath:
    """Fixed-step RK4 integration of the optimal-path equations from ``start``.

    ``delta`` is an additive offset (1/s) on the multiplier equations, used
    by the variational check. Raises PathDivergenceError when |p| exceeds
    1e6.
    """
    if T < 0:
        raise ValueError("T must be non-negative")
    n = _steps(T, step) if T > 0 else 0
    y0 = start.as_array().astype(float)
    samples, last = _rk4(y0, n, float(step), params.omega, decay_rate(params, decay),
                         params.tau, float(delta[0]), float(delta[1]), True)
    if last < n:
        raise PathDivergenceError(
            f"optimal-path integration diverged at t = {last * step:g} s",
            {"t": last * step, "state": samples[last].tolist(), "start": y0.tolist()},
        )
    return _build_path(samples, step, params, decay, start=(start.px, start.pz))


def _endpoint(p0, bc, params, n, step, g, delta):
    y0 = np.array([bc.x_i, bc.z_i, p0[0], p0[1]])
    out, last = _rk4(y0, n, step, params.omega, g, params.tau, delta[0], delta[1], False)
    if last < n:
        return None
    return np.array([out[1, 0] - bc.x_f, out[1, 1] - bc.z_f])


@nb.njit(cache=True)
def _scan(x_i, z_i, starts, n, h, om, g, tau, d1, d2, x_f, z_f):
    res = np.full(starts.shape[0], np.inf)
    y0 = np.empty(4)
    for k in range(starts.shape[0]):
        y0[0] = x_i
        y0[1] = z_i
        y0[2] = starts[k, 0]
        y0[3] = starts[k, 1]
        out, last = _rk4(y0, n, h, om, g, tau, d1, d2, False)
        if last == n:
            res[k] = math.hypot(out[1, 0] - x_f, out[1, 1] - z_f)
    return res


@dataclass(frozen=True)
class ShootOptions:
    """Shooting controls.

    Newton is started from every point of ``grid`` x ``grid`` and, in
    addition, from the ``scan_seeds`` lowest local minima of the terminal
    residual evaluated on a ``scan_points`` x ``scan_points`` lattice over
    ``scan_range`` (integrated with the coarser ``scan_step``). Long
    horizons have narrow basins that a coarse grid alone misses.
    """

    step: float = 1e-9
    tol: float = 1e-6
    target: float = 1e-12
    max_iter: int = 60
    fd_eps: float = 1e-7
    backtrack: float = 0.5
    max_backtracks: int = 30
    grid: tuple = DEFAULT_GRID
    scan_points: int = 41
    scan_range: tuple = (-3.0, 3.0)
    scan_seeds: int = 6
    scan_step: float = 4e-9
    dedup: float = 1e-4
    decay: str = "extra"


@dataclass
class ShootResult:
    """All distinct converged roots, best log-likelihood first."""

    roots: list
    bc: BoundaryConditions
    starts: list  # per-start diagnostics in start order

    @property
    def principal(self) -> OptimalPath:
        return self.roots[0]

    def report(self) -> dict:
        return {
            "boundary_conditions": vars(self.bc),
            "n_roots": len(self.roots),
            "roots": [
                {
                    "rank": i,
                    "principal": i == 0,
                    "px0": p.initial_multipliers[0],
                    "pz0": p.initial_multipliers[1],
                    "residual": p.residual,
                    "iterations": p.iterations,
                    "log_likelihood": p.log_likelihood,
                    "energy": float(p.energy[0]),
                    "energy_drift": p.energy_drift,
                    "start": list(p.start),
                }
                for i, p in enumerate(self.roots)
            ],
            "starts": self.starts,
        }


def _undriven(params):
    return params.omega == 0.0


def _newton(p0, bc, params, opts: ShootOptions, delta):
    """Damped Newton on the terminal residual.

    Forward-difference Jacobian, full step first, then halved until the
    residual decreases. With zero drive x(T) is fixed by z(T), so p_x is
    redundant: it is pinned at 0 and only p_z is solved for.
    """
    n = _steps(bc.T, opts.step)
    g = decay_rate(params, opts.decay)
    p = np.asarray(p0, dtype=float).copy()
    free = [0, 1]
    if _undriven(params) and delta[0] == 0.0:
        p[0] = 0.0
        free = [1]
    f = _endpoint(p, bc, params, n, opts.step, g, delta)
    if f is None:
        return p, math.inf, 0, "diverged"
    res = float(np.hypot(*f))
    it = 0
    while res > opts.target and it < opts.max_iter:
        it += 1
        jac = np.empty((2, len(free)))
        for col, j in enumerate(free):
            h = opts.fd_eps * max(1.0, abs(p[j]))
            pj = p.copy()
            pj[j] += h
            fj = _endpoint(pj, bc, params, n, opts.step, g, delta)
            if fj is None:
                pj[j] -= 2 * h
                fj = _endpoint(pj, bc, params, n, opts.step, g, delta)
                if fj is None:
                    return p, res, it, "diverged"
                h = -h
            jac[:, col] = (fj - f) / h
        if len(free) == 1:
            # solve the z equation; the x residual follows when bc is consistent
            if jac[1, 0] == 0.0:
                return p, res, it, "stalled"
            dp = np.zeros(2)
            dp[1] = -f[1] / jac[1, 0]
        else:
            try:
                dp = -np.linalg.solve(jac, f)
            except np.linalg.LinAlgError:
                dp = -np.linalg.lstsq(jac, f, rcond=None)[0]
        lam = 1.0
        merit = res if len(free) == 2 else abs(f[1])
        for _ in range(opts.max_backtracks):
            trial = p + lam * dp
            ft = _endpoint(trial, bc, params, n, opts.step, g, delta)
            if ft is not None:
                m = np.hypot(*ft) if len(free) == 2 else abs(ft[1])
                if m < merit:
                    break
            lam *= opts.backtrack
        else:
            break
        p, f, res = trial, ft, float(np.hypot(*ft))
        if len(free) == 1 and abs(f[1]) <= opts.target:
            break
    if res <= opts.tol:
        status = "converged"
    elif it >= opts.max_iter:
        status = "max_iter"
    else:
        status = "stalled"
    return p, res, it, status


def _scan_seeds(bc, params, opts: ShootOptions, delta):
    """Lowest local minima of the terminal residual on a lattice."""
    if opts.scan_seeds <= 0 or opts.scan_points < 3:
        return []
    lo, hi = opts.scan_range
    axis = np.linspace(lo, hi, opts.scan_points)
    step = min(opts.scan_step, bc.T)
    n = max(1, round(bc.T / step))
    h = bc.T / n
    g = decay_rate(params, opts.decay)
    if _undriven(params) and delta[0] == 0.0:
        pts = np.column_stack([np.zeros_like(axis), axis])
        res = _scan(bc.x_i, bc.z_i, pts, n, h, params.omega, g, params.tau,
                    delta[0], delta[1], bc.x_f, bc.z_f)
        padded = np.concatenate([[np.inf], res, [np.inf]])
        is_min = (res <= padded[:-2]) & (res <= padded[2:]) & np.isfinite(res)
    else:
        pa, pb = np.meshgrid(axis, axis, indexing="ij")
        pts = np.column_stack([pa.ravel(), pb.ravel()])
        res = _scan(bc.x_i, bc.z_i, pts, n, h, params.omega, g, params.tau,
                    delta[0], delta[1], bc.x_f, bc.z_f).reshape(pa.shape)
        padded = np.pad(res, 1, constant_values=np.inf)
        m = opts.scan_points
        is_min = np.isfinite(res)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                if di or dj:
                    is_min &= res <= padded[1 + di:1 + di + m, 1 + dj:1 + dj + m]
        res = res.ravel()
        is_min = is_min.ravel()
    idx = np.flatnonzero(is_min)
    idx = idx[np.argsort(res[idx], kind="stable")][: opts.scan_seeds]
    return [tuple(float(v) for v in pts[i]) for i in idx]


def _same_path(a: OptimalPath, b: OptimalPath, tol=1e-6) -> bool:
    return max(np.max(np.abs(a.x - b.x)), np.max(np.abs(a.z - b.z))) < tol


def shoot(
    bc: BoundaryConditions,
    params: PhysicalParams,
    options: ShootOptions | None = None,
    starts=None,
    delta=(0.0, 0.0),
) -> ShootResult:
    """Solve the two-point boundary-value problem by multi-start shooting.

    Every start in ``starts`` (default: the product of ``options.grid`` with
    itself plus residual-scan seeds, see ShootOptions) is refined by damped
    Newton. Converged roots closer than
    ``options.dedup`` in multiplier space, or tracing the same path, are
    merged. Raises ConvergenceError with a per-start residual dump if no
    start converges.
    """
    opts = options or ShootOptions()
    delta = (float(delta[0]), float(delta[1]))
    if starts is None:
        starts = [(a, b) for a in opts.grid for b in opts.grid]
        starts += _scan_seeds(bc, params, opts, delta)
    if _undriven(params) and delta[0] == 0.0:
        # p_x is pinned at zero, so starts differing only in p_x coincide
        starts = list(dict.fromkeys((0.0, float(b)) for _, b in starts))
    roots, diag = [], []
    for k, s in enumerate(starts):
        p, res, it, status = _newton(s, bc, params, opts, delta)
        diag.append({"index": k, "start": [float(s[0]), float(s[1])], "status": status,
                     "residual": res, "iterations": it, "p0": p.tolist()})
        if status != "converged":
            continue
        if any(np.hypot(*(p - np.array(q.initial_multipliers))) < opts.dedup for q in roots):
            continue
        try:
            path = integrate_path(PhasePoint(bc.x_i, bc.z_i, p[0], p[1]), bc.T, params,
                                  opts.step, opts.decay, (delta[0], delta[1]))
        except PathDivergenceError:
            continue
        if np.max(path.x**2 + path.z**2) > 1.0 + 1e-6:
            # the exact flow keeps x^2 + z^2 <= 1; leaving the disk means the
            # step is too coarse for this root's multipliers
            diag[-1]["status"] = "left_bloch_disk"
            continue
        path.residual = res
        path.iterations = it
        path.start = (float(s[0]), float(s[1]))
        if any(_same_path(path, q) for q in roots):
            continue
        roots.append(path)
    if not roots:
        raise ConvergenceError(
            f"no shooting start converged to within {opts.tol:g}",
            {"starts": diag, "boundary_conditions": vars(bc)},
        )
    roots.sort(key=lambda q: -q.log_likelihood)
    return ShootResult(roots, bc, diag)


def _atanh_clamped(z, what="z"):
    if abs(z) >= 1.0:
        raise ValueError(f"|{what}| = {abs(z)} must be < 1 (tanh^-1 diverges)")
    if abs(z) > 1.0 - ATANH_CLAMP:
        warnings.warn(f"{what} = {z} clamped away from +-1", stacklevel=3)
        z = math.copysign(1.0 - ATANH_CLAMP, z)
    return math.atanh(z)


def undriven_readout(z_f: float, T: float, tau: float, z_i: float = 0.0) -> float:
    """Constant maximum-likelihood readout (tau / T)(atanh z_f - atanh z_i)."""
    return tau / T * (_atanh_clamped(z_f, "z_f") - _atanh_clamped(z_i, "z_i"))


def analytic_undriven(
    z_f: float,
    T: float,
    params: PhysicalParams,
    step: float = 1e-9,
    x_i: float = 1.0,
    z_i: float = 0.0,
    decay: str = "extra",
) -> OptimalPath:
    """Closed-form optimal path for zero drive.

    The readout is constant, z(t) = tanh(atanh z_i + r t / tau) and
    x(t) = x_i exp(-g t) sqrt(1 - z^2) / sqrt(1 - z_i^2); for the default
    start (1, 0) these are exp(-g t) sech(r t / tau) and tanh(r t / tau).
    The multipliers are p_x = 0, p_z = (r - z) / (1 - z^2).
    """
    if params.omega != 0.0:
        raise ValueError("the closed-form path requires zero drive")
    if not T > 0:
        raise ValueError("T must be positive")
    rbar = undriven_readout(z_f, T, params.tau, z_i)
    n = _steps(T, step)
    times = np.arange(n + 1) * step
    g = decay_rate(params, decay)
    a = math.atanh(z_i) + rbar * times / params.tau
    z = np.tanh(a)
    x = x_i * np.exp(-g * times) / np.cosh(a) * math.cosh(math.atanh(z_i))
    z[-1] = z_f  # exact by construction
    px = np.zeros_like(times)
    pz = (rbar - z) / (1.0 - z * z)
    r = np.full_like(times, rbar)
    energy = stochastic_energy((x, z, px, pz), params, decay)
    ll = continuum_log_likelihood(times, z, r, params.tau)
    return OptimalPath(times, x, z, px, pz, r, energy, ll, tau=params.tau,
                       meta={"rbar": rbar, "analytic": True})


def optimal_signal(path: OptimalPath, delta_v: float) -> np.ndarray:
    """Detector voltage dV r / 2 corresponding to the optimal readout."""
    return 0.5 * delta_v * path.r


# --- likelihood bookkeeping --------------------------------------------------


def path_action(z, r, model: DetectorModel) -> float:
    """Summed readout log-likelihood sum_k ln P(r_k | z_k).

    ``z`` holds the state before each readout; extra trailing states (the
    usual n+1 filtered states) are ignored. Works row-wise on 2-D input.
    """
    r = np.asarray(r, dtype=float)
    z = np.asarray(z, dtype=float)[..., : r.shape[-1]]
    return np.sum(readout_log_likelihood(r, z, model), axis=-1)


def normalization_offset(n_steps: int, model: DetectorModel) -> float:
    """n ln sqrt(dt / (2 pi tau)), the dt-dependent part of ``path_action``."""
    return 0.5 * n_steps * math.log(model.dt / (2.0 * math.pi * model.tau))


def discrete_action(x, z, r, px, pz, params: PhysicalParams) -> float:
    """Discrete stochastic action without boundary terms.

    sum_k { -p_k . (q_{k+1} - E[q_k, r_k]) + ln P(r_k | q_k) } with E the
    sampled-data state update. ``x``, ``z`` have n+1 entries, ``r``, ``px``,
    ``pz`` have n.
    """
    x, z, r = (np.asarray(a, dtype=float) for a in (x, z, r))
    ex, ez = step_xz(x[:-1], z[:-1], r, params)
    lagrange = -(np.asarray(px) * (x[1:] - ex) + np.asarray(pz) * (z[1:] - ez))
    return float(np.sum(lagrange) + path_action(z[:-1], r, DetectorModel.from_params(params)))


# --- variational classification ---------------------------------------------


@dataclass
class VariationalResult:
    classification: str
    base_log_likelihood: float
    profile: list  # dicts: d1, d2 (per us), log_likelihood, diff, converged, residual

    def converged_points(self):
        return [p for p in self.profile if p["converged"]]


def default_delta_grid(values=(0.05, 0.1, 0.2, 0.3, 0.5)):
    """Offsets (per microsecond) along both axes and both diagonals."""
    grid = [(0.0, 0.0)]
    for v in values:
        for s in (-1.0, 1.0):
            grid.append((s * v, 0.0))
            grid.append((0.0, s * v))
            d = s * v / math.sqrt(2.0)
            grid.append((d, d))
            grid.append((d, -d))
    return grid


def variational_check(
    path: OptimalPath,
    bc: BoundaryConditions,
    params: PhysicalParams,
    deltas=None,
    options: ShootOptions | None = None,
) -> VariationalResult:
    """Classify a converged path as maximum, minimum or saddle.

    For every offset (d1, d2) the multiplier equations get constants added,
    the modified system is re-shot to the same boundary conditions and its
    path likelihood compared with the unperturbed one. Failed re-shoots are
    recorded as gaps.
    """
    opts = options or ShootOptions()
    deltas = default_delta_grid() if deltas is None else deltas
    base = path.log_likelihood
    profile = []
    for d1, d2 in deltas:
        entry = {"d1": float(d1), "d2": float(d2)}
        if d1 == 0.0 and d2 == 0.0:
            entry.update(log_likelihood=base, diff=0.0, converged=True, residual=path.residual)
            profile.append(entry)
            continue
        delta = (d1 * DELTA_UNIT, d2 * DELTA_UNIT)
        p, res, it, status = _newton(path.initial_multipliers, bc, params, opts, delta)
        if status != "converged":
            entry.update(log_likelihood=None, diff=None, converged=False, residual=res)
            profile.append(entry)
            continue
        try:
            varied = integrate_path(PhasePoint(bc.x_i, bc.z_i, p[0], p[1]), bc.T, params,
                                    opts.step, opts.decay, delta)
        except PathDivergenceError:
            entry.update(log_likelihood=None, diff=None, converged=False, residual=res)
            profile.append(entry)
            continue
        entry.update(log_likelihood=varied.log_likelihood, diff=varied.log_likelihood - base,
                     converged=True, residual=res, px0=float(p[0]), pz0=float(p[1]))
        profile.append(entry)
    diffs = [e["diff"] for e in profile if e["converged"] and (e["d1"] or e["d2"])]
    if diffs and all(d < 0 for d in diffs):
        cls = "maximum"
    elif diffs and all(d > 0 for d in diffs):
        cls = "minimum"
    else:
        cls = "saddle"
    return VariationalResult(cls, base, profile)
