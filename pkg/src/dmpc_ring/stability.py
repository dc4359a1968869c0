"""Linear stability of the free-flow fixed point of the closed-loop map.

The executed policy is differentiated numerically at the homogeneous state,
the derivatives are Fourier-transformed over the ring, and each mode's
characteristic equation is solved for its z-roots.

Two root sets are available per mode. :func:`z_roots` solves the
characteristic polynomial in the published factorised form
``(gamma - z) z [(1 - z)(1 - z + dt (Bv - dt Bx)) - dt^2 Bx] = 0``.
:func:`map_roots` takes the eigenvalues of the 4x4 per-mode matrix of the
simulated map (position, velocity, acceleration, previous action), which
also carries the acceleration derivatives. :func:`full_map_roots` is a
brute-force check of the latter on the whole fleet.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .coordination import AlgorithmSpec, tau_loop
from .core import RingGeometry, VehicleParams, step_fleet
from .utility import UtilityParams

log = logging.getLogger(__name__)

STABLE, UNSTABLE, MARGINAL = "stable", "unstable", "marginal"


class NoFixedPoint(RuntimeError):
    pass


@dataclass
class FixedPoint:
    geometry: RingGeometry
    velocity: float
    residual: float

    @property
    def headway(self) -> float:
        return self.geometry.circumference / self.geometry.vehicle_count

    def state(self):
        n = self.geometry.vehicle_count
        return np.arange(n) * self.headway, np.full(n, self.velocity), np.zeros(n)


@dataclass
class PolicyJacobian:
    offsets: np.ndarray
    beta_x: np.ndarray
    beta_v: np.ndarray
    beta_a: np.ndarray
    flagged: list = field(default_factory=list)


@dataclass
class ModeSpectrum:
    """Per-mode transforms and roots; ``roots[k]`` holds every root of mode ``k``."""

    B_x: np.ndarray
    B_v: np.ndarray
    B_a: np.ndarray
    roots: np.ndarray
    bracket: np.ndarray | None = None

    @property
    def modes(self) -> int:
        return len(self.B_x)


def executed_action(x, v, a, spec: AlgorithmSpec, params: UtilityParams, circumference: float,
                    vehicle: VehicleParams = VehicleParams(), agent: int = 0) -> float:
    return float(tau_loop(x, v, a, spec, params, circumference, vehicle).actions[agent])


def homogeneous_action(speed: float, geometry: RingGeometry, spec: AlgorithmSpec,
                       params: UtilityParams, vehicle: VehicleParams = VehicleParams()) -> float:
    n, c = geometry.vehicle_count, geometry.circumference
    return executed_action(np.arange(n) * (c / n), np.full(n, speed), np.zeros(n), spec, params,
                           c, vehicle)


def find_fixed_point(geometry: RingGeometry, spec: AlgorithmSpec, params: UtilityParams,
                     vehicle: VehicleParams = VehicleParams(), tol: float = 1e-6,
                     upper: float | None = None, max_upper: float | None = None) -> FixedPoint:
    """Common speed at which the executed action of an equally spaced fleet vanishes.

    The root is bracketed on ``(0, v*]``. At low density the backward-motion
    penalty still asks for a little acceleration at ``v*`` itself, so when the
    action is positive at the top of the bracket the upper end is pushed out
    in steps of ``v*/4`` up to ``max_upper`` (default ``2 v*``).
    """
    def f(speed):
        return homogeneous_action(speed, geometry, spec, params, vehicle)

    lo, hi = 1e-3, params.v_star if upper is None else upper
    limit = 2 * params.v_star if max_upper is None else max_upper
    f_lo, f_hi = f(lo), f(hi)
    while np.sign(f_hi) == np.sign(f_lo) and f_hi > 0 and hi + 1e-12 < limit:
        hi = min(hi + params.v_star / 4, limit)
        f_hi = f(hi)
        log.info("extended fixed-point bracket to %.3f m/s", hi)
    if np.sign(f_lo) == np.sign(f_hi):
        raise NoFixedPoint(f"executed action keeps sign {np.sign(f_lo):+.0f} on [{lo}, {hi}] m/s "
                           f"at density {geometry.density:.4f}")
    speed = brentq(f, lo, hi, xtol=1e-12, rtol=4 * np.finfo(float).eps, maxiter=200)
    residual = f(speed)
    if abs(residual) >= tol:
        raise NoFixedPoint(f"residual action {residual:.2e} at v = {speed:.6f}")
    return FixedPoint(geometry, float(speed), float(residual))


def _central(fun, base, offset, var, step):
    plus = [arr.copy() for arr in base]
    minus = [arr.copy() for arr in base]
    plus[var][offset] += step
    minus[var][offset] -= step
    return (fun(*plus) - fun(*minus)) / (2 * step)


def policy_jacobian(fp: FixedPoint, spec: AlgorithmSpec, params: UtilityParams,
                    vehicle: VehicleParams = VehicleParams(), rel_step: float = 1e-4,
                    reach: int | None = None, check: bool = True,
                    refinements: int = 4) -> PolicyJacobian:
    """Central differences of agent 0's executed action w.r.t. each neighbour's state.

    Offsets cover the attention set (plus ``reach`` extra vehicles when
    given). Steps start at ``rel_step`` times the natural scale of each
    variable (headway, speed, 1 m/s^2). With ``check`` on, the ``step`` and
    ``step / 2`` estimates are compared; when they differ by more than 1e-3
    relative the step is cut by 4 (at most ``refinements`` times), since the
    Boltzmann average has sharp structure on the scale of ``1 / lam``. The
    reported value is the Richardson combination of the last pair; entries
    that never agree are listed in ``flagged``.
    """
    geo = fp.geometry
    n, c = geo.vehicle_count, geo.circumference
    ahead, behind = spec.ahead, spec.behind
    if reach is not None:
        ahead, behind = ahead + reach, behind + reach
    offsets = np.arange(-behind, ahead + 1)
    if len(offsets) > n:
        raise ValueError("attention set wraps around the whole ring")
    base = fp.state()
    scales = (fp.headway, max(fp.velocity, 1.0), 1.0)

    def action(x, v, a):
        return executed_action(x, v, a, spec, params, c, vehicle)

    betas = np.zeros((3, len(offsets)))
    flagged = []
    for j, l in enumerate(offsets):
        for var in range(3):
            step = rel_step * scales[var]
            d1 = _central(action, base, l % n, var, step)
            betas[var, j] = d1
            if not check:
                continue
            for attempt in range(refinements + 1):
                d2 = _central(action, base, l % n, var, step / 2)
                agree = abs(d1 - d2) <= 1e-3 * max(abs(d1), abs(d2), 1e-8)
                if agree or attempt == refinements:
                    break
                step /= 4
                d1 = _central(action, base, l % n, var, step)
            betas[var, j] = (4 * d2 - d1) / 3
            if not agree:
                flagged.append((int(l), "xva"[var], d1, d2))
    if flagged:
        log.warning("finite-difference disagreement for %s", flagged)
    return PolicyJacobian(offsets, betas[0], betas[1], betas[2], flagged)


def mode_transforms(jac: PolicyJacobian, n: int):
    k = np.arange(n)[:, None]
    alpha = np.exp(2j * np.pi * k * jac.offsets[None, :] / n)
    return alpha @ jac.beta_x, alpha @ jac.beta_v, alpha @ jac.beta_a


def _quadratic_roots(b, c):
    """Both roots of ``w^2 + b w + c = 0`` without cancellation."""
    disc = np.sqrt(b * b - 4 * c + 0j)
    disc = np.where((np.conj(b) * disc).real >= 0, disc, -disc)
    q = -(b + disc) / 2
    # complex division by a (near-)subnormal q overflows; both roots are tiny then
    tiny = np.abs(q) < 1e-150
    safe = np.where(tiny, 1.0, q)
    w1 = q
    w2 = np.where(tiny, -b - q, c / safe)
    return w1, w2


def z_roots(jac: PolicyJacobian, n: int, dt: float, gamma: float) -> ModeSpectrum:
    """Roots of the published characteristic equation for every mode.

    Columns of ``roots`` are ``0``, ``gamma`` and the two bracket roots.
    """
    bx, bv, ba = mode_transforms(jac, n)
    # substitute w = 1 - z: w^2 + dt (Bv - dt Bx) w - dt^2 Bx = 0
    w1, w2 = _quadratic_roots(dt * (bv - dt * bx), -dt * dt * bx)
    bracket = np.column_stack([1 - w1, 1 - w2])
    roots = np.column_stack([np.zeros(n, complex), np.full(n, gamma, complex), bracket])
    return ModeSpectrum(bx, bv, ba, roots, bracket)


def map_roots(jac: PolicyJacobian, n: int, dt: float, gamma: float) -> ModeSpectrum:
    """Eigenvalues of the per-mode linearisation of the simulated map."""
    bx, bv, ba = mode_transforms(jac, n)
    roots = np.empty((n, 4), complex)
    for k in range(n):
        m = np.array([[1, dt, 0, 0],
                      [0, 1, dt, 0],
                      [bx[k], bv[k], gamma + ba[k], -gamma],
                      [bx[k], bv[k], ba[k], 0]], dtype=complex)
        roots[k] = np.linalg.eigvals(m)
    return ModeSpectrum(bx, bv, ba, roots)


def full_map_jacobian(fp: FixedPoint, spec: AlgorithmSpec, params: UtilityParams,
                      vehicle: VehicleParams = VehicleParams(), rel_step: float = 1e-4) -> np.ndarray:
    """Finite-difference Jacobian of one whole closed-loop step.

    State layout is ``(x, v, a, u_prev)``, each block of length ``N``.
    """
    geo = fp.geometry
    n, c = geo.vehicle_count, geo.circumference
    x0, v0, a0 = fp.state()
    u0 = np.zeros(n)

    def step(z):
        x, v, a, u_prev = z[:n], z[n:2 * n], z[2 * n:3 * n], z[3 * n:]
        u = tau_loop(x, v, a, spec, params, c, vehicle).actions
        x1, v1, a1 = step_fleet(x, v, a, u, u_prev, vehicle, c, wrap=False)
        return np.concatenate([x1, v1, a1, u])

    z0 = np.concatenate([x0, v0, a0, u0])
    scale = np.concatenate([np.full(n, fp.headway), np.full(n, max(fp.velocity, 1.0)),
                            np.ones(2 * n)])
    jac = np.empty((4 * n, 4 * n))
    for j in range(4 * n):
        e = np.zeros(4 * n)
        e[j] = rel_step * scale[j]
        jac[:, j] = (step(z0 + e) - step(z0 - e)) / (2 * e[j])
    return jac


def full_map_roots(fp: FixedPoint, spec: AlgorithmSpec, params: UtilityParams,
                   vehicle: VehicleParams = VehicleParams(), rel_step: float = 1e-4) -> np.ndarray:
    """Eigenvalues of :func:`full_map_jacobian`."""
    return np.linalg.eigvals(full_map_jacobian(fp, spec, params, vehicle, rel_step))


def classify(spectrum: ModeSpectrum, margin: float = 1e-3) -> str:
    """Stable / unstable / marginal from the largest root modulus.

    The translational root ``z = 1`` of mode 0 is excluded.
    """
    mags = np.abs(spectrum.roots).copy()
    k0 = np.argmin(np.abs(spectrum.roots[0] - 1.0))
    mags[0, k0] = 0.0
    top = mags.max()
    if top < 1 - margin:
        return STABLE
    if top > 1 + margin:
        return UNSTABLE
    return MARGINAL


def max_modulus(spectrum: ModeSpectrum) -> float:
    mags = np.abs(spectrum.roots).copy()
    mags[0, np.argmin(np.abs(spectrum.roots[0] - 1.0))] = 0.0
    return float(mags.max())


@dataclass
class StabilityReport:
    algorithm: str
    fixed_point: FixedPoint
    jacobian: PolicyJacobian
    spectrum: ModeSpectrum
    map_spectrum: ModeSpectrum
    verdict: str
    map_verdict: str


def analyse(geometry: RingGeometry, spec: AlgorithmSpec, params: UtilityParams,
            vehicle: VehicleParams = VehicleParams(), margin: float = 1e-3,
            rel_step: float = 1e-4) -> StabilityReport:
    fp = find_fixed_point(geometry, spec, params, vehicle)
    jac = policy_jacobian(fp, spec, params, vehicle, rel_step=rel_step)
    n = geometry.vehicle_count
    spec_pub = z_roots(jac, n, vehicle.dt, vehicle.gamma)
    spec_map = map_roots(jac, n, vehicle.dt, vehicle.gamma)
    return StabilityReport(spec.name, fp, jac, spec_pub, spec_map,
                           classify(spec_pub, margin), classify(spec_map, margin))
