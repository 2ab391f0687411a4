"""Jacobi fields along the probe axis and off-axis geodesic machinery.

``solve_bundle`` integrates, as one coupled 16-dimensional system, the
Jacobi fields f0/f1 together with their first and second directional
derivatives in the fiber direction nu and the second derivative of the
exponential-map position (the two forcing components those derivatives
need).  All curvature data enters through the field's on-axis values, so
the bundle never touches the reconstructed metric.

Off-axis routines (``geodesic_shoot``, ``jacobi_off_axis``) integrate in
the chart against a spline-backed metric table; they are the independent
route used by finite-difference cross-checks of the variational states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .field import (CurvatureField, MetricTable, metric_table_for,
                    reconstruct_metric)
from .ode import IntegrationError, Trajectory, first_zero, integrate_ivp

DEFAULT_BUNDLE_TOL = (1e-10, 1e-12)
DEFAULT_GEODESIC_TOL = (1e-11, 1e-13)

# state layout of the bundle system
IDX = {name: i for i, name in enumerate(
    ["f0", "df0", "f1", "df1",
     "fp0", "dfp0", "fp1", "dfp1",
     "dnnx1", "ddnnx1", "dnnx2", "ddnnx2",
     "fpp0", "dfpp0", "fpp1", "dfpp1"])}


class ConjugacyError(RuntimeError):
    """Probe reaches or passes the first conjugate point."""


@dataclass(frozen=True)
class ProbeConfig:
    """Geodesic length r0 = |V0| and the angles of xi (theta) and nu (phi)."""

    r0: float
    theta: float
    phi: float

    def __post_init__(self):
        if not 0 < self.r0 <= math.pi:
            raise ValueError(f"r0 must lie in (0, pi], got {self.r0}")
        object.__setattr__(self, "theta", self.theta % (2 * math.pi))
        object.__setattr__(self, "phi", self.phi % (2 * math.pi))


# ------------------------------------------------ constant-curvature forms

def sphere_f(kappa: float, r: float, t):
    """(f0, f1) for constant curvature kappa at parameter radius r."""
    rb = math.sqrt(kappa) * r
    t = np.asarray(t, dtype=float)
    f0 = np.cos(rb * t)
    f1 = t * np.sinc(rb * t / math.pi)
    return f0, f1


def sphere_fp(kappa: float, r0: float, phi: float, t):
    """First nu-derivatives of the constant-curvature Jacobi fields."""
    rb = math.sqrt(kappa) * r0
    sk = math.sqrt(kappa)
    t = np.asarray(t, dtype=float)
    cphi = math.cos(phi)
    fp0 = -sk * t * np.sin(rb * t) * cphi
    fp1 = cphi / r0 * (t * np.cos(rb * t) - np.sin(rb * t) / rb)
    return fp0, fp1


def sphere_fpp(kappa: float, r0: float, phi: float, t):
    """Second nu-derivatives of the constant-curvature Jacobi fields."""
    rb = math.sqrt(kappa) * r0
    sk = math.sqrt(kappa)
    t = np.asarray(t, dtype=float)
    c2, s2 = math.cos(phi) ** 2, math.sin(phi) ** 2
    sin_, cos_ = np.sin(rb * t), np.cos(rb * t)
    fpp0 = -kappa * t * t * cos_ * c2 - sk * t * sin_ * s2 / r0
    h1 = t * cos_ / r0 - sin_ / (sk * r0 * r0)
    h2 = -sk * t * t * sin_ / r0 - 2 * t * cos_ / r0**2 + 2 * sin_ / (sk * r0**3)
    fpp1 = h2 * c2 + h1 * s2 / r0
    return fpp0, fpp1


# ----------------------------------------------------------- axis bundle

def _bundle_rhs(field: CurvatureField, r0: float, phi: float):
    K, dK, d2K = field.scalar_evaluators()
    sphi, cphi = math.sin(phi), math.cos(phi)
    r2 = r0 * r0

    def rhs(t, y):
        s2 = t * r0
        k = K(0.0, s2)
        k1, k2 = dK(0.0, s2)
        k11, k12, k22 = d2K(0.0, s2)
        f0, df0, f1, df1 = y[0], y[1], y[2], y[3]
        p0, dp0, p1, dp1 = y[4], y[5], y[6], y[7]
        x1, dx1, x2, dx2 = y[8], y[9], y[10], y[11]
        q0, dq0, q1, dq1 = y[12], y[13], y[14], y[15]
        kp = sphi * f1 * k1 + cphi * t * k2
        kpp = (k1 * x1 + k2 * x2 + k11 * f1 * f1 * sphi * sphi
               + 2 * k12 * t * f1 * sphi * cphi + k22 * t * t * cphi * cphi)
        lin = 2 * r0 * cphi * k + r2 * kp
        out = np.empty(16)
        out[0] = df0
        out[1] = -r2 * k * f0
        out[2] = df1
        out[3] = -r2 * k * f1
        out[4] = dp0
        out[5] = -r2 * k * p0 - lin * f0
        out[6] = dp1
        out[7] = -r2 * k * p1 - lin * f1
        out[8] = dx1
        out[9] = (-r2 * k * x1 - 4 * r0 * cphi * sphi * k * f1
                  - r2 * sphi * sphi * f1 * f1 * k1
                  - 2 * r2 * sphi * cphi * t * f1 * k2)
        out[10] = dx2
        out[11] = 4 * r0 * sphi * sphi * k * f1 * df1 + r2 * sphi * sphi * f1 * f1 * k2
        out[12] = dq0
        out[13] = -r2 * k * q0 - (2 * k * f0 + 4 * r0 * cphi * (kp * f0 + k * p0)
                                  + r2 * (kpp * f0 + 2 * kp * p0))
        out[14] = dq1
        out[15] = -r2 * k * q1 - (2 * k * f1 + 4 * r0 * cphi * (kp * f1 + k * p1)
                                  + r2 * (kpp * f1 + 2 * kp * p1))
        return out

    return rhs


@dataclass(frozen=True)
class JacobiBundle:
    """Trajectory of the coupled Jacobi/variational system on t in [0, 1]."""

    probe: ProbeConfig
    trajectory: Trajectory
    kappa: float                      # K at the chart origin

    @property
    def times(self) -> np.ndarray:
        return self.trajectory.times

    def series(self, name: str) -> np.ndarray:
        return self.trajectory.states[:, IDX[name]]

    def at(self, t) -> np.ndarray:
        return self.trajectory(t)

    def value(self, name: str, t: float = 1.0) -> float:
        return float(self.trajectory(t)[IDX[name]])

    @property
    def end(self) -> dict:
        y = self.trajectory.final
        return {name: float(y[i]) for name, i in IDX.items()}

    def sturm_bounds(self, max_k: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(f1 nodes, lower, upper) on the stored grid; lower is NaN once
        sqrt(max K) r0 t passes pi (the comparison leaves validity)."""
        t = self.times
        r0 = self.probe.r0
        sk = math.sqrt(max_k)
        upper = t * np.sinc(r0 * t / math.pi)
        lower = t * np.sinc(sk * r0 * t / math.pi)
        lower[sk * r0 * t > math.pi] = np.nan
        return self.series("f1"), lower, upper


def solve_bundle(field: CurvatureField, probe: ProbeConfig,
                 tol: tuple[float, float] = DEFAULT_BUNDLE_TOL,
                 t_eval=None) -> JacobiBundle:
    """Integrate the 16-state axis system with zero variational initial data."""
    y0 = np.zeros(16)
    y0[IDX["f0"]] = 1.0
    y0[IDX["df1"]] = 1.0
    rhs = _bundle_rhs(field, probe.r0, probe.phi)
    traj = integrate_ivp(rhs, y0, 1.0, tol=tol, t_eval=t_eval)
    return JacobiBundle(probe=probe, trajectory=traj, kappa=field.kappa0)


# ------------------------------------------------------ conjugate points

def conjugate_distance(field: CurvatureField,
                       tol: tuple[float, float] = (1e-12, 1e-14),
                       zero_tol: float = 1e-12) -> float:
    """Arclength to the first conjugate point along the axis.

    Integrates u'' + K(0, s) u = 0 with u(0) = 0, u'(0) = 1 and refines
    the first zero; Sturm pinches the result between pi/sqrt(max K) and
    pi/sqrt(min K).
    """
    cached = field.cache_get("ell0")
    if cached is not None:
        return cached
    K, _, _ = field.scalar_evaluators()
    s_end = min(math.pi / math.sqrt(max(field.K_min(), 1e-12)) + 0.12,
                field.patch.x2_hi)

    def rhs(s, y):
        return [y[1], -K(0.0, s) * y[0]]

    traj = integrate_ivp(rhs, [0.0, 1.0], s_end, tol=tol)
    ell0 = first_zero(traj, 0, zero_tol=zero_tol)
    if ell0 is None:
        raise IntegrationError("no conjugate point before patch end")
    lo = math.pi / math.sqrt(field.K_max())
    hi = math.pi / math.sqrt(field.K_min())
    if not (lo - 1e-9 <= ell0 <= hi + 1e-9):
        raise IntegrationError(
            f"conjugate distance {ell0} outside Sturm bracket [{lo}, {hi}]")
    return field.cache_set("ell0", float(ell0))


# -------------------------------------------------------- off-axis route

def _default_table(field: CurvatureField, v: tuple[float, float]) -> MetricTable:
    speed = math.hypot(*v)
    x1_extent = min(field.patch.x1_max, max(0.08, 1.3 * abs(v[0]) + 0.05))
    x2_lo = min(-0.25, 1.2 * v[1] - 0.1)
    x2_hi = max(0.25, 1.2 * v[1] + 0.1, 1.1 * speed + 0.1)
    return metric_table_for(field, x1_extent, x2_lo, x2_hi)


def _geodesic_rhs(field: CurvatureField, table: MetricTable, speed2: float,
                  with_jacobi: bool):
    K, _, _ = field.scalar_evaluators()

    def rhs(t, y):
        x1, x2, dx1, dx2 = y[0], y[1], y[2], y[3]
        g122, g212, g222 = table.christoffels(x1, x2)
        out = np.empty(8 if with_jacobi else 4)
        out[0] = dx1
        out[1] = dx2
        out[2] = -g122 * dx2 * dx2
        out[3] = -2 * g212 * dx1 * dx2 - g222 * dx2 * dx2
        if with_jacobi:
            k = K(x1, x2)
            out[4] = y[5]
            out[5] = -speed2 * k * y[4]
            out[6] = y[7]
            out[7] = -speed2 * k * y[6]
        return out

    return rhs


def geodesic_shoot(field: CurvatureField, v: tuple[float, float],
                   t_end: float = 1.0,
                   tol: tuple[float, float] = DEFAULT_GEODESIC_TOL,
                   table: MetricTable = None) -> Trajectory:
    """Shoot the geodesic with initial velocity v from the chart origin.

    Returns the (x1, x2, dx1, dx2) trajectory; raises on patch exit or
    metric degeneracy.
    """
    if math.hypot(*v) > math.pi:
        raise ValueError("|v| must not exceed pi")
    table = table or _default_table(field, v)
    rhs = _geodesic_rhs(field, table, 0.0, with_jacobi=False)
    return integrate_ivp(rhs, [0.0, 0.0, v[0], v[1]], t_end, tol=tol)


def geodesic_speed(field: CurvatureField, traj: Trajectory, t) -> np.ndarray:
    """Metric speed sqrt(dx1^2 + G dx2^2) along a shot path."""
    y = np.atleast_2d(traj(t))
    out = np.empty(len(y))
    for i, (x1, x2, dx1, dx2) in enumerate(y):
        w = reconstruct_metric(field, x2, x1).w
        out[i] = math.sqrt(dx1 * dx1 + (w * w) * dx2 * dx2)
    return out if np.ndim(t) else float(out[0])


def jacobi_off_axis(field: CurvatureField, v: tuple[float, float],
                    tol: tuple[float, float] = DEFAULT_GEODESIC_TOL,
                    table: MetricTable = None) -> tuple[float, float]:
    """(f0(v,1), f1(v,1)) along the off-axis geodesic through v.

    The scalar Jacobi equation is integrated jointly with the geodesic;
    the curvature factor uses the squared launch speed measured at the
    origin where the chart is Euclidean.
    """
    table = table or _default_table(field, v)
    speed2 = v[0] * v[0] + v[1] * v[1]
    rhs = _geodesic_rhs(field, table, speed2, with_jacobi=True)
    y0 = [0.0, 0.0, v[0], v[1], 1.0, 0.0, 0.0, 1.0]
    traj = integrate_ivp(rhs, y0, 1.0, tol=tol)
    yf = traj.final
    return float(yf[4]), float(yf[6])
