"""c-curvature evaluation: variational route, constant-curvature closed
form, finite-difference oracle, alternative algebraic forms, Maclaurin
residuals, and the auxiliary h/mu functions.

Angle conventions: xi = (sin theta, cos theta), nu = (sin phi, cos phi)
in the Fermi chart of the probe, both unit at the chart origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import series
from .field import CurvatureField, c2_norm_cached, metric_table_for
from .jacobi import (ConjugacyError, JacobiBundle, ProbeConfig,
                     DEFAULT_BUNDLE_TOL, DEFAULT_GEODESIC_TOL,
                     conjugate_distance, jacobi_off_axis, solve_bundle)

CONJ_CAP = 1.0 - 1e-6          # probe cap as a fraction of ell0
RANK1_A2_TOL = 1e-14


@dataclass(frozen=True)
class CCurvSample:
    """One c-curvature evaluation with its weight and coefficient parts."""

    value: float
    a2: float
    ratio: Optional[float]
    parts: tuple[float, float, float]     # (E1, E2, E3)
    probe: ProbeConfig
    method: str
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class MaclaurinData:
    """Leading Maclaurin coefficients built from dK at the origin."""

    psi0: float
    psi1: float
    psi2: float

    @classmethod
    def from_field(cls, field: CurvatureField, phi: float) -> "MaclaurinData":
        k1, k2 = (float(v) for v in field.dK(0.0, 0.0))
        s, c = math.sin(phi), math.cos(phi)
        return cls(psi0=k2,
                   psi1=3 * c * k2 + s * k1,
                   psi2=(2 + 4 * c * c) * k2 + 4 * s * c * k1)


def a2_weight(r0: float, theta: float, phi: float) -> float:
    """Sum of squared parallelogram areas of (xi, nu), (V, xi), (V, nu)."""
    return (math.sin(theta - phi) ** 2
            + r0 * r0 * math.sin(theta) ** 2
            + r0 * r0 * math.sin(phi) ** 2)


def a2(probe: ProbeConfig) -> float:
    return a2_weight(probe.r0, probe.theta, probe.phi)


# ------------------------------------------------ constant curvature form

def sphere_terms(tau):
    """The four angular coefficient functions of the closed form.

    Stable through the removable singularity at 0; the factor layout is
    (sin^2 th sin^2 ph, sin^2 th cos^2 ph, cos^2 th sin^2 ph,
     cos th sin th cos ph sin ph).
    """
    tau = np.asarray(tau, dtype=float)
    s = np.sin(tau)
    t1 = series.h1_normalized(tau) * tau**4 / s**2
    t2 = 2 * series.jacobi_gap(tau) * tau**3 / s**3
    t3 = 2 * series.jacobi_gap(tau) * tau / s
    t4 = 4 * series.sin_sq_gap(tau) * tau**2 / s**2
    return t1, t2, t3, t4


def c_curvature_sphere(kappa: float, rbar0: float, theta: float,
                       phi: float) -> float:
    """Closed-form c-curvature for constant curvature kappa.

    The printed fourth term of the source formula carries a stray
    typographic character; it is read as plain cos(phi) (erratum note in
    the README).
    """
    if not 0 < rbar0 < math.pi:
        raise ValueError(f"rbar0 must lie in (0, pi), got {rbar0}")
    t1, t2, t3, t4 = (float(x) for x in sphere_terms(rbar0))
    st, ct = math.sin(theta), math.cos(theta)
    sp, cp = math.sin(phi), math.cos(phi)
    return kappa * (st * st * sp * sp * t1 + st * st * cp * cp * t2
                    + ct * ct * sp * sp * t3 + ct * st * cp * sp * t4)


# ------------------------------------------------------ variational route

def _parts_from_bundle(bundle: JacobiBundle) -> tuple[float, ...]:
    y = bundle.trajectory.final
    f0, f1 = y[0], y[2]
    p0, p1 = y[4], y[6]
    q0, q1 = y[12], y[14]
    r0 = bundle.probe.r0
    if f1 <= 0:
        raise ConjugacyError(f"f1(1) = {f1} <= 0: probe beyond conjugacy")
    E1 = f1 * f1 * q0 - f0 * f1 * q1 - 2 * f1 * p0 * p1 + 2 * f0 * p1 * p1
    E2 = 2 / (r0 * r0) * f1 * f1 * (f1 - f0)
    E3 = 4 / r0 * f1 * (f1 * p0 - f0 * p1)
    return E1, E2, E3, f0, f1, p0, p1, q0, q1


def evaluate_bundle(bundle: JacobiBundle, theta: Optional[float] = None
                    ) -> CCurvSample:
    """Assemble a CCurvSample from a solved bundle (theta may override)."""
    th = bundle.probe.theta if theta is None else theta
    probe = ProbeConfig(bundle.probe.r0, th, bundle.probe.phi)
    E1, E2, E3, *_ = _parts_from_bundle(bundle)
    f1 = bundle.trajectory.final[2]
    st, ct = math.sin(th), math.cos(th)
    sp = math.sin(probe.phi)
    coeff2 = ct * ct - math.cos(th + probe.phi) ** 2
    value = (-st * st * E1 + coeff2 * E2 + ct * st * sp * E3) / f1**3
    weight = a2(probe)
    flags: tuple[str, ...] = ()
    ratio: Optional[float] = None
    if weight > RANK1_A2_TOL:
        ratio = value / weight
    else:
        flags = ("degenerate-rank",)
    return CCurvSample(value=float(value), a2=float(weight), ratio=ratio,
                       parts=(float(E1), float(E2), float(E3)), probe=probe,
                       method="variational", flags=flags)


def _check_cap(field: CurvatureField, r0: float, margin: float = CONJ_CAP):
    ell0 = conjugate_distance(field)
    if r0 > margin * ell0:
        raise ConjugacyError(
            f"r0 = {r0} exceeds {margin} * ell0 = {margin * ell0}")


def c_curvature(field: CurvatureField, probe: ProbeConfig,
                tol: tuple[float, float] = DEFAULT_BUNDLE_TOL) -> CCurvSample:
    """c-curvature of the field at the probe, via the variational bundle."""
    _check_cap(field, probe.r0)
    return evaluate_bundle(solve_bundle(field, probe, tol=tol))


def alt_forms(field: CurvatureField, probe: ProbeConfig,
              tol: tuple[float, float] = DEFAULT_BUNDLE_TOL
              ) -> tuple[float, float, float]:
    """(general, altA, altB) evaluated from one bundle.

    The three are algebraically identical regroupings; agreement to
    1e-10 relative is a structural invariant of the implementation.
    """
    _check_cap(field, probe.r0)
    bundle = solve_bundle(field, probe, tol=tol)
    E1, E2, E3, f0, f1, p0, p1, q0, q1 = _parts_from_bundle(bundle)
    r0 = probe.r0
    th, ph = probe.theta, probe.phi
    st, ct = math.sin(th), math.cos(th)
    sp, cp = math.sin(ph), math.cos(ph)

    general = (-st * st * E1 + (ct * ct - math.cos(th + ph) ** 2) * E2
               + ct * st * sp * E3) / f1**3

    one_m = 1 - f0 / f1
    altA = (-st * st * (q0 / f1 - f0 * q1 / f1**2 - 2 * p0 * p1 / f1**2)
            - 2 * f0 / f1 * (p1 * st / f1 + sp * ct / r0) ** 2
            + 2 / r0**2 * one_m * (2 * ct * cp * st * sp - st * st * sp * sp)
            + 2 / r0**2 * ct * ct * sp * sp
            + 4 / r0 * ct * st * sp * p0 / f1)

    altB = (-st * st * (q0 / f1 - f0 * q1 / f1**2 - 2 * p0 * p1 / f1**2
                        + 2 * f0 * p1 * p1 / f1**3 + 2 / r0**2 * one_m)
            + 2 / r0**2 * one_m * (cp * st + ct * sp) ** 2
            + 4 / r0 * ct * st * sp * (p0 / f1 - f0 * p1 / f1**2))

    return float(general), float(altA), float(altB)


# --------------------------------------------------- finite-difference oracle

def _hessian_quadratic_form(field: CurvatureField, v: tuple[float, float],
                            theta: float, tol, table) -> float:
    """A(m0, v)(xi) = |xi|^2 - (1 - f0/f1)|xi - (xi.U)U|^2 at the origin."""
    f0, f1 = jacobi_off_axis(field, v, tol=tol, table=table)
    if f1 <= 0:
        raise ConjugacyError("finite-difference stencil crosses conjugacy")
    r = math.hypot(*v)
    dot = (math.sin(theta) * v[0] + math.cos(theta) * v[1]) / r
    return 1.0 - (1.0 - f0 / f1) * (1.0 - dot * dot)


def c_curvature_fd_oracle(field: CurvatureField, probe: ProbeConfig,
                          h: float = 3e-3,
                          tol: tuple[float, float] = DEFAULT_GEODESIC_TOL
                          ) -> float:
    """Second central difference of the cost-Hessian form in direction nu.

    Fully independent of the variational bundle: each stencil point is an
    off-axis geodesic + Jacobi solve against the reconstructed metric.
    """
    if not 1e-4 <= h <= 1e-2:
        raise ValueError(f"h must lie in [1e-4, 1e-2], got {h}")
    ell0 = conjugate_distance(field)
    if probe.r0 + h > CONJ_CAP * ell0:
        raise ConjugacyError("stencil does not fit inside NoConj")
    nu = (math.sin(probe.phi), math.cos(probe.phi))
    table = metric_table_for(
        field,
        x1_extent=max(0.08, 1.3 * h + 0.05),
        x2_lo=-0.25,
        x2_hi=min(field.patch.x2_hi, 1.05 * (probe.r0 + h) + 0.1))
    vals = []
    for lam in (h, 0.0, -h):
        v = (lam * nu[0], probe.r0 + lam * nu[1])
        vals.append(_hessian_quadratic_form(field, v, probe.theta, tol, table))
    return -(vals[0] - 2 * vals[1] + vals[2]) / (h * h)


# ------------------------------------------------------- near-zero limit

def near_zero_limit(field: CurvatureField, theta: float, phi: float,
                    r_sequence: Sequence[float],
                    tol: tuple[float, float] = DEFAULT_BUNDLE_TOL,
                    err_tol: float = 1e-4) -> float:
    """Richardson limit of the c-curvature along r_sequence -> 0.

    Expected limit is (2/3) K(0) sin^2(theta - phi), the diagonal
    cross-curvature value.
    """
    rs = np.asarray(list(r_sequence), dtype=float)
    if rs.size < 3 or np.any(np.diff(rs) >= 0) or rs[-1] <= 0:
        raise ValueError("r_sequence must decrease toward 0")
    vals = np.array([c_curvature(field, ProbeConfig(r, theta, phi), tol).value
                     for r in rs])
    # Neville tableau evaluated at r = 0
    q = vals.copy()
    top = [q[0]]
    for k in range(1, len(rs)):
        for i in range(len(rs) - k):
            q[i] = ((0.0 - rs[i + k]) * q[i] - (0.0 - rs[i]) * q[i + 1]) \
                / (rs[i] - rs[i + k])
        top.append(q[0])
    est_err = abs(top[-1] - top[-2])
    if est_err > err_tol * max(1.0, abs(top[-1])):
        raise ArithmeticError(
            f"extrapolation not converged (est. error {est_err:.3e})")
    return float(top[-1])


# ---------------------------------------------------- Maclaurin residual

def maclaurin_residual(field: CurvatureField, probe: ProbeConfig,
                       tol: tuple[float, float] = DEFAULT_BUNDLE_TOL,
                       c1_constant: Optional[float] = None
                       ) -> tuple[float, float]:
    """(residual, bound) of the second-order perturbation identity.

    The residual evaluates the bracketed combination of the rescaled
    c-curvature, its constant-curvature value, and the oscillator-kernel
    correction terms; the bound is the universal-constant envelope
    C1^3 pi^8 eps r0^2 (338 sin^2 th + 268 cos^2 th sin^2 ph) / fbar1^3.
    """
    eps = c2_norm_cached(field)
    if eps > 1 / math.pi**2:
        raise ValueError("field exceeds the C2-smallness hypothesis")
    kappa = field.kappa0
    r0 = probe.r0
    rbar0 = math.sqrt(kappa) * r0
    if rbar0 >= math.pi:
        raise ValueError("rbar0 must be below pi")
    if c1_constant is None:
        from .constants import default_constants
        c1_constant = default_constants().Ccap[1]

    _check_cap(field, r0)
    bundle = solve_bundle(field, probe, tol=tol)
    sample = evaluate_bundle(bundle)
    f1 = bundle.trajectory.final[2]

    th, ph = probe.theta, probe.phi
    st, ct = math.sin(th), math.cos(th)
    sp = math.sin(ph)
    fbar0 = math.cos(rbar0)
    fbar1 = float(np.sinc(rbar0 / math.pi))
    cbar = c_curvature_sphere(kappa, rbar0, th, ph)
    psis = MaclaurinData.from_field(field, ph)
    s_lin = float(series.osc_kernel_linear(rbar0))
    s_quad = float(series.osc_kernel_quadratic(rbar0))
    kernel = s_lin - fbar0 * s_quad / fbar1
    coeff2 = ct * ct - math.cos(th + ph) ** 2

    expr = ((f1 / fbar1) ** 3 * sample.value - cbar
            - r0 * psis.psi2 * st * st / fbar1 * kernel
            + 2 * r0 * psis.psi0 * (s_quad - s_lin) / fbar1 * coeff2
            + 4 * r0 * psis.psi1 * ct * st * sp / fbar1 * kernel)
    bound = (c1_constant**3 * math.pi**8 * eps * r0 * r0
             * (338 * st * st + 268 * ct * ct * sp * sp) / fbar1**3)
    return float(abs(expr)), float(bound)


# ------------------------------------------------------ h / mu functions

def h1(tau):
    """tau^2 + tau sin tau cos tau - 2 sin^2 tau (stable near 0)."""
    tau = np.asarray(tau, dtype=float)
    return series.h1_normalized(tau) * tau**6


def h2(tau):
    """(tau + sin tau cos tau) sin tau - 2 tau^2 cos tau (stable near 0)."""
    tau = np.asarray(tau, dtype=float)
    return series.h2_normalized(tau) * tau**6


def mu1(tau):
    """min of the three positive angular envelopes of the closed form."""
    tau = np.asarray(tau, dtype=float)
    s = np.sin(tau)
    piece1 = series.h1_normalized(tau) * tau**4 / s**2
    common = 8 * np.cos(tau / 2) * h2(tau / 2)
    piece2 = common / (tau * s**3)
    piece3 = common / (tau**3 * s)
    return np.minimum(piece1, np.minimum(piece2, piece3))


def sbar_split(rbar0: float, theta: float, phi: float
               ) -> tuple[float, float]:
    """(S1, S2): square + remainder split of the unit-curvature closed form.

    S1 + S2 reproduces c_curvature_sphere(1, rbar0, theta, phi).
    """
    if not 0 < rbar0 < math.pi:
        raise ValueError("rbar0 must lie in (0, pi)")
    s = math.sin(rbar0)
    q = -float(series.sin_sq_gap(rbar0)) * rbar0**4      # rbar^2 - sin^2
    a = math.sin(theta) * math.cos(phi) * math.sqrt(q / (rbar0 * s**3))
    b = math.cos(theta) * math.sin(phi) * math.sqrt(q / (rbar0**3 * s))
    s1 = 2 * (a - b) ** 2
    hh = 8 * math.cos(rbar0 / 2) * float(h2(rbar0 / 2))
    s2 = (math.sin(theta)**2 * math.sin(phi)**2 * float(h1(rbar0)) / (rbar0**2 * s**2)
          + math.sin(theta)**2 * math.cos(phi)**2 * hh / (rbar0 * s**3)
          + math.cos(theta)**2 * math.sin(phi)**2 * hh / (rbar0**3 * s))
    return s1, s2


class HMuValues(NamedTuple):
    h1: float
    h2: float
    mu1: float
    sbar1: float
    sbar2: float
    sphere_total: float


def h_mu_functions(tau: float, theta: float = 1.0, phi: float = 2.0
                   ) -> HMuValues:
    """h1, h2, mu1 at tau plus the S-split check data at (theta, phi)."""
    if not 0 < tau < math.pi:
        raise ValueError("tau must lie in (0, pi)")
    s1, s2 = sbar_split(tau, theta, phi)
    return HMuValues(h1=float(h1(tau)), h2=float(h2(tau)),
                     mu1=float(mu1(tau)), sbar1=s1, sbar2=s2,
                     sphere_total=c_curvature_sphere(1.0, tau, theta, phi))
