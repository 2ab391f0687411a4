"""Adaptive initial-value integration, the forced-oscillator solution map,
and first-zero detection on dense output.

All solvers here are strict wrappers around SciPy's embedded Runge-Kutta
machinery with tight default tolerances; everything downstream (Jacobi
bundles, metric reconstruction, geodesics) runs through ``integrate_ivp``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq

DEFAULT_TOL = (1e-10, 1e-12)
FIRST_ZERO_EXCLUDE = 1e-6
ZERO_TOL = 1e-12


class IntegrationError(RuntimeError):
    """Step-size underflow or non-finite state during integration."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to converge."""


@dataclass(frozen=True)
class Trajectory:
    """Dense-output solution of an IVP on [0, t_end].

    ``times``/``states`` hold the accepted steps (or an explicit t_eval
    grid); calling the trajectory evaluates the solver's interpolant.
    """

    times: np.ndarray
    states: np.ndarray          # shape (n_times, dim)
    tolerances: tuple[float, float]
    _sol: object = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.size < 2 or t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing from 0")
        if self.states.shape[0] != t.size:
            raise ValueError("states and times length mismatch")

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def __call__(self, t):
        """Evaluate the dense interpolant at scalar or array t."""
        out = self._sol(t)
        return out.T if np.ndim(t) else out


def integrate_ivp(system: Callable, y0, t_end: float,
                  tol: tuple[float, float] = DEFAULT_TOL,
                  t_eval: Optional[Sequence[float]] = None,
                  method: str = "DOP853") -> Trajectory:
    """Integrate y' = system(t, y) from 0 to t_end with dense output.

    ``tol`` is (relative, absolute); both must lie in (0, 1e-2].
    Raises IntegrationError on step-size underflow or non-finite states.
    """
    rel, abs_ = tol
    if not (0 < rel <= 1e-2 and 0 < abs_ <= 1e-2):
        raise ValueError(f"tolerances must lie in (0, 1e-2], got {tol}")
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    sol = solve_ivp(system, (0.0, float(t_end)), y0, method=method,
                    rtol=rel, atol=abs_, dense_output=True, t_eval=t_eval)
    if sol.status != 0:
        raise IntegrationError(f"integrator failed: {sol.message}")
    if not np.all(np.isfinite(sol.y)):
        raise IntegrationError("non-finite state (blow-up)")
    return Trajectory(times=sol.t, states=sol.y.T, tolerances=(rel, abs_),
                      _sol=sol.sol)


@dataclass(frozen=True)
class ForcedOscillatorSpec:
    """u'' + omega^2 u = forcing(t) on [0, 1] with zero initial data."""

    omega: float
    forcing: Callable[[float], float]

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("omega must be positive")


def solution_map(spec: ForcedOscillatorSpec, t: float,
                 abs_tol: float = 1e-12) -> float:
    """Evaluate the oscillator solution map at time t by adaptive quadrature.

    Uses the representation of the solution as an integral of the forcing
    against the oscillator's causal kernel sin(omega (t - tau))/omega.
    """
    w = spec.omega
    f = spec.forcing
    if t == 0.0:
        return 0.0
    val, err, *info = quad(lambda tau: np.sin(w * (t - tau)) / w * f(tau),
                           0.0, t, epsabs=abs_tol, epsrel=abs_tol,
                           limit=200, full_output=1)
    if len(info) > 1:  # explanation message present => convergence trouble
        raise QuadratureError(str(info[1]))
    return float(val)


def oscillator_ivp(spec: ForcedOscillatorSpec,
                   tol: tuple[float, float] = DEFAULT_TOL) -> Trajectory:
    """Solve the same oscillator as a first-order IVP (cross-check route)."""
    w2 = spec.omega**2
    f = spec.forcing

    def rhs(t, y):
        return [y[1], f(t) - w2 * y[0]]

    return integrate_ivp(rhs, [0.0, 0.0], 1.0, tol=tol)


def first_zero(traj: Trajectory, component: int,
               t_exclude: float = FIRST_ZERO_EXCLUDE,
               zero_tol: float = ZERO_TOL) -> Optional[float]:
    """Smallest t* > t_exclude where the component changes sign, or None.

    Scans a refinement of the stored grid on the dense output, then
    bisects with brentq down to |f(t*)| <= zero_tol.
    """
    if not 0 <= component < traj.states.shape[1]:
        raise ValueError("component out of range")

    def f(t):
        return float(traj(t)[component])

    n = max(2001, 8 * len(traj.times))
    ts = np.linspace(t_exclude, traj.t_end, n)
    vals = traj(ts)[:, component]
    if vals[0] <= 0:
        raise ValueError("trajectory not positive after exclusion window")
    sign_change = np.nonzero((vals[:-1] > 0) & (vals[1:] <= 0))[0]
    if sign_change.size == 0:
        return None
    i = int(sign_change[0])
    if vals[i + 1] == 0.0:
        return float(ts[i + 1])
    root = brentq(f, ts[i], ts[i + 1], xtol=1e-15, rtol=1e-15)
    if abs(f(root)) > zero_tol:
        raise IntegrationError("zero refinement did not reach tolerance")
    return float(root)
