"""Gauss-curvature fields on a Fermi-chart patch and metric reconstruction.

A field supplies K and its first two coordinate derivatives on the chart
of the probe geodesic (axis x1 = 0).  The Fermi metric G = w^2 is
recovered from K by integrating w'' = -K w off the axis, together with
the variational equation for the x2-derivative of w.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .ode import integrate_ivp

FAMILIES = ("constant", "cosine-bump", "product-wave", "user-table")
W_MIN_DEFAULT = 0.1
_KAPPA0_TOL = 1e-14
_DERIV_CHECK_TOL = 1e-6


class FieldError(ValueError):
    """Invalid family parameters or normalization violation."""


class MetricDegeneracyError(RuntimeError):
    """sqrt(G) fell below the degeneracy guard (focal distance reached)."""


@dataclass(frozen=True)
class Patch:
    x1_max: float
    x2_lo: float
    x2_hi: float


DEFAULT_PATCH = Patch(1.2, -0.2, math.pi + 0.2)


@dataclass(frozen=True)
class FermiMetricSample:
    """sqrt(G) and its first derivatives at one chart point."""

    w: float
    dw_dx1: float
    dw_dx2: float
    location: tuple[float, float]


class CurvatureField:
    """Immutable curvature field with analytic derivative evaluators.

    ``K``, ``dK`` and ``d2K`` accept scalars or arrays (broadcasting);
    ``kappa0`` is the evaluated K at the chart origin.  Construction
    verifies the min K = 1 normalization by dense sampling and checks the
    derivative evaluators against central differences.
    """

    def __init__(self, family: str, amplitude: float, params: dict,
                 evaluators, base: float = 1.0, allow_flat: bool = False,
                 patch: Patch = DEFAULT_PATCH):
        if family not in FAMILIES:
            raise FieldError(f"unknown family {family!r}")
        self.family = family
        self.base = float(base)
        self.amplitude = float(amplitude)
        self.params = dict(params)
        self.patch = patch
        self._K, self._dK, self._d2K = evaluators
        self.allow_flat = bool(allow_flat)
        self.kappa0 = float(self._K(0.0, 0.0))
        self._cache: dict = {}
        self._validate()

    # -- evaluation --------------------------------------------------
    def K(self, x1, x2):
        return self._K(x1, x2)

    def dK(self, x1, x2):
        return self._dK(x1, x2)

    def d2K(self, x1, x2):
        return self._d2K(x1, x2)

    def scalar_evaluators(self):
        """(K, dK, d2K) as fast scalar closures for ODE inner loops."""
        ev = self.cache_get("scalar_ev")
        if ev is None:
            ev = self.cache_set("scalar_ev", _scalarize(self))
        return ev

    def K_max(self, n: int = 200) -> float:
        """Sampled maximum of K over the declared patch."""
        p = self.patch
        x1 = np.linspace(-p.x1_max, p.x1_max, n)
        x2 = np.linspace(p.x2_lo, p.x2_hi, n)
        return float(np.max(self.K(x1[:, None], x2[None, :])))

    def K_min(self, n: int = 200) -> float:
        p = self.patch
        x1 = np.linspace(-p.x1_max, p.x1_max, n)
        x2 = np.linspace(p.x2_lo, p.x2_hi, n)
        return float(np.min(self.K(x1[:, None], x2[None, :])))

    # -- validation --------------------------------------------------
    def _validate(self):
        kmin = self.K_min(128)
        if not self.allow_flat and kmin < 1.0 - 1e-12:
            raise FieldError(f"min K = {kmin} < 1 violates normalization")
        if abs(self.kappa0 - float(self._K(0.0, 0.0))) > _KAPPA0_TOL:
            raise FieldError("kappa0 inconsistent with evaluator at origin")
        rng = np.random.default_rng(0x5EED)
        p = self.patch
        h = 1e-5
        for _ in range(100):
            x1 = rng.uniform(-p.x1_max + 2 * h, p.x1_max - 2 * h)
            x2 = rng.uniform(p.x2_lo + 2 * h, p.x2_hi - 2 * h)
            k1, k2 = (float(v) for v in self.dK(x1, x2))
            fd1 = (float(self.K(x1 + h, x2)) - float(self.K(x1 - h, x2))) / (2 * h)
            fd2 = (float(self.K(x1, x2 + h)) - float(self.K(x1, x2 - h))) / (2 * h)
            if abs(k1 - fd1) > _DERIV_CHECK_TOL or abs(k2 - fd2) > _DERIV_CHECK_TOL:
                raise FieldError("analytic derivatives disagree with differences")

    # -- cached helpers shared across modules ------------------------
    def cache_get(self, key):
        return self._cache.get(key)

    def cache_set(self, key, value):
        self._cache[key] = value
        return value

    def __repr__(self):
        return (f"CurvatureField(family={self.family!r}, kappa0={self.kappa0}, "
                f"amplitude={self.amplitude}, params={self.params})")


def _constant_evaluators(kappa: float):
    def K(x1, x2):
        return np.broadcast_to(np.float64(kappa),
                               np.broadcast(np.asarray(x1), np.asarray(x2)).shape).copy() \
            if (np.ndim(x1) or np.ndim(x2)) else kappa

    def dK(x1, x2):
        z = np.zeros(np.broadcast(np.asarray(x1), np.asarray(x2)).shape)
        return (z, z.copy()) if z.ndim else (0.0, 0.0)

    def d2K(x1, x2):
        z = np.zeros(np.broadcast(np.asarray(x1), np.asarray(x2)).shape)
        return (z, z.copy(), z.copy()) if z.ndim else (0.0, 0.0, 0.0)

    return K, dK, d2K


def _cosine_bump_evaluators(base, amp, k1, k2, phase):
    def arg(x1, x2):
        return k1 * np.asarray(x1) + k2 * np.asarray(x2) + phase

    def K(x1, x2):
        return base + amp * (1 + np.cos(arg(x1, x2))) / 2

    def dK(x1, x2):
        s = -amp / 2 * np.sin(arg(x1, x2))
        return k1 * s, k2 * s

    def d2K(x1, x2):
        c = -amp / 2 * np.cos(arg(x1, x2))
        return k1 * k1 * c, k1 * k2 * c, k2 * k2 * c

    return K, dK, d2K


def _product_wave_evaluators(base, amp, k1, k2, phase):
    def K(x1, x2):
        return base + amp * (1 + np.cos(k1 * np.asarray(x1) + phase)
                             * np.cos(k2 * np.asarray(x2))) / 2

    def dK(x1, x2):
        c1, s1 = np.cos(k1 * np.asarray(x1) + phase), np.sin(k1 * np.asarray(x1) + phase)
        c2, s2 = np.cos(k2 * np.asarray(x2)), np.sin(k2 * np.asarray(x2))
        return -amp / 2 * k1 * s1 * c2, -amp / 2 * k2 * c1 * s2

    def d2K(x1, x2):
        c1, s1 = np.cos(k1 * np.asarray(x1) + phase), np.sin(k1 * np.asarray(x1) + phase)
        c2, s2 = np.cos(k2 * np.asarray(x2)), np.sin(k2 * np.asarray(x2))
        return (-amp / 2 * k1 * k1 * c1 * c2,
                amp / 2 * k1 * k2 * s1 * s2,
                -amp / 2 * k2 * k2 * c1 * c2)

    return K, dK, d2K


def _table_evaluators(x1_nodes, x2_nodes, values):
    spl = RectBivariateSpline(np.asarray(x1_nodes), np.asarray(x2_nodes),
                              np.asarray(values), kx=3, ky=3, s=0)

    def K(x1, x2):
        out = spl.ev(x1, x2)
        return out if np.ndim(out) else float(out)

    def dK(x1, x2):
        return spl.ev(x1, x2, dx=1), spl.ev(x1, x2, dy=1)

    def d2K(x1, x2):
        return (spl.ev(x1, x2, dx=2), spl.ev(x1, x2, dx=1, dy=1),
                spl.ev(x1, x2, dy=2))

    return K, dK, d2K


def _scalarize(field: "CurvatureField"):
    """math-module scalar closures per family (RHS hot-loop speed)."""
    fam, base, amp, p = field.family, field.base, field.amplitude, field.params
    if fam == "constant":
        kap = base
        return (lambda x1, x2: kap,
                lambda x1, x2: (0.0, 0.0),
                lambda x1, x2: (0.0, 0.0, 0.0))
    if fam == "cosine-bump":
        k1, k2 = p.get("wave1", 1.0), p.get("wave2", 1.0)
        ph = p.get("phase", 0.0)

        def K(x1, x2):
            return base + amp * (1 + math.cos(k1 * x1 + k2 * x2 + ph)) / 2

        def dK(x1, x2):
            s = -amp / 2 * math.sin(k1 * x1 + k2 * x2 + ph)
            return k1 * s, k2 * s

        def d2K(x1, x2):
            c = -amp / 2 * math.cos(k1 * x1 + k2 * x2 + ph)
            return k1 * k1 * c, k1 * k2 * c, k2 * k2 * c

        return K, dK, d2K
    if fam == "product-wave":
        k1, k2 = p.get("wave1", 1.0), p.get("wave2", 1.0)
        ph = p.get("phase", 0.0)

        def K(x1, x2):
            return base + amp * (1 + math.cos(k1 * x1 + ph) * math.cos(k2 * x2)) / 2

        def dK(x1, x2):
            return (-amp / 2 * k1 * math.sin(k1 * x1 + ph) * math.cos(k2 * x2),
                    -amp / 2 * k2 * math.cos(k1 * x1 + ph) * math.sin(k2 * x2))

        def d2K(x1, x2):
            c1, s1 = math.cos(k1 * x1 + ph), math.sin(k1 * x1 + ph)
            c2, s2 = math.cos(k2 * x2), math.sin(k2 * x2)
            return (-amp / 2 * k1 * k1 * c1 * c2,
                    amp / 2 * k1 * k2 * s1 * s2,
                    -amp / 2 * k2 * k2 * c1 * c2)

        return K, dK, d2K
    # user-table: spline evaluation, already float-returning
    return (lambda x1, x2: float(field._K(x1, x2)),
            lambda x1, x2: tuple(float(v) for v in field._dK(x1, x2)),
            lambda x1, x2: tuple(float(v) for v in field._d2K(x1, x2)))


def make_field(family: str, kappa0: float = 1.0, amplitude: float = 0.0,
               params: Optional[dict] = None, allow_flat: bool = False,
               patch: Patch = DEFAULT_PATCH) -> CurvatureField:
    """Build a curvature field.

    ``kappa0`` is the base level (the min of K for the perturbed
    families); perturbations enter as K = base + amplitude*(1 + p(x))/2
    with |p| <= 1, so min K = base is enforced by construction.
    """
    params = dict(params or {})
    if amplitude < 0:
        raise FieldError("amplitude must be nonnegative")
    if family == "constant":
        ev = _constant_evaluators(kappa0)
    elif family == "cosine-bump":
        ev = _cosine_bump_evaluators(kappa0, amplitude,
                                     params.get("wave1", 1.0),
                                     params.get("wave2", 1.0),
                                     params.get("phase", 0.0))
    elif family == "product-wave":
        ev = _product_wave_evaluators(kappa0, amplitude,
                                      params.get("wave1", 1.0),
                                      params.get("wave2", 1.0),
                                      params.get("phase", 0.0))
    elif family == "user-table":
        try:
            ev = _table_evaluators(params["x1_nodes"], params["x2_nodes"],
                                   params["values"])
        except KeyError as e:
            raise FieldError(f"user-table requires {e} in params") from e
    else:
        raise FieldError(f"unknown family {family!r}")
    return CurvatureField(family, amplitude, params, ev, base=kappa0,
                          allow_flat=allow_flat, patch=patch)


# ---------------------------------------------------------------- config IO

_CONFIG_KEYS = ("family", "kappa0", "amplitude", "wave1", "wave2", "phase")


def parse_field_config(text: str) -> dict:
    """Parse UTF-8 key=value lines into a config dict (# starts a comment)."""
    cfg: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FieldError(f"line {lineno}: expected key=value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise FieldError(f"line {lineno}: unknown key {key!r}")
        cfg[key] = val if key == "family" else float(val)
    if "family" not in cfg:
        raise FieldError("config missing 'family'")
    return cfg


def field_from_config(cfg: dict, allow_flat: bool = False) -> CurvatureField:
    params = {k: cfg[k] for k in ("wave1", "wave2", "phase") if k in cfg}
    return make_field(cfg["family"], kappa0=cfg.get("kappa0", 1.0),
                      amplitude=cfg.get("amplitude", 0.0), params=params,
                      allow_flat=allow_flat)


def load_field(path, allow_flat: bool = False) -> CurvatureField:
    with open(path, encoding="utf-8") as fh:
        return field_from_config(parse_field_config(fh.read()),
                                 allow_flat=allow_flat)


def canonical_config(field: CurvatureField) -> str:
    """Deterministic key=value serialization used for manifests."""
    lines = [f"family={field.family}",
             f"kappa0={field.base!r}",
             f"amplitude={field.amplitude!r}"]
    for k in ("wave1", "wave2", "phase"):
        if k in field.params:
            lines.append(f"{k}={field.params[k]!r}")
    return "\n".join(lines) + "\n"


# ------------------------------------------------- metric reconstruction

def _column_rhs(field: CurvatureField, x2_vals: np.ndarray):
    """RHS for simultaneous w-columns at fixed x2 values, state (w,w',u,u')."""
    n = len(x2_vals)

    def rhs(s, y):
        w, wp = y[0:n], y[n:2 * n]
        u, up = y[2 * n:3 * n], y[3 * n:4 * n]
        K = field.K(s, x2_vals)
        K2 = field.dK(s, x2_vals)[1]
        return np.concatenate([wp, -K * w, up, -K2 * w - K * u])

    return rhs


def reconstruct_metric(field: CurvatureField, x2: float, x1: float,
                       w_min: float = W_MIN_DEFAULT,
                       tol: tuple[float, float] = (1e-12, 1e-14)
                       ) -> FermiMetricSample:
    """Integrate w'' = -K w from the axis to (x1, x2).

    Also carries the variational equation for the x2-derivative of w.
    Raises MetricDegeneracyError when w drops to w_min on the way.
    """
    if x1 == 0.0:
        return FermiMetricSample(1.0, 0.0, 0.0, (0.0, float(x2)))
    x2v = np.array([float(x2)])
    rhs = _column_rhs(field, x2v)
    sign = 1.0 if x1 > 0 else -1.0

    def scalar_rhs(s, y):
        return sign * rhs(sign * s, y)

    y0 = np.array([1.0, 0.0, 0.0, 0.0])
    traj = integrate_ivp(scalar_rhs, y0, abs(x1), tol=tol)
    if np.min(traj.states[:, 0]) <= w_min:
        raise MetricDegeneracyError(
            f"w <= {w_min} before reaching x1={x1} at x2={x2}")
    w, wp, u, _ = traj.final
    return FermiMetricSample(float(w), float(sign * wp), float(u),
                             (float(x1), float(x2)))


class MetricTable:
    """Bicubic-spline evaluator for G = w^2 and its first derivatives.

    Built once per field and region: each x2-column of (w, dw/dx1, dw/dx2)
    is an exact ODE solve sampled on the x1 grid; splines only interpolate
    between solved values (error O(h^4), ~1e-12 at the default spacing).
    """

    def __init__(self, field: CurvatureField, x1_extent: float,
                 x2_lo: float, x2_hi: float, h1: float = 0.003,
                 h2: float = 0.0075, w_min: float = W_MIN_DEFAULT,
                 tol: tuple[float, float] = (1e-12, 1e-14)):
        n1 = 2 * max(4, int(math.ceil(x1_extent / h1))) + 1
        n2 = max(8, int(math.ceil((x2_hi - x2_lo) / h2))) + 1
        x1g = np.linspace(-x1_extent, x1_extent, n1)
        x2g = np.linspace(x2_lo, x2_hi, n2)
        W = np.empty((n2, n1))
        W1 = np.empty_like(W)
        W2 = np.empty_like(W)
        rhs = _column_rhs(field, x2g)
        y0 = np.zeros(4 * n2)
        y0[0:n2] = 1.0
        mid = n1 // 2
        for sign, idx in ((1.0, range(mid, n1)), (-1.0, range(mid, -1, -1))):
            cols = np.fromiter(idx, dtype=int)
            tev = np.abs(x1g[cols])

            def oriented(s, y, sign=sign):
                return sign * rhs(sign * s, y)

            traj = integrate_ivp(oriented, y0, tev[-1], tol=tol, t_eval=tev)
            W[:, cols] = traj.states[:, 0:n2].T
            W1[:, cols] = sign * traj.states[:, n2:2 * n2].T
            W2[:, cols] = traj.states[:, 2 * n2:3 * n2].T
        if np.min(W) <= w_min:
            raise MetricDegeneracyError("metric degenerates inside table region")
        self.x1_extent = x1_extent
        self.x2_lo, self.x2_hi = x2_lo, x2_hi
        self.w_min = w_min
        self._sw = RectBivariateSpline(x2g, x1g, W, kx=3, ky=3, s=0)
        self._sw1 = RectBivariateSpline(x2g, x1g, W1, kx=3, ky=3, s=0)
        self._sw2 = RectBivariateSpline(x2g, x1g, W2, kx=3, ky=3, s=0)

    def contains(self, x1: float, x2: float) -> bool:
        return (abs(x1) <= self.x1_extent and
                self.x2_lo <= x2 <= self.x2_hi)

    def christoffels(self, x1: float, x2: float) -> tuple[float, float, float]:
        """(Gamma^1_22, Gamma^2_12, Gamma^2_22) at a chart point."""
        if not self.contains(x1, x2):
            raise MetricDegeneracyError(
                f"point ({x1}, {x2}) outside metric table region")
        w = self._sw(x2, x1)[0, 0]
        if w <= self.w_min:
            raise MetricDegeneracyError(f"w <= {self.w_min} at ({x1}, {x2})")
        w1 = self._sw1(x2, x1)[0, 0]
        w2 = self._sw2(x2, x1)[0, 0]
        G = w * w
        dG1 = 2 * w * w1
        dG2 = 2 * w * w2
        return -0.5 * dG1, dG1 / (2 * G), dG2 / (2 * G)

    def g22(self, x1: float, x2: float) -> float:
        w = self._sw(x2, x1)[0, 0]
        return w * w


def metric_table_for(field: CurvatureField, x1_extent: float,
                     x2_lo: float, x2_hi: float, **kw) -> MetricTable:
    """Field-cached MetricTable covering at least the requested region."""
    key = ("table", round(x1_extent, 6), round(x2_lo, 6), round(x2_hi, 6))
    cached = field.cache_get(key)
    if cached is None:
        cached = field.cache_set(
            key, MetricTable(field, x1_extent, x2_lo, x2_hi, **kw))
    return cached


# ------------------------------------------------------------- C^2 norm

def c2_norm_estimate(field: CurvatureField,
                     patch: Optional[Patch] = None,
                     grid: tuple[int, int] = (48, 48),
                     w_min: float = W_MIN_DEFAULT) -> float:
    """Sampled sup of |K-1| + |dK|_g + |Hess K|_g over the patch.

    The covariant Hessian is assembled from the coordinate second
    derivatives and the Fermi-chart Christoffel symbols; tensor norms use
    the metric diag(1, G).  Non-decreasing under nested grid refinement.
    """
    patch = patch or field.patch
    n1, n2 = grid
    if n1 < 32 or n2 < 32:
        raise ValueError("grid must be at least 32x32")
    x1s = np.linspace(-patch.x1_max, patch.x1_max, n1)
    x2s = np.linspace(patch.x2_lo, patch.x2_hi, n2)
    rhs = _column_rhs(field, x2s)
    y0 = np.zeros(4 * n2)
    y0[0:n2] = 1.0
    W = np.empty((n2, n1))
    W1 = np.empty_like(W)
    W2 = np.empty_like(W)
    pos = x1s >= 0
    neg = x1s <= 0
    for sign, mask in ((1.0, pos), (-1.0, neg)):
        tev = np.abs(x1s[mask])
        order = np.argsort(tev)

        def oriented(s, y, sign=sign):
            return sign * rhs(sign * s, y)

        traj = integrate_ivp(oriented, y0, tev[order][-1], tol=(1e-11, 1e-13),
                             t_eval=tev[order])
        cols = np.nonzero(mask)[0][order]
        W[:, cols] = traj.states[:, 0:n2].T
        W1[:, cols] = sign * traj.states[:, n2:2 * n2].T
        W2[:, cols] = traj.states[:, 2 * n2:3 * n2].T
    if np.min(W) <= w_min:
        raise MetricDegeneracyError("patch exits metric validity (w <= w_min)")

    X1 = np.broadcast_to(x1s[None, :], W.shape)
    X2 = np.broadcast_to(x2s[:, None], W.shape)
    K = field.K(X1, X2)
    K1, K2 = field.dK(X1, X2)
    K11, K12, K22 = field.d2K(X1, X2)
    K = np.broadcast_to(K, W.shape)
    G = W * W
    dG1 = 2 * W * W1
    dG2 = 2 * W * W2
    gam122 = -0.5 * dG1
    gam212 = dG1 / (2 * G)
    gam222 = dG2 / (2 * G)
    H11 = K11
    H12 = K12 - gam212 * K2
    H22 = K22 - gam122 * K1 - gam222 * K2
    grad = np.sqrt(K1**2 + K2**2 / G)
    hess = np.sqrt(H11**2 + 2 * H12**2 / G + H22**2 / G**2)
    total = np.abs(K - 1.0) + grad + hess
    return float(np.max(total))


def c2_norm_cached(field: CurvatureField) -> float:
    """Default-patch C^2 norm, cached on the field."""
    eps = field.cache_get("c2norm")
    if eps is None:
        eps = field.cache_set("c2norm", c2_norm_estimate(field))
    return eps
