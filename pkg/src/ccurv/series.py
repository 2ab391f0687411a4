"""Numerically stable scalar kernels with removable singularities at 0.

Every function here is a ratio whose naive float evaluation suffers
catastrophic cancellation for small arguments (numerators like t - sin t
vanish to high order).  Below ``SERIES_CUTOFF`` each switches to a frozen
Maclaurin polynomial; the retained terms keep the truncation error below
the float noise floor of the direct formula at the cutoff (~1e-13).

Coefficients are exact rationals evaluated to double precision.
"""

from __future__ import annotations

import numpy as np

SERIES_CUTOFF = 0.5


def _even_poly(x, coeffs, start=0):
    """sum coeffs[i] * x**(start + 2i), vectorized, Horner in x**2."""
    x = np.asarray(x, dtype=float)
    x2 = x * x
    acc = np.zeros_like(x)
    for c in reversed(coeffs):
        acc = acc * x2 + c
    if start:
        acc = acc * x**start
    return acc


def _piecewise(x, series, direct):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < SERIES_CUTOFF
    out = np.empty_like(x)
    if small.any():
        out[small] = series(x[small])
    if (~small).any():
        xs = x[~small]
        out[~small] = direct(xs)
    return out if out.ndim else float(out)


# (t - sin t)/t^3
_SINC_DEFECT = [1 / 6, -1 / 120, 1 / 5040, -1 / 362880, 1 / 39916800,
                -1 / 6227020800, 1 / 1307674368000]


def sinc_defect(t):
    return _piecewise(t, lambda x: _even_poly(x, _SINC_DEFECT),
                      lambda x: (x - np.sin(x)) / x**3)


# (t^2 + 2 cos t - 2)/t^4
_COS_DEFECT = [1 / 12, -1 / 360, 1 / 20160, -1 / 1814400, 1 / 239500800,
               -1 / 43589145600, 1 / 10461394944000]


def cos_defect(t):
    return _piecewise(t, lambda x: _even_poly(x, _COS_DEFECT),
                      lambda x: (x * x + 2 * np.cos(x) - 2) / x**4)


# (sin t - t cos t)/t^3
_JACOBI_GAP = [1 / 3, -1 / 30, 1 / 840, -1 / 45360, 1 / 3991680,
               -1 / 518918400, 1 / 93405312000]


def jacobi_gap(t):
    return _piecewise(t, lambda x: _even_poly(x, _JACOBI_GAP),
                      lambda x: (np.sin(x) - x * np.cos(x)) / x**3)


# (sin^2 t - t^2)/t^4
_SIN_SQ_GAP = [-1 / 3, 2 / 45, -1 / 315, 2 / 14175, -2 / 467775,
               4 / 42567525, -1 / 638512875]


def sin_sq_gap(t):
    return _piecewise(t, lambda x: _even_poly(x, _SIN_SQ_GAP),
                      lambda x: (np.sin(x)**2 - x * x) / x**4)


# (cos t sin t - t)/t^3  ==  -4 * sinc_defect(2t)
def cossin_defect(t):
    return -4.0 * sinc_defect(2.0 * np.asarray(t, dtype=float))


# (t - sin t)/(t sin t)
_REL_SIN_GAP = [1 / 6, 7 / 360, 31 / 15120, 127 / 604800, 73 / 3421440,
                1414477 / 653837184000, 8191 / 37362124800]


def rel_sin_gap(t):
    return _piecewise(t, lambda x: _even_poly(x, _REL_SIN_GAP, start=1),
                      lambda x: (x - np.sin(x)) / (x * np.sin(x)))


# (t^2 cos t - sin^2 t)/(t sin^2 t)
_COS_SIN2_GAP = [-1 / 6, -7 / 120, -31 / 3024, -127 / 86400, -73 / 380160,
                 -1414477 / 59439744000, -8191 / 2874009600]


def cos_sin2_gap(t):
    return _piecewise(t, lambda x: _even_poly(x, _COS_SIN2_GAP, start=1),
                      lambda x: (x * x * np.cos(x) - np.sin(x)**2) / (x * np.sin(x)**2))


# (2 cos t - 2 + t sin t)/t^6 + 1/(12 t^2)
_QUARTIC_DEFECT = [1 / 180, -1 / 6720, 1 / 453600, -1 / 47900160,
                   1 / 7264857600, -1 / 1494484992000, 1 / 400148356608000]


def quartic_defect(t):
    return _piecewise(t, lambda x: _even_poly(x, _QUARTIC_DEFECT),
                      lambda x: (2 * np.cos(x) - 2 + x * np.sin(x)) / x**6
                      + 1 / (12 * x * x))


# h1(t)/t^6 with h1 = t^2 + t sin t cos t - 2 sin^2 t
_H1_NORM = [2 / 45, -2 / 315, 2 / 4725, -8 / 467775, 4 / 8513505,
            -2 / 212837625, 2 / 13956067125]


def h1_normalized(t):
    return _piecewise(t, lambda x: _even_poly(x, _H1_NORM),
                      lambda x: (x * x + x * np.sin(x) * np.cos(x)
                                 - 2 * np.sin(x)**2) / x**6)


# h2(t)/t^6 with h2 = (t + sin t cos t) sin t - 2 t^2 cos t
_H2_NORM = [8 / 45, -4 / 105, 19 / 4725, -37 / 133650, 283 / 20638800,
            -3503 / 6810804000, 189169 / 12504636144000]


def h2_normalized(t):
    return _piecewise(t, lambda x: _even_poly(x, _H2_NORM),
                      lambda x: ((x + np.sin(x) * np.cos(x)) * np.sin(x)
                                 - 2 * x * x * np.cos(x)) / x**6)


def osc_kernel_linear(omega):
    """S_omega(t)(1) = (omega - sin omega)/omega^3."""
    return sinc_defect(omega)


def osc_kernel_quadratic(omega):
    """S_omega(t^2)(1) = (omega^2 + 2 cos omega - 2)/omega^4."""
    return cos_defect(omega)


# Maclaurin remainder functions behind the c11..c14 suprema (odd series).
_C11_REM = [8 / 945, 2 / 1575, 16 / 93555, 2764 / 127702575, 16 / 6081075,
            7234 / 23260111875, 1403744 / 38979295480125]
_C12_REM = [4 / 63, 8 / 675, 4 / 2079, 5528 / 19348875, 8 / 200475,
            57872 / 10854718875, 175468 / 254766637125]
_C13_REM = [4 / 945, 2 / 4725, 4 / 93555, 2764 / 638512875, 8 / 18243225,
            7234 / 162820783125, 175468 / 38979295480125]
_C14_REM = [-8 / 189, -4 / 675, -8 / 10395, -5528 / 58046625, -16 / 1403325,
            -14468 / 10854718875, -350936 / 2292899734125]


def c11_remainder(t):
    return _piecewise(
        t, lambda x: _even_poly(x, _C11_REM, start=1),
        lambda x: (x * x + x * np.cos(x) * np.sin(x) - 2 * np.sin(x)**2)
        / (x**5 * np.sin(x)**2) - 2 / (45 * x))


def c12_remainder(t):
    return _piecewise(
        t, lambda x: _even_poly(x, _C12_REM, start=1),
        lambda x: 2 * (np.sin(x) - x * np.cos(x)) / (x**3 * np.sin(x)**3)
        - 2 / (3 * x**3) * (1 + 2 * x * x / 5))


def c13_remainder(t):
    return _piecewise(
        t, lambda x: _even_poly(x, _C13_REM, start=1),
        lambda x: 2 * (np.sin(x) - x * np.cos(x)) / (x**5 * np.sin(x))
        - 2 / (3 * x**3) * (1 + x * x / 15))


def c14_remainder(t):
    return _piecewise(
        t, lambda x: _even_poly(x, _C14_REM, start=1),
        lambda x: 4 * (np.sin(x)**2 - x * x) / (x**5 * np.sin(x)**2)
        + 4 / (3 * x**3) * (1 + x * x / 5))
