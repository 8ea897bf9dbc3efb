"""1-D B-spline refinable functions, framelets and their antiderivatives.

All functions are exact piecewise polynomials represented as
:class:`scipy.interpolate.BSpline` objects on half-integer knots.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.interpolate import BSpline

from .framelet import FilterBank2D, NumericalError

EDGE_TOL = 1e-6


def cardinal_bspline(degree: int) -> BSpline:
    """Cardinal B-spline of ``degree`` supported on ``[0, degree + 1]``."""
    return BSpline.basis_element(np.arange(degree + 2, dtype=float), extrapolate=False)


def framelet_1d(mask, degree: int) -> BSpline:
    """``2 sum_m mask[m] phi(2x - m)`` for the cardinal B-spline ``phi``."""
    mask = np.asarray(mask, dtype=float)
    # pad so the base interval [t[k], t[n]] covers the whole support
    knots = (np.arange(len(mask) + 3 * degree + 1, dtype=float) - degree) / 2.0
    coeffs = np.concatenate([np.zeros(degree), 2.0 * mask, np.zeros(degree)])
    return BSpline(knots, coeffs, degree, extrapolate=False)


def support(spline: BSpline) -> tuple[float, float]:
    return float(spline.t[spline.k]), float(spline.t[len(spline.c)])


class _Antiderivative:
    """Callable ``s``-fold antiderivative of a framelet, zero outside its support."""

    def __init__(self, base: BSpline, s: int):
        self.lo, self.hi = support(base)
        b = BSpline(base.t, base.c, base.k, extrapolate=True)
        self.spline = b.antiderivative(s) if s else b
        edge = abs(float(self.spline(self.hi))) if s else 0.0
        if edge > EDGE_TOL:
            raise NumericalError(
                f"antiderivative of order {s} does not vanish at the support edge ({edge:.3g}); "
                "moment metadata is inconsistent with the mask"
            )
        self.edge_residual = edge

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where((x >= self.lo) & (x <= self.hi), self.spline(np.clip(x, self.lo, self.hi)), 0.0)
        return out


@lru_cache(maxsize=None)
def _factor_functions(name: str, masks, moments, degree):
    return tuple(_Antiderivative(framelet_1d(m, degree), s) for m, s in zip(masks, moments))


def factor_functions(bank: FilterBank2D):
    """Per 1-D factor ``a``: the function ``phi_a`` with ``phi_a^{(s_a)} = psi_a``.

    Factor 0 is the refinable function itself (``psi_0 = phi``).
    """
    return _factor_functions(bank.name, bank.masks_1d, bank.moments_1d, bank.spline_degree)
