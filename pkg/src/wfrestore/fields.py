"""Closed-form test fields on the unit square with exact partial derivatives."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import sympy as sp

from .framelet import ConfigurationError, FilterBank2D

X1, X2 = sp.symbols("x1 x2", real=True)


def _vectorized(f):
    # keeps the input precision (float64 or longdouble); constants broadcast
    def g(x1, x2):
        x1, x2 = np.asarray(x1), np.asarray(x2)
        dt = np.result_type(x1.dtype, x2.dtype, np.float64)
        out = np.asarray(f(x1, x2)).astype(dt, copy=False)
        return np.broadcast_to(out, np.broadcast(x1, x2).shape)

    return g


class SmoothField:
    """A scalar function ``u(x1, x2)`` given by a sympy expression.

    Partials are differentiated symbolically and compiled with
    :func:`sympy.lambdify`; ``partial(a, b)`` is ``d^a/dx1^a d^b/dx2^b u``.
    """

    def __init__(self, expr, name: str | None = None):
        self.expr = sp.sympify(expr, locals={"x1": X1, "x2": X2})
        self.name = name or str(self.expr)
        self._cache = {}

    def __repr__(self):
        return f"SmoothField({self.name!r})"

    def partial(self, a: int = 0, b: int = 0):
        key = (a, b)
        if key not in self._cache:
            e = self.expr
            if a:
                e = sp.diff(e, X1, a)
            if b:
                e = sp.diff(e, X2, b)
            self._cache[key] = _vectorized(sp.lambdify((X1, X2), e, "numpy"))
        return self._cache[key]

    def __call__(self, x1, x2):
        return self.partial(0, 0)(x1, x2)

    def derivative(self, a: int, b: int) -> "SmoothField":
        e = self.expr
        if a:
            e = sp.diff(e, X1, a)
        if b:
            e = sp.diff(e, X2, b)
        return SmoothField(e, f"D{a},{b}[{self.name}]")

    @property
    def is_zero(self) -> bool:
        return self.expr == 0


def zero_field() -> SmoothField:
    return SmoothField(0, "0")


def apply_d_prime(u: SmoothField, bank: FilterBank2D) -> list[SmoothField]:
    """``D'u``: one mixed partial per high-pass band, orders from the band moments."""
    return [u.derivative(*m) for m in bank.band_moments]


# catalog ------------------------------------------------------------------

_SCALAR = {
    "constant": "3/2",
    "affine": "1/4 + 2*x1 - 3*x2",
    "trig": "sin(2*pi*x1)*sin(2*pi*x2)",
    "gauss": "exp(-((x1 - 1/2)**2 + (x2 - 1/2)**2)/(1/50))",
}


def catalog_field(name: str) -> SmoothField:
    if name not in _SCALAR:
        raise ConfigurationError(f"unknown catalog field {name!r}; expected one of {tuple(_SCALAR)}")
    return SmoothField(_SCALAR[name], name)


CATALOG = tuple(_SCALAR)


@lru_cache(maxsize=None)
def _independent_vector_exprs(J: int):
    out = []
    for j in range(J):
        a, b = 1 + j % 3, 1 + (j // 3) % 3
        out.append(f"{(j + 1) / J:.6f}*cos(pi*({a}*x1 + {j}/5))*sin(pi*({b}*x2 + 1/{j + 2}))")
    return tuple(out)


def vector_catalog(name: str, bank: FilterBank2D, u: SmoothField | None = None) -> list[SmoothField]:
    """Vector fields with ``J`` components.

    ``matched`` returns ``D'u`` for the given ``u``; ``independent`` returns a
    fixed family of smooth trigonometric components; ``zero`` the zero field.
    """
    if name == "matched":
        if u is None:
            raise ConfigurationError("matched vector field needs the scalar field u")
        return apply_d_prime(u, bank)
    if name == "independent":
        return [SmoothField(e, f"v{j + 1}") for j, e in enumerate(_independent_vector_exprs(bank.J))]
    if name == "zero":
        return [zero_field() for _ in range(bank.J)]
    raise ConfigurationError(f"unknown vector field {name!r}")
