"""Degradation operators ``A``: identity, periodic blur and inpainting mask.

Each operator provides ``apply``, its ``adjoint`` and ``normal_solve``, the
exact inverse of ``A^T A + mu I`` used by the ADMM ``u``-update.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .framelet import ConfigurationError, Filter2D
from .imageio import read_pgm

KINDS = ("identity", "blur", "mask")


@dataclass(frozen=True, eq=False)
class DegradationOp:
    """Linear operator on images of a fixed ``shape``.

    ``blur`` is periodic convolution with ``kernel`` (its ``origin`` tap sits
    on the output pixel) and ``mask`` multiplies by a boolean ``indicator``
    where ``True`` marks an observed pixel.
    """

    kind: str
    shape: tuple[int, int]
    kernel: Filter2D | None = None
    indicator: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown operator kind {self.kind!r}; expected one of {KINDS}")
        shape = tuple(int(s) for s in self.shape)
        if len(shape) != 2 or min(shape) < 1:
            raise ValueError(f"invalid image shape {self.shape}")
        object.__setattr__(self, "shape", shape)
        if self.kind == "blur":
            if self.kernel is None:
                raise ValueError("blur operator needs a kernel")
            kh, kw = self.kernel.coeffs.shape
            if kh > shape[0] or kw > shape[1]:
                raise ValueError(f"kernel {kh}x{kw} larger than image {shape}")
            object.__setattr__(self, "_otf", _transfer_function(self.kernel, shape))
        if self.kind == "mask":
            if self.indicator is None:
                raise ValueError("mask operator needs an indicator array")
            ind = np.asarray(self.indicator, dtype=bool).copy()
            if ind.shape != shape:
                raise ValueError(f"mask shape {ind.shape} differs from image shape {shape}")
            ind.setflags(write=False)
            object.__setattr__(self, "indicator", ind)

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != self.shape:
            raise ValueError(f"expected image of shape {self.shape}, got {x.shape}")
        return x

    def apply(self, u) -> np.ndarray:
        u = self._check(u)
        if self.kind == "identity":
            return u.copy()
        if self.kind == "mask":
            return np.where(self.indicator, u, 0.0)
        return np.fft.ifft2(self._otf * np.fft.fft2(u)).real

    def adjoint(self, y) -> np.ndarray:
        y = self._check(y)
        if self.kind == "blur":
            return np.fft.ifft2(np.conj(self._otf) * np.fft.fft2(y)).real
        return self.apply(y)

    def normal(self, x) -> np.ndarray:
        """``A^T A x``."""
        return self.adjoint(self.apply(x))

    def normal_solve(self, mu: float, rhs) -> np.ndarray:
        """Solve ``(A^T A + mu I) x = rhs``."""
        if not mu > 0:
            raise ValueError(f"mu must be positive, got {mu}")
        rhs = self._check(rhs)
        if self.kind == "identity":
            return rhs / (1.0 + mu)
        if self.kind == "mask":
            return rhs / (self.indicator + mu)
        return np.fft.ifft2(np.fft.fft2(rhs) / (np.abs(self._otf) ** 2 + mu)).real

    def norm_squared(self) -> float:
        """``||A||_2^2``."""
        if self.kind == "blur":
            return float(np.max(np.abs(self._otf)) ** 2)
        if self.kind == "mask":
            return float(np.any(self.indicator))
        return 1.0


def _transfer_function(kernel: Filter2D, shape) -> np.ndarray:
    # place tap (o1, o2) at pixel offset (o1, o2) modulo the image size
    psf = np.zeros(shape)
    for o1, o2, val in kernel.taps():
        psf[o1 % shape[0], o2 % shape[1]] += val
    return np.fft.fft2(psf)


def identity(shape) -> DegradationOp:
    return DegradationOp("identity", shape)


def blur(kernel, shape, origin=None) -> DegradationOp:
    """Periodic blur; a bare array kernel is centred (origin at ``size // 2``)."""
    if not isinstance(kernel, Filter2D):
        k = np.asarray(kernel, dtype=float)
        if k.ndim != 2:
            raise ValueError("kernel must be 2-D")
        kernel = Filter2D(k, origin if origin is not None else (k.shape[0] // 2, k.shape[1] // 2))
    return DegradationOp("blur", shape, kernel=kernel)


def mask(indicator) -> DegradationOp:
    ind = np.asarray(indicator, dtype=bool)
    return DegradationOp("mask", ind.shape, indicator=ind)


def box_kernel(size: int = 5) -> np.ndarray:
    return np.full((size, size), 1.0 / size**2)


def gaussian_kernel(size: int = 5, sigma: float = 1.0) -> np.ndarray:
    t = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(t**2) / (2 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def load_kernel(path, normalize: bool = True) -> np.ndarray:
    """Whitespace-separated grid, one row per line; normalized to sum 1 by default."""
    try:
        k = np.loadtxt(path, dtype=float, ndmin=2)
    except ValueError as exc:
        raise ValueError(f"{path}: malformed kernel file ({exc})") from None
    if k.size == 0 or not np.all(np.isfinite(k)):
        raise ValueError(f"{path}: kernel must be a non-empty finite grid")
    if normalize:
        s = k.sum()
        if s == 0:
            raise ValueError(f"{path}: kernel sums to zero and cannot be normalized")
        k = k / s
    return k


def load_mask(path) -> np.ndarray:
    """Observed-pixel indicator from a PGM where value 0 marks a missing pixel."""
    return read_pgm(path) != 0
