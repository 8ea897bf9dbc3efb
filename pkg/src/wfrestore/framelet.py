"""Tensor-product B-spline tight framelet filter banks and undecimated transforms.

Conventions
-----------
* Images are 2-D arrays indexed ``u[k1, k2]``; axis 0 carries the first
  continuum coordinate ``x1`` and axis 1 the second coordinate ``x2``.
* A mask ``q`` listed as ``[q0, q1, ...]`` has its origin at the first entry,
  so tap ``m`` sits at integer offset ``m``.
* Analysis is periodic correlation, ``(q[-.] (*) u)[k] = sum_m q[m] u[k + m]``.
* Tensor bands are ordered row-major over ``(a, b)`` (axis-0 factor first)
  with the pure low-pass band ``(0, 0)`` first.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import mpmath
import numpy as np

# masks of the 1-D systems: (refinement mask, high-pass masks, B-spline degree)
_ONE_D_SYSTEMS = {
    "haar": (
        [0.5, 0.5],
        [[0.5, -0.5]],
        0,
    ),
    "linear": (
        [0.25, 0.5, 0.25],
        [
            [np.sqrt(2.0) / 4.0, 0.0, -np.sqrt(2.0) / 4.0],
            [-0.25, 0.5, -0.25],
        ],
        1,
    ),
}

BANK_NAMES = tuple(_ONE_D_SYSTEMS)


class ConfigurationError(ValueError):
    """Unknown bank, variant or otherwise invalid configuration."""


class NumericalError(ArithmeticError):
    """A numerical procedure failed to converge or produced non-finite values."""


@dataclass(frozen=True)
class Filter2D:
    """A finitely supported 2-D mask.

    ``origin`` is the grid index that holds the tap at offset ``(0, 0)``;
    ``moments`` are the per-axis vanishing-moment orders ``(s1, s2)``.
    """

    coeffs: np.ndarray
    origin: tuple[int, int] = (0, 0)
    moments: tuple[int, int] = (0, 0)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != 2 or c.size == 0:
            raise ValueError("filter coefficients must be a non-empty 2-D grid")
        if not np.all(np.isfinite(c)):
            raise ValueError("filter coefficients must be finite")
        o = tuple(int(x) for x in self.origin)
        if not (0 <= o[0] < c.shape[0] and 0 <= o[1] < c.shape[1]):
            raise ValueError(f"origin {o} outside support of shape {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "moments", tuple(int(s) for s in self.moments))

    @property
    def order(self) -> int:
        return self.moments[0] + self.moments[1]

    def taps(self):
        """Yield ``(offset1, offset2, value)`` for every nonzero tap."""
        for i, j in zip(*np.nonzero(self.coeffs)):
            yield int(i) - self.origin[0], int(j) - self.origin[1], float(self.coeffs[i, j])

    def offsets(self) -> tuple[np.ndarray, np.ndarray]:
        k1 = np.arange(self.coeffs.shape[0]) - self.origin[0]
        k2 = np.arange(self.coeffs.shape[1]) - self.origin[1]
        return k1, k2

    def symbol(self, xi1, xi2):
        """Fourier series ``sum_k q[k] exp(-i k.xi)`` on broadcastable arrays."""
        k1, k2 = self.offsets()
        e1 = np.exp(-1j * np.multiply.outer(np.asarray(xi1, dtype=float), k1))
        e2 = np.exp(-1j * np.multiply.outer(np.asarray(xi2, dtype=float), k2))
        return np.einsum("...a,ab,...b->...", e1, self.coeffs, e2)

    def moment(self, a: int, b: int) -> float:
        k1, k2 = self.offsets()
        return float(np.einsum("a,ab,b->", k1.astype(float) ** a, self.coeffs, k2.astype(float) ** b))

    def scaled(self, factor: float) -> "Filter2D":
        return Filter2D(self.coeffs * factor, self.origin, self.moments)


def vanishing_moments_1d(mask: Sequence[float], tol: float = 1e-12) -> int:
    """Number of leading discrete moments of ``mask`` that vanish."""
    k = np.arange(len(mask), dtype=float)
    s = 0
    while abs(np.dot(np.asarray(mask, dtype=float), k**s)) <= tol:
        s += 1
        if s > len(mask):
            raise ValueError("mask has no nonzero moment")
    return s


@dataclass(frozen=True)
class FilterBank2D:
    """Low-pass filter plus ``J`` high-pass filters of a tensor B-spline system.

    ``band_constants[j-1]`` is ``c_j`` and ``cross_constants[i-1, j-1]`` is
    ``c_ij`` (both computed from symbol limits). ``pairs[j]`` records the 1-D
    factor indices ``(a, b)`` of band ``j`` (``pairs[0] == (0, 0)``).
    """

    name: str
    lowpass: Filter2D
    highpass: tuple[Filter2D, ...]
    band_constants: np.ndarray
    cross_constants: np.ndarray
    diff_orders: tuple[int, ...]
    pairs: tuple[tuple[int, int], ...]
    masks_1d: tuple[tuple[float, ...], ...]
    moments_1d: tuple[int, ...]
    spline_degree: int

    @property
    def J(self) -> int:
        return len(self.highpass)

    @property
    def filters(self) -> tuple[Filter2D, ...]:
        return (self.lowpass,) + tuple(self.highpass)

    @property
    def band_moments(self) -> tuple[tuple[int, int], ...]:
        return tuple(f.moments for f in self.highpass)

    def lambda_prime(self, n: int) -> np.ndarray:
        """Weights ``c_j^{-1} (-1)^{s_j} 2^{(n-1) s_j}`` of the weighted transform."""
        s = np.array(self.diff_orders)
        return (-1.0) ** s * 2.0 ** ((n - 1) * s) / self.band_constants

    def lambda_doubleprime(self, n: int, exponent_offset: int = 1) -> np.ndarray:
        """``J x J`` weights ``c_ij^{-1} (-1)^{s_i} 2^{(n-offset) s_i}``.

        ``exponent_offset=1`` is the choice under which the weighted second
        transform of ``S_n v`` converges to ``D_i v_j``; ``2`` reproduces the
        alternative exponent and is kept for comparison studies.
        """
        s = np.array(self.diff_orders)[:, None]
        return (-1.0) ** s * 2.0 ** ((n - exponent_offset) * s) / self.cross_constants


@dataclass
class CoefficientStack:
    """Bands of an undecimated transform, all of the input image's shape."""

    labels: tuple
    data: np.ndarray
    level_count: int = 1

    def __post_init__(self):
        self.data = _as_real(self.data)
        self.labels = tuple(self.labels)
        if self.data.ndim != 3 or self.data.shape[0] != len(self.labels):
            raise ValueError("data must be (bands, rows, cols) with one label per band")

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[1:]

    def __len__(self):
        return len(self.labels)

    def band(self, label) -> np.ndarray:
        return self.data[self.labels.index(label)]

    def like(self, data) -> "CoefficientStack":
        return CoefficientStack(self.labels, data, self.level_count)


def _as_real(a) -> np.ndarray:
    # float64 unless the caller already works in extended precision
    a = np.asarray(a)
    return a if a.dtype == np.longdouble else a.astype(float, copy=False)


# ---------------------------------------------------------------------------
# symbol limits

_MP_DPS = 60


def _mp_symbol_1d(mask, omega):
    return mpmath.fsum(mpmath.mpf(float(q)) * mpmath.exp(-1j * k * omega) for k, q in enumerate(mask) if q != 0)


def _mp_symbol_2d(filt: Filter2D, w1, w2):
    total = mpmath.mpc(0)
    for o1, o2, val in filt.taps():
        total += mpmath.mpf(val) * mpmath.exp(-1j * (o1 * w1 + o2 * w2))
    return total


def _richardson_limit(values, what: str, rel_tol: float = 1e-6, depth: int = 4):
    """Extrapolate ``values[m] = L + a1 h_m + a2 h_m^2 + ...`` with ``h_m`` halving.

    Returns the extrapolated limit; the relative spread of the deepest
    Richardson column must stay below ``rel_tol``.
    """
    col = list(values)
    for r in range(1, depth + 1):
        f = mpmath.mpf(2) ** r
        col = [(f * col[i + 1] - col[i]) / (f - 1) for i in range(len(col) - 1)]
    est = [complex(c) for c in col]
    mean = np.mean(est)
    spread = max(abs(e - mean) for e in est)
    if not np.isfinite(mean) or abs(mean) == 0 or spread > rel_tol * abs(mean):
        raise NumericalError(f"{what}: symbol limit did not converge (spread {spread:.3g})")
    if abs(mean.imag) > 1e-9 * abs(mean):
        raise NumericalError(f"{what}: symbol limit is not real ({mean})")
    return float(est[-1].real)


_M_RANGE = range(8, 17)


def compute_band_constant(filt: Filter2D) -> tuple[float, tuple[int, int]]:
    """Return ``(c, s)``: ``c`` is the integral of the function ``phi`` with
    ``D^s phi = psi`` for the framelet ``psi`` generated by ``filt``.

    With ``psi_hat(xi) = q_hat(xi/2) phi_hat(xi/2)`` and ``phi_hat(0) = 1`` this
    is the limit of ``q_hat(w) / (2 i w)^s`` as ``w -> 0``, evaluated along
    ``w = 2^-m (1, 1)`` for ``m = 8..16`` in extended precision and
    Richardson-extrapolated.
    """
    s1, s2 = filt.moments
    if s1 + s2 == 0:
        raise ValueError("band constant requires a high-pass filter (nonzero moment vector)")
    vals = []
    with mpmath.workdps(_MP_DPS):
        for m in _M_RANGE:
            w = mpmath.mpf(2) ** (-m)
            ratio = _mp_symbol_2d(filt, w, w) / ((2j * w) ** s1 * (2j * w) ** s2)
            vals.append(ratio)
        c = _richardson_limit(vals, "band constant")
    return c, (s1, s2)


def _bspline_hat_1d(degree: int, xi):
    # Fourier transform of the B-spline of the given degree supported on [0, degree + 1]
    if xi == 0:
        return mpmath.mpf(1)
    return ((1 - mpmath.exp(-1j * xi)) / (1j * xi)) ** (degree + 1)


def _framelet_factor_hat(mask, s: int, degree: int, xi):
    """Fourier transform of the 1-D function whose s-th derivative is the framelet."""
    return _mp_symbol_1d(mask, xi / 2) * _bspline_hat_1d(degree, xi / 2) / (1j * xi) ** s


def compute_cross_constant(bank_masks, pair_i, pair_j, moments_1d, degree, c_j) -> float:
    """Limit of ``q_hat_i(xi/2) (c_j^{-1} phi_j)^(xi) / (i xi)^{s_i}`` at ``xi -> 0``."""
    a_i, b_i = pair_i
    a_j, b_j = pair_j
    s1, s2 = moments_1d[a_i], moments_1d[b_i]
    vals = []
    with mpmath.workdps(_MP_DPS):
        for m in _M_RANGE:
            x = mpmath.mpf(2) ** (-m)
            qi = _mp_symbol_1d(bank_masks[a_i], x / 2) * _mp_symbol_1d(bank_masks[b_i], x / 2)
            phij = _framelet_factor_hat(bank_masks[a_j], moments_1d[a_j], degree, x) * _framelet_factor_hat(
                bank_masks[b_j], moments_1d[b_j], degree, x
            )
            vals.append(qi * phij / (mpmath.mpf(c_j) * (1j * x) ** s1 * (1j * x) ** s2))
        return _richardson_limit(vals, "cross constant")


def build_bank(name: str) -> FilterBank2D:
    """Tensor-product bank of the named 1-D UEP system (``haar`` or ``linear``).

    Banks are immutable and cached per name.
    """
    if name not in _ONE_D_SYSTEMS:
        raise ConfigurationError(f"unknown filter bank {name!r}; expected one of {BANK_NAMES}")
    return _build_bank(name)


@lru_cache(maxsize=None)
def _build_bank(name: str) -> FilterBank2D:
    p, qs, degree = _ONE_D_SYSTEMS[name]
    masks = (tuple(p),) + tuple(tuple(q) for q in qs)
    moments = (0,) + tuple(vanishing_moments_1d(q) for q in qs)
    n1 = len(masks)
    pairs = tuple((a, b) for a in range(n1) for b in range(n1))
    filters = [
        Filter2D(np.outer(masks[a], masks[b]), (0, 0), (moments[a], moments[b])) for a, b in pairs
    ]
    high = tuple(filters[1:])
    consts = np.array([compute_band_constant(f)[0] for f in high])
    J = len(high)
    cross = np.empty((J, J))
    for i in range(J):
        for j in range(J):
            cross[i, j] = compute_cross_constant(masks, pairs[i + 1], pairs[j + 1], moments, degree, consts[j])
    consts.setflags(write=False)
    cross.setflags(write=False)
    return FilterBank2D(
        name=name,
        lowpass=filters[0],
        highpass=high,
        band_constants=consts,
        cross_constants=cross,
        diff_orders=tuple(f.order for f in high),
        pairs=pairs,
        masks_1d=masks,
        moments_1d=moments,
        spline_degree=degree,
    )


def replace_highpass(bank: FilterBank2D, index: int, filt: Filter2D) -> FilterBank2D:
    """Copy of ``bank`` with high-pass filter ``index`` (0-based) swapped out."""
    high = list(bank.highpass)
    high[index] = filt
    return FilterBank2D(
        bank.name, bank.lowpass, tuple(high), bank.band_constants, bank.cross_constants,
        bank.diff_orders, bank.pairs, bank.masks_1d, bank.moments_1d, bank.spline_degree,
    )


def verify_uep(bank: FilterBank2D, grid_points: int = 64) -> float:
    """Largest violation of the two unitary-extension identities on a
    ``grid_points x grid_points`` frequency grid over ``[-pi, pi]^2``."""
    if grid_points < 8:
        raise ValueError("grid_points must be at least 8")
    xi = np.linspace(-np.pi, np.pi, grid_points)
    x1, x2 = np.meshgrid(xi, xi, indexing="ij")
    hats = np.array([f.symbol(x1, x2) for f in bank.filters])
    resid = np.max(np.abs(np.sum(np.abs(hats) ** 2, axis=0) - 1.0))
    for nu in ((np.pi, 0.0), (0.0, np.pi), (np.pi, np.pi)):
        shifted = np.array([f.symbol(x1 + nu[0], x2 + nu[1]) for f in bank.filters])
        resid = max(resid, np.max(np.abs(np.sum(hats * np.conj(shifted), axis=0))))
    return float(resid)


# ---------------------------------------------------------------------------
# transforms


def correlate(u: np.ndarray, filt: Filter2D, dilation: int = 1) -> np.ndarray:
    """Periodic ``sum_m q[m] u[k + dilation * m]``."""
    out = np.zeros(u.shape, dtype=np.result_type(u, np.float64))
    for o1, o2, val in filt.taps():
        out += val * np.roll(u, (-dilation * o1, -dilation * o2), axis=(0, 1))
    return out


def correlate_adjoint(y: np.ndarray, filt: Filter2D, dilation: int = 1) -> np.ndarray:
    """Adjoint of :func:`correlate` (periodic convolution)."""
    out = np.zeros(y.shape, dtype=np.result_type(y, np.float64))
    for o1, o2, val in filt.taps():
        out += val * np.roll(y, (dilation * o1, dilation * o2), axis=(0, 1))
    return out


def band_labels(bank: FilterBank2D, levels: int) -> tuple:
    L = levels - 1
    labels = [(j, l) for l in range(levels) for j in range(1, bank.J + 1)]
    labels.append((0, L))
    return tuple(labels)


def analyze(image, bank: FilterBank2D, levels: int = 1) -> CoefficientStack:
    """Undecimated ``levels``-level frame decomposition with periodic boundary.

    Level ``l`` correlates the previous low-pass output with the filters
    upsampled by ``2^l``. Band order: high-pass bands of level 0, level 1, ...,
    then the final low-pass band ``(0, levels - 1)``.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    u = np.asarray(image, dtype=float)
    if u.ndim != 2 or u.size == 0:
        raise ValueError("image must be a non-empty 2-D array")
    bands = []
    coarse = u
    for l in range(levels):
        dil = 2**l
        for f in bank.highpass:
            bands.append(correlate(coarse, f, dil))
        coarse = correlate(coarse, bank.lowpass, dil)
    bands.append(coarse)
    return CoefficientStack(band_labels(bank, levels), np.array(bands), levels)


def synthesize(stack: CoefficientStack, bank: FilterBank2D) -> np.ndarray:
    """Adjoint ``W^T`` of :func:`analyze`; inverts it for UEP banks."""
    levels = stack.level_count
    if len(stack) != bank.J * levels + 1:
        raise ValueError(
            f"stack has {len(stack)} bands; bank {bank.name!r} with {levels} levels needs {bank.J * levels + 1}"
        )
    data = stack.data
    coarse = data[-1]
    for l in reversed(range(levels)):
        dil = 2**l
        out = correlate_adjoint(coarse, bank.lowpass, dil)
        for j, f in enumerate(bank.highpass):
            out += correlate_adjoint(data[l * bank.J + j], f, dil)
        coarse = out
    return coarse


def analyze_full(u, bank: FilterBank2D) -> np.ndarray:
    """Single-level transform as a ``(J+1, rows, cols)`` array, low-pass first."""
    u = np.asarray(u, dtype=float)
    return np.array([correlate(u, f) for f in bank.filters])


def synthesize_full(coeffs, bank: FilterBank2D) -> np.ndarray:
    """Adjoint of :func:`analyze_full`."""
    out = np.zeros(coeffs.shape[1:])
    for c, f in zip(coeffs, bank.filters):
        out += correlate_adjoint(c, f)
    return out


def _check_resolution(shape, n: int):
    if n < 1:
        raise ValueError("resolution n must be >= 1")
    if tuple(shape) != (2**n, 2**n):
        raise ValueError(f"image of shape {tuple(shape)} does not match resolution n={n} (side {2**n})")


def weighted_analyze_prime(u, bank: FilterBank2D, n: int) -> CoefficientStack:
    """Weighted single-level transform: band ``j`` is ``lambda'_j (q_j[-.] (*) u)``."""
    u = _as_real(u)
    _check_resolution(u.shape, n)
    lam = bank.lambda_prime(n)
    data = np.array([lam[j] * correlate(u, f) for j, f in enumerate(bank.highpass)])
    return CoefficientStack(tuple((j, 0) for j in range(1, bank.J + 1)), data)


def weighted_analyze_doubleprime(
    v: CoefficientStack | np.ndarray, bank: FilterBank2D, n: int, exponent_offset: int = 1
) -> CoefficientStack:
    """Weighted transform of a ``J``-band field: band ``(i, j)`` is
    ``lambda''_ij (q_i[-.] (*) v_j)``, ordered row-major over ``(i, j)``."""
    data = v.data if isinstance(v, CoefficientStack) else _as_real(v)
    if data.ndim != 3 or data.shape[0] != bank.J:
        raise ValueError(f"expected {bank.J} component bands, got array of shape {data.shape}")
    _check_resolution(data.shape[1:], n)
    lam = bank.lambda_doubleprime(n, exponent_offset)
    out, labels = [], []
    for i, f in enumerate(bank.highpass):
        for j in range(bank.J):
            out.append(lam[i, j] * correlate(data[j], f))
            labels.append((i + 1, j + 1))
    return CoefficientStack(tuple(labels), np.array(out))
