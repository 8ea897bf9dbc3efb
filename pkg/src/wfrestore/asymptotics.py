"""Discrete-to-continuum laboratory for the weighted framelet transforms.

Sampling operators ``T_n`` (inner products with the refinable function) and
``S_n`` (inner products with the integrated framelets), the index sets
``O_n ⊇ M_n ⊇ K_n``, the discrete energy ``E_n`` and the continuum energy
``E``, plus the numerical studies built on them.

All inner products are computed with tensor Gauss-Legendre quadrature of
order 6 on each dyadic cell of side ``2^-n``; every B-spline factor is a
polynomial on those cells.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fields import SmoothField, apply_d_prime
from .framelet import (
    CoefficientStack,
    FilterBank2D,
    NumericalError,
    weighted_analyze_doubleprime,
    weighted_analyze_prime,
)
from .refinable import factor_functions

GL_ORDER = 6
SUPPORT_CONSTANT = 2

_t, _w = np.polynomial.legendre.leggauss(GL_ORDER)
GL_NODES = (_t + 1.0) / 2.0
GL_WEIGHTS = _w / 2.0


# ---------------------------------------------------------------------------
# index sets


@dataclass(frozen=True)
class GridSpec:
    """Index sets at resolution ``n`` (per-axis ranges; the sets are squares).

    ``O_n`` holds the grid points ``0..2^n``; ``M_n`` the ``k`` with
    ``supp(phi_{n,k})`` inside the closed unit square; ``K_n`` the ``k`` in
    ``M_n`` with ``k + C supp(q_j) ⊂ M_n`` for every filter.
    """

    n: int
    C: int
    o_range: tuple[int, int]
    m_range: tuple[int, int]
    k_range: tuple[int, int]

    @property
    def side(self) -> int:
        return 2**self.n

    def _mask(self, rng) -> np.ndarray:
        idx = np.arange(self.side)
        ok = (idx >= rng[0]) & (idx <= rng[1])
        return ok[:, None] & ok[None, :]

    @property
    def K_mask(self) -> np.ndarray:
        """Boolean ``2^n x 2^n`` mask of ``K_n`` on the image grid."""
        return self._mask(self.k_range)

    @property
    def M_mask(self) -> np.ndarray:
        return self._mask(self.m_range)

    @property
    def k_slice(self) -> tuple[slice, slice]:
        s = slice(self.k_range[0], self.k_range[1] + 1)
        return s, s

    def count(self, which: str) -> int:
        lo, hi = {"O": self.o_range, "M": self.m_range, "K": self.k_range}[which]
        return max(hi - lo + 1, 0) ** 2

    def contains(self, k1, k2) -> np.ndarray:
        lo, hi = self.k_range
        k1, k2 = np.asarray(k1), np.asarray(k2)
        return (k1 >= lo) & (k1 <= hi) & (k2 >= lo) & (k2 <= hi)


def grid_spec(bank: FilterBank2D, n: int, C: int = SUPPORT_CONSTANT) -> GridSpec:
    if n < 1:
        raise ValueError("n must be >= 1")
    side = 2**n
    phi_width = bank.spline_degree + 1
    mask_width = max(len(m) for m in bank.masks_1d) - 1
    m_hi = side - phi_width
    k_hi = m_hi - C * mask_width
    if k_hi < 0:
        raise ValueError(f"resolution n={n} too coarse: K_n is empty")
    return GridSpec(n, C, (0, side), (0, m_hi), (0, k_hi))


# ---------------------------------------------------------------------------
# quadrature machinery


def _pad_cells(bank: FilterBank2D) -> int:
    return max(len(m) for m in bank.masks_1d) + bank.spline_degree


def _node_coords(n: int, ncells: int, dtype=np.longdouble) -> np.ndarray:
    cells = np.arange(ncells, dtype=dtype)[:, None]
    return ((cells + GL_NODES.astype(dtype)[None, :]) / dtype(2) ** n).ravel()


def _node_values(func, n: int, ncells: int, dtype=np.longdouble) -> np.ndarray:
    """``func`` at the Gauss nodes of ``ncells x ncells`` cells of side ``2^-n``.

    Extended precision by default: high-order bands multiply rounding noise of
    the samples by up to ``2^{4(n-1)} / c_j``.
    """
    x = _node_coords(n, ncells, dtype)
    vals = np.asarray(func(x[:, None], x[None, :]))
    vals = np.broadcast_to(vals, (x.size, x.size))
    return vals.reshape(ncells, GL_ORDER, ncells, GL_ORDER)


def _contract(U: np.ndarray, K0: np.ndarray, K1: np.ndarray, nk: int) -> np.ndarray:
    """``out[k1, k2] = sum K0[c, g] K1[d, h] U[k1 + c, g, k2 + d, h]``."""
    tmp = np.zeros((nk,) + U.shape[2:], dtype=U.dtype)
    for c in range(K0.shape[0]):
        tmp += np.einsum("g,kgjh->kjh", K0[c], U[c : c + nk])
    out = np.zeros((nk, nk), dtype=U.dtype)
    for d in range(K1.shape[0]):
        out += np.einsum("h,kjh->kj", K1[d], tmp[:, d : d + nk])
    return out


def _t_kernel(bank: FilterBank2D) -> np.ndarray:
    phi = factor_functions(bank)[0]
    cells = bank.spline_degree + 1
    return np.array([GL_WEIGHTS * phi(c + GL_NODES) for c in range(cells)])


def _s_kernels(bank: FilterBank2D) -> list[np.ndarray]:
    # phi_a(z / 2) on the unit cells z in [c, c + 1]; the 1/2 is dz/dy
    out = []
    for fa in factor_functions(bank):
        cells = int(round(2 * fa.hi))
        out.append(np.array([0.5 * GL_WEIGHTS * fa((c + GL_NODES) / 2.0) for c in range(cells)]))
    return out


def sample_Tn(u: SmoothField, bank: FilterBank2D, n: int, indices=None) -> np.ndarray:
    """``(T_n u)[k] = 2^n <u, phi_{n,k}>`` on the full ``2^n x 2^n`` image grid.

    Values outside ``K_n`` use the closed-form extension of ``u`` beyond the
    unit square. With ``indices=(k1, k2)`` only those entries are returned and
    each must lie in ``K_n``.
    """
    if n < 3:
        raise ValueError("sample_Tn requires n >= 3")
    side = 2**n
    if indices is not None:
        grid = grid_spec(bank, n)
        if not np.all(grid.contains(*indices)):
            raise ValueError("requested sample index outside K_n")
    if u.is_zero:
        full = np.zeros((side, side), dtype=np.longdouble)
    else:
        U = _node_values(u, n, side + _pad_cells(bank))
        K = _t_kernel(bank)
        full = _contract(U, K, K, side)
    if indices is not None:
        return full[indices]
    return full


def sample_Sn(v: Sequence[SmoothField], bank: FilterBank2D, n: int) -> CoefficientStack:
    """``(S_n v)[j; k] = 2^n <v_j, c_j^{-1} varphi_{j,n-1,k}>`` for all ``j``."""
    if n < 3:
        raise ValueError("sample_Sn requires n >= 3")
    if len(v) != bank.J:
        raise ValueError(f"vector field needs {bank.J} components, got {len(v)}")
    side = 2**n
    ncells = side + _pad_cells(bank)
    kernels = _s_kernels(bank)
    out = np.zeros((bank.J, side, side), dtype=np.longdouble)
    for j, comp in enumerate(v):
        if comp.is_zero:
            continue
        a, b = bank.pairs[j + 1]
        U = _node_values(comp, n, ncells)
        out[j] = _contract(U, kernels[a], kernels[b], side) / bank.band_constants[j]
    return CoefficientStack(tuple((j, 0) for j in range(1, bank.J + 1)), out)


def factor_centroids(bank: FilterBank2D) -> np.ndarray:
    """Centroid of each 1-D factor ``phi_a`` (in its own variable)."""
    out = []
    for fa in factor_functions(bank):
        y = np.concatenate([c + GL_NODES for c in range(int(round(2 * fa.hi)))]) / 2.0
        w = np.tile(GL_WEIGHTS, int(round(2 * fa.hi))) / 2.0
        vals = fa(y)
        out.append(np.sum(w * y * vals) / np.sum(w * vals))
    return np.array(out)


def band_anchor(bank: FilterBank2D, j: int, n: int, k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Point ``2^-n (k + 2 * centroid)`` that band ``j`` (1-based) samples at index ``k``."""
    cen = factor_centroids(bank)
    a, b = bank.pairs[j]
    return (k + 2 * cen[a]) / 2.0**n, (k + 2 * cen[b]) / 2.0**n


# ---------------------------------------------------------------------------
# identities and convergence checks


def _restrict(arr: np.ndarray, grid: GridSpec) -> np.ndarray:
    s1, s2 = grid.k_slice
    return arr[..., s1, s2]


def commutation_residual(u: SmoothField, bank: FilterBank2D, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(W'_n T_n u, S_n D'u)`` restricted to ``K_n``."""
    grid = grid_spec(bank, n)
    lhs = weighted_analyze_prime(sample_Tn(u, bank, n), bank, n).data
    rhs = sample_Sn(apply_d_prime(u, bank), bank, n).data
    return _restrict(lhs, grid), _restrict(rhs, grid)


def check_commutation(u: SmoothField, bank: FilterBank2D, n: int, relative: bool = False) -> float:
    """Sup over bands and ``K_n`` of ``|W'_n T_n u - S_n D'u|``.

    With ``relative=True`` the sup is divided by ``max(1, sup |S_n D'u|)``.
    """
    lhs, rhs = commutation_residual(u, bank, n)
    err = float(np.max(np.abs(lhs - rhs), initial=0.0))
    if relative:
        err /= max(1.0, float(np.max(np.abs(rhs), initial=0.0)))
    return err


def fitted_rate(ns, errors) -> float:
    """Least-squares slope of ``-log2(error)`` against ``n``."""
    ns = np.asarray(ns, dtype=float)
    errs = np.asarray(errors, dtype=float)
    if np.any(errs <= 0):
        return math.inf if np.all(errs <= 0) else math.nan
    return float(-np.polyfit(ns, np.log2(errs), 1)[0])


@dataclass
class DerivativeTable:
    """Sup errors of ``W'_n T_n u`` against ``D_j u`` at the band anchors."""

    ns: list[int]
    bands: list[int]
    errors: np.ndarray  # (len(ns), len(bands))
    orders: list[int]

    def rate(self, band: int) -> float:
        return fitted_rate(self.ns, self.errors[:, self.bands.index(band)])

    def strictly_decreasing(self, band: int) -> bool:
        col = self.errors[:, self.bands.index(band)]
        return bool(np.all(np.diff(col) < 0))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "band", "order", "sup_err"])
            for i, n in enumerate(self.ns):
                for b, band in enumerate(self.bands):
                    w.writerow([n, band, self.orders[b], _fmt(self.errors[i, b])])


def check_derivative_convergence(
    u: SmoothField, bank: FilterBank2D, n_range: Sequence[int], bands: Sequence[int] | None = None
) -> DerivativeTable:
    ns = list(n_range)
    if any(b <= a for a, b in zip(ns, ns[1:])) or min(ns) < 4:
        raise ValueError("n_range must be increasing with minimum >= 4")
    bands = list(bands) if bands is not None else list(range(1, bank.J + 1))
    errs = np.zeros((len(ns), len(bands)))
    for i, n in enumerate(ns):
        grid = grid_spec(bank, n)
        W = weighted_analyze_prime(sample_Tn(u, bank, n), bank, n).data
        k = np.arange(grid.k_range[0], grid.k_range[1] + 1)
        for b, j in enumerate(bands):
            x1, x2 = band_anchor(bank, j, n, k)
            exact = u.partial(*bank.band_moments[j - 1])(x1[:, None], x2[None, :])
            errs[i, b] = np.max(np.abs(_restrict(W[j - 1], grid) - exact))
    return DerivativeTable(ns, bands, errs, [bank.diff_orders[j - 1] for j in bands])


def check_doubleprime_convergence(
    v: Sequence[SmoothField], bank: FilterBank2D, n_range: Sequence[int], exponent_offset: int = 1
) -> np.ndarray:
    """Sup error of ``W''_n S_n v`` against ``D_i v_j`` per ``n`` and band ``(i, j)``.

    The anchor of band ``(i, j)`` combines the centroids of ``phi_j`` and the
    half-shift filter of ``q_i``.
    """
    ns = list(n_range)
    cen = factor_centroids(bank)
    errs = np.zeros((len(ns), bank.J, bank.J))
    for t, n in enumerate(ns):
        grid = grid_spec(bank, n)
        out = weighted_analyze_doubleprime(sample_Sn(v, bank, n), bank, n, exponent_offset).data
        k = np.arange(grid.k_range[0], grid.k_range[1] + 1)
        for i in range(bank.J):
            ai, bi = bank.pairs[i + 1]
            shift = np.array([_mask_mean(bank, ai), _mask_mean(bank, bi)])
            for j in range(bank.J):
                aj, bj = bank.pairs[j + 1]
                x1 = (k + 2 * cen[aj] + shift[0]) / 2.0**n
                x2 = (k + 2 * cen[bj] + shift[1]) / 2.0**n
                exact = v[j].partial(*bank.band_moments[i])(x1[:, None], x2[None, :])
                errs[t, i, j] = np.max(np.abs(_restrict(out[i * bank.J + j], grid) - exact))
    return errs


def _mask_mean(bank: FilterBank2D, a: int) -> float:
    """Centroid offset (in index units) added by correlating with 1-D mask ``a``
    and integrating ``s_a`` times: ``m_{s+1} / ((s + 1) m_s)`` with discrete
    moments ``m_r = sum_k q[k] k^r``."""
    q = np.asarray(bank.masks_1d[a], dtype=float)
    k = np.arange(len(q), dtype=float)
    s = bank.moments_1d[a]
    return float(np.dot(q, k ** (s + 1)) / ((s + 1) * np.dot(q, k**s)))


# ---------------------------------------------------------------------------
# energies


def _mixed_norm_power(data: np.ndarray, p: float, n: int) -> float:
    """``||(f_1..f_m)||^p_{l_p(K_n; l_2)}`` with the ``2^{-2n}`` cell weight."""
    mag = np.sqrt(np.sum(data**2, axis=0))
    return float(2.0 ** (-2 * n) * np.sum(mag**p))


def _check_pq(p, q):
    if not (1 <= p <= 2 and 1 <= q <= 2):
        raise ValueError(f"exponents p={p}, q={q} must lie in [1, 2]")


def _check_fidelity(A):
    if A not in ("identity", "zero"):
        raise ValueError(f"continuum operator must be 'identity' or 'zero', got {A!r}")


@dataclass
class EnergyTerms:
    coupling: float
    smoothness: float
    fidelity: float
    nu1: float
    nu2: float

    @property
    def total(self) -> float:
        return self.nu1 * self.coupling + self.nu2 * self.smoothness + 0.5 * self.fidelity


def discrete_energy_terms(
    u: SmoothField,
    v: Sequence[SmoothField],
    bank: FilterBank2D,
    n: int,
    p: float = 1,
    q: float = 1,
    nu1: float = 1.0,
    nu2: float = 1.0,
    A: str = "identity",
    f: SmoothField | None = None,
    exponent_offset: int = 1,
) -> EnergyTerms:
    _check_pq(p, q)
    _check_fidelity(A)
    grid = grid_spec(bank, n)
    Tu = sample_Tn(u, bank, n)
    Sv = sample_Sn(v, bank, n)
    first = weighted_analyze_prime(Tu, bank, n).data - Sv.data
    second = weighted_analyze_doubleprime(Sv, bank, n, exponent_offset).data
    Au = Tu if A == "identity" else np.zeros_like(Tu)
    Tf = sample_Tn(f, bank, n) if f is not None else np.zeros_like(Tu)
    resid = _restrict(Au - Tf, grid)
    return EnergyTerms(
        coupling=_mixed_norm_power(_restrict(first, grid), p, n),
        smoothness=_mixed_norm_power(_restrict(second, grid), q, n),
        fidelity=float(2.0 ** (-2 * n) * np.sum(resid**2)),
        nu1=nu1,
        nu2=nu2,
    )


def discrete_energy(u, v, bank, n, p=1, q=1, nu1=1.0, nu2=1.0, A="identity", f=None, exponent_offset=1) -> float:
    """``E_n(u, v) = nu1 ||W'_n T_n u - S_n v||^p + nu2 ||W''_n S_n v||^q
    + 1/2 ||A_n T_n u - T_n f||^2``, norms over ``K_n`` with cell weight ``2^{-2n}``."""
    return discrete_energy_terms(u, v, bank, n, p, q, nu1, nu2, A, f, exponent_offset).total


def _continuum_terms_at(u, v, bank, m, p, q, A, f):
    cells = 2**m
    w = np.tile(GL_WEIGHTS, cells) / cells
    W2 = w[:, None] * w[None, :]

    def grid_eval(func):
        return _node_values(func, m, cells, np.float64).reshape(cells * GL_ORDER, cells * GL_ORDER)

    J = bank.J
    mag1 = np.zeros_like(W2)
    for j in range(J):
        du = grid_eval(u.partial(*bank.band_moments[j]))
        mag1 += (du - grid_eval(v[j])) ** 2
    mag2 = np.zeros_like(W2)
    for i in range(J):
        for j in range(J):
            if not v[j].is_zero:
                mag2 += grid_eval(v[j].partial(*bank.band_moments[i])) ** 2
    uu = grid_eval(u) if A == "identity" else np.zeros_like(W2)
    ff = grid_eval(f) if f is not None else np.zeros_like(W2)
    return (
        float(np.sum(W2 * np.sqrt(mag1) ** p)),
        float(np.sum(W2 * np.sqrt(mag2) ** q)),
        float(np.sum(W2 * (uu - ff) ** 2)),
    )


def continuum_energy_terms(
    u: SmoothField,
    v: Sequence[SmoothField],
    bank: FilterBank2D,
    p: float = 1,
    q: float = 1,
    nu1: float = 1.0,
    nu2: float = 1.0,
    A: str = "identity",
    f: SmoothField | None = None,
    tol: float = 1e-8,
    m_min: int = 3,
    m_max: int = 9,
) -> EnergyTerms:
    """``E(u, v)`` by composite tensor Gauss-Legendre quadrature on ``2^m x 2^m``
    cells, refining ``m`` until one doubling changes the value by less than
    ``tol * max(1, |E|)``."""
    _check_pq(p, q)
    _check_fidelity(A)
    if len(v) != bank.J:
        raise ValueError(f"vector field needs {bank.J} components, got {len(v)}")
    prev = None
    for m in range(m_min, m_max + 1):
        terms = EnergyTerms(*_continuum_terms_at(u, v, bank, m, p, q, A, f), nu1, nu2)
        if prev is not None and abs(terms.total - prev.total) < tol * max(1.0, abs(terms.total)):
            return terms
        prev = terms
    raise NumericalError(f"continuum energy quadrature did not converge by m={m_max}")


def continuum_energy(u, v, bank, p=1, q=1, nu1=1.0, nu2=1.0, A="identity", f=None, tol=1e-8) -> float:
    return continuum_energy_terms(u, v, bank, p, q, nu1, nu2, A, f, tol).total


@dataclass
class EnergyReport:
    ns: list[int]
    En: list[float]
    E: float
    errors: list[float]
    rate: float
    sup_errors: dict = field(default_factory=dict)

    @property
    def local_rates(self) -> list[float]:
        return [math.nan] + [
            math.log2(a / b) if a > 0 and b > 0 else math.nan for a, b in zip(self.errors, self.errors[1:])
        ]

    def strictly_decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.errors, self.errors[1:]))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "E_n", "E", "abs_err", "rate"])
            for n, en, err, r in zip(self.ns, self.En, self.errors, self.local_rates):
                w.writerow([n, _fmt(en), _fmt(self.E), _fmt(err), "" if math.isnan(r) else _fmt(r)])


def _fmt(x: float) -> str:
    return f"{x:.12e}"


def pointwise_convergence_study(
    u: SmoothField,
    v: Sequence[SmoothField],
    bank: FilterBank2D,
    n_range: Sequence[int],
    p: float = 1,
    q: float = 1,
    nu1: float = 1.0,
    nu2: float = 1.0,
    A: str = "identity",
    f: SmoothField | None = None,
) -> EnergyReport:
    """Tabulate ``|E_n(u, v) - E(u, v)|`` over ``n_range``."""
    ns = list(n_range)
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValueError("n_range must be increasing")
    E = continuum_energy(u, v, bank, p, q, nu1, nu2, A, f)
    En = [discrete_energy(u, v, bank, n, p, q, nu1, nu2, A, f) for n in ns]
    errs = [abs(e - E) for e in En]
    rate = fitted_rate(ns, errs) if any(e > 0 for e in errs) else math.inf
    return EnergyReport(ns, En, E, errs, rate)
