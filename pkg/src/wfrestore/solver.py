"""ADMM for the two-transform restoration model and its special cases.

The general model is

    min_{u, v}  nu1 ||W'u - v||_1 + nu2 ||W''v||_q^q + 1/2 ||Au - f||^2,

solved through the split ``d = W'u``, ``e = W''v``. ``W'`` and ``W''`` are
the unweighted single-level tight-frame transforms *including* the low-pass
band, so ``W^T W = I`` and every subproblem has a closed form. Penalties act
on high-pass bands only; low-pass bands are carried along unpenalized unless
``penalize_lowpass`` is set.

``v`` has one component per band of ``W'`` (shape ``(J'+1, rows, cols)``)
and ``e`` applies ``W''`` to every component (shape
``(J''+1, J'+1, rows, cols)``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import fft as sfft

from .framelet import ConfigurationError, FilterBank2D, NumericalError, build_bank
from .imageio import psnr as _psnr
from .imageio import write_csv
from .operators import DegradationOp

VARIANTS = ("general", "analysis", "synthesis", "balanced", "packet", "twolayer", "case_d")
SHRINK_MODES = ("anisotropic", "isotropic")
SCHEMES = ("joint", "sequential")
DIVERGENCE_LIMIT = 1e12


# ---------------------------------------------------------------------------
# shrinkage


def soft_threshold(x, lam, mode: str = "anisotropic", axis=0):
    """Proximal map of ``lam * ||.||_1`` (anisotropic) or of the per-pixel
    Euclidean norm over ``axis`` (isotropic).

    ``lam`` may be a scalar or an array broadcastable against ``x``.

    Examples
    --------
    >>> float(soft_threshold(1.2, 0.5))
    0.7
    >>> soft_threshold(np.array([3.0, 4.0]), 2.5, "isotropic").tolist()
    [1.5, 2.0]
    """
    lam_arr = np.asarray(lam, dtype=float)
    if np.any(lam_arr < 0):
        raise ValueError("threshold must be non-negative")
    x = np.asarray(x, dtype=float)
    if mode == "anisotropic":
        return np.sign(x) * np.maximum(np.abs(x) - lam_arr, 0.0)
    if mode != "isotropic":
        raise ConfigurationError(f"unknown shrink mode {mode!r}; expected one of {SHRINK_MODES}")
    if lam_arr.ndim:
        raise ValueError("isotropic shrinkage takes a scalar threshold")
    norm = np.sqrt(np.sum(x**2, axis=axis, keepdims=True))
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(norm > 0, np.maximum(norm - lam_arr, 0.0) / norm, 0.0)
    return x * scale


def _shrink_masked(x, lam: float, weights: np.ndarray, mode: str):
    """Shrink the bands with ``weights == 1``, pass the rest through.

    ``weights`` broadcasts over the leading band axes of ``x``; in isotropic
    mode all penalized bands at a pixel form one vector.
    """
    w = np.broadcast_to(weights.reshape(weights.shape + (1, 1)), x.shape).astype(bool)
    if mode == "anisotropic":
        return np.where(w, soft_threshold(x, lam), x)
    if mode not in SHRINK_MODES:
        raise ConfigurationError(f"unknown shrink mode {mode!r}")
    pen = np.where(w, x, 0.0).reshape((-1,) + x.shape[-2:])
    shrunk = soft_threshold(pen, lam, "isotropic").reshape(x.shape)
    return np.where(w, shrunk, x)


def _penalty_l1(x, weights, mode) -> float:
    w = np.broadcast_to(weights.reshape(weights.shape + (1, 1)), x.shape)
    xw = np.where(w > 0, x, 0.0)
    if mode == "isotropic":
        return float(np.sum(np.sqrt(np.sum(xw.reshape((-1,) + x.shape[-2:]) ** 2, axis=0))))
    return float(np.sum(np.abs(xw)))


# ---------------------------------------------------------------------------
# frame transforms in the Fourier domain


class FrameOperator:
    """Undecimated single-level transform of ``bank`` on periodic images.

    Filtering is done by FFT; ``analyze`` maps ``(..., rows, cols)`` to
    ``(J+1, ..., rows, cols)`` and ``synthesize`` is its adjoint.
    """

    def __init__(self, bank: FilterBank2D, shape):
        self.bank = bank
        self.shape = tuple(shape)
        psf = np.zeros((bank.J + 1,) + self.shape)
        for b, filt in enumerate(bank.filters):
            for o1, o2, val in filt.taps():
                psf[b, o1 % self.shape[0], o2 % self.shape[1]] += val
        self._H = sfft.rfft2(psf)
        self._Hc = np.conj(self._H)

    @property
    def bands(self) -> int:
        return self._H.shape[0]

    def _bcast(self, H, extra: int) -> np.ndarray:
        return H.reshape((self.bands,) + (1,) * extra + H.shape[1:])

    def analyze(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        X = sfft.rfft2(x)
        return sfft.irfft2(self._bcast(self._Hc, x.ndim - 2) * X[None], s=self.shape)

    def synthesize(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        C = sfft.rfft2(c)
        return sfft.irfft2(np.sum(self._bcast(self._H, c.ndim - 3) * C, axis=0), s=self.shape)


def band_weights(bank: FilterBank2D, penalize_lowpass: bool = False) -> np.ndarray:
    """1 for penalized bands, 0 for the transported low-pass band."""
    w = np.ones(bank.J + 1)
    w[0] = 1.0 if penalize_lowpass else 0.0
    return w


# ---------------------------------------------------------------------------
# specification and state


@dataclass(frozen=True)
class ModelSpec:
    """Parameters of one restoration model.

    ``nu1`` weighs the first sparsity term (the ``l1`` weight of the analysis,
    synthesis and balanced models), ``nu2`` the second. ``balance`` is the
    weight of ``||(I - W W^T) v||^2`` in the balanced model.
    """

    nu1: float = 0.2
    nu2: float = 0.2
    mu: float = 1.0
    delta: float = 0.9
    q: int = 1
    shrink_mode: str = "anisotropic"
    max_iter: int = 500
    tol: float = 1e-6
    variant: str = "general"
    balance: float = 0.0
    penalize_lowpass: bool = False
    method: str = "admm"
    scheme: str = "joint"

    def __post_init__(self):
        self.validate()

    def validate(self) -> "ModelSpec":
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.shrink_mode not in SHRINK_MODES:
            raise ConfigurationError(f"unknown shrink mode {self.shrink_mode!r}")
        if self.q not in (1, 2):
            raise ConfigurationError(f"q must be 1 or 2, got {self.q}")
        for name in ("nu1", "nu2", "balance"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigurationError(f"{name} must be a finite non-negative number, got {v}")
        if not (math.isfinite(self.mu) and self.mu > 0):
            raise ConfigurationError(f"mu must be positive, got {self.mu}")
        if not 0 <= self.delta < 1:
            raise ConfigurationError(f"delta must lie in [0, 1), got {self.delta}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ConfigurationError(f"max_iter must be a positive integer, got {self.max_iter}")
        if not self.tol > 0:
            raise ConfigurationError(f"tol must be positive, got {self.tol}")
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.method not in ("admm", "proxgrad"):
            raise ConfigurationError(f"unknown method {self.method!r}")
        if self.method == "proxgrad" and self.variant not in ("synthesis", "balanced"):
            raise ConfigurationError("proxgrad applies to the synthesis and balanced variants only")
        return self


def preset(variant: str, **overrides) -> ModelSpec:
    """Template :class:`ModelSpec` for a named special case.

    ``analysis`` freezes ``v = 0``; ``packet`` and ``twolayer`` use ``q = 1``
    (``packet`` additionally expects the same bank for both transforms);
    ``case_d`` uses ``q = 2``; ``synthesis`` and ``balanced`` solve for the
    coefficient vector ``v`` with ``u = W^T v`` and penalize every band.
    """
    base = {
        "general": {},
        "analysis": {"nu2": 0.0},
        "packet": {"q": 1},
        "twolayer": {"q": 1},
        "case_d": {"q": 2},
        "synthesis": {"balance": 0.0, "nu2": 0.0, "penalize_lowpass": True},
        "balanced": {"balance": 1.0, "nu2": 0.0, "penalize_lowpass": True},
    }
    if variant not in base:
        raise ConfigurationError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    kw = dict(base[variant], variant=variant)
    kw.update(overrides)
    if variant == "synthesis" and kw.get("balance", 0.0) != 0.0:
        raise ConfigurationError("the synthesis model has balance weight 0")
    return ModelSpec(**kw)


@dataclass
class SolverState:
    u: np.ndarray
    v: np.ndarray
    d: np.ndarray
    e: np.ndarray
    mult_p: np.ndarray
    mult_q: np.ndarray
    iter: int = 0
    objective: float = math.nan
    primal_residuals: tuple = (math.nan, math.nan)

    def copy(self) -> "SolverState":
        return SolverState(
            self.u.copy(), self.v.copy(), self.d.copy(), self.e.copy(),
            self.mult_p.copy(), self.mult_q.copy(), self.iter, self.objective, self.primal_residuals,
        )


class Problem:
    """Bundles ``A``, ``f`` and the two frame operators for one solve."""

    def __init__(self, f, A: DegradationOp, spec: ModelSpec, bank: FilterBank2D | str = "linear", bank2=None):
        f = np.asarray(f, dtype=float)
        if f.ndim != 2:
            raise ValueError("f must be a 2-D image")
        if A.shape != f.shape:
            raise ValueError(f"operator shape {A.shape} differs from image shape {f.shape}")
        if not np.all(np.isfinite(f)):
            raise ValueError("f contains non-finite values")
        bank = build_bank(bank) if isinstance(bank, str) else bank
        bank2 = bank if bank2 is None else (build_bank(bank2) if isinstance(bank2, str) else bank2)
        if spec.variant == "packet" and bank2.name != bank.name:
            raise ConfigurationError("the packet model uses one bank for both transforms")
        self.f, self.A, self.spec = f, A, spec
        self.W1 = FrameOperator(bank, f.shape)
        self.W2 = FrameOperator(bank2, f.shape)
        self.w1 = band_weights(bank, spec.penalize_lowpass)
        self.w2 = np.outer(band_weights(bank2, spec.penalize_lowpass), self.w1)

    def zero_state(self) -> SolverState:
        shape = self.f.shape
        n1, n2 = self.W1.bands, self.W2.bands
        z1 = np.zeros((n1,) + shape)
        z2 = np.zeros((n2, n1) + shape)
        return SolverState(np.zeros(shape), z1, z1.copy(), z2, z1.copy(), z2.copy())


# ---------------------------------------------------------------------------
# objective


def objective_value(u, v, problem: Problem) -> float:
    """``nu1 ||W'u - v||_1 + nu2 ||W''v||_q^q + 1/2 ||Au - f||^2`` over the
    penalized bands (mixed ``l1(l2)`` norms in isotropic mode)."""
    if problem.spec.variant in ("synthesis", "balanced"):
        raise ValueError("use coefficient_objective for the synthesis and balanced models")
    u = np.asarray(u, dtype=float)
    if u.shape != problem.f.shape:
        raise ValueError(f"u has shape {u.shape}, expected {problem.f.shape}")
    shape = (problem.W1.bands,) + u.shape
    v = np.zeros(shape) if v is None else np.asarray(v, dtype=float)
    if v.shape != shape:
        raise ValueError(f"v has shape {v.shape}, expected {shape}")
    Wv = None if problem.spec.variant == "analysis" else problem.W2.analyze(v)
    return _objective(problem, u, problem.W1.analyze(u) - v, Wv)


def _objective(problem: Problem, u, coupling, Wv) -> float:
    spec = problem.spec
    total = 0.5 * float(np.sum((problem.A.apply(u) - problem.f) ** 2))
    total += spec.nu1 * _penalty_l1(coupling, problem.w1, spec.shrink_mode)
    if Wv is not None and spec.nu2 > 0:
        if spec.q == 1:
            total += spec.nu2 * _penalty_l1(Wv, problem.w2, spec.shrink_mode)
        else:
            w = problem.w2.reshape(problem.w2.shape + (1, 1))
            total += spec.nu2 * float(np.sum(w * Wv**2))
    return total


def coefficient_objective(v, problem: Problem) -> float:
    """``balance ||(I - W W^T) v||^2 + nu1 ||v||_1 + 1/2 ||A W^T v - f||^2``."""
    spec = problem.spec
    W = problem.W1
    u = W.synthesize(v)
    resid = v - W.analyze(u)
    return (
        spec.balance * float(np.sum(resid**2))
        + spec.nu1 * _penalty_l1(v, problem.w1, spec.shrink_mode)
        + 0.5 * float(np.sum((problem.A.apply(u) - problem.f) ** 2))
    )


# ---------------------------------------------------------------------------
# ADMM for the general model


def admm_step(state: SolverState, problem: Problem) -> SolverState:
    """One sweep of six closed-form updates ``u, v, d, e, p, q``; returns a new state.

    ``scheme="joint"`` splits ``d = W'u - v`` and minimizes over ``(u, v)``
    jointly, which is exact because ``W''^T W'' = I``:

        u = (A^T A + mu/2)^{-1} (A^T f + mu/2 W'^T (W''^T(e - q) + d - p))
        v = (W'u + p - d + W''^T(e - q)) / 2
        d = T(W'u - v + p),   e = T(W''v + q)

    ``scheme="sequential"`` splits ``d = W'u`` and updates ``v`` and ``d`` one after
    the other through the shared term ``nu1 ||d - v||_1``. Its fixed points
    need not minimize the model (the two updates may use different
    subgradients where ``d = v``); it is kept for comparison.
    """
    spec, A, f = problem.spec, problem.A, problem.f
    W1, W2 = problem.W1, problem.W2
    mu, t1, t2 = spec.mu, spec.nu1 / spec.mu, spec.nu2 / spec.mu
    mode = spec.shrink_mode
    d, e, p, qm = state.d, state.e, state.mult_p, state.mult_q
    frozen = spec.variant == "analysis"
    Atf = A.adjoint(f)

    if frozen:
        u = A.normal_solve(mu, Atf + mu * W1.synthesize(d - p))
        v = np.zeros_like(state.v)
        Wu = W1.analyze(u)
        r = Wu
        d = _shrink_masked(Wu + p, t1, problem.w1, mode)
    elif spec.scheme == "joint":
        b = W2.synthesize(e - qm)
        u = A.normal_solve(mu / 2, Atf + mu / 2 * W1.synthesize(b + d - p))
        Wu = W1.analyze(u)
        v = 0.5 * (Wu + p - d + b)
        r = Wu - v
        d = _shrink_masked(r + p, t1, problem.w1, mode)
    else:
        u = A.normal_solve(mu, Atf + mu * W1.synthesize(d - p))
        v = _shrink_masked(W2.synthesize(e - qm) - d, t1, problem.w1, mode) + d
        Wu = W1.analyze(u)
        r = Wu
        d = _shrink_masked(Wu + p - v, t1, problem.w1, mode) + v
    if frozen:
        Wv = e = np.zeros_like(e)
        coupling = Wu
    else:
        coupling = Wu - v
        Wv = W2.analyze(v)
        if spec.q == 1:
            e = _shrink_masked(Wv + qm, t2, problem.w2, mode)
        else:
            w = problem.w2.reshape(problem.w2.shape + (1, 1))
            e = (Wv + qm) * np.where(w > 0, mu / (2 * spec.nu2 + mu), 1.0)
    p = p + spec.delta * (r - d)
    qm = qm + spec.delta * (Wv - e)
    res = (float(np.linalg.norm(r - d)), float(np.linalg.norm(Wv - e)))
    obj = _objective(problem, u, coupling, None if frozen else Wv)
    return SolverState(u, v, d, e, p, qm, state.iter + 1, obj, res)


# ---------------------------------------------------------------------------
# synthesis / balanced models on the coefficient vector


def _coefficient_inverse(problem: Problem, x):
    """``(2 balance (I - W W^T) + W A^T A W^T + mu I)^{-1} x`` in closed form."""
    W, A, mu = problem.W1, problem.A, problem.spec.mu
    Wtx = W.synthesize(x)
    perp = x - W.analyze(Wtx)
    return perp / (2 * problem.spec.balance + mu) + W.analyze(A.normal_solve(mu, Wtx))


def _coefficient_gradient(problem: Problem, v):
    W, A = problem.W1, problem.A
    u = W.synthesize(v)
    return 2 * problem.spec.balance * (v - W.analyze(u)) + W.analyze(A.adjoint(A.apply(u) - problem.f))


def lipschitz_estimate(problem: Problem, iters: int = 50, seed: int = 0) -> float:
    """Largest eigenvalue of ``2 balance (I - W W^T) + W A^T A W^T`` by power iteration."""
    W, A = problem.W1, problem.A
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((W.bands,) + problem.f.shape)
    lam = 0.0
    for _ in range(iters):
        u = W.synthesize(x)
        y = 2 * problem.spec.balance * (x - W.analyze(u)) + W.analyze(A.normal(u))
        lam = float(np.linalg.norm(y))
        if lam == 0:
            return 0.0
        x = y / lam
    return lam


def _coefficient_step_admm(state: SolverState, problem: Problem) -> SolverState:
    # split v = z; v carries the smooth part, z the l1 term; mult_p is the scaled multiplier
    spec = problem.spec
    z, b = state.d, state.mult_p
    v = _coefficient_inverse(problem, problem.W1.analyze(problem.A.adjoint(problem.f)) + spec.mu * (z - b))
    z = _shrink_masked(v + b, spec.nu1 / spec.mu, problem.w1, spec.shrink_mode)
    b = b + v - z
    u = problem.W1.synthesize(v)
    res = (float(np.linalg.norm(v - z)), float(np.linalg.norm(v - problem.W1.analyze(u))))
    return SolverState(u, v, z, state.e, b, state.mult_q, state.iter + 1, coefficient_objective(v, problem), res)


def _coefficient_step_proxgrad(state: SolverState, problem: Problem, L: float) -> SolverState:
    spec = problem.spec
    v = _shrink_masked(state.v - _coefficient_gradient(problem, state.v) / L, spec.nu1 / L, problem.w1, spec.shrink_mode)
    u = problem.W1.synthesize(v)
    res = (float(np.linalg.norm(v - state.v)), float(np.linalg.norm(v - problem.W1.analyze(u))))
    return SolverState(u, v, v, state.e, state.mult_p, state.mult_q, state.iter + 1, coefficient_objective(v, problem), res)


# ---------------------------------------------------------------------------
# driver


@dataclass
class Diagnostics:
    """Per-iteration objective, primal residuals and optional PSNR."""

    rows: list = field(default_factory=list)
    converged: bool = False

    HEADER = ("iter", "objective", "res_d", "res_e", "psnr")

    def append(self, it, obj, res_d, res_e, psnr=math.nan):
        self.rows.append((it, obj, res_d, res_e, psnr))

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r[1] for r in self.rows])

    def write_csv(self, path) -> None:
        write_csv(path, self.HEADER, self.rows)


def solve(f, A: DegradationOp, spec: ModelSpec, bank="linear", bank2=None, truth=None, state=None):
    """Run the iteration until the relative change of ``u`` drops below
    ``spec.tol`` or ``spec.max_iter`` sweeps.

    Returns ``(u, diagnostics, state)``. Raises :class:`NumericalError` when
    the objective exceeds ``1e12`` or stops being finite.
    """
    spec.validate()
    problem = Problem(f, A, spec, bank, bank2)
    if truth is not None:
        truth = np.asarray(truth, dtype=float)
        if truth.shape != problem.f.shape:
            raise ValueError("truth image shape differs from f")
    state = problem.zero_state() if state is None else state.copy()
    coefficient = spec.variant in ("synthesis", "balanced")
    if coefficient and spec.method == "proxgrad":
        L = lipschitz_estimate(problem)
        if L == 0:
            L = 1.0
        step = lambda s: _coefficient_step_proxgrad(s, problem, L)  # noqa: E731
    elif coefficient:
        step = lambda s: _coefficient_step_admm(s, problem)  # noqa: E731
    else:
        step = lambda s: admm_step(s, problem)  # noqa: E731

    diag = Diagnostics()
    for _ in range(spec.max_iter):
        prev = state.u
        state = step(state)
        if not math.isfinite(state.objective) or state.objective > DIVERGENCE_LIMIT:
            raise NumericalError(f"objective diverged ({state.objective:.3g}) at iteration {state.iter}")
        diag.append(
            state.iter, state.objective, *state.primal_residuals,
            _psnr(state.u, truth) if truth is not None else math.nan,
        )
        change = np.linalg.norm(state.u - prev) / max(np.linalg.norm(state.u), 1e-300)
        if change <= spec.tol:
            diag.converged = True
            break
    return state.u, diag, state


def with_params(spec: ModelSpec, **kw) -> ModelSpec:
    return replace(spec, **kw)
