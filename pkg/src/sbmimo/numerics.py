"""Numerical primitives: complex SVD, Hermitian solves, pseudo-inverse,
a limited-memory quasi-Newton maximizer and a finite-difference checker.

Complex matrix variables are optimized through a real parametrization:
``complex_to_real`` stacks real and imaginary parts into one real vector
and the conjugate (Wirtinger) gradient of a real objective maps to the
real gradient via a factor of two (see ``wirtinger_to_real_grad``).
"""

from __future__ import annotations

import re as _re
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import NumericError


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------

@dataclass
class SvdResult:
    """Economy-size SVD, A = U @ diag(S) @ V^H with S descending."""

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.S) @ self.V.conj().T


def svd(A: np.ndarray) -> SvdResult:
    """Economy SVD of a complex (or real) matrix."""
    A = np.asarray(A)
    if not np.all(np.isfinite(A.real)) or not np.all(np.isfinite(A.imag)):
        raise NumericError("svd: input contains non-finite entries")
    U, S, Vh = np.linalg.svd(A, full_matrices=False)
    return SvdResult(U=U, S=S, V=Vh.conj().T)


def hermitian_solve(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve A @ X = B for Hermitian positive-definite A via Cholesky."""
    A = np.asarray(A)
    B = np.asarray(B)
    try:
        c, low = scipy.linalg.cho_factor(A, lower=True, check_finite=True)
    except scipy.linalg.LinAlgError as exc:
        pivot = None
        m = _re.search(r"(\d+)", str(exc))
        if m:
            pivot = int(m.group(1))
        raise NumericError(
            f"hermitian_solve: matrix not positive definite ({exc})",
            pivot_index=pivot,
        ) from exc
    return scipy.linalg.cho_solve((c, low), B, check_finite=False)


def pseudo_inverse(A: np.ndarray) -> np.ndarray:
    """Moore-Penrose pseudo-inverse; singular values below 1e-12 * max
    are treated as zero."""
    A = np.asarray(A)
    if A.size == 0:
        return A.conj().T.copy()
    if not np.all(np.isfinite(A.real)) or not np.all(np.isfinite(A.imag)):
        raise NumericError("pseudo_inverse: input contains non-finite entries")
    return np.linalg.pinv(A, rcond=1e-12)


# ---------------------------------------------------------------------------
# Real <-> complex parametrization (Wirtinger bridge)
# ---------------------------------------------------------------------------

def complex_to_real(H: np.ndarray) -> np.ndarray:
    """Flatten a complex array into [Re(vec H); Im(vec H)]."""
    H = np.asarray(H)
    return np.concatenate([H.real.ravel(), H.imag.ravel()])


def real_to_complex(x: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Inverse of :func:`complex_to_real`."""
    n = int(np.prod(shape))
    x = np.asarray(x)
    return (x[:n] + 1j * x[n:]).reshape(shape)


def wirtinger_to_real_grad(G: np.ndarray) -> np.ndarray:
    """Map the conjugate derivative dF/dH* to the gradient in the
    real parametrization of :func:`complex_to_real` (factor 2)."""
    G = np.asarray(G)
    return 2.0 * np.concatenate([G.real.ravel(), G.imag.ravel()])


def finite_diff_grad(objective, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar objective on a real vector."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += eps
        xm[i] -= eps
        g[i] = (objective(xp) - objective(xm)) / (2.0 * eps)
    return g


# ---------------------------------------------------------------------------
# Limited-memory BFGS maximizer
# ---------------------------------------------------------------------------

@dataclass
class OptimizerOptions:
    memory: int = 10
    max_iters: int = 500
    grad_tol: float = 1e-6
    c1: float = 1e-4
    c2: float = 0.9

    def __post_init__(self):
        if not (0.0 < self.c1 < self.c2 < 1.0):
            raise ValueError("Wolfe constants must satisfy 0 < c1 < c2 < 1")
        if self.memory < 1:
            raise ValueError("memory must be >= 1")


@dataclass
class LbfgsResult:
    x: np.ndarray
    trace: np.ndarray            # objective at x0 and after each iteration
    status: str                  # "converged" | "max_iters" | "line_search_failed"
    n_iters: int
    grad_norm: float
    snapshots: dict = field(default_factory=dict)


def _wolfe_line_search(f, g, x, p, f0, g0, c1, c2, max_evals=30):
    """Strong Wolfe line search for minimization along direction p.

    Returns (alpha, f_new, g_new) or (None, ...) on failure.
    """
    d0 = float(np.dot(g0, p))
    if d0 >= 0.0:
        return None, f0, g0

    def phi(a):
        xa = x + a * p
        return f(xa), g(xa), xa

    def zoom(lo, hi, f_lo, d_lo):
        f_hi = None
        best = None
        for _ in range(max_evals):
            # quadratic interpolation, safeguarded by bisection
            a = 0.5 * (lo + hi)
            fa, ga, _ = phi(a)
            da = float(np.dot(ga, p))
            if fa < f0 and (best is None or fa < best[1]):
                best = (a, fa, ga)
            if fa > f0 + c1 * a * d0 or fa >= f_lo:
                hi, f_hi = a, fa
            else:
                if abs(da) <= -c2 * d0:
                    return a, fa, ga
                if da * (hi - lo) >= 0.0:
                    hi, f_hi = lo, f_lo
                lo, f_lo, d_lo = a, fa, da
            if abs(hi - lo) < 1e-16:
                break
        # near the optimum the Wolfe tests can stall at machine precision;
        # settle for the best strictly improving point found
        if best is not None:
            return best
        return None, f0, g0

    a_prev, f_prev, d_prev = 0.0, f0, d0
    a = 1.0
    for it in range(max_evals):
        fa, ga, _ = phi(a)
        da = float(np.dot(ga, p))
        if fa > f0 + c1 * a * d0 or (it > 0 and fa >= f_prev):
            return zoom(a_prev, a, f_prev, d_prev)
        if abs(da) <= -c2 * d0:
            return a, fa, ga
        if da >= 0.0:
            return zoom(a, a_prev, fa, da)
        a_prev, f_prev, d_prev = a, fa, da
        a *= 2.0
    return None, f0, g0


def lbfgs_maximize(objective, gradient, x0: np.ndarray,
                   opts: OptimizerOptions | None = None,
                   callback=None,
                   snapshot_iters=None) -> LbfgsResult:
    """Maximize a smooth objective with the two-loop L-BFGS recursion and
    a strong Wolfe line search.

    Internally minimizes the negated objective.  The trace holds the
    objective value at the start point followed by one entry per accepted
    iteration; it is non-decreasing by the Wolfe conditions.  Line-search
    failure is non-fatal: the best iterate found so far is returned with
    status "line_search_failed".

    ``snapshot_iters`` collects copies of the iterate after the listed
    iteration counts into ``result.snapshots``.
    """
    if opts is None:
        opts = OptimizerOptions()
    snapshot_iters = set(snapshot_iters or ())

    def f(x):
        return -float(objective(x))

    def g(x):
        return -np.asarray(gradient(x), dtype=float)

    x = np.asarray(x0, dtype=float).copy()
    fx = f(x)
    gx = g(x)
    trace = [-fx]
    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    rho_hist: list[float] = []
    status = "max_iters"
    snapshots = {}
    k = 0

    for k in range(1, opts.max_iters + 1):
        gnorm = float(np.linalg.norm(gx))
        if gnorm <= opts.grad_tol:
            status = "converged"
            k -= 1
            break

        # two-loop recursion
        q = gx.copy()
        alphas = []
        for s, y, r in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
            a = r * np.dot(s, q)
            alphas.append(a)
            q -= a * y
        if y_hist:
            gamma = np.dot(s_hist[-1], y_hist[-1]) / np.dot(y_hist[-1], y_hist[-1])
            q *= gamma
        for (s, y, r), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
            b = r * np.dot(y, q)
            q += s * (a - b)
        p = -q

        alpha, f_new, g_new = _wolfe_line_search(
            f, g, x, p, fx, gx, opts.c1, opts.c2)
        if alpha is None:
            # retry with steepest descent before giving up
            p = -gx
            alpha, f_new, g_new = _wolfe_line_search(
                f, g, x, p, fx, gx, opts.c1, opts.c2)
        if alpha is None:
            status = "line_search_failed"
            k -= 1
            break

        s = alpha * p
        y = g_new - gx
        sy = float(np.dot(s, y))
        if sy > 1e-14 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            s_hist.append(s)
            y_hist.append(y)
            rho_hist.append(1.0 / sy)
            if len(s_hist) > opts.memory:
                s_hist.pop(0)
                y_hist.pop(0)
                rho_hist.pop(0)

        x = x + s
        fx, gx = f_new, g_new
        trace.append(-fx)
        if callback is not None:
            callback(k, x)
        if k in snapshot_iters:
            snapshots[k] = x.copy()
    else:
        k = opts.max_iters

    if status == "converged" or status == "line_search_failed":
        pass
    # fill snapshots requested beyond the last iteration with the final point
    for it in snapshot_iters:
        if it not in snapshots and it >= k:
            snapshots[it] = x.copy()

    return LbfgsResult(x=x, trace=np.asarray(trace), status=status,
                       n_iters=k, grad_norm=float(np.linalg.norm(gx)),
                       snapshots=snapshots)
