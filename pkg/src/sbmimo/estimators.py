"""Channel estimators: training LS, training MAP/MMSE, blind MAP from the
SVD of the uplink data, pilot-aware subspace projection (PASP), semi-blind
MAP via L-BFGS, and the genie-aided bound.

All estimators operate on the full set of L*K users (flattened index
n = i*K + k) as seen from one base station.  B is passed as the vector of
slow-fading coefficients beta (diagonal of the prior covariance scale).

Note on the training MAP/MMSE closed form: with unit-variance noise the
posterior stationarity yields the regularizer B^-1 / rho_tr, i.e. the
prior enters the normal equations scaled by the training SNR.  The
implementation uses that (exact conditional-mean) form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .errors import InputError, NumericError, StructuralError
from .numerics import (OptimizerOptions, complex_to_real, hermitian_solve,
                       lbfgs_maximize, pseudo_inverse, real_to_complex,
                       wirtinger_to_real_grad)
from .scenario import PilotBook


@dataclass
class EstimateSet:
    """Per-method channel estimate for all users, aligned user indexing."""

    method: str
    H_hat: np.ndarray                 # (M, L*K)
    permutation: np.ndarray | None = None    # user index -> singular rank
    trace: np.ndarray | None = None          # optimizer objective trace
    flags: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)  # iteration -> H iterate


# ---------------------------------------------------------------------------
# Training based
# ---------------------------------------------------------------------------

def ls_estimate(Y_tr: np.ndarray, Psi_1: np.ndarray,
                rho_tr: float) -> np.ndarray:
    """Least-squares estimate of the cell-1 channels,
    H = Y_tr (Psi_1^H)^+ / sqrt(rho_tr)."""
    sv = np.linalg.svd(Psi_1, compute_uv=False)
    if Psi_1.shape[1] > 0 and (sv.size < Psi_1.shape[1]
                               or sv[-1] <= 1e-10 * sv[0]):
        raise NumericError("ls_estimate: pilot matrix is rank deficient")
    return Y_tr @ pseudo_inverse(Psi_1.conj().T) / np.sqrt(rho_tr)


def ls_all_users(Y_tr: np.ndarray, pilot_book: PilotBook,
                 rho_tr: float) -> np.ndarray:
    """Per-user LS columns for all L*K users, applying the per-cell LS
    block by block.  Users sharing a pilot share an LS column."""
    cols = []
    for i in range(pilot_book.L):
        cols.append(ls_estimate(Y_tr, pilot_book.cell_block(i), rho_tr))
    return np.concatenate(cols, axis=1)


def _contamination_gram(pilot_book: PilotBook, B: np.ndarray,
                        rho_tr: float) -> np.ndarray:
    """I + rho_tr * sum_{i>=2} Psi_i B_i Psi_i^H (T_tr x T_tr)."""
    T_tr = pilot_book.Psi.shape[0]
    K = pilot_book.K
    C = np.eye(T_tr, dtype=complex)
    for i in range(1, pilot_book.L):
        Pi = pilot_book.cell_block(i)
        Bi = B[i * K:(i + 1) * K]
        C += rho_tr * (Pi * Bi[None, :]) @ Pi.conj().T
    return C


def train_map_estimate(Y_tr: np.ndarray, pilot_book: PilotBook,
                       B: np.ndarray, rho_tr: float) -> np.ndarray:
    """Closed-form training MAP/MMSE estimate of the cell-1 channels.

    Equals the cell-1 block of the joint solve (:func:`train_map_joint`)
    and the conditional mean of the joint Gaussian model.
    """
    B = np.asarray(B, dtype=float)
    if np.any(B <= 0):
        raise NumericError("train_map_estimate: B must be positive")
    K = pilot_book.K
    C = _contamination_gram(pilot_book, B, rho_tr)
    P1 = pilot_book.cell_block(0)
    CinvP1 = hermitian_solve(C, P1)
    inner = rho_tr * P1.conj().T @ CinvP1 + np.diag(1.0 / B[:K])
    right = hermitian_solve(inner, (np.sqrt(rho_tr) * Y_tr @ CinvP1).conj().T)
    return right.conj().T


def train_map_joint(Y_tr: np.ndarray, pilot_book: PilotBook,
                    B: np.ndarray, rho_tr: float) -> np.ndarray:
    """Joint training MAP/MMSE estimate of all L*K channels."""
    B = np.asarray(B, dtype=float)
    Psi = pilot_book.Psi
    A = rho_tr * Psi.conj().T @ Psi + np.diag(1.0 / B)
    Z = hermitian_solve(A, (np.sqrt(rho_tr) * Y_tr @ Psi).conj().T)
    return Z.conj().T


# ---------------------------------------------------------------------------
# Blind MAP
# ---------------------------------------------------------------------------

def assign_permutation(B: np.ndarray):
    """Rank users by slow fading: rank 0 gets the largest beta.

    Returns (pi, pi_inv) with pi[n] = rank of user n and
    pi_inv[r] = user holding rank r.  Ties break by ascending user index.
    """
    B = np.asarray(B, dtype=float)
    pi_inv = np.argsort(-B, kind="stable")
    pi = np.empty_like(pi_inv)
    pi[pi_inv] = np.arange(B.size)
    return pi, pi_inv


def blind_singular_values(sigma: np.ndarray, B: np.ndarray,
                          pi_inv: np.ndarray, rho_ul: float,
                          T_ul: int) -> np.ndarray:
    """Optimal singular values xi of the blind MAP estimate.

    xi_n^2 = [ -1/rho - beta*T/2 + sqrt(beta^2 T^2/4 + beta sigma_n^2/rho) ]_+
    with beta of the user ranked n.
    """
    n = pi_inv.size
    sigma = np.asarray(sigma, dtype=float)
    if sigma.size < n:
        sigma = np.concatenate([sigma, np.zeros(n - sigma.size)])
    beta = np.asarray(B, dtype=float)[pi_inv]
    s2 = sigma[:n] ** 2
    # root of y^2 + T*beta*y - beta*s2/rho = 0 for y = xi^2 + 1/rho,
    # rationalized to avoid cancellation for small roots
    disc = np.sqrt(beta ** 2 * T_ul ** 2 + 4.0 * beta * s2 / rho_ul)
    y = 2.0 * beta * s2 / rho_ul / (beta * T_ul + disc)
    return np.sqrt(np.maximum(y - 1.0 / rho_ul, 0.0))


def _fix_phases(U: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Rotate each column so its first entry of non-negligible magnitude
    is real positive (deterministic phase convention)."""
    U = U.copy()
    for j in range(U.shape[1]):
        col = U[:, j]
        nz = np.flatnonzero(np.abs(col) > tol * max(1.0, np.abs(col).max()))
        if nz.size:
            ph = col[nz[0]] / abs(col[nz[0]])
            U[:, j] = col / ph
    return U


def blind_map_estimate(Y_ul: np.ndarray, B: np.ndarray,
                       rho_ul: float) -> EstimateSet:
    """Blind MAP estimate from the SVD of the uplink data.

    Column n of the estimate is xi_{pi(n)} * u_{pi(n)} where u are the
    principal left singular vectors of Y_ul (phase-normalized) and pi
    assigns singular ranks by descending slow fading.
    """
    B = np.asarray(B, dtype=float)
    M, T_ul = Y_ul.shape
    n = B.size
    if M <= n:
        raise NumericError(
            f"blind_map_estimate requires M > K*L (got M={M}, K*L={n})")
    flags = []
    if T_ul < n:
        flags.append("subspace rank deficient")
    res = numerics.svd(Y_ul)
    pi, pi_inv = assign_permutation(B)
    xi = blind_singular_values(res.S, B, pi_inv, rho_ul, T_ul)
    r = min(n, res.U.shape[1])
    U = np.zeros((M, n), dtype=complex)
    U[:, :r] = _fix_phases(res.U[:, :r])
    H_hat = U[:, pi] * xi[pi][None, :]
    return EstimateSet(method="blind", H_hat=H_hat, permutation=pi,
                       flags=flags)


def blind_objective(H: np.ndarray, Y_ul: np.ndarray, B: np.ndarray,
                    rho_ul: float, T_ul: int) -> float:
    """l_ul(H) + l_pr(H), the blind MAP objective."""
    return _l_ul(H, Y_ul, rho_ul, T_ul) + _l_pr(H, B)


def blind_gradient(H: np.ndarray, Y_ul: np.ndarray, B: np.ndarray,
                   rho_ul: float, T_ul: int) -> np.ndarray:
    return _l_ul_grad(H, Y_ul, rho_ul, T_ul) + _l_pr_grad(H, B)


# ---------------------------------------------------------------------------
# Semi-blind MAP
# ---------------------------------------------------------------------------

def _l_ul(H, Y_ul, rho_ul, T_ul):
    if T_ul == 0:
        return 0.0
    n = H.shape[1]
    G = H.conj().T @ H
    Cz = G + np.eye(n) / rho_ul
    P = Y_ul.conj().T @ H                     # (T_ul, n)
    quad = np.real(np.trace(hermitian_solve(Cz, P.conj().T) @ P))
    shifted = rho_ul * G + np.eye(n)
    try:
        chol = np.linalg.cholesky(shifted)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"l_ul: Gram shift not PD ({exc})") from exc
    logdet = 2.0 * float(np.sum(np.log(np.real(np.diag(chol)))))
    return quad - T_ul * logdet


def _l_ul_grad(H, Y_ul, rho_ul, T_ul):
    if T_ul == 0:
        return np.zeros_like(H)
    n = H.shape[1]
    Cz = H.conj().T @ H + np.eye(n) / rho_ul
    G = hermitian_solve(Cz, H.conj().T).conj().T     # H (H^H H + I/rho)^-1
    P = Y_ul.conj().T @ H                            # Y^H H
    Q = Y_ul.conj().T @ G                            # Y^H G
    return Y_ul @ Q - G @ (P.conj().T @ Q) - T_ul * G


def _l_pr(H, B):
    return -float(np.sum(np.abs(H) ** 2 / np.asarray(B, dtype=float)[None, :]))


def _l_pr_grad(H, B):
    return -H / np.asarray(B, dtype=float)[None, :]


def _l_tr(H, Y_tr, Psi, rho_tr):
    R = Y_tr - np.sqrt(rho_tr) * H @ Psi.conj().T
    return -float(np.sum(np.abs(R) ** 2))


def _l_tr_grad(H, Y_tr, Psi, rho_tr):
    R = Y_tr - np.sqrt(rho_tr) * H @ Psi.conj().T
    return np.sqrt(rho_tr) * R @ Psi


def semi_blind_objective(H, Y_ul, Y_tr, pilot_book: PilotBook, B,
                         rho_ul, rho_tr) -> float:
    """Joint log-posterior l_tr + l_pr + l_ul (up to constants)."""
    if H.shape[1] != pilot_book.Psi.shape[1]:
        raise StructuralError("H and pilot book disagree on user count")
    T_ul = Y_ul.shape[1]
    val = (_l_tr(H, Y_tr, pilot_book.Psi, rho_tr)
           + _l_pr(H, B)
           + _l_ul(H, Y_ul, rho_ul, T_ul))
    if not np.isfinite(val):
        raise NumericError("semi_blind_objective: non-finite value")
    return val


def semi_blind_gradient(H, Y_ul, Y_tr, pilot_book: PilotBook, B,
                        rho_ul, rho_tr) -> np.ndarray:
    """Conjugate (Wirtinger) derivative of the semi-blind objective."""
    T_ul = Y_ul.shape[1]
    return (_l_tr_grad(H, Y_tr, pilot_book.Psi, rho_tr)
            + _l_pr_grad(H, B)
            + _l_ul_grad(H, Y_ul, rho_ul, T_ul))


def semi_blind_estimate(init: EstimateSet | np.ndarray, Y_ul, Y_tr,
                        pilot_book: PilotBook, B, rho_ul, rho_tr,
                        opts: OptimizerOptions | None = None,
                        snapshot_iters=None) -> EstimateSet:
    """Maximize the semi-blind MAP objective with L-BFGS from an initial
    estimate.  Returns the final estimate with the full objective trace
    (non-decreasing); iterate snapshots at the requested iteration counts
    are stored as complex matrices in ``flags``-adjacent ``snapshots``.
    """
    H0 = init.H_hat if isinstance(init, EstimateSet) else np.asarray(init)
    shape = H0.shape

    def obj(x):
        return semi_blind_objective(real_to_complex(x, shape), Y_ul, Y_tr,
                                    pilot_book, B, rho_ul, rho_tr)

    def grad(x):
        g = semi_blind_gradient(real_to_complex(x, shape), Y_ul, Y_tr,
                                pilot_book, B, rho_ul, rho_tr)
        return wirtinger_to_real_grad(g)

    res = lbfgs_maximize(obj, grad, complex_to_real(H0), opts,
                         snapshot_iters=snapshot_iters)
    est = EstimateSet(method="semi_blind",
                      H_hat=real_to_complex(res.x, shape),
                      trace=res.trace)
    if res.status == "line_search_failed":
        est.flags.append("line_search_failed")
    est.snapshots = {k: real_to_complex(v, shape)
                     for k, v in res.snapshots.items()}
    return est


# ---------------------------------------------------------------------------
# Pilot-aware subspace projection
# ---------------------------------------------------------------------------

@dataclass
class PaspWindow:
    """Binary weights over singular-vector ranks 0..R-1 per user."""

    weights: np.ndarray   # (n_users, R) in {0, 1}


def pasp_window(B: np.ndarray, pilot_book: PilotBook, R: int,
                over_all_users: bool = False) -> tuple[PaspWindow, np.ndarray]:
    """Window weights for the PASP projection.

    For each user the window spans the singular ranks whose slow-fading
    coefficients lie between the geometric means of the user's beta and
    that of the closest better / worse contaminating user.  Without a
    better (worse) contaminator the window extends to rank 0 (R-1).
    An empty window falls back to the user's own rank only.
    """
    B = np.asarray(B, dtype=float)
    n = B.size
    K = pilot_book.K
    pi, pi_inv = assign_permutation(B)
    beta_rank = B[pi_inv]          # beta by rank, descending
    W = np.zeros((n, R), dtype=float)
    for m in range(n):
        cell = m // K
        if over_all_users:
            contam = [q for q in range(n) if q // K != cell]
        else:
            contam = [q for q in range(n)
                      if q != m and pilot_book.groups[q] == pilot_book.groups[m]]
        p = pi[m]
        better = [pi[q] for q in contam if pi[q] < p]
        worse = [pi[q] for q in contam if pi[q] > p]
        hi = np.sqrt(beta_rank[max(better)] * B[m]) if better else np.inf
        lo = np.sqrt(beta_rank[min(worse)] * B[m]) if worse else 0.0
        sel = np.zeros(R, dtype=bool)
        r = min(R, n)
        sel[:r] = (beta_rank[:r] <= hi) & (beta_rank[:r] >= lo)
        if p < R:
            if not sel.any():
                sel = np.zeros(R, dtype=bool)
            sel[p] = True           # own rank always selected
        W[m, sel] = 1.0
    return PaspWindow(weights=W), pi


def pasp_estimate(Y_ul: np.ndarray, ls_all: np.ndarray, B: np.ndarray,
                  pilot_book: PilotBook, R: int | None = None,
                  over_all_users: bool = False) -> EstimateSet:
    """Project per-user LS estimates onto windows of the principal left
    singular vectors of the uplink data."""
    B = np.asarray(B, dtype=float)
    n = B.size
    if R is None:
        R = n
    res = numerics.svd(Y_ul)
    flags = []
    avail = res.U.shape[1]
    if R > avail:
        flags.append("R clamped to available ranks")
        R = avail
    U = res.U[:, :R]
    window, pi = pasp_window(B, pilot_book, R, over_all_users=over_all_users)
    proj = U.conj().T @ ls_all                     # (R, n)
    H_hat = U @ (window.weights.T * proj)
    return EstimateSet(method="pasp", H_hat=H_hat, permutation=pi,
                       flags=flags)


# ---------------------------------------------------------------------------
# Genie-aided bound
# ---------------------------------------------------------------------------

def genie_bound_estimate(Y_tr: np.ndarray, Y_ul: np.ndarray, X: np.ndarray,
                         pilot_book: PilotBook, B: np.ndarray,
                         rho_tr: float, rho_ul: float) -> np.ndarray:
    """MMSE estimate given known transmitted data symbols.

    Stacks training and data blocks with per-user augmented sequences
    [sqrt(rho_tr) psi; sqrt(rho_ul) x] so the stacked model has unit
    noise variance, then applies the training MAP closed form.
    """
    B = np.asarray(B, dtype=float)
    Phi = np.vstack([np.sqrt(rho_tr) * pilot_book.Psi,
                     np.sqrt(rho_ul) * X])
    Y = np.hstack([Y_tr, Y_ul])
    A = Phi.conj().T @ Phi + np.diag(1.0 / B)
    Z = hermitian_solve(A, (Y @ Phi).conj().T)
    return Z.conj().T
