"""Metrics: subspace angle, MF/ZF precoders, downlink rates, empirical
CDFs and nearest-rank percentiles."""

from __future__ import annotations

import numpy as np

from .errors import InputError, StructuralError
from .numerics import pseudo_inverse


def subspace_angle(h_true: np.ndarray, h_est: np.ndarray) -> float:
    """Angle in degrees between a true and an estimated channel vector,
    theta = arccos(|h^H h_est| / (||h|| ||h_est||)).

    Invariant to complex scaling of either argument.  A zero estimate
    yields the worst case 90 degrees; a zero true channel is an error.
    """
    h_true = np.asarray(h_true).ravel()
    h_est = np.asarray(h_est).ravel()
    nt = np.linalg.norm(h_true)
    ne = np.linalg.norm(h_est)
    if nt == 0.0:
        raise InputError("subspace_angle: true channel is zero")
    if ne == 0.0:
        return 90.0
    c = abs(np.vdot(h_true, h_est)) / (nt * ne)
    return float(np.degrees(np.arccos(np.clip(c, 0.0, 1.0))))


def mf_precoder(H_hat: np.ndarray) -> np.ndarray:
    """Matched filter: column-normalized channel estimates."""
    W = np.array(H_hat, dtype=complex, copy=True)
    norms = np.linalg.norm(W, axis=0)
    nz = norms > 0
    W[:, nz] /= norms[nz][None, :]
    return W


def zf_precoder(H_hat: np.ndarray) -> np.ndarray:
    """Zero-forcing: columns of H (H^H H)^-1, normalized to unit norm.

    Falls back to the pseudo-inverse for rank-deficient estimates.
    """
    W = pseudo_inverse(H_hat).conj().T
    norms = np.linalg.norm(W, axis=0)
    nz = norms > 0
    W = np.array(W)
    W[:, nz] /= norms[nz][None, :]
    return W


def downlink_rates(G: np.ndarray, precoders: np.ndarray, rho_dl: float,
                   K: int) -> np.ndarray:
    """Per-user downlink rates log2(1 + SINR) with equal power rho_dl/K
    per stream.

    G[b] is the M x (L*K) matrix of true channels from base station b to
    every user; precoders[b] is the M x K precoder of base station b for
    its own K users.  User n = j*K + k is served by base station j.
    """
    G = np.asarray(G)
    precoders = np.asarray(precoders)
    Lb, M, n_users = G.shape
    if precoders.shape != (Lb, M, K) or n_users != Lb * K:
        raise StructuralError(
            f"downlink_rates: inconsistent shapes G={G.shape}, "
            f"W={precoders.shape}, K={K}")
    p = rho_dl / K
    # gains[b, n, m] = |g_{b,n}^H w_{b,m}|^2
    gains = np.abs(np.einsum("bmn,bmk->bnk", G.conj(), precoders)) ** 2
    rates = np.empty(n_users)
    for n in range(n_users):
        j, k = divmod(n, K)
        sig = p * gains[j, n, k]
        interf = p * (gains[:, n, :].sum() - gains[j, n, k])
        rates[n] = np.log2(1.0 + sig / (1.0 + interf))
    return rates


def empirical_cdf(samples: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Fractions P(X < x) over the grid (strict inequality)."""
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size == 0:
        raise InputError("empirical_cdf: empty samples")
    grid = np.asarray(grid, dtype=float)
    s = np.sort(samples)
    return np.searchsorted(s, grid, side="left") / s.size


def percentile(samples: np.ndarray, p: float) -> float:
    """Nearest-rank percentile, 0 < p < 100."""
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size == 0:
        raise InputError("percentile: empty samples")
    if not (0.0 < p < 100.0):
        raise InputError("percentile: p must be in (0, 100)")
    s = np.sort(samples)
    rank = max(1, int(np.ceil(p / 100.0 * s.size)))
    return float(s[rank - 1])
