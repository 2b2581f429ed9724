"""Channel realizations and received uplink-data / training blocks.

The channel matrix factorizes as H = A * diag(sqrt(beta)) with i.i.d.
standard complex Gaussian fast fading A.  Received blocks:

    Y_ul = sqrt(rho_ul) * H X^H + N_ul
    Y_tr = sqrt(rho_tr) * H Psi^H + N_tr

with unit-variance symbols X, unit-norm pilots Psi and unit-variance
noise.  ``noise_scale`` is a test hook: 0 gives the exact noiseless model.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import StructuralError
from .scenario import PilotBook


def crandn(rng: np.random.Generator, *shape) -> np.ndarray:
    """i.i.d. CN(0, 1) samples."""
    return (rng.standard_normal(shape)
            + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


@dataclass
class ChannelSet:
    """True channels of all L*K users to one base station."""

    H: np.ndarray       # (M, L*K) complex
    A: np.ndarray       # (M, L*K) fast fading
    beta: np.ndarray    # (L*K,) slow fading

    @property
    def M(self) -> int:
        return self.H.shape[0]

    @property
    def n_users(self) -> int:
        return self.H.shape[1]


@dataclass
class ReceivedSignals:
    Y_ul: np.ndarray    # (M, T_ul)
    Y_tr: np.ndarray    # (M, T_tr)
    X: np.ndarray       # (T_ul, L*K) transmitted symbols (kept for the genie)


def draw_channels(beta: np.ndarray, M: int,
                  rng: np.random.Generator) -> ChannelSet:
    """Draw H = A * diag(sqrt(beta)) with A ~ CN(0, 1)."""
    beta = np.asarray(beta, dtype=float)
    A = crandn(rng, M, beta.size)
    H = A * np.sqrt(beta)[None, :]
    return ChannelSet(H=H, A=A, beta=beta)


def synth_uplink_data(channels: ChannelSet, rho_ul: float, T_ul: int,
                      rng: np.random.Generator,
                      noise_scale: float = 1.0,
                      X: np.ndarray | None = None):
    """Synthesize the uplink data block; returns (Y_ul, X).

    ``X`` may be passed in when several base stations observe the same
    transmitted symbols through different channels.
    """
    n = channels.n_users
    if X is None:
        X = crandn(rng, T_ul, n)
    N = crandn(rng, channels.M, T_ul)
    Y_ul = np.sqrt(rho_ul) * channels.H @ X.conj().T + noise_scale * N
    return Y_ul, X


def synth_training(channels: ChannelSet, rho_tr: float,
                   pilot_book: PilotBook, rng: np.random.Generator,
                   noise_scale: float = 1.0) -> np.ndarray:
    """Synthesize the training block Y_tr = sqrt(rho_tr) H Psi^H + N."""
    if pilot_book.Psi.shape[1] != channels.n_users:
        raise StructuralError(
            f"pilot book covers {pilot_book.Psi.shape[1]} users, "
            f"channel set has {channels.n_users}")
    N = crandn(rng, channels.M, pilot_book.Psi.shape[0])
    return (np.sqrt(rho_tr) * channels.H @ pilot_book.Psi.conj().T
            + noise_scale * N)


def dump_matrix_csv(path, A: np.ndarray) -> None:
    """Write a complex matrix as CSV, each entry as a re,im column pair."""
    A = np.atleast_2d(np.asarray(A))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        for row in A:
            flat = []
            for z in row:
                flat.extend((repr(float(np.real(z))), repr(float(np.imag(z)))))
            w.writerow(flat)


def load_matrix_csv(path) -> np.ndarray:
    """Inverse of :func:`dump_matrix_csv`."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            vals = [float(v) for v in row]
            rows.append([complex(re, im)
                         for re, im in zip(vals[0::2], vals[1::2])])
    return np.array(rows)
