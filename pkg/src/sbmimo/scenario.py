"""Experiment geometry and bookkeeping: hexagonal cell layouts with
wrap-around, user placement, slow-fading coefficients and pilot books.

Cell counts must admit an exact toroidal wrap-around on the triangular
lattice, i.e. ``L = i^2 + i*j + j^2`` for integers (i, j): 1, 3, 4, 7, 9,
12, 13, 16, 19, 21, ...  This covers the single-cell case as well as the
7- and 21-cell configurations used in the experiments.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

PILOT_MODES = ("shared_orthonormal", "per_cell_random_unit_norm")

_MIN_USER_DISTANCE_DEFAULT = 35.0


def _loeschian_factors(L: int):
    """Return (i, j) with i^2 + i*j + j^2 == L, or None."""
    for i in range(int(math.isqrt(L)) + 1):
        for j in range(i, int(math.isqrt(L)) + 1):
            if i * i + i * j + j * j == L:
                return (i, j)
    return None


def supported_cell_counts(limit: int = 40):
    return [L for L in range(1, limit + 1) if _loeschian_factors(L)]


@dataclass(frozen=True)
class Scenario:
    """Immutable experiment description.

    ``rho_tr`` is derived as ``rho_ul * T_tr`` (unit-norm pilots spread the
    training energy over T_tr slots).  Noise variance is 1; all SNRs are
    linear.  With ``beta_edge_norm`` the slow-fading coefficients are
    normalized by the pathloss at the cell edge (distance = cell
    circumradius), so rho_ul is the uplink SNR of an unshadowed cell-edge
    user.
    """

    L: int = 7
    K: int = 2
    M: int = 64
    T_ul: int = 100
    T_tr: int = 2
    rho_ul: float = 10.0
    rho_dl: float = 10.0
    inter_site_distance: float = 500.0
    shadow_sigma_dB: float = 6.0
    pathloss_exponent: float = 3.76
    # 15.3 dB at 1 m equals the common 128.1 + 37.6*log10(d/km) urban-macro fit
    pathloss_ref_dB: float = 15.3
    min_user_distance: float = _MIN_USER_DISTANCE_DEFAULT
    beta_edge_norm: bool = True
    seed: int = 0
    pilot_reuse: str = "shared_orthonormal"

    @property
    def rho_tr(self) -> float:
        return self.rho_ul * self.T_tr

    @property
    def n_users(self) -> int:
        return self.L * self.K

    def __post_init__(self):
        if self.M < 1:
            raise ConfigurationError("M must be >= 1")
        if self.K < 1:
            raise ConfigurationError("K must be >= 1")
        if self.T_tr < self.K:
            raise ConfigurationError(
                f"T_tr={self.T_tr} must be >= K={self.K}")
        if self.T_ul < 0:
            raise ConfigurationError("T_ul must be >= 0")
        if self.rho_ul <= 0 or self.rho_dl <= 0:
            raise ConfigurationError("SNRs must be positive")
        if self.pilot_reuse not in PILOT_MODES:
            raise ConfigurationError(
                f"pilot_reuse must be one of {PILOT_MODES}")
        if self.L < 1:
            raise ConfigurationError("L must be >= 1")
        if self.inter_site_distance <= 2 * self.min_user_distance:
            raise ConfigurationError(
                "inter_site_distance too small for the minimum user distance")


def load_scenario(path) -> Scenario:
    """Load a Scenario from a JSON config file.

    Unknown keys are rejected.  An explicit "rho_tr" key is accepted but
    must equal rho_ul * T_tr.
    """
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ConfigurationError("scenario config must be a JSON object")
    fields = {f.name for f in dataclasses.fields(Scenario)}
    rho_tr = raw.pop("rho_tr", None)
    unknown = set(raw) - fields
    if unknown:
        raise ConfigurationError(
            f"unknown scenario keys: {sorted(unknown)}; "
            f"allowed: {sorted(fields | {'rho_tr'})}")
    sc = Scenario(**raw)
    if rho_tr is not None and not math.isclose(rho_tr, sc.rho_tr):
        raise ConfigurationError(
            f"rho_tr={rho_tr} inconsistent with rho_ul*T_tr={sc.rho_tr}")
    return sc


# ---------------------------------------------------------------------------
# Layout
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CellLayout:
    """Base-station positions and the wrap-around displacement set."""

    positions: np.ndarray   # (L, 2)
    shifts: np.ndarray      # (n_shifts, 2), includes the zero shift

    @property
    def n_cells(self) -> int:
        return self.positions.shape[0]

    def wrapped_distance(self, a, b) -> float:
        d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
        return float(np.min(np.hypot(d[0] - self.shifts[:, 0],
                                     d[1] - self.shifts[:, 1])))

    def wrapped_distances(self, points: np.ndarray, ref) -> np.ndarray:
        """Minimum-image distances from each row of ``points`` to ``ref``."""
        d = np.asarray(points, dtype=float) - np.asarray(ref, dtype=float)
        dx = d[:, 0][:, None] - self.shifts[None, :, 0]
        dy = d[:, 1][:, None] - self.shifts[None, :, 1]
        return np.min(np.hypot(dx, dy), axis=1)


def build_layout(scenario: Scenario) -> CellLayout:
    """Deterministic hexagonal layout of L sites with toroidal wrap-around."""
    L = scenario.L
    d = scenario.inter_site_distance
    ij = _loeschian_factors(L)
    if ij is None:
        raise ConfigurationError(
            f"unsupported cell count L={L}; supported counts are "
            f"{supported_cell_counts()}")
    i, j = ij
    a1 = np.array([d, 0.0])
    a2 = np.array([0.5 * d, 0.5 * math.sqrt(3.0) * d])
    # super-lattice (wrap) basis in lattice coordinates: (i, j), (-j, i+j)
    T1 = i * a1 + j * a2
    T2 = -j * a1 + (i + j) * a2

    if L == 1:
        # degenerate case: plain Euclidean metric
        return CellLayout(positions=np.zeros((1, 2)),
                          shifts=np.zeros((1, 2)))

    # enumerate lattice points by distance from origin, keep one
    # representative per wrap-around coset
    rng_lim = i + j + 2
    cands = []
    for m in range(-rng_lim, rng_lim + 1):
        for n in range(-rng_lim, rng_lim + 1):
            p = m * a1 + n * a2
            cands.append((float(np.hypot(p[0], p[1])), m, n))
    cands.sort()

    def coset(m, n):
        # integer solution of [i -j; j i+j] [a; b] = [m; n] modulo 1
        a_num = (i + j) * m + j * n
        b_num = -j * m + i * n
        return (a_num % L, b_num % L)

    seen = {}
    for _, m, n in cands:
        c = coset(m, n)
        if c not in seen:
            seen[c] = m * a1 + n * a2
            if len(seen) == L:
                break
    positions = np.array(list(seen.values()))

    aa, bb = np.meshgrid(np.arange(-2, 3), np.arange(-2, 3))
    shifts = aa.ravel()[:, None] * T1[None, :] + bb.ravel()[:, None] * T2[None, :]
    return CellLayout(positions=positions, shifts=shifts)


# ---------------------------------------------------------------------------
# User placement
# ---------------------------------------------------------------------------

def _in_hexagon(p: np.ndarray, d: float) -> bool:
    # Wigner-Seitz cell of the triangular lattice: |p . u| <= d/2 for the
    # three neighbor axes at 0, 60 and 120 degrees
    for ang in (0.0, math.pi / 3.0, 2.0 * math.pi / 3.0):
        if abs(p[0] * math.cos(ang) + p[1] * math.sin(ang)) > d / 2.0 + 1e-12:
            return False
    return True


def drop_users(layout: CellLayout, scenario: Scenario,
               rng: np.random.Generator) -> np.ndarray:
    """Drop K users uniformly in each cell's hexagon, at least
    ``min_user_distance`` from the serving base station.

    Returns positions of shape (L*K, 2); user n = i*K + k sits in cell i.
    """
    d = scenario.inter_site_distance
    r_c = d / math.sqrt(3.0)   # hexagon circumradius
    out = np.empty((scenario.L * scenario.K, 2))
    n = 0
    for i in range(scenario.L):
        center = layout.positions[i]
        for _ in range(scenario.K):
            while True:
                p = rng.uniform(-r_c, r_c, size=2)
                if not _in_hexagon(p, d):
                    continue
                if np.hypot(p[0], p[1]) < scenario.min_user_distance:
                    continue
                out[n] = center + p
                n += 1
                break
    return out


# ---------------------------------------------------------------------------
# Slow fading
# ---------------------------------------------------------------------------

def pathloss_dB(d_m, scenario: Scenario):
    """Log-distance pathloss in dB at distance d_m meters."""
    return (scenario.pathloss_ref_dB
            + 10.0 * scenario.pathloss_exponent * np.log10(d_m))


def _edge_reference_dB(scenario: Scenario) -> float:
    if not scenario.beta_edge_norm:
        return 0.0
    d_edge = scenario.inter_site_distance / math.sqrt(3.0)
    return pathloss_dB(d_edge, scenario)


def slow_fading_matrix(positions: np.ndarray, layout: CellLayout,
                       scenario: Scenario,
                       rng: np.random.Generator) -> np.ndarray:
    """Slow-fading coefficients beta[b, n] from user n to base station b.

    beta = 10^(-(PL_dB(d) + S)/10) with wrap-around distances and
    independent log-normal shadowing S ~ N(0, shadow_sigma_dB^2) per link.
    """
    Lb = layout.n_cells
    n_users = positions.shape[0]
    beta = np.empty((Lb, n_users))
    ref = _edge_reference_dB(scenario)
    shadow = rng.normal(0.0, scenario.shadow_sigma_dB, size=(Lb, n_users))
    for b in range(Lb):
        dist = layout.wrapped_distances(positions, layout.positions[b])
        pl = pathloss_dB(dist, scenario)
        beta[b] = 10.0 ** (-(pl + shadow[b] - ref) / 10.0)
    return beta


def slow_fading(positions: np.ndarray, layout: CellLayout,
                scenario: Scenario, rng: np.random.Generator) -> np.ndarray:
    """Slow-fading vector to base station 1 (flattened user index)."""
    return slow_fading_matrix(positions, layout, scenario, rng)[0]


# ---------------------------------------------------------------------------
# Pilots
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PilotBook:
    """Unit-norm pilot sequences; column n of Psi is the pilot of user n.

    ``groups`` labels users by pilot: users with the same label transmit
    the identical pilot sequence and contaminate each other.
    """

    Psi: np.ndarray      # (T_tr, L*K) complex
    K: int
    groups: np.ndarray   # (L*K,) int

    @property
    def L(self) -> int:
        return self.Psi.shape[1] // self.K

    def cell_block(self, i: int) -> np.ndarray:
        return self.Psi[:, i * self.K:(i + 1) * self.K]


def allocate_pilots(scenario: Scenario,
                    rng: np.random.Generator) -> PilotBook:
    """Build the pilot book.

    shared_orthonormal: all cells reuse the first K columns of the scaled
    T_tr x T_tr DFT matrix (orthonormal).  per_cell_random_unit_norm:
    independent complex-Gaussian columns normalized to unit norm.
    """
    T_tr, K, L = scenario.T_tr, scenario.K, scenario.L
    if T_tr < K:
        raise ConfigurationError(f"T_tr={T_tr} must be >= K={K}")
    if scenario.pilot_reuse == "shared_orthonormal":
        idx = np.arange(T_tr)
        F = np.exp(-2j * np.pi * np.outer(idx, idx) / T_tr) / math.sqrt(T_tr)
        block = F[:, :K]
        Psi = np.tile(block, (1, L))
        groups = np.tile(np.arange(K), L)
    else:
        Psi = (rng.standard_normal((T_tr, L * K))
               + 1j * rng.standard_normal((T_tr, L * K)))
        Psi /= np.linalg.norm(Psi, axis=0, keepdims=True)
        groups = np.arange(L * K)
    return PilotBook(Psi=Psi, K=K, groups=groups)
