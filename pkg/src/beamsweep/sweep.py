"""Beam sweeping and inverse-free SCM reconstruction.

A Hermitian-Toeplitz SCM is fixed by its 2M-1 lags gamma[k] = R[m, n] with
k = m - n. Every vector here that is indexed by lag stores gamma[-(M-1)] at
position 0 and gamma[M-1] at position 2M-2, i.e. position i holds lag
k = i - (M-1).

The beam power at sine value s is a linear functional of the lags,

    P(s) = a^H(s) R a(s) = sum_k (M - |k|) exp(-j 2 pi (d/lambda) s k) gamma[k],

so stacking the Q = 2M-1 grid beams gives a square system B gamma = p. On
the canonical grid (uniform in sine, d = lambda/2) the columns of B are
orthogonal and gamma = Delta^{-1} B^H p needs no matrix inverse.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import toeplitz

from .array_model import AntennaPattern, ArrayGeometry, Scene, steering_vector, true_scm
from .snapshots import SnapshotBlock, _check_block

MEASURED = "measured"
STATISTICAL = "statistical"


class DiagonalityViolation(RuntimeError):
    """B^H B is not diagonal; the grid or spacing is not the canonical one."""


@dataclass(frozen=True, eq=False)
class DoaGrid:
    sin_values: np.ndarray
    angles: np.ndarray

    @property
    def num_beams(self) -> int:
        return len(self.sin_values)

    @property
    def Q(self) -> int:
        return len(self.sin_values)


def make_grid(M: int) -> DoaGrid:
    """Canonical grid of Q = 2M-1 beams, uniform in sine: s_q = -1 + 2q/Q."""
    if int(M) != M or M < 2:
        raise ValueError(f"need at least 2 antennas, got {M!r}")
    Q = 2 * int(M) - 1
    s = -1.0 + 2.0 * np.arange(Q) / Q
    return DoaGrid(s, np.arcsin(s))


def grid_from_sines(sin_values) -> DoaGrid:
    """Arbitrary grid, for experiments off the canonical design."""
    s = np.asarray(sin_values, dtype=float)
    if s.ndim != 1 or np.any(np.abs(s) > 1):
        raise ValueError("grid sines must be a 1-D vector inside [-1, 1]")
    return DoaGrid(s, np.arcsin(s))


def lag_axis(M: int) -> np.ndarray:
    return np.arange(-(M - 1), M)


@dataclass(frozen=True, eq=False)
class SweepMatrix:
    """Q x (2M-1) matrix B; row q maps the lag vector to the power of beam q."""

    b_rows: np.ndarray

    @property
    def num_antennas(self) -> int:
        return (self.b_rows.shape[1] + 1) // 2

    @property
    def shape(self):
        return self.b_rows.shape


def build_sweep_matrix(geometry: ArrayGeometry, grid: DoaGrid) -> SweepMatrix:
    M = geometry.num_antennas
    k = lag_axis(M)
    phase = -2.0 * np.pi * geometry.spacing_ratio * np.outer(grid.sin_values, k)
    B = (M - np.abs(k)) * np.exp(1j * phase)
    B.setflags(write=False)
    return SweepMatrix(B)


@dataclass(frozen=True, eq=False)
class DeltaDiag:
    diag: np.ndarray


def compute_delta(B: SweepMatrix, rtol: float = 1e-9) -> DeltaDiag:
    """Diagonal of B^H B, checked to be the whole of B^H B.

    Raises DiagonalityViolation if any off-diagonal entry exceeds
    ``rtol * max(diag)``.
    """
    G = B.b_rows.conj().T @ B.b_rows
    d = np.real(np.diag(G)).copy()
    off = np.abs(G - np.diag(np.diag(G))).max()
    if off > rtol * d.max():
        raise DiagonalityViolation(
            f"off-diagonal |B^H B| = {off:.3e} exceeds {rtol:g} * max diag {d.max():.3e}"
        )
    d.setflags(write=False)
    return DeltaDiag(d)


def printed_delta(M: int) -> np.ndarray:
    """Linear-in-lag diagonal Q(m+1), Q(2M-1-m) as commonly printed.

    Kept only for comparison with :func:`compute_delta`, which yields
    Q(M-|k|)^2 for the canonical grid.
    """
    Q = 2 * M - 1
    m = np.arange(Q)
    return np.where(m <= M - 1, Q * (m + 1), Q * (2 * M - 1 - m)).astype(float)


@dataclass(frozen=True)
class TruncationPlan:
    """Keep beams ceil(T/2) <= q < Q - floor(T/2); the rest read M * N0."""

    num_beams: int
    num_truncated: int
    fill_value: float

    def __post_init__(self):
        if not 0 <= self.num_truncated <= self.num_beams - 1:
            raise ValueError(
                f"T must lie in [0, {self.num_beams - 1}] for Q = {self.num_beams}, "
                f"got {self.num_truncated}"
            )

    @property
    def start(self) -> int:
        return math.ceil(self.num_truncated / 2)

    @property
    def stop(self) -> int:
        return self.num_beams - self.num_truncated // 2

    @property
    def kept_set(self) -> range:
        return range(self.start, self.stop)

    @property
    def truncated_set(self) -> list:
        return [q for q in range(self.num_beams) if not self.start <= q < self.stop]

    def kept_mask(self) -> np.ndarray:
        mask = np.zeros(self.num_beams, dtype=bool)
        mask[self.start : self.stop] = True
        return mask


def make_plan(grid: DoaGrid, num_antennas: int, T: int, noise_power: float) -> TruncationPlan:
    return TruncationPlan(grid.num_beams, int(T), float(num_antennas * noise_power))


@dataclass(frozen=True, eq=False)
class SweepResult:
    powers: np.ndarray
    plan: TruncationPlan
    source: str = MEASURED


def _beam_powers(block: SnapshotBlock, geometry: ArrayGeometry, sines: np.ndarray) -> np.ndarray:
    # all combiner outputs at once: row q is c_q[n] = a^H(theta_q) y[n]
    m = np.arange(geometry.num_antennas)
    A_h = np.exp(-2j * np.pi * geometry.spacing_ratio * np.outer(sines, m))
    c = A_h @ block.samples
    return np.mean(c.real**2 + c.imag**2, axis=1)


def full_sweep(block: SnapshotBlock, geometry: ArrayGeometry, grid: DoaGrid) -> SweepResult:
    _check_block(block, geometry)
    plan = TruncationPlan(grid.num_beams, 0, 0.0)
    return SweepResult(_beam_powers(block, geometry, grid.sin_values), plan, MEASURED)


def truncated_sweep(
    block: SnapshotBlock,
    geometry: ArrayGeometry,
    grid: DoaGrid,
    T: int,
    noise_power: float,
) -> SweepResult:
    """Measure only the Q - T beams nearest the normal; fill the rest with M * N0."""
    _check_block(block, geometry)
    plan = make_plan(grid, geometry.num_antennas, T, noise_power)
    powers = np.full(grid.num_beams, plan.fill_value)
    kept = slice(plan.start, plan.stop)
    powers[kept] = _beam_powers(block, geometry, grid.sin_values[kept])
    return SweepResult(powers, plan, MEASURED)


def statistical_powers(
    geometry: ArrayGeometry,
    pattern: AntennaPattern,
    scene: Scene,
    grid: DoaGrid,
    T: int = 0,
) -> SweepResult:
    """Noise-free beam powers a^H R a from the true SCM, optionally truncated."""
    R = true_scm(geometry, pattern, scene)
    powers = np.array(
        [np.real(np.vdot(a, R @ a)) for a in (steering_vector(geometry, th) for th in grid.angles)]
    )
    plan = make_plan(grid, geometry.num_antennas, T, scene.noise_power)
    powers[~plan.kept_mask()] = plan.fill_value
    return SweepResult(powers, plan, STATISTICAL)


# -- lags <-> matrices -------------------------------------------------------


def lag_to_scm(lags) -> np.ndarray:
    """Hermitian-Toeplitz-style matrix with R[m, n] = gamma[m - n]."""
    g = np.asarray(lags, dtype=complex)
    if g.ndim != 1 or len(g) % 2 == 0:
        raise ValueError(f"lag vector must have odd length 2M-1, got {g.shape}")
    M = (len(g) + 1) // 2
    return toeplitz(g[M - 1 :], g[M - 1 :: -1])


def scm_to_lag(R) -> np.ndarray:
    """Average each diagonal of R; exact inverse of lag_to_scm for Toeplitz R."""
    R = np.asarray(R)
    M = R.shape[0]
    if R.shape != (M, M):
        raise ValueError(f"SCM must be square, got {R.shape}")
    return np.array([np.mean(np.diagonal(R, offset=-k)) for k in lag_axis(M)])


def hermitian_lags(lags: np.ndarray) -> np.ndarray:
    """(gamma[k] + conj(gamma[-k])) / 2, with a real zero lag."""
    g = 0.5 * (lags + lags[::-1].conj())
    M = (len(g) + 1) // 2
    g[M - 1] = g[M - 1].real
    return g


def reconstruct_lags(powers, B: SweepMatrix, delta: DeltaDiag) -> np.ndarray:
    p = np.asarray(powers)
    if B.b_rows.shape[0] != p.shape[0] or B.b_rows.shape[1] != delta.diag.shape[0]:
        raise ValueError(
            f"dimension mismatch: {p.shape[0]} powers, B is {B.b_rows.shape}, "
            f"delta has {delta.diag.shape[0]} entries"
        )
    return hermitian_lags((B.b_rows.conj().T @ p) / delta.diag)


def reconstruct(sweep, B: SweepMatrix, delta: DeltaDiag) -> np.ndarray:
    """SCM from beam powers: gamma = Delta^{-1} B^H p, then Toeplitz expansion.

    ``sweep`` may be a :class:`SweepResult` or a bare power vector. No PSD
    projection is applied.
    """
    powers = sweep.powers if isinstance(sweep, SweepResult) else sweep
    return lag_to_scm(reconstruct_lags(powers, B, delta))


@dataclass
class Reconstructor:
    """Cached B and Delta for repeated reconstructions on one array."""

    geometry: ArrayGeometry

    def __post_init__(self):
        self.grid = make_grid(self.geometry.num_antennas)
        self.B = build_sweep_matrix(self.geometry, self.grid)
        self.delta = compute_delta(self.B)

    def __call__(self, sweep) -> np.ndarray:
        return reconstruct(sweep, self.B, self.delta)


# -- exports -----------------------------------------------------------------


def export_matrix_csv(R, path) -> None:
    """One row per matrix row; each complex entry spans two cells (re, im)."""
    R = np.atleast_2d(np.asarray(R, dtype=complex))
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            for row in R:
                w.writerow([f"{v:.17g}" for z in row for v in (z.real, z.imag)])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def read_matrix_csv(path) -> np.ndarray:
    rows = np.loadtxt(Path(path), delimiter=",", ndmin=2)
    return rows[:, 0::2] + 1j * rows[:, 1::2]


def export_lags_csv(lags, path) -> None:
    """Columns lag, re, im."""
    lags = np.asarray(lags, dtype=complex)
    M = (len(lags) + 1) // 2
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lag", "re", "im"])
            for k, g in zip(lag_axis(M), lags):
                w.writerow([int(k), f"{g.real:.17g}", f"{g.imag:.17g}"])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def export_sweep_csv(sweep: SweepResult, grid: DoaGrid, path) -> None:
    mask = sweep.plan.kept_mask()
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["q", "sin_value", "power", "kept"])
            for q in range(grid.num_beams):
                w.writerow([q, f"{grid.sin_values[q]:.17g}", f"{sweep.powers[q]:.17g}", int(mask[q])])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
