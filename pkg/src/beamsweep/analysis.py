"""Error metrics and closed-form predictions for the sweep reconstruction."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .array_model import AntennaPattern, ArrayGeometry, Scene
from .sweep import (
    DeltaDiag,
    DoaGrid,
    SweepMatrix,
    TruncationPlan,
    build_sweep_matrix,
    compute_delta,
    lag_axis,
    make_grid,
    reconstruct,
    reconstruct_lags,
    statistical_powers,
)


@dataclass(frozen=True)
class ErrorReport:
    squared_error: float
    nse: float


def squared_error(R_hat, R) -> float:
    R_hat, R = np.asarray(R_hat), np.asarray(R)
    if R_hat.shape != R.shape:
        raise ValueError(f"shape mismatch: {R_hat.shape} vs {R.shape}")
    d = R_hat - R
    return float(np.sum(d.real**2 + d.imag**2))


def error_report(R_hat, R) -> ErrorReport:
    """Squared Frobenius error and its normalization by ||R||_F^2."""
    se = squared_error(R_hat, R)
    ref = float(np.sum(np.abs(np.asarray(R)) ** 2))
    if ref == 0:
        raise ValueError("NSE undefined for an all-zero reference SCM")
    return ErrorReport(se, se / ref)


def lag_weighted_se(lags_hat, lags) -> float:
    """sum_k (M - |k|) |gamma_hat[k] - gamma[k]|^2, the SE of two Toeplitz SCMs."""
    d = np.asarray(lags_hat) - np.asarray(lags)
    M = (len(d) + 1) // 2
    return float(np.sum((M - np.abs(lag_axis(M))) * np.abs(d) ** 2))


def _canonical(num_beams: int):
    if num_beams % 2 == 0 or num_beams < 3:
        raise ValueError(f"canonical grids have odd Q >= 3, got {num_beams}")
    geometry = ArrayGeometry((num_beams + 1) // 2)
    B = build_sweep_matrix(geometry, make_grid(geometry.num_antennas))
    return B, compute_delta(B)


def se_power_identity(p_hat, p, num_beams: int) -> tuple[float, float]:
    """Return (||R_hat - R||_F^2, ||p_hat - p||^2 / Q) for canonical reconstructions.

    The left side reconstructs both SCMs from their power vectors; the right
    side is the power-domain residual scaled by 1/Q.
    """
    p_hat, p = np.asarray(p_hat, dtype=float), np.asarray(p, dtype=float)
    if p_hat.shape != (num_beams,) or p.shape != (num_beams,):
        raise ValueError(f"expected two length-{num_beams} power vectors, got {p_hat.shape}, {p.shape}")
    B, delta = _canonical(num_beams)
    lhs = squared_error(reconstruct(p_hat, B, delta), reconstruct(p, B, delta))
    rhs = float(np.sum((p_hat - p) ** 2)) / num_beams
    return lhs, rhs


def se_from_power_residual(p_hat, p, B: SweepMatrix, delta: DeltaDiag) -> float:
    """Exact SE of the reconstructions as a function of the power residual.

    With delta_gamma = Delta^{-1} B^H (p_hat - p), the SE is the lag-weighted
    norm sum_k (M - |k|) |delta_gamma[k]|^2. The unweighted Q^{-1} ||p_hat - p||^2
    instead equals sum_k (M - |k|)^2 |delta_gamma[k]|^2, so the two agree only
    for residuals confined to lag zero.
    """
    dp = np.asarray(p_hat, dtype=float) - np.asarray(p, dtype=float)
    return lag_weighted_se(reconstruct_lags(dp, B, delta), np.zeros(B.shape[1]))


@dataclass(frozen=True)
class GridAssignment:
    indices: tuple
    distances: tuple


def snap_to_grid(scene: Scene, grid: DoaGrid) -> GridAssignment:
    """Nearest canonical grid beam to each source, measured in the sine domain.

    Ties go to the lower index. Sines are periodic with period 2 for half-wave
    spacing, so a source near sin = +1 may snap to beam 0 at sin = -1.
    """
    Q = grid.num_beams
    idx, dist = [], []
    for src in scene.sources:
        u = (math.sin(src.doa) + 1.0) * Q / 2.0
        q = math.ceil(u - 0.5)
        dist.append(abs(u - q) * 2.0 / Q)
        idx.append(q % Q)
    return GridAssignment(tuple(idx), tuple(dist))


def _snapped_weights(scene: Scene, pattern: AntennaPattern, grid: DoaGrid):
    """Per source: (q_l, sigma_l^2 |g(theta^(q_l))|^2)."""
    snap = snap_to_grid(scene, grid)
    return [
        (q, src.power * pattern.power_gain(float(grid.angles[q])))
        for q, src in zip(snap.indices, scene.sources)
    ]


def predict_truncation_se(
    scene: Scene, pattern: AntennaPattern, grid: DoaGrid, plan: TruncationPlan
) -> float:
    """Closed-form truncation loss (M^2 / Q) sum_{q_l truncated} sigma_l^2 |g|^2.

    Evaluated as commonly stated, linear in each truncated source's received
    power. Compare :func:`truncation_se_oracle` for the exact noise-free value.
    """
    Q = grid.num_beams
    M = (Q + 1) // 2
    dropped = set(plan.truncated_set)
    total = sum(w for q, w in _snapped_weights(scene, pattern, grid) if q in dropped)
    return M * M / Q * total


def truncation_se_oracle(
    geometry: ArrayGeometry,
    scene: Scene,
    pattern: AntennaPattern,
    grid: DoaGrid,
    plan: TruncationPlan,
) -> float:
    """Q^{-1} sum_{q truncated} (P_q - M N0)^2 from exact statistical powers."""
    P = statistical_powers(geometry, pattern, scene, grid).powers
    M = geometry.num_antennas
    dropped = plan.truncated_set
    return float(np.sum((P[dropped] - M * scene.noise_power) ** 2)) / grid.num_beams


@dataclass(frozen=True)
class MsePrediction:
    signal_term: float
    cross_term: float
    noise_term: float

    @property
    def total(self) -> float:
        return self.signal_term + self.cross_term + self.noise_term


def predict_mse(scene: Scene, pattern: AntennaPattern, grid: DoaGrid, num_snapshots: int) -> MsePrediction:
    """Asymptotic mean SE of the untruncated sweep at N snapshots.

    signal = M^4/(QN) sum |g|^4 sigma^4, cross = 2 M^3 N0/(QN) sum |g|^2 sigma^2,
    noise = M^2 N0^2/(QN), with g taken at each source's snapped grid angle.
    """
    if num_snapshots < 1:
        raise ValueError(f"num_snapshots must be >= 1, got {num_snapshots}")
    Q = grid.num_beams
    M = (Q + 1) // 2
    N0 = scene.noise_power
    w = np.array([w for _, w in _snapped_weights(scene, pattern, grid)], dtype=float)
    QN = Q * num_snapshots
    return MsePrediction(
        signal_term=M**4 / QN * float(np.sum(w**2)),
        cross_term=2 * M**3 * N0 / QN * float(np.sum(w)),
        noise_term=M**2 * N0**2 / QN,
    )


def export_predictions_csv(rows, path) -> None:
    """Write (term, value) pairs with a header row."""
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["term", "value"])
            for term, value in rows:
                w.writerow([term, f"{value:.17g}"])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def prediction_rows(mse: MsePrediction | None = None, truncation: float | None = None):
    rows = []
    if mse is not None:
        rows += [
            ("mse_signal", mse.signal_term),
            ("mse_cross", mse.cross_term),
            ("mse_noise", mse.noise_term),
            ("mse_total", mse.total),
        ]
    if truncation is not None:
        rows.append(("truncation_se", truncation))
    return rows
