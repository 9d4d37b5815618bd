"""Snapshot simulation and sample-average estimators.

Everything here models the full-digital view of the array, where every
antenna sample y[n] is available. The hybrid receiver only ever sees the
beam combinations produced by :func:`combine_beam`.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .array_model import AntennaPattern, ArrayGeometry, Scene, array_response, steering_vector

NOISE_STREAM = 0


@dataclass(frozen=True)
class RngStream:
    """Reproducible random source identified by ``(seed, stream_id)``.

    Sub-streams are derived through :class:`numpy.random.SeedSequence` spawn
    keys, so draws for one source never depend on how many other sources or
    runs were simulated before it.
    """

    seed: int
    stream_id: int = 0

    def generator(self, *subkey: int) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream_id), *subkey))
        return np.random.Generator(np.random.PCG64(seq))


def complex_gaussian(rng: np.random.Generator, shape, variance: float) -> np.ndarray:
    """Circularly-symmetric CN(0, variance) draws; real/imag each carry variance/2."""
    scale = np.sqrt(0.5 * variance)
    z = rng.standard_normal((2, *np.atleast_1d(shape)))
    return scale * (z[0] + 1j * z[1])


@dataclass(frozen=True, eq=False)
class SnapshotBlock:
    samples: np.ndarray
    seed: int = 0

    def __post_init__(self):
        y = np.asarray(self.samples, dtype=complex)
        if y.ndim != 2 or y.shape[1] < 1:
            raise ValueError(f"samples must be an M x N matrix with N >= 1, got shape {y.shape}")
        if not np.all(np.isfinite(y)):
            raise ValueError("samples contain non-finite entries")
        y.setflags(write=False)
        object.__setattr__(self, "samples", y)

    @property
    def num_antennas(self) -> int:
        return self.samples.shape[0]

    @property
    def num_snapshots(self) -> int:
        return self.samples.shape[1]


def generate_snapshots(
    geometry: ArrayGeometry,
    pattern: AntennaPattern,
    scene: Scene,
    num_snapshots: int,
    rng: RngStream,
) -> SnapshotBlock:
    """Draw y[n] = sum_l g(theta_l) a(theta_l) x_l[n] + z[n] for n < N.

    Source signals x_l[n] ~ CN(0, sigma_l^2) and noise z[n] ~ CN(0, N0 I) are
    mutually independent. Noise uses sub-stream 0, source l uses l + 1.
    """
    N = int(num_snapshots)
    if N < 1 or N != num_snapshots:
        raise ValueError(f"num_snapshots must be a positive integer, got {num_snapshots!r}")
    M = geometry.num_antennas
    y = np.zeros((M, N), dtype=complex)
    if scene.noise_power > 0:
        y += complex_gaussian(rng.generator(NOISE_STREAM), (M, N), scene.noise_power)
    for l, src in enumerate(scene.sources):
        if src.power == 0:
            continue
        x = complex_gaussian(rng.generator(l + 1), N, src.power)
        y += np.outer(array_response(geometry, pattern, src.doa), x)
    return SnapshotBlock(y, seed=rng.seed)


def sample_scm(block: SnapshotBlock) -> np.ndarray:
    """Sample-average SCM (1/N) sum_n y[n] y[n]^H."""
    y = block.samples
    return (y @ y.conj().T) / y.shape[1]


def combine_beam(block: SnapshotBlock, geometry: ArrayGeometry, beam_doa: float) -> np.ndarray:
    """Analog combiner output c[n] = a^H(beam_doa) y[n]."""
    _check_block(block, geometry)
    return steering_vector(geometry, beam_doa).conj() @ block.samples


def estimate_beam_power(block: SnapshotBlock, geometry: ArrayGeometry, beam_doa: float) -> float:
    c = combine_beam(block, geometry, beam_doa)
    return float(np.mean(c.real**2 + c.imag**2))


def _check_block(block: SnapshotBlock, geometry: ArrayGeometry) -> None:
    if block.num_antennas != geometry.num_antennas:
        raise ValueError(
            f"block has {block.num_antennas} antennas, geometry has {geometry.num_antennas}"
        )


# -- dump / load -------------------------------------------------------------
#
# Header line "M N seed", then the samples antenna-major with real/imag
# interleaved. ``.csv`` files hold one antenna row per line as text; any other
# suffix stores little-endian float64 after the header.


def save_snapshots(block: SnapshotBlock, path) -> None:
    path = Path(path)
    M, N = block.samples.shape
    flat = np.empty((M, 2 * N))
    flat[:, 0::2] = block.samples.real
    flat[:, 1::2] = block.samples.imag
    header = f"{M} {N} {block.seed}\n"
    try:
        if path.suffix.lower() == ".csv":
            with open(path, "w") as fh:
                fh.write(header)
                np.savetxt(fh, flat, delimiter=",", fmt="%.17g")
        else:
            with open(path, "wb") as fh:
                fh.write(header.encode("ascii"))
                fh.write(flat.astype("<f8").tobytes())
    except OSError as exc:
        raise OSError(f"cannot write snapshots to {path}: {exc}") from exc


def load_snapshots(path) -> SnapshotBlock:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with open(path) as fh:
            M, N, seed = (int(v) for v in fh.readline().split())
            flat = np.loadtxt(fh, delimiter=",", ndmin=2)
    else:
        with open(path, "rb") as fh:
            M, N, seed = (int(v) for v in fh.readline().decode("ascii").split())
            flat = np.frombuffer(fh.read(), dtype="<f8")
    flat = np.asarray(flat, dtype=float).reshape(M, 2 * N)
    return SnapshotBlock(flat[:, 0::2] + 1j * flat[:, 1::2], seed=seed)
