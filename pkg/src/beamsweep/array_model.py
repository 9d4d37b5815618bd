"""Uniform linear array physics: steering vectors, element patterns, true SCM.

Angles are radians measured from the array normal and restricted to the
front half-space [-pi/2, pi/2].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

HALF_PI = 0.5 * math.pi


def check_doa(doa: float) -> float:
    doa = float(doa)
    if not math.isfinite(doa):
        raise ValueError(f"DOA must be finite, got {doa!r}")
    if abs(doa) > HALF_PI:
        raise ValueError(f"DOA {doa!r} rad outside [-pi/2, pi/2]")
    return doa


def sinc_normalized(x):
    """sin(pi x) / (pi x), equal to 1 at x = 0."""
    return np.sinc(x)


def sinc_unnormalized(x):
    """sin(x) / x, equal to 1 at x = 0."""
    return np.sinc(np.asarray(x, dtype=float) / np.pi)


@dataclass(frozen=True)
class ArrayGeometry:
    """ULA with ``num_antennas`` elements spaced ``spacing_ratio`` wavelengths apart."""

    num_antennas: int
    spacing_ratio: float = 0.5

    def __post_init__(self):
        if int(self.num_antennas) != self.num_antennas or self.num_antennas < 2:
            raise ValueError(f"num_antennas must be an integer >= 2, got {self.num_antennas!r}")
        if not (self.spacing_ratio > 0 and math.isfinite(self.spacing_ratio)):
            raise ValueError(f"spacing_ratio must be positive, got {self.spacing_ratio!r}")
        object.__setattr__(self, "num_antennas", int(self.num_antennas))

    @property
    def M(self) -> int:
        return self.num_antennas


class AntennaPattern:
    """Element gain g(theta) shared by every antenna of the array."""

    def gain(self, doa: float) -> complex:
        raise NotImplementedError

    def power_gain(self, doa: float) -> float:
        return float(abs(self.gain(doa)) ** 2)


@dataclass(frozen=True)
class IsotropicPattern(AntennaPattern):
    def gain(self, doa: float) -> complex:
        check_doa(doa)
        return 1.0


@dataclass(frozen=True)
class SincPattern(AntennaPattern):
    """g(theta) = sinc(alpha * sin(theta)) with the normalized sinc.

    Larger ``alpha`` narrows the mainlobe; alpha = 1, 2, 3 give half-power
    beamwidths of roughly 53, 25 and 17 degrees.
    """

    alpha: float

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be positive, got {self.alpha!r}")

    def gain(self, doa: float) -> float:
        return float(sinc_normalized(self.alpha * math.sin(check_doa(doa))))


@dataclass(frozen=True)
class TabulatedPattern(AntennaPattern):
    """Measured pattern: complex gains sampled at increasing angles (degrees).

    Gains between samples are linearly interpolated (real and imaginary parts
    separately). The table must cover [-90, 90] degrees.
    """

    angles_deg: tuple
    gains: tuple = field(repr=False)

    def __post_init__(self):
        angles = np.asarray(self.angles_deg, dtype=float)
        gains = np.asarray(self.gains, dtype=complex)
        if angles.ndim != 1 or angles.shape != gains.shape or angles.size < 2:
            raise ValueError("angles and gains must be 1-D sequences of equal length >= 2")
        if np.any(np.diff(angles) <= 0):
            raise ValueError("tabulated angles must be strictly increasing")
        if angles[0] > -90.0 or angles[-1] < 90.0:
            raise ValueError("tabulated pattern must cover [-90, 90] degrees")
        object.__setattr__(self, "angles_deg", tuple(angles.tolist()))
        object.__setattr__(self, "gains", tuple(gains.tolist()))

    @classmethod
    def from_file(cls, path) -> "TabulatedPattern":
        """Load a two-column ``angle_degrees, gain`` text table.

        Gains may be written as Python complex literals (``0.5+0.1j``).
        Blank lines and lines starting with ``#`` are ignored.
        """
        angles, gains = [], []
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected two columns, got {line!r}")
            angles.append(float(parts[0]))
            gains.append(complex(parts[1]))
        return cls(tuple(angles), tuple(gains))

    def gain(self, doa: float) -> complex:
        deg = math.degrees(check_doa(doa))
        angles = np.asarray(self.angles_deg)
        gains = np.asarray(self.gains)
        re = np.interp(deg, angles, gains.real)
        im = np.interp(deg, angles, gains.imag)
        return complex(re, im) if im != 0 else float(re)


def pattern_gain(pattern: AntennaPattern, doa: float) -> complex:
    return pattern.gain(doa)


def half_power_beamwidth(pattern: AntennaPattern) -> float:
    """Full mainlobe width (degrees) where |g|^2 falls to half its boresight value.

    Assumes a pattern symmetric about the normal and monotone on its mainlobe.
    """
    peak = pattern.power_gain(0.0)
    f = lambda th: pattern.power_gain(th) - 0.5 * peak
    if f(HALF_PI) > 0:
        return 180.0
    # bracket the first crossing on a coarse scan to skip sidelobes
    grid = np.linspace(0.0, HALF_PI, 721)
    vals = np.array([f(t) for t in grid])
    idx = int(np.argmax(vals <= 0))
    edge = brentq(f, grid[idx - 1], grid[idx], xtol=1e-12)
    return 2.0 * math.degrees(edge)


@dataclass(frozen=True)
class Source:
    doa: float
    power: float = 1.0

    def __post_init__(self):
        check_doa(self.doa)
        if not (self.power >= 0 and math.isfinite(self.power)):
            raise ValueError(f"source power must be nonnegative, got {self.power!r}")


@dataclass(frozen=True)
class Scene:
    sources: tuple = ()
    noise_power: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        if not (self.noise_power >= 0 and math.isfinite(self.noise_power)):
            raise ValueError(f"noise_power must be nonnegative, got {self.noise_power!r}")


def steering_vector(geometry: ArrayGeometry, doa: float) -> np.ndarray:
    """a_m(theta) = exp(j 2 pi (d/lambda) sin(theta) m), m = 0..M-1."""
    phase = 2.0 * np.pi * geometry.spacing_ratio * math.sin(check_doa(doa))
    return np.exp(1j * phase * np.arange(geometry.num_antennas))


def array_response(geometry: ArrayGeometry, pattern: AntennaPattern, doa: float) -> np.ndarray:
    return pattern.gain(doa) * steering_vector(geometry, doa)


def true_scm(geometry: ArrayGeometry, pattern: AntennaPattern, scene: Scene) -> np.ndarray:
    """R = sum_l sigma_l^2 |g(theta_l)|^2 a a^H + N0 I."""
    M = geometry.num_antennas
    R = scene.noise_power * np.eye(M, dtype=complex)
    for src in scene.sources:
        a = steering_vector(geometry, src.doa)
        R += src.power * pattern.power_gain(src.doa) * np.outer(a, a.conj())
    return R


def _sine_offset_phase(geometry: ArrayGeometry, doa_beam: float, doa_source: float) -> float:
    return 2.0 * np.pi * geometry.spacing_ratio * (
        math.sin(check_doa(doa_source)) - math.sin(check_doa(doa_beam))
    )


def beam_gain_exact(geometry: ArrayGeometry, doa_beam: float, doa_source: float) -> float:
    """|a^H(theta_b) a(theta_s)|^2 via the Dirichlet kernel."""
    M = geometry.num_antennas
    x = _sine_offset_phase(geometry, doa_beam, doa_source)
    den = math.sin(0.5 * x)
    if abs(den) < 1e-12:
        # phase is a multiple of 2*pi: every term adds coherently
        return float(M * M)
    return (math.sin(0.5 * M * x) / den) ** 2


def beam_gain_sinc(geometry: ArrayGeometry, doa_beam: float, doa_source: float) -> float:
    """Large-array approximation M^2 sinc^2(pi (d/lambda) M (sin_s - sin_b)), unnormalized sinc."""
    M = geometry.num_antennas
    x = 0.5 * M * _sine_offset_phase(geometry, doa_beam, doa_source)
    return float(M * M * sinc_unnormalized(x) ** 2)

