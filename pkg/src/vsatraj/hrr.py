"""Holographic reduced representation algebra on real vectors.

Vectors are plain 1-D ``float64`` numpy arrays. Binding is circular
convolution computed through the real DFT, superposition is addition and
similarity is the dot product. Continuous values are encoded with
convolutive powers of unitary vectors, i.e. per-bin exponentiation of
the spectrum followed by the real part of the inverse transform.
"""
from __future__ import annotations

import zlib
from typing import Iterable, Sequence

import numpy as np

UNITARY_TOL = 1e-9


class HRRError(ValueError):
    """Base class for invalid vector-algebra inputs."""


class DimensionError(HRRError):
    pass


class EmptyInputError(HRRError):
    pass


class NonUnitaryError(HRRError):
    pass


class InvalidExponentError(HRRError):
    pass


def _check_dimension(dimension) -> int:
    if int(dimension) != dimension or dimension < 2:
        raise DimensionError(f"dimension must be an integer >= 2, got {dimension!r}")
    return int(dimension)


def _as_vector(v) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"expected a 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise HRRError("vector contains non-finite entries")
    return arr


def _same_dimension(v: np.ndarray, w: np.ndarray) -> None:
    if v.shape != w.shape:
        raise DimensionError(f"dimension mismatch: {v.shape[0]} vs {w.shape[0]}")


def rng_for(seed: int, *key) -> np.random.Generator:
    """Independent generator for ``(seed, key...)``.

    String keys are hashed with CRC32 so that streams are stable across
    platforms and Python hash randomisation.
    """
    spawn = tuple(zlib.crc32(k.encode()) if isinstance(k, str) else int(k) for k in key)
    return np.random.default_rng(np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=spawn))


def identity(dimension: int) -> np.ndarray:
    """The binding identity ``(1, 0, ..., 0)``."""
    e = np.zeros(_check_dimension(dimension))
    e[0] = 1.0
    return e


def random_unit(dimension: int, rng_seed: int, stream: str | None = None) -> np.ndarray:
    """Isotropic random vector on the unit sphere (Gaussian, then normalised).

    ``stream`` selects an independent named stream under the same seed.
    """
    d = _check_dimension(dimension)
    v = rng_for(rng_seed, *(() if stream is None else (stream,))).standard_normal(d)
    return v / np.linalg.norm(v)


class UnitaryVector:
    """A real vector whose DFT coefficients all have unit magnitude.

    The spectrum and its principal-branch phases are computed once and
    cached; instances are immutable and safe to share between threads.
    """

    __slots__ = ("values", "spectrum", "phases")

    def __init__(self, values, *, tol: float = UNITARY_TOL):
        v = _as_vector(values).copy()
        spec = np.fft.rfft(v)
        if np.max(np.abs(np.abs(spec) - 1.0)) > tol:
            raise NonUnitaryError("vector spectrum does not have unit magnitude in every bin")
        v.flags.writeable = False
        spec.flags.writeable = False
        self.values = v
        self.spectrum = spec
        self.phases = _principal_phase(spec, v.shape[0])
        self.phases.flags.writeable = False

    @classmethod
    def from_phases(cls, phases: np.ndarray, dimension: int) -> "UnitaryVector":
        """Build from ``dimension // 2 + 1`` real-DFT phases.

        The DC phase (and the Nyquist phase for even ``dimension``) must be
        0 or pi so that the vector is real.
        """
        d = _check_dimension(dimension)
        phases = np.asarray(phases, dtype=np.float64)
        if phases.shape != (d // 2 + 1,):
            raise DimensionError(f"expected {d // 2 + 1} phases, got {phases.shape}")
        spec = np.exp(1j * phases)
        spec[0] = np.round(spec[0].real)
        if d % 2 == 0:
            spec[-1] = np.round(spec[-1].real)
        return cls(np.fft.irfft(spec, n=d))

    @property
    def dimension(self) -> int:
        return self.values.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self) -> int:
        return self.dimension

    def __repr__(self) -> str:
        return f"UnitaryVector(dimension={self.dimension})"


def _principal_phase(spec: np.ndarray, d: int) -> np.ndarray:
    spec = spec.copy()
    spec[0] = spec[0].real
    if d % 2 == 0:
        spec[-1] = spec[-1].real
    ph = np.angle(spec)
    # principal branch is (-pi, pi]
    ph[ph <= -np.pi] = np.pi
    return ph


def random_unitary(dimension: int, rng_seed: int, stream: str | None = None) -> UnitaryVector:
    """Random unitary vector with uniformly distributed spectral phases.

    The DC bin is fixed to +1. For even dimensions the Nyquist bin is
    also +1: a -1 there makes fractional powers lose unitarity and
    exponent additivity once the real part is taken.
    """
    d = _check_dimension(dimension)
    n_bins = d // 2 + 1
    rng = rng_for(rng_seed, *(() if stream is None else (stream,)))
    # uniform on (-pi, pi]
    phases = np.pi - 2.0 * np.pi * rng.random(n_bins)
    phases[0] = 0.0
    if d % 2 == 0:
        phases[-1] = 0.0
    return UnitaryVector.from_phases(phases, d)


def bind(v, w) -> np.ndarray:
    """Circular convolution ``IDFT(DFT(v) * DFT(w))``."""
    a, b = _as_vector(v), _as_vector(w)
    _same_dimension(a, b)
    return np.fft.irfft(np.fft.rfft(a) * np.fft.rfft(b), n=a.shape[0])


def bind_all(vs: Sequence) -> np.ndarray:
    """Bind a non-empty sequence of vectors left to right."""
    if len(vs) == 0:
        raise EmptyInputError("nothing to bind")
    arrs = [_as_vector(v) for v in vs]
    for a in arrs[1:]:
        _same_dimension(arrs[0], a)
    spec = np.fft.rfft(arrs[0])
    for a in arrs[1:]:
        spec = spec * np.fft.rfft(a)
    return np.fft.irfft(spec, n=arrs[0].shape[0])


def power(u: UnitaryVector, p: float) -> np.ndarray:
    """Convolutive power ``u**p`` for a unitary base and any real exponent.

    Each spectral bin is raised to ``p`` on the principal branch, then
    the real part of the inverse DFT is returned.
    """
    if not isinstance(u, UnitaryVector):
        u = UnitaryVector(u)
    p = float(p)
    if not np.isfinite(p):
        raise InvalidExponentError(f"exponent must be finite, got {p!r}")
    mag = np.abs(u.spectrum) ** p
    # irfft drops the imaginary part of the DC/Nyquist bins, which is
    # exactly the real part of the full complex inverse transform
    return np.fft.irfft(mag * np.exp(1j * p * u.phases), n=u.dimension)


def superpose(vs: Iterable) -> np.ndarray:
    """Entrywise sum, no normalisation."""
    arrs = [_as_vector(v) for v in vs]
    if not arrs:
        raise EmptyInputError("cannot superpose an empty list")
    out = arrs[0].copy()
    for a in arrs[1:]:
        _same_dimension(out, a)
        out += a
    return out


def similarity(v, w) -> float:
    a, b = _as_vector(v), _as_vector(w)
    _same_dimension(a, b)
    return float(np.dot(a, b))


def inverse(u: UnitaryVector) -> np.ndarray:
    """Exact inverse of a unitary vector, ``u**-1``."""
    return power(u, -1.0)
