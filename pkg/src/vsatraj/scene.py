"""Semantic scene vectors for highway snapshots.

A scene is encoded as the superposition of the target vehicle, bound to
``TARGET`` and its type vector, plus every other object within a radius
bound to its own type vector. Positions are encoded either by convolutive
powers of the unitary axis vectors ``X`` and ``Y`` ("power"), by plain
scalar multiples ``x*X + y*Y`` ("scalar"), or by the power encoding with
an extra ``EGO`` term for the ego vehicle ("power_ego").

All positions are target-centric and road aligned (x longitudinal, y
lateral), in metres.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import hrr

TYPES = ("car", "truck", "motorcycle")
ATOM_NAMES = ("TYPE_car", "TYPE_truck", "TYPE_motorcycle", "TARGET", "EGO")
AXIS_NAMES = ("X", "Y")
VARIANTS = ("power", "scalar", "power_ego")
VOCAB_VERSION = 1
DEFAULT_RADIUS = 40.0
MAX_ATOM_SIMILARITY = 0.2


class SceneError(ValueError):
    pass


class MalformedSnapshotError(SceneError):
    pass


class UnsupportedProbeError(SceneError):
    pass


def type_index(label) -> int:
    if isinstance(label, (int, np.integer)):
        if not 0 <= label < len(TYPES):
            raise SceneError(f"unknown type index {label}")
        return int(label)
    try:
        return TYPES.index(label)
    except ValueError:
        raise SceneError(f"unknown type label {label!r}; expected one of {TYPES}") from None


@dataclass(frozen=True, eq=False)
class Vocabulary:
    """Atomic vectors for one experiment, regenerated from ``(dimension, seed)``."""

    dimension: int
    seed: int
    atoms: dict = field(repr=False)
    X: hrr.UnitaryVector = field(repr=False)
    Y: hrr.UnitaryVector = field(repr=False)

    @classmethod
    def create(cls, dimension: int = 512, seed: int = 0, max_tries: int = 1000) -> "Vocabulary":
        """Generate a vocabulary, moving to the next seed while any two atoms
        are too similar (only enforced for ``dimension >= 256``)."""
        for s in range(seed, seed + max_tries):
            vocab = cls._generate(dimension, s)
            if dimension < 256 or vocab.max_cross_similarity() < MAX_ATOM_SIMILARITY:
                return vocab
        raise SceneError(f"no admissible vocabulary in seeds {seed}..{seed + max_tries - 1}")

    @classmethod
    def _generate(cls, dimension: int, seed: int) -> "Vocabulary":
        atoms = {}
        for name in ATOM_NAMES:
            v = hrr.random_unit(dimension, seed, stream=name)
            v.flags.writeable = False
            atoms[name] = v
        X = hrr.random_unitary(dimension, seed, stream="X")
        Y = hrr.random_unitary(dimension, seed, stream="Y")
        return cls(dimension, seed, atoms, X, Y)

    def __getitem__(self, name: str) -> np.ndarray:
        if name in AXIS_NAMES:
            return getattr(self, name).values
        return self.atoms[name]

    @property
    def names(self) -> tuple:
        return ATOM_NAMES + AXIS_NAMES

    def type_vector(self, label) -> np.ndarray:
        return self.atoms["TYPE_" + TYPES[type_index(label)]]

    def max_cross_similarity(self) -> float:
        vecs = [self[n] for n in self.names]
        return max(abs(hrr.similarity(a, b)) for a, b in combinations(vecs, 2))

    def to_json(self) -> dict:
        return {"version": VOCAB_VERSION, "dimension": self.dimension, "seed": self.seed,
                "names": list(self.names)}

    @classmethod
    def from_json(cls, data: dict) -> "Vocabulary":
        if data.get("version") != VOCAB_VERSION:
            raise SceneError(f"unsupported vocabulary version {data.get('version')!r}")
        if list(data.get("names", [])) != list(ATOM_NAMES + AXIS_NAMES):
            raise SceneError("vocabulary names do not match this encoder")
        return cls._generate(int(data["dimension"]), int(data["seed"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        return cls.from_json(json.loads(Path(path).read_text()))

    # cached spectra used by the batched encoders
    def _spectra(self):
        cache = self.__dict__.get("_spec_cache")
        if cache is None:
            types = np.stack([np.fft.rfft(self.type_vector(t)) for t in TYPES])
            cache = {
                "types": types,
                "target": np.fft.rfft(self.atoms["TARGET"]),
                "ego": np.fft.rfft(self.atoms["EGO"]),
                "X": self.X.spectrum,
                "Y": self.Y.spectrum,
            }
            object.__setattr__(self, "_spec_cache", cache)
        return cache


@dataclass(frozen=True, eq=False)
class SceneSnapshot:
    """One moment of a scene in target-centric coordinates.

    ``other_*`` arrays describe every non-target, non-ego object; the ego
    position is kept separately.
    """

    timestamp: float
    target_position: np.ndarray | None
    target_type: int = 0
    other_positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    other_types: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    other_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    ego_position: np.ndarray | None = None

    @classmethod
    def build(cls, timestamp=0.0, target=(0.0, 0.0), target_type="car", others=(), ego=None):
        """Convenience constructor from plain tuples.

        ``others`` is a sequence of ``(x, y, type)`` or ``(x, y, type, id)``.
        """
        pos = np.array([o[:2] for o in others], dtype=float).reshape(-1, 2)
        types = np.array([type_index(o[2]) for o in others], dtype=int)
        ids = np.array([o[3] if len(o) > 3 else i for i, o in enumerate(others)], dtype=np.int64)
        return cls(float(timestamp), None if target is None else np.asarray(target, dtype=float),
                   type_index(target_type), pos, types, ids,
                   None if ego is None else np.asarray(ego, dtype=float))

    def validate(self) -> None:
        if self.target_position is None:
            raise MalformedSnapshotError("snapshot has no target")
        if not (np.all(np.isfinite(self.target_position)) and np.all(np.isfinite(self.other_positions))):
            raise MalformedSnapshotError("snapshot has non-finite coordinates")
        if self.ego_position is not None and not np.all(np.isfinite(self.ego_position)):
            raise MalformedSnapshotError("ego position is not finite")


@dataclass(frozen=True, eq=False)
class SceneVector:
    values: np.ndarray
    seed: int
    timestamp: float
    variant: str
    scale: float | tuple = 1.0

    @property
    def dimension(self) -> int:
        return self.values.shape[0]


def _realify(spec: np.ndarray, d: int) -> np.ndarray:
    # DC and Nyquist bins of each power factor are reduced to their real
    # part, matching hrr.power() exactly for any unitary base
    spec[..., 0] = spec[..., 0].real
    if d % 2 == 0:
        spec[..., -1] = spec[..., -1].real
    return spec


def axis_scales(scale) -> tuple[float, float]:
    """``(sx, sy)`` from a scalar scale or a longitudinal/lateral pair."""
    sx, sy = (scale, scale) if np.ndim(scale) == 0 else tuple(scale)
    return float(sx), float(sy)


def _position_spectra(vocab: Vocabulary, pos: np.ndarray, scale) -> np.ndarray:
    """Spectra of ``X**(x/sx) * Y**(y/sy)`` for each row of ``pos``."""
    d = vocab.dimension
    sx, sy = axis_scales(scale)
    ex = _realify(np.exp(1j * np.outer(pos[:, 0] / sx, vocab.X.phases)), d)
    ey = _realify(np.exp(1j * np.outer(pos[:, 1] / sy, vocab.Y.phases)), d)
    return ex * ey


def _ordered_others(snap: SceneSnapshot, radius: float):
    pos = np.asarray(snap.other_positions, dtype=float).reshape(-1, 2)
    keep = np.hypot(*(pos - snap.target_position).T) <= radius
    order = np.argsort(np.asarray(snap.other_ids)[keep], kind="stable")
    return pos[keep][order], np.asarray(snap.other_types)[keep][order]


def _check_params(radius: float, scale: float = 1.0) -> None:
    if not radius > 0:
        raise SceneError(f"radius must be positive, got {radius}")
    if np.ndim(scale) not in (0, 1) or np.size(scale) not in (1, 2) or not np.all(np.asarray(scale) > 0):
        raise SceneError(f"scale must be positive (scalar or x/y pair), got {scale}")


def encode_snapshots(snapshots: Sequence[SceneSnapshot], vocab: Vocabulary, variant: str = "power",
                     radius: float = DEFAULT_RADIUS, scale: float = 1.0) -> np.ndarray:
    """Encode many snapshots at once; returns an ``(n, D)`` array.

    Work is done in the real-DFT domain and the per-object terms of each
    snapshot are summed in ascending object-id order, target first.
    """
    if variant not in VARIANTS:
        raise SceneError(f"unknown variant {variant!r}")
    _check_params(radius, scale)
    d = vocab.dimension
    sp = vocab._spectra()
    n = len(snapshots)
    out = np.empty((n, d))
    if n == 0:
        return out

    rows_pos, rows_coef, rows_owner = [], [], []
    ego_pos = np.zeros((n, 2))
    for i, snap in enumerate(snapshots):
        snap.validate()
        if variant == "power_ego":
            if snap.ego_position is None:
                raise MalformedSnapshotError("power_ego encoding needs an ego position")
            ego_pos[i] = snap.ego_position
        pos, types = _ordered_others(snap, radius)
        rows_pos.append(np.asarray(snap.target_position, dtype=float)[None, :])
        rows_pos.append(pos)
        rows_coef.append(np.array([-1 - snap.target_type]))
        rows_coef.append(types)
        rows_owner.append(np.full(len(pos) + 1, i))
    pos = np.concatenate(rows_pos)
    coef_idx = np.concatenate(rows_coef)
    owner = np.concatenate(rows_owner)
    starts = np.flatnonzero(np.r_[True, owner[1:] != owner[:-1]])

    # negative codes mark the target term: TARGET (*) TYPE_t
    coef_table = np.concatenate([sp["types"], sp["target"][None, :] * sp["types"]])
    coef_row = np.where(coef_idx < 0, len(TYPES) - 1 - coef_idx, coef_idx)

    chunk = 4096
    spec_sum = np.empty((n, d // 2 + 1), dtype=complex)
    # chunk over rows so memory stays bounded; owners never straddle chunks
    bounds = list(range(0, len(starts), max(1, chunk // 16))) + [len(starts)]
    for a, b in zip(bounds[:-1], bounds[1:]):
        if a == b:
            continue
        r0 = starts[a]
        r1 = starts[b] if b < len(starts) else len(pos)
        p = pos[r0:r1]
        coef = coef_table[coef_row[r0:r1]]
        if variant == "scalar":
            terms = coef * (p[:, :1] * sp["X"] + p[:, 1:] * sp["Y"])
        else:
            terms = coef * _position_spectra(vocab, p, scale)
        spec_sum[a:b] = np.add.reduceat(terms, starts[a:b] - r0, axis=0)
    out[:] = np.fft.irfft(spec_sum, n=d, axis=1)
    if variant == "power_ego":
        ego = np.fft.irfft(sp["ego"] * _position_spectra(vocab, ego_pos, scale), n=d, axis=1)
        out += ego
    return out


def _encode_one(snapshot, vocab, variant, radius, scale) -> SceneVector:
    values = encode_snapshots([snapshot], vocab, variant, radius, scale)[0]
    return SceneVector(values, vocab.seed, snapshot.timestamp, variant, scale)


def encode_scene_power(snapshot: SceneSnapshot, vocab: Vocabulary, radius: float = DEFAULT_RADIUS,
                       scale: float = 1.0) -> SceneVector:
    return _encode_one(snapshot, vocab, "power", radius, scale)


def encode_scene_scalar(snapshot: SceneSnapshot, vocab: Vocabulary,
                        radius: float = DEFAULT_RADIUS) -> SceneVector:
    """Scalar position encoding ``TYPE (*) (x*X + y*Y)``; metres multiply the
    axis vectors directly, so there is no scale parameter."""
    return _encode_one(snapshot, vocab, "scalar", radius, 1.0)


def encode_scene_power_ego(snapshot: SceneSnapshot, vocab: Vocabulary, radius: float = DEFAULT_RADIUS,
                           scale: float = 1.0) -> SceneVector:
    """Power encoding plus ``EGO (*) X**x_ego (*) Y**y_ego``; the ego term
    ignores the radius."""
    return _encode_one(snapshot, vocab, "power_ego", radius, scale)


def encode_scene_reference(snapshot: SceneSnapshot, vocab: Vocabulary, variant: str = "power",
                           radius: float = DEFAULT_RADIUS, scale: float = 1.0) -> np.ndarray:
    """Term-by-term encoding with ``hrr.bind``/``hrr.power``; slow, used as
    an independent check of :func:`encode_snapshots`."""
    snapshot.validate()
    _check_params(radius, scale)
    sx, sy = axis_scales(scale)
    tx, ty = snapshot.target_position

    def place(x, y):
        if variant == "scalar":
            return hrr.superpose([x * vocab["X"], y * vocab["Y"]])
        return hrr.bind(hrr.power(vocab.X, x / sx), hrr.power(vocab.Y, y / sy))

    terms = [hrr.bind_all([vocab["TARGET"], vocab.type_vector(snapshot.target_type), place(tx, ty)])]
    pos, types = _ordered_others(snapshot, radius)
    for (x, y), t in zip(pos, types):
        terms.append(hrr.bind(vocab.type_vector(t), place(x, y)))
    s = hrr.superpose(terms)
    if variant == "power_ego":
        if snapshot.ego_position is None:
            raise MalformedSnapshotError("power_ego encoding needs an ego position")
        ex, ey = snapshot.ego_position
        s = s + hrr.bind(vocab["EGO"], place(ex, ey))
    return s


@dataclass(frozen=True, eq=False)
class HeatMap:
    x: np.ndarray
    y: np.ndarray
    similarity: np.ndarray
    probe: str

    def argmax(self) -> tuple[float, float]:
        i, j = np.unravel_index(np.argmax(self.similarity), self.similarity.shape)
        return float(self.x[i]), float(self.y[j])

    def local_maxima(self, threshold: float) -> list[tuple[float, float, float]]:
        """Grid points above ``threshold`` not exceeded by any 8-neighbour."""
        s = self.similarity
        padded = np.pad(s, 1, constant_values=-np.inf)
        neigh = np.stack([padded[1 + di:1 + di + s.shape[0], 1 + dj:1 + dj + s.shape[1]]
                          for di in (-1, 0, 1) for dj in (-1, 0, 1) if di or dj])
        mask = (s >= neigh.max(axis=0)) & (s > threshold)
        return [(float(self.x[i]), float(self.y[j]), float(s[i, j])) for i, j in zip(*np.nonzero(mask))]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "similarity"])
            for i, xv in enumerate(self.x):
                for j, yv in enumerate(self.y):
                    w.writerow([repr(float(xv)), repr(float(yv)), repr(float(self.similarity[i, j]))])


def _grid(lo_hi, step) -> np.ndarray:
    lo, hi = map(float, lo_hi)
    if hi < lo:
        raise SceneError(f"empty range {lo_hi}")
    n = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n)


def heat_map(scene: SceneVector, vocab: Vocabulary, probe: str = "target", x_range=(-40.0, 40.0),
             y_range=(-10.0, 10.0), step: float = 0.5, target_type="car") -> HeatMap:
    """Similarity between ``scene`` and ``P (*) X**x (*) Y**y`` over a grid.

    ``probe`` is ``"target"`` (``P = TARGET (*) TYPE_target``) or a type
    label such as ``"car"`` (``P = TYPE_car``).
    """
    if scene.variant == "scalar":
        raise UnsupportedProbeError("scalar-encoded scenes cannot be probed on a position grid")
    if not step > 0:
        raise SceneError(f"step must be positive, got {step}")
    if scene.dimension != vocab.dimension:
        raise hrr.DimensionError("scene and vocabulary dimensions differ")
    d = vocab.dimension
    sp = vocab._spectra()
    if probe == "target":
        p_spec = sp["target"] * sp["types"][type_index(target_type)]
        desc = f"TARGET*TYPE_{TYPES[type_index(target_type)]}"
    else:
        p_spec = sp["types"][type_index(probe)]
        desc = f"TYPE_{TYPES[type_index(probe)]}"
    xs, ys = _grid(x_range, step), _grid(y_range, step)
    # dot(a, b) = sum_k w_k Re(conj(A_k) B_k) / D with rfft bin weights w
    w = np.full(d // 2 + 1, 2.0)
    w[0] = 1.0
    if d % 2 == 0:
        w[-1] = 1.0
    s_spec = np.fft.rfft(scene.values)
    sx, sy = axis_scales(scene.scale)
    ex = _realify(np.exp(1j * np.outer(xs / sx, vocab.X.phases)), d)
    ey = _realify(np.exp(1j * np.outer(ys / sy, vocab.Y.phases)), d)
    sim = ((ex * (w * np.conj(s_spec) * p_spec)) @ ey.T).real / d
    return HeatMap(xs, ys, sim, desc)


class SceneEncoder(TransformerMixin, BaseEstimator):
    """Turn samples into model input sequences.

    ``variant`` is one of ``"numerical"`` (target positions, 2-D),
    ``"power"``, ``"scalar"`` or ``"power_ego"`` (scene vectors, D-D).
    Fitting only builds the vocabulary; no statistics are learned.
    """

    def __init__(self, variant="power", dimension=512, seed=0, radius=DEFAULT_RADIUS, scale=1.0):
        self.variant = variant
        self.dimension = dimension
        self.seed = seed
        self.radius = radius
        self.scale = scale

    def fit(self, X=None, y=None):
        if self.variant not in VARIANTS + ("numerical",):
            raise SceneError(f"unknown variant {self.variant!r}")
        _check_params(self.radius, self.scale)
        self.vocabulary_ = None if self.variant == "numerical" else Vocabulary.create(self.dimension, self.seed)
        self.n_features_out_ = 2 if self.variant == "numerical" else self.vocabulary_.dimension
        return self

    def transform(self, X) -> np.ndarray:
        if not hasattr(self, "n_features_out_"):
            from sklearn.exceptions import NotFittedError
            raise NotFittedError("SceneEncoder is not fitted yet")
        samples = list(X)
        if self.variant == "numerical":
            return np.stack([s.history_positions for s in samples]) if samples else np.zeros((0, 0, 2))
        snaps = [snap for s in samples for snap in s.snapshots()]
        enc = encode_snapshots(snaps, self.vocabulary_, self.variant, self.radius, self.scale)
        if not samples:
            return enc.reshape(0, 0, self.n_features_out_)
        return enc.reshape(len(samples), -1, self.n_features_out_)
