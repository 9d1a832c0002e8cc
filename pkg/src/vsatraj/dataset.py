"""Object-list recordings: loading, windowing, labelling and splitting.

The canonical on-disk format is a CSV with one row per (timestamp, object)
and the columns listed in :data:`CANONICAL_COLUMNS`. External exports are
adapted with a JSON column mapping, see :func:`load`.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .scene import DEFAULT_RADIUS, TYPES, SceneSnapshot

CANONICAL_COLUMNS = ("t", "id", "x", "y", "vx", "vy", "ax", "ay", "p_car", "p_truck", "p_moto",
                     "lane", "dl", "dr", "is_ego")
MANDATORY_COLUMNS = ("t", "id", "x", "y")
TYPE_COLUMNS = ("p_car", "p_truck", "p_moto")
HISTORY_FRAMES = 20
FUTURE_FRAMES = 20
FRAME_PERIOD = 0.25
NO_LANE = -1
SELECTORS = ("all", "lane_change_any", "lane_change_future", "crowded", "crowded_and_lane_change")
CROWDED_DISTANCE = 20.0
CROWDED_MIN_OTHERS = 3

# published shares (percent of samples) for the On-board and NGSIM sets
REFERENCE_COMPOSITION = {
    "On-board": {"none": 86.1, "past": 7.0, "future": 8.2},
    "NGSIM": {"none": 95.1, "any": 4.9, "future": 2.6},
}


class DatasetError(ValueError):
    pass


class SchemaError(DatasetError):
    pass


class ValidationError(DatasetError):
    pass


class LabelUnavailableError(DatasetError):
    pass


class SplitError(DatasetError):
    pass


@dataclass(frozen=True)
class ObjectFrame:
    timestamp: float
    object_id: int
    x: float
    y: float
    vx: float
    vy: float
    ax: float
    ay: float
    type_probs: tuple
    lane: int
    dl: float
    dr: float
    is_ego: bool


@dataclass(eq=False)
class TrackedObject:
    """Time-sorted trajectory of one object (or one gap-free segment of it)."""

    object_id: int
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    vx: np.ndarray
    vy: np.ndarray
    ax: np.ndarray
    ay: np.ndarray
    type_probs: np.ndarray
    lane: np.ndarray
    dl: np.ndarray
    dr: np.ndarray
    is_ego: bool = False
    segment: int = 0
    _debounced: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def key(self) -> tuple[int, int]:
        return (self.object_id, self.segment)

    @property
    def type_index(self) -> int:
        return int(np.argmax(self.type_probs.mean(axis=0)))

    @property
    def type_label(self) -> str:
        return TYPES[self.type_index]

    def frame(self, i: int) -> ObjectFrame:
        return ObjectFrame(float(self.t[i]), self.object_id, float(self.x[i]), float(self.y[i]),
                           float(self.vx[i]), float(self.vy[i]), float(self.ax[i]), float(self.ay[i]),
                           tuple(float(p) for p in self.type_probs[i]), int(self.lane[i]),
                           float(self.dl[i]), float(self.dr[i]), self.is_ego)

    def frames(self):
        return (self.frame(i) for i in range(len(self)))

    def debounced_lanes(self) -> np.ndarray:
        if self._debounced is None:
            self._debounced = debounce_lanes(self.lane)
        return self._debounced


def debounce_lanes(lane: np.ndarray, persist: int = 2) -> np.ndarray:
    """Lane ids with short-lived switches removed.

    A new lane id is accepted only once it has been observed for
    ``persist`` consecutive frames; shorter excursions keep the previous
    lane. Unknown lanes (``NO_LANE``) are passed through unchanged.
    """
    lane = np.asarray(lane)
    out = lane.copy()
    if len(lane) == 0:
        return out
    stable = lane[0]
    for i in range(1, len(lane)):
        v = lane[i]
        if v == NO_LANE:
            continue
        if v != stable and i + persist <= len(lane) and np.all(lane[i:i + persist] == v):
            stable = v
        elif stable == NO_LANE:
            stable = v
        out[i] = stable
    return out


def make_track(object_id, t, x, y, vx=None, vy=None, ax=None, ay=None, type_probs=None, lane=None,
               dl=None, dr=None, is_ego=False, segment=0) -> TrackedObject:
    """Build a track from arrays, filling optional channels.

    Missing velocities and accelerations are finite-differenced, missing
    type probabilities default to "car" and missing lanes to ``NO_LANE``.
    """
    t = np.asarray(t, dtype=float)
    n = len(t)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)

    def diff(v):
        return np.gradient(v, t) if n > 1 else np.zeros(n)

    vx = diff(x) if vx is None else np.asarray(vx, dtype=float)
    vy = diff(y) if vy is None else np.asarray(vy, dtype=float)
    ax = diff(vx) if ax is None else np.asarray(ax, dtype=float)
    ay = diff(vy) if ay is None else np.asarray(ay, dtype=float)
    if type_probs is None:
        type_probs = np.tile([1.0, 0.0, 0.0], (n, 1))
    lane = np.full(n, NO_LANE, dtype=np.int64) if lane is None else np.asarray(lane, dtype=np.int64)
    dl = np.full(n, np.nan) if dl is None else np.asarray(dl, dtype=float)
    dr = np.full(n, np.nan) if dr is None else np.asarray(dr, dtype=float)
    return TrackedObject(int(object_id), t, x, y, vx, vy, ax, ay, np.asarray(type_probs, dtype=float),
                         lane, dl, dr, bool(is_ego), int(segment))


# --------------------------------------------------------------------- I/O

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def write_csv(tracks: Iterable[TrackedObject], path) -> None:
    """Write tracks in the canonical format, rows sorted by (t, id)."""
    rows = []
    for tr in tracks:
        for i in range(len(tr)):
            rows.append((tr.t[i], tr.object_id, i, tr))
    rows.sort(key=lambda r: (r[0], r[1]))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CANONICAL_COLUMNS)
        for _, _, i, tr in rows:
            lane = int(tr.lane[i])
            w.writerow([_fmt(tr.t[i]), _fmt(tr.object_id), _fmt(tr.x[i]), _fmt(tr.y[i]),
                        _fmt(tr.vx[i]), _fmt(tr.vy[i]), _fmt(tr.ax[i]), _fmt(tr.ay[i]),
                        *(_fmt(p) for p in tr.type_probs[i]),
                        "" if lane == NO_LANE else str(lane), _fmt(tr.dl[i]), _fmt(tr.dr[i]),
                        _fmt(tr.is_ego)])


def load_mapping(path) -> dict:
    return json.loads(Path(path).read_text())


def _apply_mapping(df: pd.DataFrame, mapping: dict | None) -> pd.DataFrame:
    if not mapping:
        return df
    df = df.rename(columns=dict(mapping.get("columns", {})))
    for col, factor in mapping.get("scale", {}).items():
        if col in df:
            df[col] = df[col].astype(float) * float(factor)
    for col, off in mapping.get("offset", {}).items():
        if col in df:
            df[col] = df[col].astype(float) + float(off)
    type_col = mapping.get("type_column")
    if type_col is not None:
        if type_col not in df:
            raise SchemaError(f"type column {type_col!r} missing")
        labels = df[type_col].astype(str).map({str(k): v for k, v in mapping.get("type_values", {}).items()})
        for col, name in zip(TYPE_COLUMNS, TYPES):
            df[col] = (labels == name).astype(float)
        unknown = labels.isna()
        df.loc[unknown, "p_car"] = 1.0
    ego_id = mapping.get("ego_id")
    if ego_id is not None:
        df["is_ego"] = (df["id"] == ego_id).astype(int)
    return df


def _read_frame(path, mapping) -> pd.DataFrame:
    try:
        df = pd.read_csv(path, float_precision="round_trip")
    except pd.errors.EmptyDataError:
        raise SchemaError(f"{path}: file is empty") from None
    df = _apply_mapping(df, mapping)
    missing = [c for c in MANDATORY_COLUMNS if c not in df.columns]
    if missing:
        raise SchemaError(f"{path}: missing mandatory column(s) {missing}")
    return df


def infer_frame_period(df: pd.DataFrame) -> float:
    dts = []
    for _, g in df.groupby("id", sort=True):
        t = np.sort(g["t"].to_numpy(dtype=float))
        d = np.diff(t)
        dts.append(d[d > 0])
    dts = np.concatenate(dts) if dts else np.zeros(0)
    if len(dts) == 0:
        return FRAME_PERIOD
    return float(np.median(dts))


def _tracks_from_frame(df: pd.DataFrame, frame_period: float) -> list[TrackedObject]:
    df = df.sort_values(["id", "t"], kind="stable")
    dup = df.duplicated(["id", "t"], keep=False)
    if dup.any():
        bad = sorted(set(df.loc[dup, "id"].tolist()))
        raise ValidationError(f"timestamps not strictly increasing for object id(s) {bad}")
    tracks = []
    for oid, g in df.groupby("id", sort=True):
        t = g["t"].to_numpy(dtype=float)
        cut = np.flatnonzero(np.diff(t) > 2.0 * frame_period + 1e-9) + 1
        bounds = np.r_[0, cut, len(t)]

        def col(name, default=None):
            return g[name].to_numpy(dtype=float) if name in g else default

        probs = None
        if all(c in g for c in TYPE_COLUMNS):
            probs = g[list(TYPE_COLUMNS)].to_numpy(dtype=float)
        lane = None
        if "lane" in g:
            lane = g["lane"].fillna(NO_LANE).to_numpy(dtype=float).astype(np.int64)
        ego = bool(g["is_ego"].fillna(0).astype(int).max()) if "is_ego" in g else False
        full = dict(vx=col("vx"), vy=col("vy"), ax=col("ax"), ay=col("ay"), type_probs=probs,
                    lane=lane, dl=col("dl"), dr=col("dr"))
        x, y = col("x"), col("y")
        for seg, (a, b) in enumerate(zip(bounds[:-1], bounds[1:])):
            part = {k: (None if v is None else v[a:b]) for k, v in full.items()}
            tracks.append(make_track(int(oid), t[a:b], x[a:b], y[a:b], is_ego=ego, segment=seg, **part))
    return tracks


def load(path, column_mapping: dict | str | Path | None = None,
         frame_period: float | None = None) -> list[TrackedObject]:
    """Read a recording and return validated, time-sorted tracks.

    Tracks whose consecutive timestamps are more than two frame periods
    apart are split into separate segments of the same object id.
    """
    if isinstance(column_mapping, (str, Path)):
        column_mapping = load_mapping(column_mapping)
    df = _read_frame(path, column_mapping)
    if len(df) == 0:
        raise SchemaError(f"{path}: no rows")
    if frame_period is None:
        frame_period = infer_frame_period(df)
    return _tracks_from_frame(df, frame_period)


def validate(tracks_or_path, column_mapping=None) -> list[str]:
    """Return a list of warnings; hard errors raise."""
    tracks = tracks_or_path
    if isinstance(tracks_or_path, (str, Path)):
        df = _read_frame(tracks_or_path, column_mapping)
        warnings = [f"optional column {c!r} absent" for c in CANONICAL_COLUMNS if c not in df.columns]
        tracks = _tracks_from_frame(df, infer_frame_period(df))
    else:
        warnings = []
    for tr in tracks:
        s = tr.type_probs.sum(axis=1)
        if np.any(np.abs(s - 1.0) > 1e-6):
            warnings.append(f"object {tr.object_id}: type probabilities do not sum to 1")
        if np.any(tr.lane == NO_LANE):
            warnings.append(f"object {tr.object_id}: lane information missing")
        for name in ("x", "y", "vx", "vy", "ax", "ay"):
            if not np.all(np.isfinite(getattr(tr, name))):
                warnings.append(f"object {tr.object_id}: non-finite {name}")
    if not any(tr.is_ego for tr in tracks):
        warnings.append("no ego vehicle flagged")
    return warnings


def fingerprint(path) -> str:
    import hashlib
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ------------------------------------------------------------- frame index

class FrameIndex:
    """All object rows of a recording grouped by integer frame number."""

    def __init__(self, tracks: Sequence[TrackedObject], frame_period: float = FRAME_PERIOD):
        self.frame_period = float(frame_period)
        self.tracks = list(tracks)
        frames, ids, xs, ys, types, ego = [], [], [], [], [], []
        for tr in self.tracks:
            frames.append(self.frame_numbers(tr))
            ids.append(np.full(len(tr), tr.object_id, dtype=np.int64))
            xs.append(tr.x)
            ys.append(tr.y)
            types.append(np.full(len(tr), tr.type_index))
            ego.append(np.full(len(tr), tr.is_ego))
        if self.tracks:
            f = np.concatenate(frames)
            i = np.concatenate(ids)
            order = np.lexsort((i, f))
            self.frame = f[order]
            self.ids = i[order]
            self.xy = np.stack([np.concatenate(xs), np.concatenate(ys)], axis=1)[order]
            self.types = np.concatenate(types)[order]
            self.is_ego = np.concatenate(ego)[order]
        else:
            self.frame = np.zeros(0, dtype=np.int64)
            self.ids = np.zeros(0, dtype=np.int64)
            self.xy = np.zeros((0, 2))
            self.types = np.zeros(0, dtype=int)
            self.is_ego = np.zeros(0, dtype=bool)
        self._crowded = None

    def frame_numbers(self, track: TrackedObject) -> np.ndarray:
        return np.rint(track.t / self.frame_period).astype(np.int64)

    def rows(self, frame: int) -> slice:
        a = np.searchsorted(self.frame, frame, side="left")
        b = np.searchsorted(self.frame, frame, side="right")
        return slice(a, b)

    def snapshot(self, frame: int, target_id: int, origin: np.ndarray) -> SceneSnapshot:
        sl = self.rows(frame)
        ids = self.ids[sl]
        xy = self.xy[sl] - origin
        ego = self.is_ego[sl]
        tgt = ids == target_id
        if not tgt.any():
            target = None
            ttype = 0
        else:
            k = np.argmax(tgt)
            target = xy[k]
            ttype = int(self.types[sl][k])
        others = ~tgt & ~ego
        ego_pos = xy[np.argmax(ego)] if ego.any() else None
        return SceneSnapshot(frame * self.frame_period, target, ttype, xy[others], self.types[sl][others],
                             ids[others], ego_pos)

    def crowded_flags(self, radius: float = DEFAULT_RADIUS) -> np.ndarray:
        """Per-row crowded label (1/0), or -1 where no ego is present."""
        if self._crowded is not None and self._crowded[0] == radius:
            return self._crowded[1]
        flags = np.full(len(self.ids), -1, dtype=np.int8)
        starts = np.flatnonzero(np.r_[True, self.frame[1:] != self.frame[:-1]])
        ends = np.r_[starts[1:], len(self.frame)]
        for a, b in zip(starts, ends):
            ego = self.is_ego[a:b]
            if not ego.any():
                continue
            xy = self.xy[a:b]
            ego_xy = xy[np.argmax(ego)]
            non_ego = xy[~ego]
            d_ego = np.hypot(*(non_ego - ego_xy).T)
            diff = non_ego[:, None, :] - non_ego[None, :, :]
            dist = np.hypot(diff[..., 0], diff[..., 1])
            np.fill_diagonal(dist, np.inf)
            nearest = dist.min(axis=1) if len(non_ego) > 1 else np.full(len(non_ego), np.inf)
            count = (dist <= radius).sum(axis=1)
            ok = (d_ego < CROWDED_DISTANCE) & (nearest < CROWDED_DISTANCE) & (count >= CROWDED_MIN_OTHERS)
            f = np.zeros(b - a, dtype=np.int8)
            f[~ego] = ok
            f[ego] = 0
            flags[a:b] = f
        self._crowded = (radius, flags)
        return flags

    def row_of(self, frame: int, object_id: int) -> int:
        sl = self.rows(frame)
        k = np.searchsorted(self.ids[sl], object_id)
        if k >= sl.stop - sl.start or self.ids[sl][k] != object_id:
            raise KeyError((frame, object_id))
        return sl.start + k


# ---------------------------------------------------------------- samples

class Sample:
    """History/future window of one target vehicle around an anchor frame.

    Positions are target-centric at the anchor frame. Scene snapshots are
    built lazily from the shared :class:`FrameIndex`.
    """

    __slots__ = ("track", "anchor", "index", "history_frames", "future_frames",
                 "lane_change_past", "lane_change_future", "crowded")

    def __init__(self, track: TrackedObject, anchor: int, index: FrameIndex,
                 history_frames: int = HISTORY_FRAMES, future_frames: int = FUTURE_FRAMES):
        self.track = track
        self.anchor = int(anchor)
        self.index = index
        self.history_frames = history_frames
        self.future_frames = future_frames
        self.lane_change_past = None
        self.lane_change_future = None
        self.crowded = None

    def __repr__(self):
        return (f"Sample(target={self.target_id}, t={self.anchor_time:.2f}, "
                f"past={self.lane_change_past}, future={self.lane_change_future}, crowded={self.crowded})")

    @property
    def target_id(self) -> int:
        return self.track.object_id

    @property
    def anchor_time(self) -> float:
        return float(self.track.t[self.anchor])

    @property
    def frame_period(self) -> float:
        return self.index.frame_period

    @property
    def origin(self) -> np.ndarray:
        return np.array([self.track.x[self.anchor], self.track.y[self.anchor]])

    def _xy(self, a: int, b: int) -> np.ndarray:
        return np.stack([self.track.x[a:b], self.track.y[a:b]], axis=1) - self.origin

    @property
    def history_positions(self) -> np.ndarray:
        return self._xy(self.anchor - self.history_frames + 1, self.anchor + 1)

    @property
    def future(self) -> np.ndarray:
        return self._xy(self.anchor + 1, self.anchor + self.future_frames + 1)

    @property
    def anchor_velocity(self) -> np.ndarray:
        v = np.array([self.track.vx[self.anchor], self.track.vy[self.anchor]])
        if np.all(np.isfinite(v)):
            return v
        h = self.history_positions
        if len(h) < 2:
            raise DatasetError("insufficient history to estimate velocity")
        return (h[-1] - h[-2]) / self.frame_period

    @property
    def history_frame_numbers(self) -> np.ndarray:
        f0 = int(np.rint(self.track.t[self.anchor] / self.index.frame_period))
        return np.arange(f0 - self.history_frames + 1, f0 + 1)

    def snapshot(self, k: int) -> SceneSnapshot:
        return self.index.snapshot(int(self.history_frame_numbers[k]), self.target_id, self.origin)

    def snapshots(self) -> list[SceneSnapshot]:
        origin = self.origin
        return [self.index.snapshot(int(f), self.target_id, origin) for f in self.history_frame_numbers]

    def anchor_snapshot(self) -> SceneSnapshot:
        return self.snapshot(self.history_frames - 1)


def _consecutive_runs(frames: np.ndarray):
    if len(frames) == 0:
        return []
    cut = np.flatnonzero(np.diff(frames) != 1) + 1
    bounds = np.r_[0, cut, len(frames)]
    return list(zip(bounds[:-1], bounds[1:]))


def window(tracks: Sequence[TrackedObject], frame_period: float = FRAME_PERIOD,
           history_frames: int = HISTORY_FRAMES, future_frames: int = FUTURE_FRAMES, stride: int = 1,
           label: bool = True, radius: float = DEFAULT_RADIUS, index: FrameIndex | None = None) -> list[Sample]:
    """Slice every non-ego track into samples.

    One sample per anchor frame that has ``history_frames`` frames up to
    and including it and ``future_frames`` after it, all consecutive.
    ``stride`` keeps every n-th admissible anchor. With ``label=True`` the
    lane-change and crowded labels are attached (``None`` when unavailable).
    """
    if not frame_period > 0:
        raise DatasetError("frame_period must be positive")
    index = index or FrameIndex(tracks, frame_period)
    crowded = index.crowded_flags(radius) if label else None
    samples = []
    span = history_frames + future_frames
    for tr in sorted((t for t in tracks if not t.is_ego), key=lambda t: t.key):
        frames = index.frame_numbers(tr)
        for a, b in _consecutive_runs(frames):
            if b - a < span:
                continue
            anchors = np.arange(a + history_frames - 1, b - future_frames)[::stride]
            if label:
                past, future = _lane_change_labels(tr, anchors, history_frames, future_frames)
            for j, anc in enumerate(anchors):
                s = Sample(tr, anc, index, history_frames, future_frames)
                if label:
                    s.lane_change_past, s.lane_change_future = past[j], future[j]
                    c = crowded[index.row_of(int(frames[anc]), tr.object_id)]
                    s.crowded = None if c < 0 else bool(c)
                samples.append(s)
    return samples


def _lane_change_labels(track: TrackedObject, anchors: np.ndarray, hist: int, fut: int):
    lanes = track.debounced_lanes()
    change = np.r_[0, np.cumsum(lanes[1:] != lanes[:-1])]
    unknown = np.r_[0, np.cumsum(track.lane == NO_LANE)]
    past, future = [], []
    for a in anchors:
        lo, hi = a - hist + 1, a + fut
        if unknown[hi + 1] - unknown[lo] > 0:
            past.append(None)
            future.append(None)
            continue
        past.append(bool(change[a] - change[lo] > 0))
        future.append(bool(change[hi] - change[a] > 0))
    return past, future


def label_lane_change(sample: Sample, tracks=None) -> tuple[bool, bool]:
    """``(past, future)`` lane-change flags for ``sample``.

    ``past`` is set when the debounced lane id changes between any two
    consecutive history frames, ``future`` when it changes between the
    anchor and any later frame of the horizon.
    """
    track = sample.track
    if tracks is not None:
        track = next((t for t in tracks if t.key == sample.track.key), track)
    lo, hi = sample.anchor - sample.history_frames + 1, sample.anchor + sample.future_frames
    if np.any(track.lane[lo:hi + 1] == NO_LANE):
        raise LabelUnavailableError(f"lane id missing for object {track.object_id}")
    lanes = track.debounced_lanes()
    past = bool(np.any(lanes[lo + 1:sample.anchor + 1] != lanes[lo:sample.anchor]))
    future = bool(np.any(lanes[sample.anchor + 1:hi + 1] != lanes[sample.anchor:hi]))
    return past, future


def label_crowded(sample: Sample, radius: float = DEFAULT_RADIUS) -> bool:
    """Crowded situation at the anchor frame.

    Requires the ego within 20 m of the target, the nearest other vehicle
    within 20 m, and at least three other vehicles inside ``radius``.
    """
    snap = sample.anchor_snapshot()
    return crowded_snapshot(snap, radius)


def crowded_snapshot(snap: SceneSnapshot, radius: float = DEFAULT_RADIUS) -> bool:
    if snap.ego_position is None:
        raise LabelUnavailableError("no ego vehicle in the anchor frame")
    if snap.target_position is None:
        raise LabelUnavailableError("no target in the anchor frame")
    d_ego = float(np.hypot(*(snap.ego_position - snap.target_position)))
    d = np.hypot(*(np.asarray(snap.other_positions).reshape(-1, 2) - snap.target_position).T)
    if len(d) == 0:
        return False
    return d_ego < CROWDED_DISTANCE and float(d.min()) < CROWDED_DISTANCE and int((d <= radius).sum()) >= CROWDED_MIN_OTHERS


def split(tracks: Sequence[TrackedObject], train_fraction: float = 0.9, seed: int = 0):
    """Partition non-ego object ids into (train, validation), sorted."""
    from .hrr import rng_for

    if not 0 < train_fraction < 1:
        raise SplitError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    ids = np.array(sorted({t.object_id for t in tracks if not t.is_ego}), dtype=np.int64)
    if len(ids) < 2:
        raise SplitError("need at least two objects to split")
    n_train = int(np.clip(round(train_fraction * len(ids)), 1, len(ids) - 1))
    perm = rng_for(seed, "split").permutation(len(ids))
    return sorted(ids[perm[:n_train]].tolist()), sorted(ids[perm[n_train:]].tolist())


def select_subset(samples: Sequence[Sample], selector: str = "all") -> list[Sample]:
    if selector not in SELECTORS:
        raise DatasetError(f"unknown selector {selector!r}; expected one of {SELECTORS}")
    if selector == "all":
        return list(samples)
    if selector == "lane_change_any":
        return [s for s in samples if s.lane_change_past or s.lane_change_future]
    if selector == "lane_change_future":
        return [s for s in samples if s.lane_change_future]
    if selector == "crowded":
        return [s for s in samples if s.crowded]
    return [s for s in samples if s.crowded and (s.lane_change_past or s.lane_change_future)]


# ------------------------------------------------------------ composition

@dataclass
class CompositionReport:
    """Lane-change composition of a sample set.

    ``past`` and ``future`` may overlap; ``both`` counts the overlap so
    that ``none + past + future - both == labelled``.
    """

    labelled: int
    past: int
    future: int
    both: int
    crowded: int = 0
    unavailable: int = 0
    splits: dict = field(default_factory=dict)

    @property
    def any(self) -> int:
        return self.past + self.future - self.both

    @property
    def none(self) -> int:
        return self.labelled - self.any

    @property
    def empty(self) -> bool:
        return self.labelled == 0

    def percent(self, key: str) -> float:
        if self.empty:
            return float("nan")
        return 100.0 * getattr(self, key) / self.labelled

    def percentages(self) -> dict:
        return {k: round(self.percent(k), 1) for k in ("none", "past", "future", "both", "any", "crowded")}

    @classmethod
    def from_counts(cls, counts: dict) -> "CompositionReport":
        """Build from a count record such as the shipped reference fixtures."""
        return cls(int(counts["labelled"]), int(counts["past"]), int(counts["future"]),
                   int(counts.get("both", 0)), int(counts.get("crowded", 0)),
                   int(counts.get("unavailable", 0)))

    def to_json(self) -> dict:
        out = {"labelled": self.labelled, "none": self.none, "past": self.past, "future": self.future,
               "both": self.both, "any": self.any, "crowded": self.crowded,
               "unavailable": self.unavailable,
               "percent": None if self.empty else self.percentages()}
        if self.splits:
            out["splits"] = {k: v.to_json() for k, v in self.splits.items()}
        return out

    def table(self, title: str = "composition") -> str:
        if self.empty:
            return f"{title}: empty (no labelled samples)"
        p = self.percentages()
        lines = [title, f"  {'category':<24}{'count':>10}{'percent':>10}"]
        for key, name in (("none", "no lane change"), ("past", "past lane change"),
                          ("future", "future lane change"), ("both", "  past and future"),
                          ("any", "any lane change"), ("crowded", "crowded")):
            lines.append(f"  {name:<24}{getattr(self, key):>10d}{p[key]:>10.1f}")
        lines.append(f"  {'labelled samples':<24}{self.labelled:>10d}")
        if self.unavailable:
            lines.append(f"  {'label unavailable':<24}{self.unavailable:>10d}")
        for name, sub in self.splits.items():
            lines.append(sub.table(f"  [{name}]").replace("\n", "\n  "))
        return "\n".join(lines)


def composition_report(samples: Sequence[Sample], splits: dict | None = None) -> CompositionReport:
    """Count lane-change categories; ``splits`` maps a name to a subset."""
    labelled = past = future = both = crowded = unavailable = 0
    for s in samples:
        if s.lane_change_past is None or s.lane_change_future is None:
            unavailable += 1
            continue
        labelled += 1
        past += s.lane_change_past
        future += s.lane_change_future
        both += s.lane_change_past and s.lane_change_future
        crowded += bool(s.crowded)
    rep = CompositionReport(labelled, past, future, both, crowded, unavailable)
    for name, sub in (splits or {}).items():
        rep.splits[name] = composition_report(sub)
    return rep
