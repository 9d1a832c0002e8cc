"""Synthetic multi-lane highway recordings.

Vehicles move independently: a per-vehicle base speed plus an
Ornstein-Uhlenbeck perturbation longitudinally, and lane-centre keeping
with minimum-jerk (quintic) lane changes laterally. Lane changes arrive as
a Poisson process that pauses while a manoeuvre is in progress; a change
towards an occupied lane waits for a gap. One extra track is the ego
vehicle, which keeps its lane.
"""
from __future__ import annotations

import heapq
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import dataset
from .hrr import rng_for

TYPE_PROBS = {"car": 0.8, "truck": 0.15, "motorcycle": 0.05}
EGO_ID = 0


class ConfigError(ValueError):
    pass


@dataclass
class HighwayConfig:
    lanes: int = 3
    lane_width: float = 3.5
    duration: float = 600.0
    frame_period: float = 0.25
    vehicles: int = 200
    speed_range: tuple = (24.0, 34.0)
    lane_change_rate: float = 0.5
    lane_change_duration: float = 4.0
    noise_std: float = 0.0
    velocity_noise_std: float = 0.0
    road_length: float = 4000.0
    ou_theta: float = 0.05
    ou_sigma: float = 0.3
    min_gap: float = 10.0
    max_wait: float = 10.0
    seed: int = 0

    def validate(self) -> None:
        if self.lanes < 2:
            raise ConfigError("need at least two lanes")
        if self.vehicles < 1:
            raise ConfigError("need at least one vehicle")
        for name in ("lane_width", "duration", "frame_period", "lane_change_duration", "road_length"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("lane_change_rate", "noise_std", "velocity_noise_std", "ou_theta", "ou_sigma",
                     "min_gap", "max_wait"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        lo, hi = self.speed_range
        if not 0 < lo <= hi:
            raise ConfigError("speed_range must satisfy 0 < low <= high")
        if self.n_frames < 2:
            raise ConfigError("duration shorter than two frames")

    @property
    def n_frames(self) -> int:
        return int(round(self.duration / self.frame_period)) + 1

    @property
    def lane_change_frames(self) -> int:
        return max(2, int(round(self.lane_change_duration / self.frame_period)))

    @classmethod
    def from_dict(cls, data: dict) -> "HighwayConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config field(s) {sorted(unknown)}")
        data = dict(data)
        if "speed_range" in data:
            data["speed_range"] = tuple(float(v) for v in data["speed_range"])
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "HighwayConfig":
        path = Path(path)
        if path.suffix == ".toml":
            import tomli
            data = tomli.loads(path.read_text())
        else:
            data = json.loads(path.read_text())
        return cls.from_dict(data.get("highway", data))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["speed_range"] = list(self.speed_range)
        return d


@dataclass(eq=False)
class GeneratedTrack:
    """Observed track plus the generator's ground truth."""

    track: dataset.TrackedObject
    type_label: str
    true_xy: np.ndarray
    true_v: np.ndarray
    true_a: np.ndarray
    lane: np.ndarray
    lane_changes: list = field(default_factory=list)  # (start_frame, end_frame, from_lane, to_lane)

    @property
    def object_id(self) -> int:
        return self.track.object_id

    @property
    def is_ego(self) -> bool:
        return self.track.is_ego

    def switch_frames(self) -> list[int]:
        """Frame index at which the lane id flips for each lane change."""
        return [start + (end - start + 1) // 2 for start, end, _, _ in self.lane_changes]


def min_jerk(tau: np.ndarray):
    """Quintic blend ``s(tau)`` and its first two derivatives on [0, 1]."""
    tau = np.clip(tau, 0.0, 1.0)
    s = tau**3 * (10 - 15 * tau + 6 * tau**2)
    ds = 30 * tau**2 * (1 - tau) ** 2
    dds = 60 * tau * (1 - tau) * (1 - 2 * tau)
    return s, ds, dds


def _truncated_normal(rng: np.random.Generator, std: float, size) -> np.ndarray:
    """Gaussian noise truncated to (-3 std, 3 std) by resampling."""
    z = rng.standard_normal(size)
    bad = np.abs(z) >= 3.0
    while bad.any():
        z[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(z) >= 3.0
    return std * z


def _longitudinal(cfg: HighwayConfig, rng, v_base: float, x0: float, n: int, dt: float) -> np.ndarray:
    if cfg.ou_sigma == 0:
        return x0 + v_base * dt * np.arange(n)
    decay = np.exp(-cfg.ou_theta * dt)
    if cfg.ou_theta > 0:
        step_std = cfg.ou_sigma * np.sqrt((1 - decay**2) / (2 * cfg.ou_theta))
    else:
        step_std = cfg.ou_sigma * np.sqrt(dt)
    xi = rng.standard_normal(n)
    u = np.empty(n)
    u[0] = 0.0
    for k in range(1, n):
        u[k] = u[k - 1] * decay + step_std * xi[k]
    v = np.maximum(v_base + u, 0.0)
    x = np.empty(n)
    x[0] = x0
    x[1:] = x0 + np.cumsum(0.5 * (v[1:] + v[:-1]) * dt)
    return x


def generate(config: HighwayConfig) -> list[GeneratedTrack]:
    """Generate tracks for ``config``; deterministic per ``config.seed``."""
    cfg = config
    cfg.validate()
    n, dt = cfg.n_frames, cfg.frame_period
    t = dt * np.arange(n)
    n_veh = cfg.vehicles + 1  # index 0 is the ego
    ego_lane = cfg.lanes // 2
    lo, hi = cfg.speed_range

    rng_init = rng_for(cfg.seed, "init")
    types = ["car"] + list(rng_init.choice(list(TYPE_PROBS), size=cfg.vehicles, p=list(TYPE_PROBS.values())))
    v_base = np.r_[0.5 * (lo + hi), rng_init.uniform(lo, hi, cfg.vehicles)]
    x0 = np.r_[0.5 * cfg.road_length, rng_init.uniform(0.0, cfg.road_length, cfg.vehicles)]
    lane0 = np.r_[ego_lane, rng_init.integers(0, cfg.lanes, cfg.vehicles)]

    xs = np.stack([_longitudinal(cfg, rng_for(cfg.seed, "ou", i), v_base[i], x0[i], n, dt)
                   for i in range(n_veh)])
    lane_plan = _schedule_lane_changes(cfg, xs, lane0)

    tracks = []
    for i in range(n_veh):
        lanes = np.full(n, lane0[i], dtype=np.int64)
        y = (lane0[i] + 0.5) * cfg.lane_width * np.ones(n)
        changes = lane_plan[i]
        for start, end, a, b in changes:
            m = end - start
            tau = (np.arange(start, n) - start) / m
            s, _, _ = min_jerk(tau)
            y[start:] = (a + 0.5) * cfg.lane_width + (b - a) * cfg.lane_width * s
            lanes[start + (m + 1) // 2:] = b
        true_xy = np.stack([xs[i], y], axis=1)
        true_v = np.stack([np.gradient(xs[i], dt), np.gradient(y, dt)], axis=1)
        true_a = np.stack([np.gradient(true_v[:, 0], dt), np.gradient(true_v[:, 1], dt)], axis=1)

        rng_obs = rng_for(cfg.seed, "obs", i)
        obs_xy = true_xy.copy()
        obs_v = true_v.copy()
        if cfg.noise_std > 0:
            obs_xy += _truncated_normal(rng_obs, cfg.noise_std, obs_xy.shape)
        if cfg.velocity_noise_std > 0:
            obs_v += _truncated_normal(rng_obs, cfg.velocity_noise_std, obs_v.shape)
        probs = np.zeros((n, 3))
        probs[:, list(TYPE_PROBS).index(types[i])] = 1.0
        dl = (lanes + 1) * cfg.lane_width - obs_xy[:, 1]
        dr = obs_xy[:, 1] - lanes * cfg.lane_width
        tr = dataset.TrackedObject(i, t.copy(), obs_xy[:, 0], obs_xy[:, 1], obs_v[:, 0], obs_v[:, 1],
                                   true_a[:, 0].copy(), true_a[:, 1].copy(), probs, lanes.copy(), dl, dr,
                                   is_ego=(i == EGO_ID))
        tracks.append(GeneratedTrack(tr, str(types[i]), true_xy, true_v, true_a, lanes, list(changes)))
    return tracks


def _schedule_lane_changes(cfg: HighwayConfig, xs: np.ndarray, lane0: np.ndarray) -> list[list]:
    """Event-driven lane-change plan, processed in time order over all vehicles."""
    n_veh, n = xs.shape
    dt = cfg.frame_period
    m = cfg.lane_change_frames
    plan = [[] for _ in range(n_veh)]
    # a vehicle occupies lane_now and, during a manoeuvre, lane_alt as well
    lane_now = np.repeat(lane0[:, None], n, axis=1).astype(np.int64)
    lane_alt = np.full((n_veh, n), -1, dtype=np.int64)
    if cfg.lane_change_rate == 0:
        return plan
    rate = cfg.lane_change_rate / 60.0
    rngs = [rng_for(cfg.seed, "lc", i) for i in range(n_veh)]
    heap = []
    for i in range(1, n_veh):
        heapq.heappush(heap, (rngs[i].exponential(1.0 / rate), i, 0.0))
    max_wait_frames = int(round(cfg.max_wait / dt))
    while heap:
        t_event, i, _ = heapq.heappop(heap)
        start = int(np.ceil(t_event / dt - 1e-9))
        if start + m >= n:
            continue
        rng = rngs[i]
        cur = lane_now[i, start]
        options = [l for l in (cur - 1, cur + 1) if 0 <= l < cfg.lanes]
        rng.shuffle(options)
        chosen = None
        for wait in range(max_wait_frames + 1):
            f = start + wait
            if f + m >= n:
                break
            for target in options:
                if _lane_free(cfg, xs, lane_now, lane_alt, i, target, f, f + m):
                    chosen = (f, target)
                    break
            if chosen:
                break
        if chosen is None:
            # keep the manoeuvre pending rather than dropping it
            heapq.heappush(heap, ((start + max_wait_frames + 1) * dt, i, 0.0))
            continue
        f, target = chosen
        end = f + m
        plan[i].append((f, end, int(cur), int(target)))
        switch = f + (m + 1) // 2
        lane_alt[i, f:switch] = target
        lane_alt[i, switch:end + 1] = cur
        lane_now[i, switch:] = target
        heapq.heappush(heap, (end * dt + rng.exponential(1.0 / rate), i, 0.0))
    return plan


def _lane_free(cfg, xs, lane_now, lane_alt, i, lane, f0, f1) -> bool:
    others = np.arange(xs.shape[0]) != i
    for f in (f0, (f0 + f1) // 2, f1):
        near = others & (np.abs(xs[:, f] - xs[i, f]) < cfg.min_gap)
        if np.any(near & ((lane_now[:, f] == lane) | (lane_alt[:, f] == lane))):
            return False
    return True


def export(tracks, path) -> Path:
    """Write observed tracks in the canonical object-list CSV."""
    path = Path(path)
    dataset.write_csv([g.track if isinstance(g, GeneratedTrack) else g for g in tracks], path)
    return path


def ground_truth(tracks: list[GeneratedTrack]) -> dict:
    """JSON-serialisable lane-change ground truth per object id."""
    return {str(g.object_id): {"type": g.type_label, "is_ego": g.is_ego,
                               "lane_changes": [list(map(int, c)) for c in g.lane_changes],
                               "switch_frames": g.switch_frames()}
            for g in tracks}


def expected_lane_change_count(config: HighwayConfig) -> float:
    """Nominal count ``rate * vehicles * duration / 60``."""
    return config.lane_change_rate * config.vehicles * config.duration / 60.0


def expected_future_share(config: HighwayConfig, horizon: float = 5.0) -> float:
    """Probability that a lane switch falls into a window of ``horizon`` s.

    Switches form a renewal process: each manoeuvre blocks the vehicle for
    the lane-change duration ``T``, then the next one follows after an
    exponential wait with the configured rate ``r``. For a stationary
    renewal process ``P(N(w) >= 1) = lambda * integral_0^w (1 - F(s)) ds``
    with ``lambda = 1 / (T + 1/r)``.
    """
    r = config.lane_change_rate / 60.0
    if r == 0:
        return 0.0
    T = config.lane_change_frames * config.frame_period
    lam = 1.0 / (T + 1.0 / r)
    w = horizon
    if w <= T:
        integral = w
    else:
        integral = T + (1.0 - np.exp(-r * (w - T))) / r
    return float(lam * integral)
