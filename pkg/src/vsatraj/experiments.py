"""Training-set composition experiments.

A plan trains every learned model variant on the ``all`` and
``lane_change_any`` training subsets, for several seeds, and evaluates
each trained model on up to four validation subsets. The eight
(train, eval) combinations are the setups ``a``..``h``. Every trained
model lives in a content-addressed cell directory, so re-running a plan
only trains what is missing.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import dataset, models, synth
from .dataset import FRAME_PERIOD
from .scene import DEFAULT_RADIUS, Vocabulary, encode_snapshots

SETUPS = {
    "a": ("all", "all"),
    "b": ("lane_change_any", "all"),
    "c": ("all", "lane_change_any"),
    "d": ("lane_change_any", "lane_change_any"),
    "e": ("all", "crowded"),
    "f": ("lane_change_any", "crowded"),
    "g": ("all", "crowded_and_lane_change"),
    "h": ("lane_change_any", "crowded_and_lane_change"),
}
TRAIN_SELECTORS = ("all", "lane_change_any")
METRICS = ("rmse_x", "rmse_y", "aggregate")
REPORT_VERSION = 1
ENCODE_CHUNK = 256


class PlanError(ValueError):
    pass


def _hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class ExperimentPlan:
    """Everything needed to reproduce a comparison report.

    ``dataset`` is an object-list CSV; alternatively ``synth`` embeds a
    generator config whose output is written into the run directory.
    ``extensions`` holds extra ``[train, eval]`` selector pairs beyond the
    eight standard setups; they are reported under ``x1``, ``x2``, ...
    """

    name: str = "plan"
    dataset: str | None = None
    column_mapping: str | dict | None = None
    synth: dict | None = None
    frame_period: float = FRAME_PERIOD
    stride: int = 1
    dimension: int = 512
    vocab_seed: int = 0
    scale: float | list = 1.0
    radius: float = DEFAULT_RADIUS
    variants: list = field(default_factory=lambda: list(models.MODEL_VARIANTS))
    setups: list = field(default_factory=lambda: list(SETUPS))
    extensions: list = field(default_factory=list)
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    train_fraction: float = 0.9
    model: dict = field(default_factory=dict)
    output_dir: str = "runs"

    def validate(self) -> None:
        if (self.dataset is None) == (self.synth is None):
            raise PlanError("exactly one of 'dataset' and 'synth' must be given")
        unknown = [v for v in self.variants if v not in models.MODEL_VARIANTS]
        if unknown or not self.variants:
            raise PlanError(f"unknown or empty model variants: {unknown}")
        bad = [s for s in self.setups if s not in SETUPS]
        if bad:
            raise PlanError(f"unknown setups {bad}; use extensions for other selector pairs")
        for pair in self.extensions:
            if len(pair) != 2 or any(p not in dataset.SELECTORS for p in pair):
                raise PlanError(f"invalid extension {pair!r}")
        if not self.setups and not self.extensions:
            raise PlanError("plan has no setups")
        if not self.seeds:
            raise PlanError("plan needs at least one seed")
        if self.stride < 1:
            raise PlanError("stride must be >= 1")
        allowed = {"hidden_size", "learning_rate", "batch_size", "epochs", "clip_norm", "weight_decay", "dtype"}
        extra = set(self.model) - allowed
        if extra:
            raise PlanError(f"unknown model options {sorted(extra)}")
        if self.synth is not None:
            synth.HighwayConfig.from_dict(self.synth).validate()

    @property
    def matrix(self) -> dict:
        """Setup id -> (train selector, eval selector)."""
        out = {s: SETUPS[s] for s in self.setups}
        for k, pair in enumerate(self.extensions, 1):
            out[f"x{k}"] = tuple(pair)
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scale"] = list(self.scale) if np.ndim(self.scale) else self.scale
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentPlan":
        data = dict(data.get("plan", data))
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise PlanError(f"unknown plan fields {sorted(extra)}")
        plan = cls(**data)
        plan.validate()
        return plan

    @classmethod
    def from_file(cls, path) -> "ExperimentPlan":
        path = Path(path)
        text = path.read_text()
        if path.suffix == ".json":
            data = json.loads(text)
        else:
            import tomli

            data = tomli.loads(text)
        plan = cls.from_dict(data)
        if plan.dataset is not None and not Path(plan.dataset).is_absolute():
            plan.dataset = str((path.parent / plan.dataset).resolve())
        return plan

    def model_options(self) -> dict:
        return {"hidden_size": 128, "learning_rate": 1e-3, "batch_size": 64, "epochs": 20, "clip_norm": 5.0,
                "weight_decay": 0.0, "dtype": "float64", **self.model}


# ------------------------------------------------------------------ report

@dataclass
class CellResult:
    """One model variant in one setup, with per-seed evaluations."""

    variant: str
    setup: str
    train_selector: str
    eval_selector: str
    per_seed: dict
    status: str = "ok"
    reason: str = ""
    config_hash: str = ""
    checkpoints: dict = field(default_factory=dict)

    def _valid(self):
        return [r for _, r in sorted(self.per_seed.items()) if not r.empty]

    @property
    def available(self) -> bool:
        return self.status == "ok" and bool(self._valid())

    def curve(self, metric: str) -> tuple[np.ndarray, np.ndarray]:
        """Mean and (population) std over seeds of a per-step curve."""
        reps = self._valid()
        if not reps:
            nan = np.full(models.HORIZON, np.nan)
            return nan, nan
        stack = np.stack([getattr(r, metric) for r in reps])
        return stack.mean(axis=0), stack.std(axis=0)

    def value(self, metric: str = "rmse_y", horizon: float = 5.0, frame_period: float = 0.25):
        """``(mean, std)`` over seeds; ``None`` when unavailable."""
        reps = self._valid()
        if not reps:
            return None
        if metric == "aggregate":
            vals = np.array([r.aggregate for r in reps])
        elif metric in ("rmse_x", "rmse_y"):
            k = int(round(horizon / frame_period)) - 1
            if not 0 <= k < models.HORIZON:
                raise PlanError(f"horizon {horizon} s outside the prediction window")
            vals = np.array([getattr(r, metric)[k] for r in reps])
        else:
            raise PlanError(f"unknown metric {metric!r}")
        return float(vals.mean()), float(vals.std())

    def to_json(self) -> dict:
        return {"variant": self.variant, "setup": self.setup, "train_selector": self.train_selector,
                "eval_selector": self.eval_selector, "status": self.status, "reason": self.reason,
                "config_hash": self.config_hash, "checkpoints": self.checkpoints,
                "per_seed": {str(k): v.to_json() for k, v in sorted(self.per_seed.items())}}

    @classmethod
    def from_json(cls, d: dict) -> "CellResult":
        return cls(d["variant"], d["setup"], d["train_selector"], d["eval_selector"],
                   {int(k): models.EvalReport.from_json(v) for k, v in d["per_seed"].items()},
                   d["status"], d["reason"], d["config_hash"], d["checkpoints"])


@dataclass
class ComparisonReport:
    plan: dict
    data_fingerprint: str
    frame_period: float
    cells: dict = field(default_factory=dict)
    sample_counts: dict = field(default_factory=dict)

    def add(self, cell: CellResult) -> None:
        self.cells[(cell.variant, cell.setup)] = cell

    def cell(self, variant: str, setup: str) -> CellResult | None:
        return self.cells.get((variant, setup))

    @property
    def variants(self) -> list:
        return sorted({v for v, _ in self.cells})

    @property
    def setups(self) -> list:
        return sorted({s for _, s in self.cells})

    @property
    def failed(self) -> list:
        return [c for _, c in sorted(self.cells.items()) if c.status != "ok"]

    def deltas(self, metric: str = "rmse_y", horizon: float = 5.0) -> list[dict]:
        """Lane-change-trained minus all-trained value for each model and
        evaluation subset (negative means training on lane changes helped)."""
        out = []
        pairs = {}
        for (v, s), c in self.cells.items():
            pairs.setdefault((v, c.eval_selector), {})[c.train_selector] = c
        for (v, ev), by_train in sorted(pairs.items()):
            a, b = by_train.get("all"), by_train.get("lane_change_any")
            if a is None or b is None:
                continue
            va, vb = a.value(metric, horizon, self.frame_period), b.value(metric, horizon, self.frame_period)
            per_seed = sorted(set(a.per_seed) & set(b.per_seed))
            diffs = []
            for sd in per_seed:
                ra, rb = a.per_seed[sd], b.per_seed[sd]
                if ra.empty or rb.empty or a.status != "ok" or b.status != "ok":
                    continue
                diffs.append(_metric(rb, metric, horizon, self.frame_period) -
                             _metric(ra, metric, horizon, self.frame_period))
            out.append({"variant": v, "eval_selector": ev, "metric": metric, "horizon": horizon,
                        "trained_all": va, "trained_lane_change": vb,
                        "delta_mean": float(np.mean(diffs)) if diffs else None,
                        "delta_std": float(np.std(diffs)) if diffs else None})
        return out

    def to_json(self) -> dict:
        return {"version": REPORT_VERSION, "plan": self.plan, "data_fingerprint": self.data_fingerprint,
                "frame_period": self.frame_period, "sample_counts": self.sample_counts,
                "cells": [c.to_json() for _, c in sorted(self.cells.items())],
                "deltas": {m: self.deltas(m) for m in ("rmse_x", "rmse_y")}}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1, allow_nan=False, default=_nan_safe)

    def save(self, directory) -> Path:
        """Write ``report.json`` and one CSV per curve into ``directory``."""
        directory = Path(directory)
        (directory / "curves").mkdir(parents=True, exist_ok=True)
        path = directory / "report.json"
        path.write_text(self.dumps())
        for (v, s), c in sorted(self.cells.items()):
            rows = ["step,horizon_s,rmse_x_mean,rmse_x_std,rmse_y_mean,rmse_y_std"]
            (mx, sx), (my, sy) = c.curve("rmse_x"), c.curve("rmse_y")
            for k in range(models.HORIZON):
                vals = [mx[k], sx[k], my[k], sy[k]]
                rows.append(",".join([str(k + 1), repr((k + 1) * self.frame_period)] +
                                     ["" if not np.isfinite(x) else repr(float(x)) for x in vals]))
            (directory / "curves" / f"{v}_{s}.csv").write_text("\n".join(rows) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "ComparisonReport":
        path = Path(path)
        if path.is_dir():
            path = path / "report.json"
        d = json.loads(path.read_text())
        if d.get("version", 0) > REPORT_VERSION:
            raise PlanError(f"report version {d['version']} is newer than supported")
        rep = cls(d["plan"], d["data_fingerprint"], d["frame_period"], sample_counts=d["sample_counts"])
        for c in d["cells"]:
            rep.add(CellResult.from_json(c))
        return rep


def _nan_safe(o):
    raise TypeError(f"not serialisable: {type(o)}")


def _metric(rep: models.EvalReport, metric: str, horizon: float, dt: float) -> float:
    if metric == "aggregate":
        return rep.aggregate
    return float(getattr(rep, metric)[int(round(horizon / dt)) - 1])


# ------------------------------------------------------------------ ranking

CLAIMS = (
    ("baseline_invariance",
     "the constant-velocity baseline gives identical numbers for both training subsets"),
    ("lstm_beats_linear",
     "every LSTM variant trained on all samples beats the baseline in aggregate RMSE (setup a)"),
    ("spa_lateral_on_lane_changes",
     "lstm_spa1 and lstm_spa3 rank best in lateral RMSE on lane changes when trained on lane changes (setup d)"),
    ("spa3_gains_from_lane_change_training",
     "lstm_spa3 trained on lane changes improves lateral RMSE on lane changes over its all-trained version"),
)


@dataclass
class Ranking:
    metric: str
    horizon: float
    rows: dict            # setup -> list of (variant, mean, std) sorted, or gap markers
    gaps: dict            # setup -> list of variants without a value
    claims: dict          # claim id -> True / False / None (not checkable)

    def table(self) -> str:
        lines = [f"ranking by {self.metric}" + ("" if self.metric == "aggregate" else f" at {self.horizon:g} s")]
        for setup in sorted(self.rows):
            tr, ev = SETUPS.get(setup, ("?", "?"))
            lines.append(f"setup ({setup})  train={tr}  eval={ev}")
            for rank, (v, mean, std) in enumerate(self.rows[setup], 1):
                lines.append(f"  {rank}. {v:<16} {mean:8.3f} +- {std:.3f}")
            for v in self.gaps.get(setup, []):
                lines.append(f"  -  {v:<16}      n/a")
        lines.append("claims")
        for cid, text in CLAIMS:
            mark = {True: "holds", False: "fails", None: "n/a"}[self.claims.get(cid)]
            lines.append(f"  [{mark:>5}] {text}")
        return "\n".join(lines)

    def to_json(self) -> dict:
        return {"metric": self.metric, "horizon": self.horizon,
                "rows": {s: [list(r) for r in rows] for s, rows in self.rows.items()},
                "gaps": self.gaps, "claims": self.claims}


def compare(report: ComparisonReport, metric: str = "rmse_y", horizon: float = 5.0,
            variants=None) -> Ranking:
    """Rank model variants within every setup by ``metric`` (lower is better)."""
    if metric not in METRICS:
        raise PlanError(f"unknown metric {metric!r}")
    variants = sorted(variants or report.variants)
    rows, gaps = {}, {}
    for setup in report.setups:
        vals = []
        for v in variants:
            c = report.cell(v, setup)
            val = c.value(metric, horizon, report.frame_period) if c is not None and c.status == "ok" else None
            if val is None:
                gaps.setdefault(setup, []).append(v)
            else:
                vals.append((v, *val))
        rows[setup] = sorted(vals, key=lambda r: (r[1], r[0]))
    return Ranking(metric, horizon, rows, gaps, check_claims(report, horizon))


def check_claims(report: ComparisonReport, horizon: float = 5.0) -> dict:
    dt = report.frame_period
    out = {}

    lin = [c for (v, _), c in report.cells.items() if v == "linear"]
    by_eval = {}
    for c in lin:
        by_eval.setdefault(c.eval_selector, []).append(c)
    groups = [g for g in by_eval.values() if len(g) > 1]
    out["baseline_invariance"] = (all(json.dumps(g[0].to_json()["per_seed"]) == json.dumps(x.to_json()["per_seed"])
                                      for g in groups for x in g) if groups else None)

    base = report.cell("linear", "a")
    lstm = [report.cell(v, "a") for v in report.variants if v != "linear"]
    if base is None or not base.available or not lstm or any(c is None or not c.available for c in lstm):
        out["lstm_beats_linear"] = None
    else:
        b = base.value("aggregate", horizon, dt)[0]
        out["lstm_beats_linear"] = all(c.value("aggregate", horizon, dt)[0] < b for c in lstm)

    ranked = [(c.value("rmse_y", horizon, dt)[0], v) for (v, s), c in report.cells.items()
              if s == "d" and c.available]
    if len(ranked) >= 3 and {"lstm_spa1", "lstm_spa3"} <= {v for _, v in ranked}:
        top = {v for _, v in sorted(ranked)[:2]}
        out["spa_lateral_on_lane_changes"] = top == {"lstm_spa1", "lstm_spa3"}
    else:
        out["spa_lateral_on_lane_changes"] = None

    c_all, c_lc = report.cell("lstm_spa3", "c"), report.cell("lstm_spa3", "d")
    if c_all is None or c_lc is None or not c_all.available or not c_lc.available:
        out["spa3_gains_from_lane_change_training"] = None
    else:
        out["spa3_gains_from_lane_change_training"] = (
            c_lc.value("rmse_y", horizon, dt)[0] < c_all.value("rmse_y", horizon, dt)[0])
    return out


# ------------------------------------------------------------------ running

@dataclass
class RunStats:
    trained: int = 0
    reused: int = 0
    failed: int = 0


def prepare_data(plan: ExperimentPlan, out_dir: Path):
    """Tracks, samples and data fingerprint for ``plan``."""
    if plan.synth is not None:
        cfg = synth.HighwayConfig.from_dict(plan.synth)
        path = out_dir / "data" / f"synth-{_hash(cfg.to_dict())}.csv"
        if not path.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            synth.export(synth.generate(cfg), tmp)
            os.replace(tmp, path)
        tracks = dataset.load(path, frame_period=cfg.frame_period)
    else:
        path = Path(plan.dataset)
        tracks = dataset.load(path, plan.column_mapping, frame_period=plan.frame_period)
    fp = dataset.fingerprint(path)
    samples = dataset.window(tracks, plan.frame_period, stride=plan.stride, radius=plan.radius)
    if not samples:
        raise PlanError("dataset yields no samples")
    return tracks, samples, fp


def encoded_inputs(plan: ExperimentPlan, samples, variant: str, fingerprint: str, out_dir: Path):
    """Encoded input sequences for every sample, cached on disk and memory-mapped."""
    if variant == "linear":
        return None
    dtype = np.dtype(plan.model_options()["dtype"])
    if variant == "lstm_numerical":
        return np.stack([s.history_positions for s in samples]).astype(dtype)
    key = _hash({"fp": fingerprint, "variant": variant, "dimension": plan.dimension, "seed": plan.vocab_seed,
                 "scale": plan.to_dict()["scale"], "radius": plan.radius, "stride": plan.stride,
                 "dtype": dtype.name, "n": len(samples)})
    path = out_dir / "cache" / f"{variant}-{key}.npy"
    if not path.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
        vocab = Vocabulary.create(plan.dimension, plan.vocab_seed)
        tmp = path.with_name(path.stem + ".tmp.npy")
        arr = np.lib.format.open_memmap(tmp, mode="w+", dtype=dtype,
                                        shape=(len(samples), dataset.HISTORY_FRAMES, plan.dimension))
        enc = models.ENCODER_VARIANT[variant]
        for a in range(0, len(samples), ENCODE_CHUNK):
            block = samples[a:a + ENCODE_CHUNK]
            snaps = [sn for s in block for sn in s.snapshots()]
            arr[a:a + len(block)] = encode_snapshots(snaps, vocab, enc, plan.radius, plan.scale).reshape(
                len(block), dataset.HISTORY_FRAMES, plan.dimension)
        arr.flush()
        del arr
        os.replace(tmp, path)
    return np.load(path, mmap_mode="r")


def _select(samples, idx, selector):
    return [i for i in idx if _matches(samples[i], selector)]


def _matches(s, selector) -> bool:
    lc = bool(s.lane_change_past) or bool(s.lane_change_future)
    if selector == "all":
        return True
    if selector == "lane_change_any":
        return lc
    if selector == "lane_change_future":
        return bool(s.lane_change_future)
    if selector == "crowded":
        return bool(s.crowded)
    if selector == "crowded_and_lane_change":
        return bool(s.crowded) and lc
    raise PlanError(f"unknown selector {selector!r}")


def _train_cell(cell_dir: Path, spec: dict, X, Y, idx_train, eval_sets: dict, fingerprint: str) -> dict:
    """Train one model and evaluate it; idempotent through ``result.json``."""
    done = cell_dir / "result.json"
    if done.exists():
        res = json.loads(done.read_text())
        res["reused"] = True
        return res
    cell_dir.mkdir(parents=True, exist_ok=True)
    if not idx_train:
        res = {"status": "failed", "reason": "empty training subset", "evals": {}}
    else:
        opts = spec["model"]
        est = models.LSTMTrajectoryRegressor(variant=spec["variant"], seed=spec["seed"], **opts)
        try:
            est.fit(np.asarray(X[idx_train]), Y[idx_train], data_fingerprint_=fingerprint)
        except (models.TrainingDivergedError, models.NumericOverflowError) as exc:
            res = {"status": "failed", "reason": str(exc), "evals": {}}
        else:
            est.save(cell_dir / "model.npz")
            est.log_.write_jsonl(cell_dir / "train_log.jsonl")
            evals = {}
            for sel, idx in sorted(eval_sets.items()):
                if idx:
                    rep = models.horizon_rmse(Y[idx], est.predict(np.asarray(X[idx])))
                else:
                    rep = models.empty_eval()
                evals[sel] = rep.to_json()
            res = {"status": "ok", "reason": "", "evals": evals, "config_hash": est.log_.config_hash}
    res["spec"] = spec
    tmp = done.with_suffix(".tmp")
    tmp.write_text(json.dumps(res, sort_keys=True))
    os.replace(tmp, done)
    res["reused"] = False
    return res


def run(plan: ExperimentPlan, output_dir=None, n_jobs: int = 1, verbose: bool = False):
    """Run (or resume) ``plan``; returns ``(ComparisonReport, RunStats)``.

    The report is also written to ``<output_dir>/report.json`` with one
    CSV per curve under ``curves/``.
    """
    plan.validate()
    out = Path(output_dir or plan.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    tracks, samples, fp = prepare_data(plan, out)
    matrix = plan.matrix
    dt = plan.frame_period
    train_sels = sorted({tr for tr, _ in matrix.values()})
    eval_sels = sorted({ev for _, ev in matrix.values()})
    Y = models.targets(samples)
    opts = plan.model_options()
    report = ComparisonReport(plan.to_dict(), fp, dt)
    stats = RunStats()

    splits = {}
    for seed in plan.seeds:
        train_ids, val_ids = dataset.split(tracks, plan.train_fraction, seed)
        tr_set = set(train_ids)
        idx_tr = [i for i, s in enumerate(samples) if s.target_id in tr_set]
        idx_va = [i for i, s in enumerate(samples) if s.target_id not in tr_set]
        splits[seed] = ({t: _select(samples, idx_tr, t) for t in train_sels},
                        {e: _select(samples, idx_va, e) for e in eval_sels})
        report.sample_counts[str(seed)] = {
            "train": {t: len(v) for t, v in splits[seed][0].items()},
            "eval": {e: len(v) for e, v in splits[seed][1].items()}}

    for variant in plan.variants:
        per_seed = {setup: {} for setup in matrix}
        status = {setup: ("ok", "") for setup in matrix}
        hashes, ckpts = {}, {setup: {} for setup in matrix}
        if variant == "linear":
            # no training: one evaluation per (seed, eval subset), shared by both training subsets
            lin = models.ConstantVelocityRegressor(dt)
            for seed in plan.seeds:
                cache = {e: models.evaluate(lin, [samples[i] for i in idx]) for e, idx in splits[seed][1].items()}
                for setup, (_, ev) in matrix.items():
                    per_seed[setup][seed] = cache[ev]
        else:
            X = encoded_inputs(plan, samples, variant, fp, out)
            jobs = []
            for seed in plan.seeds:
                for tr in train_sels:
                    spec = {"variant": variant, "seed": seed, "train_selector": tr, "model": opts,
                            "data_fingerprint": fp, "split": [plan.train_fraction, seed], "stride": plan.stride,
                            "vocab": [plan.dimension, plan.vocab_seed, plan.to_dict()["scale"], plan.radius]}
                    key = _hash(spec)
                    jobs.append((seed, tr, key, out / "cells" / f"{variant}-{key}", spec,
                                 splits[seed][0][tr], splits[seed][1]))
            results = _run_jobs(jobs, X, Y, fp, n_jobs, verbose)
            for (seed, tr, key, cell_dir, _, _, _), res in zip(jobs, results):
                if res["reused"]:
                    stats.reused += 1
                elif res["status"] == "ok":
                    stats.trained += 1
                else:
                    stats.failed += 1
                for setup, (t, ev) in matrix.items():
                    if t != tr:
                        continue
                    if res["status"] != "ok":
                        status[setup] = ("failed", f"seed {seed}: {res['reason']}")
                        per_seed[setup][seed] = models.empty_eval()
                        continue
                    per_seed[setup][seed] = models.EvalReport.from_json(res["evals"][ev])
                    hashes[setup] = res["config_hash"]
                    ckpts[setup][str(seed)] = str(Path("cells") / cell_dir.name / "model.npz")
        for setup, (tr, ev) in matrix.items():
            st, why = status[setup]
            report.add(CellResult(variant, setup, tr, ev, per_seed[setup], st, why,
                                  hashes.get(setup, ""), ckpts[setup]))
    report.save(out)
    return report, stats


def _run_jobs(jobs, X, Y, fp, n_jobs, verbose):
    def one(job):
        seed, tr, key, cell_dir, spec, idx_train, eval_sets = job
        if verbose:
            print(f"cell {cell_dir.name} seed={seed} train={tr} n={len(idx_train)}", flush=True)
        return _train_cell(cell_dir, spec, X, Y, idx_train, eval_sets, fp)

    if n_jobs == 1 or len(jobs) < 2:
        return [one(j) for j in jobs]
    from joblib import Parallel, delayed

    return Parallel(n_jobs=n_jobs)(delayed(one)(j) for j in jobs)


def pinned_plan_path() -> Path:
    """The shipped plan used for the replication checks."""
    return Path(__file__).with_name("data") / "pinned_plan.toml"
