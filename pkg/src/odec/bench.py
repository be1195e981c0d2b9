"""Accuracy and wall-time evaluation, compression sweeps and report files."""

import csv
import io
import itertools
import logging
import statistics
import time
from dataclasses import dataclass, field, replace

import numpy as np
from threadpoolctl import threadpool_limits

from .baselines import apoz_prune, apoz_scores, svd_compress
from .errors import DivergenceError
from .mor import reduce_model
from .trainer import TrainConfig, fit
from .zoo import predict

log = logging.getLogger(__name__)

REPORT_SCHEMA = "odec-report/1"
REPORT_COLUMNS = ["method", "dim", "stage", "top1", "top3", "runtime", "diverged", "status"]
CURVE_COLUMNS = ["method", "dim", "stage", "speedup", "rel_top1"]
STAGE_EPOCHS = {"none": 0, "short": 3, "long": 30}
METHODS = ("pod-deim", "svd", "apoz")


@dataclass(frozen=True)
class EvalResult:
    top1: float
    top3: float
    wall_time: float
    dimension: int
    method: str = "original"
    stage: str = "none"
    diverged: int = 0
    samples: int = 0
    split: str = ""
    status: str = "ok"


def model_dimension(model):
    return model.block.dim


def _scores(model, images):
    """Probabilities; rows of samples whose ODE diverged are NaN."""
    try:
        return predict(model, images), 0
    except DivergenceError:
        out = np.full((images.shape[0], model.class_count), np.nan)
        bad = 0
        for i in range(images.shape[0]):
            try:
                out[i] = predict(model, images[i : i + 1])[0]
            except DivergenceError:
                bad += 1
        return out, bad


def topk_hits(scores, labels, k):
    """Whether each label is among the k highest scores (ties: lower class first)."""
    order = np.argsort(-scores, axis=1, kind="stable")[:, :k]
    hit = (order == np.asarray(labels)[:, None]).any(axis=1)
    return hit & ~np.isnan(scores).any(axis=1)


def time_forward_many(models, images, reps=10, threads=1, warmup=True):
    """Median wall time of ``reps`` forward passes for each of ``models``.

    Passes are interleaved round-robin so slow drift of the host (frequency
    scaling, contention) affects every model alike; the starting model rotates
    each round to cancel position effects. A warm-up pass per model is
    discarded.
    """
    def run(model):
        try:
            predict(model, images)
        except DivergenceError:
            _scores(model, images)

    times = [[] for _ in models]
    with threadpool_limits(limits=threads):
        if warmup:
            for model in models:
                run(model)
        for r in range(reps):
            for j in range(len(models)):
                i = (j + r) % len(models)
                t0 = time.perf_counter()
                run(models[i])
                times[i].append(time.perf_counter() - t0)
    return [statistics.median(t) for t in times]


def time_forward(model, images, reps=10, threads=1, warmup=True):
    """Median wall time of ``reps`` full forward passes (a warm-up pass is discarded)."""
    return time_forward_many([model], images, reps, threads, warmup)[0]


def evaluate(model, dataset, reps=10, method="original", stage="none", threads=1,
             dimension=None):
    """Top-1/top-3 accuracy and median classification time over ``dataset``."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty split")
    scores, bad = _scores(model, dataset.images)
    top1 = float(topk_hits(scores, dataset.labels, 1).mean())
    top3 = float(topk_hits(scores, dataset.labels, 3).mean())
    wall = time_forward(model, dataset.images, reps, threads) if reps else float("nan")
    return EvalResult(top1, top3, wall, dimension or model_dimension(model), method, stage,
                      bad, len(dataset), dataset.ident)


@dataclass(frozen=True)
class RelativeCurve:
    points: tuple

    def as_rows(self):
        return [dict(zip(CURVE_COLUMNS, p)) for p in self.points]


def relative_curve(original, reduced):
    """Speedup ``t_original / t_reduced`` and accuracy ratio per reduced result."""
    pts = []
    for r in reduced:
        if r.split != original.split:
            raise ValueError(f"split mismatch: {r.split!r} vs {original.split!r}")
        if r.status != "ok":
            continue
        rel = r.top1 / original.top1 if original.top1 else float("nan")
        pts.append((r.method, r.dimension, r.stage, original.wall_time / r.wall_time, rel))
    return RelativeCurve(tuple(pts))


def compress(model, method, k, snapshots=None, train=None, m=None, o=0, fold=True,
             apoz_samples=None, apoz_mode="magnitude"):
    """Compress the ODE block of ``model`` to nominal dimension ``k``."""
    if method == "pod-deim":
        if snapshots is None:
            raise ValueError("POD-DEIM needs snapshots")
        return reduce_model(model, snapshots, k, m, o, fold)
    if method == "svd":
        return svd_compress(model, k)
    if method == "apoz":
        if train is None:
            raise ValueError("APoZ needs training data for scoring")
        return apoz_prune(model, apoz_scores(model, train, apoz_samples, apoz_mode), k)
    raise ValueError(f"unknown method {method!r}")


@dataclass
class ReportBundle:
    original: EvalResult
    results: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @property
    def curve(self):
        return relative_curve(self.original, self.results)

    def rows(self):
        out = []
        for r in self.results:
            out.append({"method": r.method, "dim": r.dimension, "stage": r.stage,
                        "top1": r.top1, "top3": r.top3, "runtime": r.wall_time,
                        "diverged": r.diverged, "status": r.status})
        return out

    def table(self):
        """Rows of (method, dim) with one column triple per tuning stage."""
        stages = [s for s in STAGE_EPOCHS if any(r.stage == s for r in self.results)]
        grouped = {}
        for r in self.results:
            grouped.setdefault((r.method, r.dimension), {})[r.stage] = r
        rows = []
        for (method, dim), by_stage in grouped.items():
            row = {"method": method, "dim": dim}
            for metric, attr in (("top1", "top1"), ("top3", "top3"), ("runtime", "wall_time")):
                for s in stages:
                    r = by_stage.get(s)
                    row[f"{metric}_{s}"] = getattr(r, attr) if r else float("nan")
            rows.append(row)
        return rows


def sweep(model, snapshots, train, test, methods=METHODS, dimensions=(), stages=tuple(STAGE_EPOCHS),
          train_cfg=TrainConfig(), reps=10, m=None, o=0, fold=True, apoz_samples=None,
          threads=1, stage_epochs=None):
    """Compress and evaluate over methods x dimensions x tuning stages.

    Failures in a cell (rank shortfall, degeneracy, divergence during tuning)
    are recorded as rows with ``status`` set to the error and the sweep carries on.
    Wall times are measured at the end, interleaved over all successful cells
    and the original model.
    """
    epochs = dict(STAGE_EPOCHS if stage_epochs is None else stage_epochs)
    original = evaluate(model, test, 0)
    bundle = ReportBundle(original, [], {"methods": list(methods), "dimensions": list(dimensions),
                                         "stages": list(stages), "reps": reps, "threads": threads})
    timed = [model]
    for method, k in itertools.product(methods, dimensions):
        try:
            mm = None if m is None else min(m, k)
            compressed = compress(model, method, k, snapshots, train, mm, o, fold, apoz_samples)
        except Exception as exc:
            log.warning("%s k=%d failed: %s", method, k, exc)
            for s in stages:
                bundle.results.append(_failed(method, k, s, exc, test))
            continue
        for s in stages:
            try:
                tuned = compressed
                if epochs[s]:
                    tuned, _ = fit(compressed, train, replace(train_cfg, epochs=epochs[s]))
                bundle.results.append(evaluate(tuned, test, 0, method, s, threads, dimension=k))
                timed.append(tuned)
            except Exception as exc:
                log.warning("%s k=%d stage %s failed: %s", method, k, s, exc)
                bundle.results.append(_failed(method, k, s, exc, test))
    if reps:
        walls = time_forward_many(timed, test.images, reps, threads)
        ok = [i for i, r in enumerate(bundle.results) if r.status == "ok"]
        bundle.original = replace(original, wall_time=walls[0])
        for i, w in zip(ok, walls[1:]):
            bundle.results[i] = replace(bundle.results[i], wall_time=w)
    return bundle


def _failed(method, k, stage, exc, test):
    return EvalResult(float("nan"), float("nan"), float("nan"), k, method, stage, 0, len(test),
                      test.ident, f"error: {type(exc).__name__}: {exc}")


# ---------------------------------------------------------------------------
# files


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_report(bundle, path, provenance=None):
    """Write the result rows; the original model's metrics and provenance go in ``#`` lines."""
    o = bundle.original
    meta = {"original_top1": o.top1, "original_top3": o.top3, "original_runtime": o.wall_time,
            "original_dim": o.dimension, "split": o.split,
            "reps": bundle.config.get("reps"), "threads": bundle.config.get("threads")}
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: {REPORT_SCHEMA}\n")
        for key, value in {**meta, **(provenance or {})}.items():
            fh.write(f"# {key}: {_fmt(value)}\n")
        w = csv.DictWriter(fh, REPORT_COLUMNS)
        w.writeheader()
        for row in bundle.rows():
            w.writerow({k: _fmt(v) for k, v in row.items()})


def read_report(path):
    """Rows of a report CSV as dicts with numeric fields parsed."""
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != f"# schema: {REPORT_SCHEMA}":
        raise ValueError(f"{path} is not a {REPORT_SCHEMA} file")
    body = [l for l in lines if not l.startswith("#")]
    rows = []
    for r in csv.DictReader(io.StringIO("\n".join(body))):
        rows.append({
            "method": r["method"], "dim": int(r["dim"]), "stage": r["stage"],
            "top1": float(r["top1"]), "top3": float(r["top3"]), "runtime": float(r["runtime"]),
            "diverged": int(r["diverged"]), "status": r["status"],
        })
    return rows


def report_metadata(path):
    """The ``# key: value`` header lines of a report CSV as a dict of strings."""
    meta = {}
    with open(path, newline="") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition(": ")
            meta[key] = value
    return meta


def write_curve(curve, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_COLUMNS)
        for p in curve.points:
            w.writerow([_fmt(v) for v in p])


def write_table(bundle, path):
    rows = bundle.table()
    if not rows:
        with open(path, "w") as fh:
            fh.write("method,dim\n")
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, list(rows[0]))
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(v) for k, v in row.items()})


_COLOURS = {"pod-deim": "#7b3294", "svd": "#e6a800", "apoz": "#1b9e77"}


def curve_svg(curve, stage="none", width=480, height=320):
    """Static SVG line chart of relative accuracy against speedup, one line per method."""
    pts = [p for p in curve.points if p[2] == stage and np.isfinite(p[3]) and np.isfinite(p[4])]
    pad = 48
    xs = [p[3] for p in pts] or [1.0]
    ys = [p[4] for p in pts] or [1.0]
    x0, x1 = min(xs + [1.0]), max(xs + [1.0])
    y0, y1 = min(ys + [1.0]), max(ys + [1.0])
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 0.1

    def sx(v):
        return pad + (v - x0) / (x1 - x0) * (width - 2 * pad)

    def sy(v):
        return height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
           f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
           f'<text x="{width / 2}" y="{height - 12}" text-anchor="middle" font-size="12">speedup</text>',
           f'<text x="14" y="{height / 2}" font-size="12" transform="rotate(-90 14 {height / 2})" '
           f'text-anchor="middle">relative top-1</text>']
    for i, method in enumerate(sorted({p[0] for p in pts})):
        line = sorted((p[3], p[4]) for p in pts if p[0] == method)
        colour = _COLOURS.get(method, "#444444")
        path = " ".join(f"{sx(a):.1f},{sy(b):.1f}" for a, b in line)
        out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="2" points="{path}"/>')
        for a, b in line:
            out.append(f'<circle cx="{sx(a):.1f}" cy="{sy(b):.1f}" r="3" fill="{colour}"/>')
        out.append(f'<text x="{width - pad}" y="{pad + 14 * i}" text-anchor="end" font-size="11" '
                   f'fill="{colour}">{method}</text>')
    out.append("</svg>")
    return "\n".join(out)
