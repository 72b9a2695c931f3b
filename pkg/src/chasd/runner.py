"""Dataset ingestion, batch decoding, trace files and parameter sweeps."""
from __future__ import annotations

import json
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .backend import PatchGeometry, ToyBackend, VisualGrid, build_toy_backend
from .config import Config
from .decoder import DecodeTrace, StepTrace, decode
from .metrics import NO, YES, UndefinedMetricError, accuracy, confusion, f1, normalize_answer
from . import rng


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class JobRecord:
    id: str
    prompt: tuple[int, ...]
    visual: VisualGrid
    gold: str | None = None
    eos: int | None = None


@dataclass
class JobResult:
    record: JobRecord
    index: int
    trace: DecodeTrace
    yes_token: int = 1

    @property
    def prediction(self) -> str:
        """POPE-style answer: "yes" iff the first emitted token is the yes token."""
        return YES if self.trace.steps and self.trace.steps[0].token == self.yes_token else NO


def _geometry_from(obj: dict) -> PatchGeometry:
    return PatchGeometry(
        int(obj["grid_rows"]), int(obj["grid_cols"]), int(obj["patch_px_h"]), int(obj["patch_px_w"]), int(obj.get("channels", 3))
    )


def parse_record(obj: dict, geometry: PatchGeometry, vocab_size: int, base_dir: Path | None = None) -> JobRecord:
    """Build a :class:`JobRecord` from one decoded JSON line.

    ``visual`` is either a flat/nested row-major ``(C, H, W)`` float array, an
    object ``{"pixels": [...]}``, or ``{"path": "...", "dtype": "float32"}``
    pointing at a raw little-endian float file.
    """
    if not isinstance(obj, dict):
        raise DataError("record is not a JSON object")
    rid = obj.get("id")
    if rid is None:
        raise DataError("record has no id")
    rid = str(rid)
    try:
        prompt = tuple(int(t) for t in obj["prompt"])
        if not prompt:
            raise ValueError("prompt is empty")
        if any(t < 0 or t >= vocab_size for t in prompt):
            raise ValueError(f"prompt tokens must lie in [0, {vocab_size})")
        visual = obj["visual"]
        if isinstance(visual, dict) and "geometry" in visual:
            declared = _geometry_from(visual["geometry"])
            if declared != geometry:
                raise ValueError(f"geometry {declared} does not match backend {geometry}")
        if isinstance(visual, dict) and "path" in visual:
            path = Path(visual["path"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            dtype = np.dtype(visual.get("dtype", "float32")).newbyteorder("<")
            pixels = np.fromfile(path, dtype=dtype).astype(np.float64)
        else:
            raw = visual["pixels"] if isinstance(visual, dict) else visual
            pixels = np.asarray(raw, dtype=np.float64)
        if pixels.size != int(np.prod(geometry.shape)):
            raise ValueError(f"visual has {pixels.size} values, geometry needs {int(np.prod(geometry.shape))}")
        grid = VisualGrid(pixels.reshape(geometry.shape), geometry)
        gold = obj.get("gold")
        gold = normalize_answer(gold) if gold is not None else None
        eos = obj.get("eos")
        eos = int(eos) if eos is not None else None
    except (KeyError, TypeError, ValueError, OSError) as exc:
        raise DataError(f"record {rid!r}: {exc}") from None
    return JobRecord(rid, prompt, grid, gold, eos)


def load_dataset(path: str | Path, cfg: Config) -> list[JobRecord]:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from None
    records, seen = [], set()
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from None
        rec = parse_record(obj, cfg.backend.geometry, cfg.backend.vocab_size, path.parent)
        if rec.id in seen:
            raise DataError(f"duplicate record id {rec.id!r}")
        seen.add(rec.id)
        records.append(rec)
    if not records:
        raise DataError(f"dataset {path} contains no records")
    return records


def record_to_json(rec: JobRecord) -> dict:
    out = {"id": rec.id, "prompt": list(rec.prompt), "visual": rec.visual.pixels.ravel().tolist()}
    if rec.gold is not None:
        out["gold"] = rec.gold
    if rec.eos is not None:
        out["eos"] = rec.eos
    return out


def synth_dataset(cfg: Config, n_jobs: int, seed: int = 0, prompt_len: tuple[int, int] = (2, 6)) -> list[JobRecord]:
    """Random toy jobs: Gaussian images, random non-EOS prompts, random yes/no golds."""
    g = rng.stream(seed, "synth")
    geometry = cfg.backend.geometry
    vocab = [t for t in range(cfg.backend.vocab_size) if t != cfg.decoder.eos_token]
    jobs = []
    for i in range(n_jobs):
        length = int(g.integers(prompt_len[0], prompt_len[1] + 1))
        prompt = tuple(int(vocab[j]) for j in g.integers(0, len(vocab), size=length))
        pixels = g.normal(size=geometry.shape)
        gold = YES if g.random() < 0.5 else NO
        jobs.append(JobRecord(f"job-{i:04d}", prompt, VisualGrid(pixels, geometry), gold))
    return jobs


def decode_jobs(cfg: Config, jobs: Sequence[JobRecord], backend: ToyBackend | None = None, workers: int = 1) -> list[JobResult]:
    """Decode every job; the random substreams are keyed by job position."""
    backend = backend or build_toy_backend(cfg.backend)

    def one(item):
        i, rec = item
        trace = decode(backend, rec.prompt, rec.visual, cfg.decoder, job=i, eos_token=rec.eos)
        return JobResult(rec, i, trace, cfg.yes_token)

    items = list(enumerate(jobs))
    if workers <= 1:
        return [one(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, items))


def summarize(results: Sequence[JobResult]) -> dict:
    total_len = sum(r.trace.length for r in results)
    triggered = sum(r.trace.triggered_count for r in results)
    agg = {
        "jobs": len(results),
        "L": total_len,
        "triggered_count": triggered,
        "theta": triggered / total_len,
        "total_forwards": sum(r.trace.total_forwards for r in results),
        "step1_triggers": sum(int(r.trace.steps[0].triggered) for r in results),
    }
    masks = [len(s.mask_indices) for r in results for s in r.trace.steps if s.triggered]
    agg["mask_cardinality"] = sum(masks) / len(masks) if masks else None
    return agg


def pope_metrics(results: Sequence[JobResult]) -> dict | None:
    scored = [r for r in results if r.record.gold is not None]
    if not scored:
        return None
    cm = confusion([r.prediction for r in scored], [r.record.gold for r in scored])
    out = {"n": len(scored), "tp": cm.tp, "tn": cm.tn, "fp": cm.fp, "fn": cm.fn, "accuracy": accuracy(cm)}
    try:
        out["f1"] = f1(cm)
    except UndefinedMetricError:
        out["f1"] = None
    return out


def _trace_filename(index: int, rid: str) -> str:
    safe = re.sub(r"[^A-Za-z0-9._-]+", "_", rid)[:64]
    return f"{index:05d}_{safe}.jsonl"


def trace_lines(result: JobResult, cfg: Config) -> list[str]:
    header = {
        "type": "header",
        "job_id": result.record.id,
        "job_index": result.index,
        "prompt": list(result.record.prompt),
        "eos": cfg.decoder.eos_token if result.record.eos is None else result.record.eos,
        "config": cfg.to_dict(),
    }
    lines = [json.dumps(header, sort_keys=True)]
    for step in result.trace.steps:
        lines.append(json.dumps({"type": "step", **step.to_dict()}, sort_keys=True))
    return lines


def read_trace(path: str | Path) -> tuple[dict, list[StepTrace]]:
    lines = Path(path).read_text().splitlines()
    header = json.loads(lines[0])
    if header.get("type") != "header":
        raise DataError(f"{path}: first line is not a trace header")
    return header, [StepTrace.from_dict(json.loads(line)) for line in lines[1:]]


def run(cfg: Config, dataset_path: str | Path, out_dir: str | Path, workers: int = 1) -> dict:
    """Decode a dataset, write one trace per job plus ``report.json`` and ``predictions.jsonl``."""
    start = time.perf_counter()
    jobs = load_dataset(dataset_path, cfg)
    results = decode_jobs(cfg, jobs, workers=workers)
    out = Path(out_dir)
    trace_dir = out / "traces"
    trace_dir.mkdir(parents=True, exist_ok=True)
    job_rows = []
    for r in results:
        name = _trace_filename(r.index, r.record.id)
        (trace_dir / name).write_text("\n".join(trace_lines(r, cfg)) + "\n")
        job_rows.append(
            {
                "id": r.record.id,
                "trace": f"traces/{name}",
                "L": r.trace.length,
                "triggered_count": r.trace.triggered_count,
                "theta": r.trace.trigger_rate,
                "total_forwards": r.trace.total_forwards,
                "tokens": r.trace.tokens,
                "prediction": r.prediction,
                "gold": r.record.gold,
            }
        )
    with open(out / "predictions.jsonl", "w") as fh:
        for r in results:
            fh.write(json.dumps({"id": r.record.id, "prediction": r.prediction}) + "\n")
    report = {
        "config": cfg.to_dict(),
        "jobs": job_rows,
        "aggregate": summarize(results),
        "metrics": pope_metrics(results),
        "wall_clock_s": time.perf_counter() - start,
    }
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    return report


SWEEP_AXES = ("tau", "k")


def sweep(cfg: Config, jobs: Sequence[JobRecord], axis: str, values: Iterable[float], workers: int = 1) -> list[dict]:
    """Re-run the same jobs once per value of ``axis`` with everything else (seeds included) fixed."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")
    configs = [(float(v), cfg.replace(**{axis: float(v)})) for v in values]
    if not configs:
        raise ValueError("sweep needs at least one value")
    backend = build_toy_backend(cfg.backend)
    rows = []
    for value, c in configs:
        results = decode_jobs(c, jobs, backend=backend, workers=workers)
        row = {"axis": axis, "value": value, **summarize(results)}
        metrics = pope_metrics(results)
        row["accuracy"] = metrics["accuracy"] if metrics else None
        row["f1"] = metrics["f1"] if metrics else None
        rows.append(row)
    return rows
