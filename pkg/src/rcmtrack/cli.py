"""Command-line entry point: gen, track, eval, sweep, render and bench.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from html import escape
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .io_formats import (
    FormatError,
    SequenceBundle,
    load_bundle,
    outputs_to_records,
    read_mot_file,
    read_run_config,
    records_to_trajectories,
    write_key_values,
    write_mot_file,
)
from .metrics import EvalReport, TrajectorySet, evaluate, format_table, report_items
from .radar import project_points, spherical_to_cartesian_array
from .synthscene import ScenarioConfig, bench_suite, build_sequence, read_scenario_config, with_seed
from .tracker import FrameInput, Matcher, Tracker, TrackerParams, frames_from_arrays, run_sequence

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
SUITE_NAME = "usv-bench-20"
SWEEP_PARAMS = {"alpha": "alpha", "lambda": "lam", "theta_rcm": "theta_rcm", "theta_iou": "theta_iou"}
RANGE_BUCKET = 20.0  # m per render color bucket
N_BUCKETS = 10
_BUCKET_COLORS = (
    "#d73027", "#f46d43", "#fdae61", "#fee090", "#ffffbf",
    "#e0f3f8", "#abd9e9", "#74add1", "#4575b4", "#313695",
)
_ID_COLORS = ("#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with 2; usage errors are 1 here
        raise UsageError(f"{self.prog}: {message}")


# --- shared helpers ----------------------------------------------------------


def _load(seq: str, need_gt: bool = False) -> SequenceBundle:
    try:
        return load_bundle(seq, need_gt=need_gt)
    except (FormatError, OSError) as e:
        raise DataError(str(e)) from None


def _params(path: str | None, matcher: str | None) -> TrackerParams:
    params = TrackerParams()
    if path is not None:
        try:
            params = read_run_config(path).tracker
        except (FormatError, OSError) as e:
            raise DataError(str(e)) from None
    if matcher is not None:
        params = dataclasses.replace(params, matcher=Matcher(matcher))
    return params


def _frames(b: SequenceBundle) -> list[FrameInput]:
    return frames_from_arrays(b.detections, b.radar, b.info.length)


def _check_radar(b: SequenceBundle, params: TrackerParams) -> None:
    if params.matcher is Matcher.RCM and b.radar and b.calib is None:
        raise DataError(f"{b.path / 'calib.json'}: file not found (needed to place radar returns)")


def _track_bundle(b: SequenceBundle, params: TrackerParams):
    _check_radar(b, params)
    return run_sequence(_frames(b), params, b.calib)


def _read_tracks(path: str) -> TrajectorySet:
    try:
        return records_to_trajectories(read_mot_file(path))
    except (FormatError, OSError) as e:
        raise DataError(str(e)) from None


def _map(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# --- gen -----------------------------------------------------------------------


def _gen_one(job: tuple[str, ScenarioConfig, str]) -> str:
    name, cfg, out_dir = job
    s, dets, radar = build_sequence(cfg, out_dir)
    n_det = sum(len(v) for v in dets.values())
    n_pts = sum(len(v) for v in radar.values())
    return f"{name}: seed {cfg.seed}, {cfg.duration} frames, {len(s.objects)} objects, {n_det} detections, {n_pts} radar points"


def cmd_gen(a: argparse.Namespace) -> int:
    out = Path(a.out_dir)
    if a.suite is not None:
        if a.config is not None or a.seed is not None:
            raise UsageError("--suite takes neither --config nor --seed")
        jobs = [(name, cfg, str(out / name)) for name, cfg in bench_suite()]
    else:
        try:
            cfg = read_scenario_config(a.config) if a.config else ScenarioConfig()
        except (FormatError, OSError) as e:
            raise DataError(str(e)) from None
        if a.seed is not None:
            try:
                cfg = with_seed(cfg, a.seed)
            except ValueError as e:
                raise UsageError(str(e)) from None
        jobs = [(out.name or "seq", cfg, str(out))]
    try:
        for line in _map(_gen_one, jobs, a.jobs):
            print(line)
    except OSError as e:
        raise DataError(str(e)) from None
    return EXIT_OK


# --- track ---------------------------------------------------------------------


def cmd_track(a: argparse.Namespace) -> int:
    params = _params(a.params, a.matcher)
    b = _load(a.seq)
    t0 = time.perf_counter()
    outputs = _track_bundle(b, params)
    dt = time.perf_counter() - t0
    records = outputs_to_records(outputs)
    try:
        write_mot_file(a.out, records)
    except OSError as e:
        raise DataError(str(e)) from None
    fps = len(outputs) / dt if dt > 0 else float("inf")
    n_tracks = len({r.id for r in records})
    print(f"{b.info.name}: matcher {params.matcher.value}, {len(outputs)} frames, {fps:.1f} frames/s, {n_tracks} tracks")
    return EXIT_OK


# --- eval ----------------------------------------------------------------------


def cmd_eval(a: argparse.Namespace) -> int:
    gt = _read_tracks(a.gt)
    pred = _read_tracks(a.pred)
    report = evaluate(gt, pred, per_class=a.per_class, strict=False)
    print(format_table(report, a.name), end="")
    if a.out:
        try:
            write_key_values(a.out, report_items(report))
        except OSError as e:
            raise DataError(str(e)) from None
    return EXIT_OK


# --- sweep ---------------------------------------------------------------------


def parse_grid(spec: str) -> tuple[str, list[float]]:
    """`NAME=START:STEP:END` -> (name, inclusive grid of values)."""
    name, sep, rng = spec.partition("=")
    if not sep:
        raise UsageError(f"--param must look like NAME=START:STEP:END, got {spec!r}")
    name = name.strip()
    if name not in SWEEP_PARAMS:
        raise UsageError(f"unknown sweep parameter {name!r}; choose from {', '.join(SWEEP_PARAMS)}")
    try:
        start, step, end = (float(x) for x in rng.split(":"))
    except ValueError:
        raise UsageError(f"--param range must be START:STEP:END, got {rng!r}") from None
    if not (math.isfinite(start) and math.isfinite(step) and math.isfinite(end)) or step <= 0 or end < start:
        raise UsageError("--param needs a positive STEP and START <= END")
    n = int(math.floor((end - start) / step + 1e-9)) + 1
    return name, [round(start + k * step, 10) for k in range(n)]


def _eval_one(job: tuple[str, TrackerParams]) -> EvalReport:
    seq, params = job
    b = load_bundle(seq, need_gt=True)
    _check_radar(b, params)
    pred = records_to_trajectories(outputs_to_records(run_sequence(_frames(b), params, b.calib)))
    return evaluate(b.gt, pred, strict=False)


def _sequence_dirs(root: str) -> list[str]:
    d = Path(root)
    if not d.is_dir():
        raise DataError(f"{d}: not a directory")
    if (d / "seqinfo.ini").is_file():
        return [str(d)]
    seqs = sorted(str(p) for p in d.iterdir() if (p / "seqinfo.ini").is_file())
    if not seqs:
        raise DataError(f"{d}: no sequence bundles found")
    return seqs


def cmd_sweep(a: argparse.Namespace) -> int:
    name, values = parse_grid(a.param)
    base = _params(a.params, a.matcher)
    seqs = _sequence_dirs(a.seq_dir)
    rows = []
    for v in values:
        try:
            rcm = dataclasses.replace(base.rcm, **{SWEEP_PARAMS[name]: v})
        except ValueError as e:
            raise UsageError(f"{name}={v}: {e}") from None
        params = dataclasses.replace(base, rcm=rcm)
        try:
            reports = _map(_eval_one, [(s, params) for s in seqs], a.jobs)
        except (FormatError, OSError) as e:
            raise DataError(str(e)) from None
        rows.append((
            f"{v:g}",
            f"{np.mean([r.hota for r in reports]):.6f}",
            f"{np.mean([r.mota for r in reports]):.6f}",
            f"{np.mean([r.idf1 for r in reports]):.6f}",
            str(sum(r.idsw for r in reports)),
        ))
        print(f"{name}={v:g}: HOTA {rows[-1][1]} MOTA {rows[-1][2]} IDF1 {rows[-1][3]} IDSW {rows[-1][4]}")
    try:
        with open(a.out, "w", newline="", encoding="ascii") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([name, "hota", "mota", "idf1", "idsw"])
            w.writerows(rows)
    except OSError as e:
        raise DataError(str(e)) from None
    return EXIT_OK


# --- render --------------------------------------------------------------------


def range_bucket(range_m: float) -> int:
    """Color bucket of a radar return: 20 m bands, the last one open-ended."""
    return min(int(max(range_m, 0.0) // RANGE_BUCKET), N_BUCKETS - 1)


def _svg_rect(x, y, w, h, style: str) -> str:
    return f'<rect x="{x:.2f}" y="{y:.2f}" width="{w:.2f}" height="{h:.2f}" {style}/>'


def render_frame_svg(
    width: int, height: int, frame: int,
    gt: np.ndarray, pred_ids: np.ndarray, pred: np.ndarray,
    radar_uv: np.ndarray, radar: np.ndarray,
) -> str:
    """One frame as SVG: GT outlines, id-labelled predictions, radar dots sized by power."""
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f"<title>frame {frame}</title>",
        _svg_rect(0, 0, width, height, 'fill="none" stroke="#000000" stroke-width="2"'),
    ]
    for x, y, w, h in gt:
        out.append(_svg_rect(x, y, w, h, 'class="gt" fill="none" stroke="#ffffff" stroke-dasharray="6 4" stroke-width="1.5"'))
    for tid, (x, y, w, h) in zip(pred_ids.tolist(), pred):
        color = _ID_COLORS[tid % len(_ID_COLORS)]
        out.append(_svg_rect(x, y, w, h, f'class="pred" fill="{color}" fill-opacity="0.15" stroke="{color}" stroke-width="3"'))
        out.append(f'<text x="{x:.2f}" y="{max(y - 4, 12):.2f}" fill="{color}" font-size="14">{escape(str(tid))}</text>')
    for (u, v), (rng_m, power) in zip(radar_uv, radar[:, [0, 4]] if len(radar) else np.zeros((0, 2))):
        radius = float(np.clip(1.0 + power / 8.0, 1.0, 4.0))
        color = _BUCKET_COLORS[range_bucket(rng_m)]
        out.append(f'<circle class="radar" cx="{u:.2f}" cy="{v:.2f}" r="{radius:.2f}" fill="{color}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _frame_span(spec: str | None, length: int) -> range:
    if spec is None:
        return range(1, length + 1)
    try:
        lo, hi = (int(x) for x in spec.split(":"))
    except ValueError:
        raise UsageError(f"--frames must be A:B, got {spec!r}") from None
    if lo < 1 or hi < lo:
        raise UsageError("--frames needs 1 <= A <= B")
    return range(lo, min(hi, length) + 1)


def cmd_render(a: argparse.Namespace) -> int:
    b = _load(a.seq)
    pred = _read_tracks(a.pred)
    frames = _frame_span(a.frames, b.info.length)
    out = Path(a.out_dir)
    W, H = b.info.image_w, b.info.image_h
    empty4 = np.zeros((0, 4))
    try:
        out.mkdir(parents=True, exist_ok=True)
        for f in frames:
            g = b.gt.frames.get(f) if b.gt else None
            p = pred.frames.get(f)
            pts = b.radar.get(f, np.zeros((0, 5)))
            uv = np.zeros((0, 2))
            if len(pts) and b.calib is not None:
                uv_all, ok = project_points(spherical_to_cartesian_array(pts), b.calib)
                inside = ok & (uv_all[:, 0] >= 0) & (uv_all[:, 0] <= W) & (uv_all[:, 1] >= 0) & (uv_all[:, 1] <= H)
                uv, pts = uv_all[inside], pts[inside]
            else:
                pts = np.zeros((0, 5))
            svg = render_frame_svg(
                W, H, f,
                g.boxes if g is not None else empty4,
                p.ids if p is not None else np.zeros(0, np.int64),
                p.boxes if p is not None else empty4,
                uv, pts,
            )
            (out / f"frame_{f:06d}.svg").write_text(svg, encoding="utf-8")
    except OSError as e:
        raise DataError(str(e)) from None
    print(f"{b.info.name}: rendered {len(frames)} frames to {out}")
    return EXIT_OK


# --- bench ---------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class BenchRow:
    matcher: str
    frames: int
    median_ms: float
    p95_ms: float
    fps: float


def bench_bundle(b: SequenceBundle, repeat: int, base: TrackerParams = TrackerParams()) -> list[BenchRow]:
    """Per-frame latency of both matchers over `repeat` full passes."""
    frames = _frames(b)
    rows = []
    for m in Matcher:
        params = dataclasses.replace(base, matcher=m)
        _check_radar(b, params)
        lat = []
        total = 0.0
        for _ in range(repeat):
            tracker = Tracker(params, b.calib)
            for inp in frames:
                t0 = time.perf_counter()
                tracker.step(inp)
                lat.append(time.perf_counter() - t0)
            total += sum(lat[-len(frames):]) if frames else 0.0
        if lat:
            arr = np.asarray(lat) * 1e3
            rows.append(BenchRow(m.value, len(frames), float(np.median(arr)), float(np.percentile(arr, 95)),
                                 len(frames) * repeat / total if total > 0 else float("inf")))
        else:
            rows.append(BenchRow(m.value, 0, float("nan"), float("nan"), float("nan")))
    return rows


def cmd_bench(a: argparse.Namespace) -> int:
    if a.repeat < 1:
        raise UsageError("--repeat must be >= 1")
    b = _load(a.seq)
    rows = bench_bundle(b, a.repeat, _params(a.params, None))
    print(f"{'matcher':<8} {'frames':>7} {'median_ms':>10} {'p95_ms':>10} {'frames/s':>10}")
    for r in rows:
        if r.frames == 0:
            print(f"{r.matcher:<8} {0:>7} {'n/a':>10} {'n/a':>10} {'n/a':>10}")
        else:
            print(f"{r.matcher:<8} {r.frames:>7} {r.median_ms:>10.4f} {r.p95_ms:>10.4f} {r.fps:>10.1f}")
    return EXIT_OK


# --- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rcmtrack", description="Radar-camera multi-object tracking toolkit.")
    p.add_argument("--version", action="version", version=f"rcmtrack {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate synthetic sequence bundles")
    g.add_argument("--config", help="scenario config file")
    g.add_argument("--seed", type=int, help="override the config seed")
    g.add_argument("--out-dir", required=True)
    g.add_argument("--suite", choices=[SUITE_NAME], help="emit the fixed-seed benchmark suite")
    g.add_argument("--jobs", type=int, default=1)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("track", help="track one sequence bundle")
    t.add_argument("--seq", required=True)
    t.add_argument("--matcher", choices=[m.value for m in Matcher])
    t.add_argument("--params", help="run config file")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_track)

    e = sub.add_parser("eval", help="score predictions against ground truth")
    e.add_argument("--gt", required=True)
    e.add_argument("--pred", required=True)
    e.add_argument("--per-class", action="store_true")
    e.add_argument("--out", help="write key = value results here")
    e.add_argument("--name", default="tracker", help="row label in the table")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="sweep one association parameter over sequence bundles")
    s.add_argument("--seq-dir", required=True, help="a bundle or a directory of bundles")
    s.add_argument("--param", required=True, help="NAME=START:STEP:END")
    s.add_argument("--matcher", choices=[m.value for m in Matcher], default=Matcher.RCM.value)
    s.add_argument("--params", help="base run config file")
    s.add_argument("--out", required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    r = sub.add_parser("render", help="write one SVG overlay per frame")
    r.add_argument("--seq", required=True)
    r.add_argument("--pred", required=True)
    r.add_argument("--out-dir", required=True)
    r.add_argument("--frames", help="inclusive frame span A:B")
    r.set_defaults(func=cmd_render)

    b = sub.add_parser("bench", help="per-frame latency of both matchers")
    b.add_argument("--seq", required=True)
    b.add_argument("--repeat", type=int, default=3)
    b.add_argument("--params", help="run config file")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    try:
        a = build_parser().parse_args(argv)
        if getattr(a, "jobs", 1) < 1:
            raise UsageError("--jobs must be >= 1")
        return a.func(a)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001 - contract: anything unexpected is exit 3
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
