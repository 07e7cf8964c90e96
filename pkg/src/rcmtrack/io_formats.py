"""Readers and writers for on-disk artifacts.

All frame indices are 1-based. Numeric fields are parsed strictly: anything
that is not a plain decimal literal is an error rather than being coerced.
"""

from __future__ import annotations

import configparser
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .association import RcmParams
from .core import BBox, Calibration, Detection, ObjectClass, validate_calibration
from .metrics import TrajectorySet
from .radar import DbscanParams
from .tracker import FrameOutput, Matcher, TrackerParams

FORMAT_VERSION = 1
RADAR_HEADER = "frame,range_m,azimuth_rad,elevation_rad,doppler_mps,power_db"

_FLOAT = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")
_INT = re.compile(r"^[+-]?\d+$")


class FormatError(ValueError):
    pass


def _float(tok: str, what: str, where: str) -> float:
    if not _FLOAT.match(tok):
        raise FormatError(f"non-numeric {what} {tok!r} {where}")
    return float(tok)


def _int(tok: str, what: str, where: str) -> int:
    if not _INT.match(tok):
        raise FormatError(f"non-integer {what} {tok!r} {where}")
    return int(tok)


def _f6(x: float) -> str:
    s = f"{x:.6f}"
    return "0.000000" if s == "-0.000000" else s


# --- MOT text -------------------------------------------------------------


@dataclass(frozen=True)
class MotRecord:
    frame: int
    id: int
    bbox: BBox
    conf: float
    class_id: ObjectClass
    visibility: float = 1.0


def parse_mot_line(line: str, lineno: int) -> MotRecord:
    where = f"at line {lineno}"
    toks = line.strip().split(",")
    if len(toks) != 9:
        raise FormatError(f"expected 9 fields, got {len(toks)} {where}")
    frame = _int(toks[0], "frame", where)
    if frame < 1:
        raise FormatError(f"non-positive frame {where}")
    tid = _int(toks[1], "id", where)
    x, y, w, h, conf = (_float(t, "value", where) for t in toks[2:7])
    if w <= 0 or h <= 0:
        raise FormatError(f"non-positive box dimension {where}")
    cls = _int(toks[7], "class", where)
    try:
        class_id = ObjectClass.parse(cls)
    except ValueError:
        raise FormatError(f"unknown class id {cls} {where}") from None
    vis = _float(toks[8], "visibility", where)
    if not 0.0 <= vis <= 1.0:
        raise FormatError(f"visibility outside [0,1] {where}")
    if not all(math.isfinite(v) for v in (x, y, w, h, conf)):
        raise FormatError(f"non-finite value {where}")
    return MotRecord(frame, tid, BBox(x, y, w, h), conf, class_id, vis)


def read_mot_file(path: str | Path) -> list[MotRecord]:
    path = Path(path)
    out = []
    with path.open("r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(parse_mot_line(line, lineno))
            except FormatError as e:
                raise FormatError(f"{path}: {e}") from None
    return out


def format_mot_line(r: MotRecord) -> str:
    b = r.bbox
    return ",".join(
        (str(r.frame), str(r.id), _f6(b.x), _f6(b.y), _f6(b.w), _f6(b.h), _f6(r.conf), str(int(r.class_id)), _f6(r.visibility))
    )


def write_mot_file(path: str | Path, records: Iterable[MotRecord]) -> None:
    recs = sorted(records, key=lambda r: (r.frame, r.id))
    text = "".join(format_mot_line(r) + "\n" for r in recs)
    Path(path).write_text(text, encoding="ascii")


def records_to_trajectories(records: Iterable[MotRecord]) -> TrajectorySet:
    return TrajectorySet.from_rows(
        (r.frame, r.id, int(r.class_id), r.bbox.x, r.bbox.y, r.bbox.w, r.bbox.h) for r in records
    )


def records_to_detections(records: Iterable[MotRecord]) -> dict[int, list[Detection]]:
    out: dict[int, list[Detection]] = {}
    for r in records:
        conf = min(max(r.conf, 0.0), 1.0)
        out.setdefault(r.frame, []).append(Detection(r.bbox, conf, r.class_id, r.frame))
    return out


def detections_to_records(dets: dict[int, list[Detection]]) -> list[MotRecord]:
    return [MotRecord(d.frame, -1, d.bbox, d.confidence, d.class_id) for f in sorted(dets) for d in dets[f]]


def outputs_to_records(outputs: Iterable[FrameOutput]) -> list[MotRecord]:
    return [
        MotRecord(fo.frame, t.track_id, t.bbox, t.confidence, t.class_id) for fo in outputs for t in fo.tracks
    ]


# --- radar CSV --------------------------------------------------------------


def read_radar_csv(path: str | Path) -> dict[int, np.ndarray]:
    """Per-frame (N, 5) arrays of range, azimuth, elevation, doppler, power."""
    path = Path(path)
    rows: dict[int, list[list[float]]] = {}
    with path.open("r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != RADAR_HEADER:
            raise FormatError(f"{path}: missing header, expected {RADAR_HEADER!r}")
        last = 0
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            where = f"at line {lineno}"
            toks = line.strip().split(",")
            if len(toks) != 6:
                raise FormatError(f"{path}: expected 6 fields, got {len(toks)} {where}")
            frame = _int(toks[0], "frame", where)
            if frame < 1:
                raise FormatError(f"{path}: non-positive frame {where}")
            if frame < last:
                raise FormatError(f"{path}: rows not sorted by frame {where}")
            last = frame
            vals = [_float(t, "value", where) for t in toks[1:]]
            if not all(math.isfinite(v) for v in vals):
                raise FormatError(f"{path}: non-finite value {where}")
            if vals[0] <= 0:
                raise FormatError(f"{path}: non-positive range {where}")
            rows.setdefault(frame, []).append(vals)
    return {f: np.array(v, dtype=np.float64) for f, v in rows.items()}


def write_radar_csv(path: str | Path, radar: dict[int, np.ndarray]) -> None:
    lines = [RADAR_HEADER]
    for f in sorted(radar):
        for row in np.asarray(radar[f]).reshape(-1, 5):
            lines.append(",".join([str(f)] + [_f6(float(v)) for v in row]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


# --- calibration -------------------------------------------------------------

_CALIB_KEYS = ("fx", "fy", "cx", "cy", "image_w", "image_h", "T_radar_to_cam")


def calibration_to_dict(c: Calibration) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "fx": c.fx,
        "fy": c.fy,
        "cx": c.cx,
        "cy": c.cy,
        "image_w": int(c.image_w),
        "image_h": int(c.image_h),
        "T_radar_to_cam": [float(v) for v in np.asarray(c.T_radar_to_cam, dtype=np.float64).ravel()],
    }


def write_calibration(path: str | Path, c: Calibration) -> None:
    Path(path).write_text(json.dumps(calibration_to_dict(c), indent=2) + "\n", encoding="ascii")


def read_calibration(path: str | Path) -> Calibration:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="ascii"))
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: expected a JSON object")
    for k in _CALIB_KEYS:
        if k not in doc:
            raise FormatError(f"{path}: missing key {k!r}")
    unknown = set(doc) - set(_CALIB_KEYS) - {"format_version"}
    if unknown:
        raise FormatError(f"{path}: unknown keys {sorted(unknown)}")
    if doc.get("format_version", FORMAT_VERSION) != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format_version {doc['format_version']}")
    for k in ("fx", "fy", "cx", "cy"):
        if isinstance(doc[k], bool) or not isinstance(doc[k], (int, float)):
            raise FormatError(f"{path}: {k} must be a number")
    for k in ("image_w", "image_h"):
        if isinstance(doc[k], bool) or not isinstance(doc[k], int):
            raise FormatError(f"{path}: {k} must be an integer")
    T = doc["T_radar_to_cam"]
    if not isinstance(T, list) or len(T) != 16 or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in T):
        raise FormatError(f"{path}: T_radar_to_cam must be 16 numbers (row-major 4x4)")
    c = Calibration(
        float(doc["fx"]), float(doc["fy"]), float(doc["cx"]), float(doc["cy"]),
        doc["image_w"], doc["image_h"], np.array(T, dtype=np.float64).reshape(4, 4),
    )
    problem = validate_calibration(c)
    if problem:
        raise FormatError(f"{path}: {problem}")
    return c


# --- seqinfo.ini -------------------------------------------------------------


@dataclass(frozen=True)
class SeqInfo:
    name: str
    length: int
    frame_rate: float = 30.0
    image_w: int = 1920
    image_h: int = 1080


def write_seqinfo(path: str | Path, info: SeqInfo) -> None:
    text = (
        "[Sequence]\n"
        f"name={info.name}\n"
        f"frameRate={info.frame_rate:g}\n"
        f"seqLength={info.length}\n"
        f"imWidth={info.image_w}\n"
        f"imHeight={info.image_h}\n"
        f"format_version={FORMAT_VERSION}\n"
    )
    Path(path).write_text(text, encoding="ascii")


def read_seqinfo(path: str | Path) -> SeqInfo:
    path = Path(path)
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(path.read_text(encoding="ascii"), source=str(path))
        sec = cp["Sequence"]
        version = _int(sec.get("format_version", str(FORMAT_VERSION)), "format_version", "in seqinfo")
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported format_version {version}")
        info = SeqInfo(
            name=sec.get("name", path.parent.name),
            length=_int(sec["seqLength"], "seqLength", "in seqinfo"),
            frame_rate=_float(sec.get("frameRate", "30"), "frameRate", "in seqinfo"),
            image_w=_int(sec.get("imWidth", "1920"), "imWidth", "in seqinfo"),
            image_h=_int(sec.get("imHeight", "1080"), "imHeight", "in seqinfo"),
        )
    except (configparser.Error, KeyError) as e:
        raise FormatError(f"{path}: {e}") from None
    except FormatError as e:
        raise FormatError(f"{path}: {e}") from None
    if info.length < 0:
        raise FormatError(f"{path}: negative seqLength")
    return info


# --- sectioned key = value configs -------------------------------------------


def read_sectioned(path: str | Path) -> dict[str, dict[str, str]]:
    """Parse `[section]` / `key = value` text; '#' and ';' start comments."""
    path = Path(path)
    out: dict[str, dict[str, str]] = {}
    section: str | None = None
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section in out:
                raise FormatError(f"{path}: duplicate section [{section}] at line {lineno}")
            out[section] = {}
            continue
        if "=" not in line:
            raise FormatError(f"{path}: expected 'key = value' at line {lineno}")
        if section is None:
            raise FormatError(f"{path}: key outside of a section at line {lineno}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in out[section]:
            raise FormatError(f"{path}: duplicate key {key!r} at line {lineno}")
        out[section][key] = value
    return out


@dataclass(frozen=True)
class RunConfig:
    tracker: TrackerParams = field(default_factory=TrackerParams)
    paths: dict[str, str] = field(default_factory=dict)


_RUN_SCHEMA: dict[str, dict[str, type]] = {
    "tracker": {
        "tau_high": float, "tau_low": float, "tau_new": float, "max_lost": int,
        "stage1_gate": float, "stage2_gate": float, "matcher": str,
    },
    "rcm": {"alpha": float, "lambda": float, "theta_rcm": float, "theta_iou": float},
    "radar": {"eps": float, "min_pts": int},
    "paths": {"seq": str, "out": str, "gt": str},
}


def _typed(value: str, typ: type, key: str):
    if typ is float:
        return _float(value, "value for", key)
    if typ is int:
        return _int(value, "value for", key)
    return value


def read_run_config(path: str | Path) -> RunConfig:
    raw = read_sectioned(path)
    vals: dict[str, dict] = {}
    for section, items in raw.items():
        schema = _RUN_SCHEMA.get(section)
        if schema is None:
            raise FormatError(f"{path}: unknown section [{section}]")
        for key, value in items.items():
            if key not in schema:
                raise FormatError(f"{path}: unknown key {key!r} in [{section}]")
            vals.setdefault(section, {})[key] = _typed(value, schema[key], key)
    try:
        rcm_kw = dict(vals.get("rcm", {}))
        if "lambda" in rcm_kw:
            rcm_kw["lam"] = rcm_kw.pop("lambda")
        rcm = RcmParams(**rcm_kw)
        dbscan = DbscanParams(**vals.get("radar", {}))
        tk = dict(vals.get("tracker", {}))
        if "matcher" in tk:
            try:
                tk["matcher"] = Matcher(tk["matcher"])
            except ValueError:
                raise FormatError(f"{path}: matcher must be 'iou' or 'rcm'") from None
        params = TrackerParams(rcm=rcm, dbscan=dbscan, **tk)
    except FormatError:
        raise
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from None
    return RunConfig(params, dict(vals.get("paths", {})))


# --- sequence bundles ---------------------------------------------------------


@dataclass
class SequenceBundle:
    path: Path
    info: SeqInfo
    detections: dict[int, list[Detection]]
    radar: dict[int, np.ndarray]
    calib: Calibration | None
    gt: TrajectorySet | None = None


def load_bundle(directory: str | Path, need_gt: bool = False) -> SequenceBundle:
    d = Path(directory)
    if not d.is_dir():
        raise FormatError(f"{d}: not a directory")
    for name in ("seqinfo.ini", "det.txt"):
        if not (d / name).is_file():
            raise FormatError(f"{d / name}: file not found")
    info = read_seqinfo(d / "seqinfo.ini")
    det_records = read_mot_file(d / "det.txt")
    radar = read_radar_csv(d / "radar.csv") if (d / "radar.csv").is_file() else {}
    calib = read_calibration(d / "calib.json") if (d / "calib.json").is_file() else None
    gt = None
    if (d / "gt.txt").is_file():
        gt = records_to_trajectories(read_mot_file(d / "gt.txt"))
    elif need_gt:
        raise FormatError(f"{d / 'gt.txt'}: file not found")
    last = max([r.frame for r in det_records] + list(radar) + (list(gt.frames) if gt else []), default=0)
    if last > info.length:
        raise FormatError(f"{d}: frame {last} beyond seqLength {info.length}")
    return SequenceBundle(d, info, records_to_detections(det_records), radar, calib, gt)


def write_key_values(path: str | Path, items: Iterable[tuple[str, str]]) -> None:
    Path(path).write_text("".join(f"{k} = {v}\n" for k, v in items), encoding="ascii")
