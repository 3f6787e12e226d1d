"""Experiment plumbing: flat config files, log-log rate fits, atomic CSV output."""

from __future__ import annotations

import ast
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

RESERVED_KEYS = ("experiment", "seeds", "output_dir", "svg")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    parameters: dict = field(default_factory=dict)
    seeds: list = field(default_factory=lambda: list(range(10)))
    output_dir: str = "onet-out"
    svg: bool = False


def _parse_value(text: str, lineno: int):
    text = text.strip()
    lowered = {"true": "True", "false": "False"}
    try:
        return ast.literal_eval(lowered.get(text, text))
    except (ValueError, SyntaxError):
        raise ConfigError(f"line {lineno}: cannot parse value {text!r}") from None


def _strip_comment(line: str) -> str:
    out, quote = [], None
    for ch in line:
        if quote:
            quote = None if ch == quote else quote
        elif ch in "\"'":
            quote = ch
        elif ch == "#":
            break
        out.append(ch)
    return "".join(out)


def parse_config(text: str) -> ExperimentConfig:
    """Flat ``key = value`` lines; values are TOML-style scalars or arrays."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = _strip_comment(line).strip()
        if not line:
            continue
        if line.startswith("["):
            raise ConfigError(f"line {lineno}: tables are not supported")
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (t.strip() for t in line.split("=", 1))
        if not key.replace("_", "").replace("-", "").isalnum():
            raise ConfigError(f"line {lineno}: bad key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = _parse_value(value, lineno)
    if "experiment" not in raw:
        raise ConfigError("missing 'experiment'")
    name = raw.pop("experiment")
    cfg = ExperimentConfig(experiment=str(name))
    if "seeds" in raw:
        seeds = raw.pop("seeds")
        if isinstance(seeds, int):
            seeds = [seeds]
        if not seeds or not all(isinstance(s, int) and 0 <= s < 2**64 for s in seeds):
            raise ConfigError("seeds must be a list of 64-bit nonnegative integers")
        cfg.seeds = list(seeds)
    if "output_dir" in raw:
        cfg.output_dir = str(raw.pop("output_dir"))
    if "svg" in raw:
        cfg.svg = bool(raw.pop("svg"))
    cfg.parameters = raw
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text)


def resolve_parameters(defaults: dict, given: dict) -> dict:
    """Merge given over defaults; unknown keys and type mismatches are errors."""
    out = dict(defaults)
    for key, value in given.items():
        if key not in defaults:
            raise ConfigError(f"unknown parameter {key!r}; known: {sorted(defaults)}")
        ref = defaults[key]
        if isinstance(ref, bool):
            ok = isinstance(value, bool)
        elif isinstance(ref, float):
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
            value = float(value) if ok else value
        elif isinstance(ref, int):
            ok = isinstance(value, int) and not isinstance(value, bool)
        elif isinstance(ref, (list, tuple)):
            ok = isinstance(value, (list, tuple)) and len(value) > 0
            value = tuple(value) if ok else value
        else:
            ok = isinstance(value, type(ref))
        if not ok:
            raise ConfigError(f"parameter {key!r} expects {type(ref).__name__}, got {value!r}")
        out[key] = value
    return out


# -- rate fits ----------------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    n_points: int


def fit_rate(pairs) -> RateFit:
    """Least-squares line through (log x, log y)."""
    pairs = [(float(x), float(y)) for x, y in pairs]
    if len(pairs) < 2:
        raise ValueError("need at least two points for a fit")
    if any(x <= 0 or y <= 0 for x, y in pairs):
        raise ValueError("rate fits need positive x and y")
    lx = np.log([x for x, _ in pairs])
    ly = np.log([y for _, y in pairs])
    A = np.stack([lx, np.ones_like(lx)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ np.array([slope, intercept])
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(slope), float(intercept), min(max(r2, 0.0), 1.0), len(pairs))


def slopes_so_far(xs, ys) -> list:
    """Running fitted slope after each point (blank until two points exist)."""
    out = []
    for i in range(len(xs)):
        if i == 0 or any(y <= 0 or not math.isfinite(y) for y in ys[: i + 1]):
            out.append(float("nan"))
        else:
            out.append(fit_rate(list(zip(xs[: i + 1], ys[: i + 1]))).slope)
    return out


# -- output -------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "" if math.isnan(v) else repr(v)
    return str(v)


def to_csv(columns, rows) -> str:
    lines = [",".join(columns)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def write_atomic(path, data) -> None:
    """Write text or bytes via a temporary file and an atomic rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class ExperimentResult:
    columns: list
    rows: list
    summary: dict
    accepted: bool
    plot: Optional[tuple] = None  # (x column, y column) for the optional figure


@dataclass
class Experiment:
    name: str
    description: str
    defaults: dict
    run: Callable


def render_svg(result: ExperimentResult, title: str) -> bytes:
    import io

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xc, yc = result.plot
    ix, iy = result.columns.index(xc), result.columns.index(yc)
    pts = [(r[ix], r[iy]) for r in result.rows if r[ix] > 0 and r[iy] > 0]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog([p[0] for p in pts], [p[1] for p in pts], "o-")
    ax.set_xlabel(xc)
    ax.set_ylabel(yc)
    ax.set_title(title)
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def write_result(cfg: ExperimentConfig, result: ExperimentResult) -> list:
    out_dir = Path(os.environ.get("ONET_OUT") or cfg.output_dir)
    csv_path = out_dir / f"{cfg.experiment}.csv"
    summary_path = out_dir / f"{cfg.experiment}-summary.csv"
    write_atomic(csv_path, to_csv(result.columns, result.rows))
    summary_rows = [(k, v) for k, v in result.summary.items()] + [("accepted", result.accepted)]
    write_atomic(summary_path, to_csv(["key", "value"], summary_rows))
    paths = [csv_path, summary_path]
    if cfg.svg and result.plot:
        svg_path = out_dir / f"{cfg.experiment}.svg"
        write_atomic(svg_path, render_svg(result, cfg.experiment))
        paths.append(svg_path)
    return paths
