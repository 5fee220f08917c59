"""Observation records, tick files, resampling and result persistence.

Tick file layout (delimited text, prices in integer ticks)::

    # optional key=value comment lines
    timestamp,bid,ask,order_flow[,latent]
    0.0,100,101,0.0
    ...

Result files are self-describing text with a version line; see
:func:`save_result`.
"""

from __future__ import annotations

import io
import math
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

TICK_HEADER = ("timestamp", "bid", "ask", "order_flow")
RESULT_MAGIC = "# latentprice-result"
RESULT_VERSION = 1
SURFACE_HEADER = ("alpha2", "sigma2", "beta", "loglik")


class DataError(ValueError):
    """Malformed or inconsistent market data."""


class TickRecord(NamedTuple):
    timestamp: float
    bid: int
    ask: int
    order_flow: float


@dataclass
class MarketPath:
    """Observation record on a regular time grid.

    ``order_flow`` is the cumulative signed volume ``Y`` rebased to start at 0;
    ``latent`` holds the simulated latent price when known.
    """

    times: np.ndarray
    order_flow: np.ndarray
    bid: np.ndarray
    ask: np.ndarray
    latent: np.ndarray | None = None
    dt_obs: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.order_flow = np.asarray(self.order_flow, dtype=float)
        self.bid = np.asarray(self.bid, dtype=np.int64)
        self.ask = np.asarray(self.ask, dtype=np.int64)
        if self.latent is not None:
            self.latent = np.asarray(self.latent, dtype=float)
        n = self.times.size
        cols = [self.order_flow, self.bid, self.ask]
        if self.latent is not None:
            cols.append(self.latent)
        if any(c.shape != (n,) for c in cols):
            raise DataError("all series must be 1-d with a common length")
        if n and self.order_flow[0] != 0.0:
            raise DataError("order_flow must start at 0")
        spread = self.ask - self.bid
        if np.any((spread < 1) | (spread > 2)):
            i = int(np.flatnonzero((spread < 1) | (spread > 2))[0])
            raise DataError(f"spread must be 1 or 2 ticks (row {i}: {self.bid[i]}, {self.ask[i]})")

    def __len__(self):
        return self.times.size

    @property
    def horizon(self) -> float:
        return float(self.times[-1] - self.times[0]) if len(self) > 1 else 0.0

    @property
    def mid(self) -> np.ndarray:
        return 0.5 * (self.bid + self.ask)

    @property
    def flow_increments(self) -> np.ndarray:
        return np.diff(self.order_flow)

    def slice(self, stop: int) -> "MarketPath":
        """First ``stop`` observations."""
        lat = None if self.latent is None else self.latent[:stop]
        return MarketPath(self.times[:stop], self.order_flow[:stop], self.bid[:stop],
                          self.ask[:stop], lat, self.dt_obs, dict(self.meta))


def _fmt(v) -> str:
    if isinstance(v, (str, np.str_)):
        return str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _meta_lines(meta: dict) -> list[str]:
    lines = []
    for k in sorted(meta):
        v = str(meta[k]).replace("\n", " ")
        lines.append(f"# {k}={v}\n")
    return lines


def write_dataset(path: MarketPath, destination) -> None:
    """Write ``path`` in the tick-file format; the latent column only if present."""
    header = list(TICK_HEADER) + (["latent"] if path.latent is not None else [])
    buf = io.StringIO()
    buf.writelines(_meta_lines({**path.meta, "dt_obs": path.dt_obs}))
    buf.write(",".join(header) + "\n")
    cols = [path.times, path.bid, path.ask, path.order_flow]
    if path.latent is not None:
        cols.append(path.latent)
    ints = {1, 2}
    for i in range(len(path)):
        row = [str(int(c[i])) if j in ints else repr(float(c[i])) for j, c in enumerate(cols)]
        buf.write(",".join(row) + "\n")
    try:
        Path(destination).write_text(buf.getvalue())
    except OSError as exc:
        raise OSError(f"cannot write dataset to {destination}: {exc}") from exc


def _read_table(source) -> tuple[dict, list[str], list[tuple[int, list[str]]]]:
    p = Path(source)
    if not p.exists():
        raise FileNotFoundError(f"no such file: {source}")
    meta, header, rows = {}, None, []
    with p.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                if header is None and "=" in line:
                    k, v = line[1:].strip().split("=", 1)
                    meta[k.strip()] = v.strip()
                continue
            if header is None:
                header = line.split(",")
                continue
            rows.append((lineno, line.split(",")))
    return meta, header or [], rows


def _check_header(header, source):
    if not header:
        return False
    if tuple(header[:4]) != TICK_HEADER or header[4:] not in ([], ["latent"]):
        raise DataError(f"{source}: header must be {','.join(TICK_HEADER)}[,latent], got {','.join(header)}")
    return len(header) == 5


def load_ticks(source) -> list[TickRecord]:
    """Parse and validate a tick file; malformed rows raise with their line number."""
    meta, header, rows = _read_table(source)
    _check_header(header, source)
    out: list[TickRecord] = []
    last = -math.inf
    for lineno, fields in rows:
        if len(fields) != len(header):
            raise DataError(f"{source}:{lineno}: expected {len(header)} fields, got {len(fields)}")
        try:
            ts, bid, ask, flow = float(fields[0]), int(fields[1]), int(fields[2]), float(fields[3])
        except ValueError as exc:
            raise DataError(f"{source}:{lineno}: {exc}") from exc
        if not (math.isfinite(ts) and math.isfinite(flow)):
            raise DataError(f"{source}:{lineno}: non-finite value")
        if bid >= ask:
            raise DataError(f"{source}:{lineno}: crossed quote bid={bid} ask={ask}")
        if ts < last:
            raise DataError(f"{source}:{lineno}: timestamp {ts} precedes {last}")
        last = ts
        out.append(TickRecord(ts, bid, ask, flow))
    return out


def load_dataset(source) -> MarketPath:
    """Load a file written by :func:`write_dataset` back into a :class:`MarketPath`.

    Unlike :func:`resample` this performs no regridding; the timestamps are
    taken as the observation grid.
    """
    meta, header, rows = _read_table(source)
    has_latent = _check_header(header, source)
    ticks = load_ticks(source)
    lat = None
    if has_latent:
        lat = np.array([float(f[4]) for _, f in rows]) if rows else np.empty(0)
    times = np.array([t.timestamp for t in ticks], dtype=float)
    dt_obs = float(meta.pop("dt_obs", np.diff(times[:2])[0] if len(times) > 1 else 1.0))
    return MarketPath(
        times,
        np.array([t.order_flow for t in ticks], dtype=float),
        np.array([t.bid for t in ticks], dtype=np.int64),
        np.array([t.ask for t in ticks], dtype=np.int64),
        lat,
        dt_obs,
        meta,
    )


def resample(
    ticks: Sequence[TickRecord],
    step: float = 1.0,
    window: tuple[float, float] | None = None,
    max_gap: float | None = None,
) -> MarketPath:
    """Sample event-driven ticks on a regular grid, carrying the last value forward.

    The grid starts at the first tick (or ``window[0]``) and runs in multiples
    of ``step``; order flow is rebased so its first sample is 0. Gaps between
    consecutive ticks longer than ``max_gap`` are recorded in ``meta['gaps']``
    and trigger a warning.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if not ticks:
        raise DataError("no ticks to resample")
    ts = np.array([t.timestamp for t in ticks], dtype=float)
    start = ts[0] if window is None else float(window[0])
    end = ts[-1] if window is None else float(window[1])
    if not end > start:
        raise DataError("resampling window is empty")
    if start < ts[0]:
        raise DataError(f"window starts at {start} before the first tick {ts[0]}")
    n = int(math.floor((end - start) / step + 1e-9)) + 1
    if n < 2:
        raise DataError("ticks span less than one step")
    grid = start + step * np.arange(n)
    idx = np.searchsorted(ts, grid, side="right") - 1
    bid = np.array([t.bid for t in ticks], dtype=np.int64)[idx]
    ask = np.array([t.ask for t in ticks], dtype=np.int64)[idx]
    flow = np.array([t.order_flow for t in ticks], dtype=float)[idx]
    meta = {}
    if max_gap is not None:
        gaps = np.flatnonzero(np.diff(ts) > max_gap)
        if gaps.size:
            meta["gaps"] = ";".join(f"{ts[i]}-{ts[i + 1]}" for i in gaps)
            warnings.warn(f"{gaps.size} gap(s) longer than {max_gap}s in tick data", stacklevel=2)
    return MarketPath(grid, flow - flow[0], bid, ask, None, step, meta)


def clock_to_seconds(clock: str, session_open: str = "09:30") -> float:
    """Seconds between ``session_open`` and ``clock`` (both ``HH:MM[:SS]``)."""

    def secs(s):
        parts = [float(p) for p in s.split(":")]
        while len(parts) < 3:
            parts.append(0.0)
        return parts[0] * 3600 + parts[1] * 60 + parts[2]

    return secs(clock) - secs(session_open)


@dataclass(frozen=True)
class SessionConfig:
    """Which part of a recorded day to use and where to put the results."""

    window_start: str = "10:30"
    window_end: str = "15:00"
    session_open: str = "09:30"
    step: float = 1.0
    source: str | None = None
    destination: str | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("step must be positive")
        if not self.window[1] > self.window[0]:
            raise ValueError("session window is empty")

    @property
    def window(self) -> tuple[float, float]:
        return (clock_to_seconds(self.window_start, self.session_open),
                clock_to_seconds(self.window_end, self.session_open))


def read_config(source) -> dict[str, str]:
    """Parse a plain ``key=value`` file; ``#`` starts a comment."""
    p = Path(source)
    if not p.exists():
        raise FileNotFoundError(f"no such config file: {source}")
    out = {}
    for lineno, line in enumerate(p.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{source}:{lineno}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


@dataclass
class EstimationResult:
    """Everything the estimation pipeline produces for one session."""

    sigma_bar2: float
    Sigma_hat: float
    alpha: float
    beta: float
    sigma2: float
    eps: float
    eps_clamped: bool = False
    m_blocks: int = 0
    surface: np.ndarray = field(default_factory=lambda: np.empty((0, 4)))
    ties: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    _SCALARS = ("sigma_bar2", "Sigma_hat", "alpha", "beta", "sigma2", "eps")

    def __eq__(self, other):
        if not isinstance(other, EstimationResult):
            return NotImplemented
        return (
            all(getattr(self, k) == getattr(other, k) for k in self._SCALARS)
            and self.eps_clamped == other.eps_clamped
            and self.m_blocks == other.m_blocks
            and np.array_equal(self.surface, other.surface)
            and [tuple(t) for t in self.ties] == [tuple(t) for t in other.ties]
            and {k: str(v) for k, v in self.meta.items()} == {k: str(v) for k, v in other.meta.items()}
        )


def _result_text(result: EstimationResult) -> str:
    lines = [f"{RESULT_MAGIC} v{RESULT_VERSION}\n", "[meta]\n"]
    for k in sorted(result.meta):
        lines.append(f"{k}={str(result.meta[k]).replace(chr(10), ' ')}\n")
    lines.append("[estimates]\n")
    for k in EstimationResult._SCALARS:
        lines.append(f"{k}={_fmt(getattr(result, k))}\n")
    lines.append(f"eps_clamped={int(result.eps_clamped)}\n")
    lines.append(f"m_blocks={int(result.m_blocks)}\n")
    lines.append("[ties]\n")
    for t in result.ties:
        lines.append(",".join(_fmt(v) for v in t) + "\n")
    lines.append("[surface]\n")
    lines.append(",".join(SURFACE_HEADER) + "\n")
    for row in np.asarray(result.surface, dtype=float).reshape(-1, 4):
        lines.append(",".join(repr(float(v)) for v in row) + "\n")
    return "".join(lines)


def save_result(result: EstimationResult, destination) -> None:
    """Write ``result`` losslessly (floats in shortest round-trip form)."""
    try:
        Path(destination).write_text(_result_text(result))
    except OSError as exc:
        raise OSError(f"cannot write result to {destination}: {exc}") from exc


def load_result(source) -> EstimationResult:
    p = Path(source)
    if not p.exists():
        raise FileNotFoundError(f"no such result file: {source}")
    lines = p.read_text().splitlines()
    if not lines or not lines[0].startswith(RESULT_MAGIC):
        raise DataError(f"{source}: not a result file")
    version = lines[0][len(RESULT_MAGIC):].strip()
    if version != f"v{RESULT_VERSION}":
        raise DataError(f"{source}: unsupported result version {version!r}, expected v{RESULT_VERSION}")
    section = None
    meta, est, ties, surface = {}, {}, [], []
    for line in lines[1:]:
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1]
            continue
        if section == "meta":
            k, v = line.split("=", 1)
            meta[k] = v
        elif section == "estimates":
            k, v = line.split("=", 1)
            est[k] = v
        elif section == "ties":
            ties.append(tuple(float(v) for v in line.split(",")))
        elif section == "surface":
            if line == ",".join(SURFACE_HEADER):
                continue
            surface.append([float(v) for v in line.split(",")])
    try:
        scalars = {k: float(est[k]) for k in EstimationResult._SCALARS}
        return EstimationResult(
            **scalars,
            eps_clamped=bool(int(est["eps_clamped"])),
            m_blocks=int(est["m_blocks"]),
            surface=np.array(surface, dtype=float).reshape(-1, 4),
            ties=ties,
            meta=meta,
        )
    except KeyError as exc:
        raise DataError(f"{source}: missing field {exc}") from exc


def write_surface(surface: np.ndarray, destination, meta: dict | None = None) -> None:
    """Log-likelihood surface as a delimited ``alpha2,sigma2,beta,loglik`` table."""
    buf = io.StringIO()
    buf.writelines(_meta_lines(meta or {}))
    buf.write(",".join(SURFACE_HEADER) + "\n")
    for row in np.asarray(surface, dtype=float).reshape(-1, 4):
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    Path(destination).write_text(buf.getvalue())


def read_surface(source) -> tuple[np.ndarray, dict]:
    meta, header, rows = _read_table(source)
    if tuple(header) != SURFACE_HEADER:
        raise DataError(f"{source}: header must be {','.join(SURFACE_HEADER)}")
    arr = np.array([[float(v) for v in f] for _, f in rows], dtype=float).reshape(-1, 4)
    return arr, meta


def write_table(destination, header: Iterable[str], columns: Sequence[np.ndarray], meta: dict | None = None):
    """Generic delimited table with ``# key=value`` preamble."""
    buf = io.StringIO()
    buf.writelines(_meta_lines(meta or {}))
    buf.write(",".join(header) + "\n")
    cols = [np.asarray(c) for c in columns]
    for i in range(cols[0].shape[0] if cols else 0):
        buf.write(",".join(_fmt(c[i]) for c in cols) + "\n")
    if destination == "-":
        sys.stdout.write(buf.getvalue())
    else:
        Path(destination).write_text(buf.getvalue())
