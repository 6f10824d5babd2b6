"""Power-trace data types, CSV ingestion, and deterministic synthetic fixtures.

The CSV layout matches plug-level appliance exports: one header row of device
names, one column of watt readings per device. Columns may have different
effective lengths; trailing blanks are handled by the missing-value policy.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import CsvFormatError, CsvParseError, LoadgenError

FIXTURE_KINDS = ("constant", "square_wave", "spiky", "noisy_sine", "intermittent_bursts")


@dataclass(frozen=True)
class DeviceTrace:
    """One appliance's power series in watts."""

    device_id: str
    samples: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1 or arr.size < 1:
            raise LoadgenError(f"trace {self.device_id!r} must be a nonempty 1-D series")
        if not np.all(np.isfinite(arr)):
            raise LoadgenError(f"trace {self.device_id!r} contains non-finite samples")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    @property
    def length(self) -> int:
        return int(self.samples.size)


@dataclass(frozen=True)
class DeviceTraceSet:
    """Ordered collection of traces, keyed by unique device_id."""

    traces: tuple[DeviceTrace, ...]

    def __post_init__(self):
        traces = tuple(self.traces)
        ids = [t.device_id for t in traces]
        if len(set(ids)) != len(ids):
            raise CsvFormatError("duplicate device ids in trace set")
        object.__setattr__(self, "traces", traces)

    @property
    def device_ids(self) -> list[str]:
        return [t.device_id for t in self.traces]

    def get(self, device_id: str) -> DeviceTrace:
        for t in self.traces:
            if t.device_id == device_id:
                return t
        raise KeyError(device_id)

    def __len__(self) -> int:
        return len(self.traces)

    def __iter__(self):
        return iter(self.traces)


@dataclass(frozen=True)
class FixtureSpec:
    """Recipe for a deterministic synthetic trace used by tests and demos."""

    kind: str
    length: int
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FIXTURE_KINDS:
            raise LoadgenError(f"unknown fixture kind {self.kind!r}")
        if self.length < 1:
            raise LoadgenError("fixture length must be >= 1")


def load_csv(path, missing_policy: str = "zero") -> DeviceTraceSet:
    """Read a device-per-column CSV into a DeviceTraceSet.

    Blank cells in the middle of a column become 0.0 under ``zero``; under
    ``drop_trailing`` blank cells at the end of a column are removed (interior
    blanks still become 0.0 so lengths stay consistent with row order).
    """
    if missing_policy not in ("zero", "drop_trailing"):
        raise LoadgenError(f"unknown missing policy {missing_policy!r}")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader]
    if not rows:
        raise CsvFormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if not header or any(h == "" for h in header):
        raise CsvFormatError(f"{path}: empty or blank header")
    if len(set(header)) != len(header):
        raise CsvFormatError(f"{path}: duplicate device name in header")

    ncol = len(header)
    columns: list[list[float]] = [[] for _ in range(ncol)]
    blank: list[list[bool]] = [[] for _ in range(ncol)]
    for r, row in enumerate(rows[1:], start=2):
        if not row or all(cell.strip() == "" for cell in row):
            continue
        for c in range(ncol):
            cell = row[c].strip() if c < len(row) else ""
            if cell == "":
                columns[c].append(0.0)
                blank[c].append(True)
            else:
                try:
                    columns[c].append(float(cell))
                except ValueError:
                    raise CsvParseError(
                        f"{path}: malformed numeric cell at row {r}, column {header[c]!r}: {cell!r}"
                    ) from None
                blank[c].append(False)

    traces = []
    for c in range(ncol):
        vals = columns[c]
        if missing_policy == "drop_trailing":
            end = len(vals)
            while end > 0 and blank[c][end - 1]:
                end -= 1
            vals = vals[:end]
        if not vals:
            raise CsvFormatError(f"{path}: column {header[c]!r} has no data")
        traces.append(DeviceTrace(header[c], np.asarray(vals, dtype=np.float64)))
    return DeviceTraceSet(tuple(traces))


def format_cell(v: float) -> str:
    """Plain decimal with up to 9 significant digits."""
    return format(float(v), ".9g")


def write_csv(trace_set: DeviceTraceSet, path) -> None:
    """Write a DeviceTraceSet back to the column-per-device layout.

    Columns shorter than the longest trace are padded with blank cells, which
    ``load_csv(..., "drop_trailing")`` removes on the way back in.
    """
    n_rows = max(t.length for t in trace_set)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(trace_set.device_ids) + "\n")
        for i in range(n_rows):
            cells = []
            for t in trace_set:
                cells.append(format_cell(t.samples[i]) if i < t.length else "")
            fh.write(",".join(cells) + "\n")


def make_fixture(spec: FixtureSpec) -> DeviceTrace:
    """Generate a deterministic synthetic trace from a FixtureSpec."""
    rng = np.random.default_rng(spec.seed)
    n = spec.length
    p = spec.params
    if spec.kind == "constant":
        level = float(p.get("level", 50.0))
        x = np.full(n, level)
    elif spec.kind == "square_wave":
        lo = float(p.get("lo", 0.0))
        hi = float(p.get("hi", 100.0))
        half = int(p.get("half_period", 25))
        phase = (np.arange(n) // half) % 2
        x = np.where(phase == 0, lo, hi)
    elif spec.kind == "noisy_sine":
        amp = float(p.get("amplitude", 20.0))
        period = float(p.get("period", 100.0))
        offset = float(p.get("offset", 60.0))
        noise = float(p.get("noise_std", 1.0))
        t = np.arange(n)
        x = offset + amp * np.sin(2.0 * np.pi * t / period) + noise * rng.standard_normal(n)
    elif spec.kind == "spiky":
        amp = float(p.get("amplitude", 100.0))
        mean_gap = int(p.get("mean_gap", 100))
        width = int(p.get("width", 5))
        x = np.zeros(n)
        pos = mean_gap
        while pos < n - width:
            peak = amp * (0.8 + 0.4 * rng.random())
            for k in range(width):
                # triangular spike shape centered on pos
                frac = 1.0 - abs(k - width // 2) / max(width // 2, 1)
                idx = pos + k - width // 2
                if 0 <= idx < n:
                    x[idx] = max(x[idx], peak * frac)
            gap = int(round(rng.normal(mean_gap, 0.2 * mean_gap)))
            pos += max(gap, width + 1)
    elif spec.kind == "intermittent_bursts":
        level = float(p.get("level", 80.0))
        burst_len = int(p.get("burst_len", 20))
        occupancy = float(p.get("occupancy", 0.15))
        x = np.zeros(n)
        pos = 0
        mean_gap = int(burst_len / occupancy) - burst_len
        while pos < n:
            gap = max(1, int(rng.exponential(mean_gap)))
            pos += gap
            stop = min(pos + burst_len, n)
            if pos < n:
                x[pos:stop] = level * (0.9 + 0.2 * rng.random())
            pos = stop
    else:  # pragma: no cover - guarded by FixtureSpec
        raise LoadgenError(spec.kind)
    return DeviceTrace(f"{spec.kind}_{spec.seed}", x)
