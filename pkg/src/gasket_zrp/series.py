"""Replica x time x observable arrays and their CSV trajectory format.

The CSV holds one row per (replica, sample time). Two leading ``#`` lines
carry the format tag and a JSON metadata object (resolved run config, RNG
description, equilibrium constants), so each file is self-describing.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["FieldSeries", "FORMAT_TAG", "FORMAT_VERSION"]

FORMAT_TAG = "gasket_zrp-trajectory"
FORMAT_VERSION = 1


@dataclass
class FieldSeries:
    """Fluctuation-field time series over independent replicas.

    Array shapes: ``fields``, ``qv`` and ``jump_max`` are (R, T, F);
    ``channels`` and ``integrals`` are (R, T, C); ``events`` and
    ``particles`` are (R, T). ``qv`` is the cumulative realized quadratic
    variation and ``jump_max`` the running largest single-event jump of each
    field. ``integrals`` are cumulative time integrals of the channels.
    """

    times: np.ndarray
    field_labels: list
    fields: np.ndarray
    channel_labels: list = field(default_factory=list)
    channels: np.ndarray | None = None
    integrals: np.ndarray | None = None
    qv: np.ndarray | None = None
    jump_max: np.ndarray | None = None
    events: np.ndarray | None = None
    particles: np.ndarray | None = None
    seeds: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.fields = np.asarray(self.fields, dtype=float)
        R, T, F = self.fields.shape
        C = len(self.channel_labels)
        if T != len(self.times) or F != len(self.field_labels):
            raise ValueError("fields array does not match times/labels")
        zeros = lambda *s: np.zeros(s)  # noqa: E731
        self.channels = zeros(R, T, C) if self.channels is None else np.asarray(self.channels, float)
        self.integrals = zeros(R, T, C) if self.integrals is None else np.asarray(self.integrals, float)
        self.qv = zeros(R, T, F) if self.qv is None else np.asarray(self.qv, float)
        self.jump_max = zeros(R, T, F) if self.jump_max is None else np.asarray(self.jump_max, float)
        self.events = np.zeros((R, T), np.int64) if self.events is None else np.asarray(self.events, np.int64)
        self.particles = (
            np.zeros((R, T), np.int64) if self.particles is None else np.asarray(self.particles, np.int64)
        )
        self.seeds = np.zeros(R, np.int64) if self.seeds is None else np.asarray(self.seeds, np.int64)
        for name, arr, shape in (
            ("channels", self.channels, (R, T, C)),
            ("integrals", self.integrals, (R, T, C)),
            ("qv", self.qv, (R, T, F)),
            ("jump_max", self.jump_max, (R, T, F)),
            ("events", self.events, (R, T)),
            ("particles", self.particles, (R, T)),
            ("seeds", self.seeds, (R,)),
        ):
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
        for arr in (self.fields, self.channels, self.integrals, self.qv, self.jump_max):
            if not np.all(np.isfinite(arr)):
                raise ValueError("series contains missing or non-finite values")
        for lab in list(self.field_labels) + list(self.channel_labels):
            if "," in lab or "\n" in lab:
                raise ValueError(f"label {lab!r} may not contain commas or newlines")

    @property
    def n_replicas(self) -> int:
        return self.fields.shape[0]

    @property
    def dt(self) -> float:
        d = np.diff(self.times)
        if d.size == 0 or not np.allclose(d, d[0], rtol=1e-9, atol=1e-12):
            raise ValueError("sample grid is not uniform")
        return float(d[0])

    def field(self, label: str) -> np.ndarray:
        return self.fields[:, :, self.field_labels.index(label)]

    def channel(self, label: str) -> np.ndarray:
        return self.channels[:, :, self.channel_labels.index(label)]

    def integral(self, label: str) -> np.ndarray:
        return self.integrals[:, :, self.channel_labels.index(label)]

    def field_qv(self, label: str) -> np.ndarray:
        return self.qv[:, :, self.field_labels.index(label)]

    # -- CSV -------------------------------------------------------------
    def _columns(self) -> list[str]:
        cols = ["replica", "seed", "time", "events", "particles"]
        for lab in self.field_labels:
            cols += [f"Z:{lab}", f"QV:{lab}", f"JMAX:{lab}"]
        for lab in self.channel_labels:
            cols += [f"CH:{lab}", f"INT:{lab}"]
        return cols

    def to_csv(self, path=None) -> str:
        """Write the trajectory CSV; returns the text when ``path`` is None."""
        buf = io.StringIO()
        buf.write(f"# format: {FORMAT_TAG} v{FORMAT_VERSION}\n")
        buf.write("# metadata: " + json.dumps(self.metadata, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self._columns())
        R, T, F = self.fields.shape
        for r in range(R):
            for t in range(T):
                row = [r, int(self.seeds[r]), repr(float(self.times[t])), int(self.events[r, t]),
                       int(self.particles[r, t])]
                for f in range(F):
                    row += [repr(float(self.fields[r, t, f])), repr(float(self.qv[r, t, f])),
                            repr(float(self.jump_max[r, t, f]))]
                for c in range(len(self.channel_labels)):
                    row += [repr(float(self.channels[r, t, c])), repr(float(self.integrals[r, t, c]))]
                w.writerow(row)
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "FieldSeries":
        lines = Path(path).read_text().splitlines()
        if not lines or not lines[0].startswith("# format: " + FORMAT_TAG):
            raise ValueError(f"{path}: not a {FORMAT_TAG} file")
        version = lines[0].rsplit("v", 1)[-1]
        if version != str(FORMAT_VERSION):
            raise ValueError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
        if not lines[1].startswith("# metadata: "):
            raise ValueError(f"{path}: missing metadata line")
        metadata = json.loads(lines[1][len("# metadata: "):])
        reader = csv.reader(lines[2:])
        header = next(reader)
        rows = [r for r in reader if r]
        field_labels = [c[2:] for c in header if c.startswith("Z:")]
        channel_labels = [c[3:] for c in header if c.startswith("CH:")]
        col = {name: i for i, name in enumerate(header)}
        data = np.array(rows, dtype=object)
        replica = data[:, col["replica"]].astype(np.int64)
        R = int(replica.max()) + 1
        T = len(data) // R
        if R * T != len(data):
            raise ValueError(f"{path}: ragged trajectory table")

        def grab(name, dtype=float):
            return data[:, col[name]].astype(dtype).reshape(R, T)

        def stack(prefix, labels):
            if not labels:
                return np.zeros((R, T, 0))
            return np.stack([grab(f"{prefix}:{lab}") for lab in labels], axis=-1)

        return cls(
            times=grab("time")[0],
            field_labels=field_labels,
            fields=stack("Z", field_labels),
            channel_labels=channel_labels,
            channels=stack("CH", channel_labels),
            integrals=stack("INT", channel_labels),
            qv=stack("QV", field_labels),
            jump_max=stack("JMAX", field_labels),
            events=grab("events", np.int64),
            particles=grab("particles", np.int64),
            seeds=grab("seed", np.int64)[:, 0],
            metadata=metadata,
        )
