"""Run configuration: flat dotted keys, file values overridden by flags.

A config file is TOML.  ``network.delta = 400`` and a ``[network]`` table
with ``delta = 400`` mean the same thing; everything is flattened to dotted
keys on load.  The effective configuration of every run is echoed next to
its outputs and can be fed back through ``--config``.
"""
from __future__ import annotations

import dataclasses
import datetime as _dt
import pathlib
from dataclasses import dataclass
from typing import Any, Mapping

import tomli
import tomli_w

from .model import DataError, TimeSlotScheme
from .network import NetworkBuildConfig
from .simulator import OD_SAMPLING, SWEEP_DIMENSIONS, WorkloadSpec

# key -> (default, help); None means "no default, must come from a flag or file"
DEFAULTS: dict[str, tuple[Any, str]] = {
    "paths.trajectories": (None, "trajectory CSV or synthetic spec"),
    "paths.network": (None, "network JSON"),
    "paths.out": (None, "output path"),
    "network.dbscan_eps": (300.0, "DBSCAN neighbourhood radius, meters"),
    "network.dbscan_min_pts": (50, "DBSCAN core-point threshold"),
    "network.delta": (500.0, "matching radius, meters of driving distance"),
    "network.tau": (300.0, "travel-time bin width, seconds"),
    "network.min_flow": (5, "rides per slot needed to keep an edge"),
    "network.circuity": (1.3, "driving / great-circle distance ratio"),
    "network.popular_fraction": (0.55, "share of stations labelled popular"),
    "slots.workday_hours": ([7.0, 10.0, 17.0], "workday slot boundaries, local hours"),
    "slots.restday_hours": ([0.0, 8.0], "rest-day slot boundaries, local hours"),
    "slots.utc_offset_hours": (0.0, "local time minus UTC, hours"),
    "workload.packages": (500, "packages per run"),
    "workload.extraT": (3600.0, "extra time on top of the mean reference cost, seconds"),
    "workload.od_sampling": ("uniform", "one of " + ", ".join(OD_SAMPLING)),
    "workload.birth_start_hour": (8.0, "births from this local hour of the stream's first day"),
    "workload.birth_end_hour": (18.0, "births until this local hour"),
    "sim.policy": ("maxProb", "maxProb, FCFS, DesCloser or Direct"),
    "sim.overhead": (0.0, "package collection overhead per leg, seconds"),
    "sweep.dimension": ("extraT", "one of " + ", ".join(SWEEP_DIMENSIONS)),
    "sweep.values": ([1200.0, 2400.0, 3600.0, 4800.0, 6000.0], "values of the swept dimension"),
    "seed": (0, "single seed for every random draw"),
}

_RANGES = {
    "network.dbscan_eps": (0.0, None), "network.delta": (0.0, None), "network.tau": (0.0, None),
    "network.circuity": (0.0, None), "network.popular_fraction": (0.0, 1.0),
    "network.dbscan_min_pts": (0, None), "network.min_flow": (0, None),
    "workload.packages": (0, None), "workload.extraT": (-1e-9, None),
    "workload.birth_start_hour": (-1e-9, 24.0), "workload.birth_end_hour": (-1e-9, 24.0),
    "sim.overhead": (-1e-9, None), "slots.utc_offset_hours": (-14.01, 14.01),
}


def flatten(doc: Mapping, prefix: str = "") -> dict[str, Any]:
    out = {}
    for k, v in doc.items():
        key = f"{prefix}{k}"
        if isinstance(v, Mapping):
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


def nest(flat: Mapping[str, Any]) -> dict:
    out: dict = {}
    for key, v in flat.items():
        *parents, leaf = key.split(".")
        node = out
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = v
    return out


def load_file(path) -> dict[str, Any]:
    path = pathlib.Path(path)
    try:
        with path.open("rb") as fh:
            doc = tomli.load(fh)
    except OSError as exc:
        raise DataError(f"{path}: cannot open ({exc.strerror})") from exc
    except tomli.TOMLDecodeError as exc:
        raise DataError(f"{path}: {exc}") from exc
    flat = flatten(doc)
    unknown = sorted(set(flat) - set(DEFAULTS))
    if unknown:
        raise DataError(f"{path}: unknown key(s) {', '.join(unknown)}")
    return flat


@dataclass
class RunConfig:
    values: dict[str, Any]

    @classmethod
    def resolve(cls, file_path=None, overrides: Mapping[str, Any] | None = None) -> "RunConfig":
        """Defaults, then the file, then non-None overrides."""
        values = {k: v for k, (v, _) in DEFAULTS.items()}
        if file_path is not None:
            values.update(load_file(file_path))
        for k, v in (overrides or {}).items():
            if k not in DEFAULTS:
                raise KeyError(k)
            if v is not None:
                values[k] = v
        cfg = cls(values)
        cfg.validate()
        return cfg

    def __getitem__(self, key: str):
        return self.values[key]

    def validate(self):
        for key, (lo, hi) in _RANGES.items():
            v = self.values[key]
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise DataError(f"config {key}: expected a number, got {v!r}")
            if v <= lo or (hi is not None and v > hi):
                bound = f"({lo}, {hi}]" if hi is not None else f"> {lo}"
                raise DataError(f"config {key}: {v} outside {bound}")
        if self.values["workload.od_sampling"] not in OD_SAMPLING:
            raise DataError(f"config workload.od_sampling: choose from {', '.join(OD_SAMPLING)}")
        if self.values["workload.birth_end_hour"] < self.values["workload.birth_start_hour"]:
            raise DataError("config workload: birth_end_hour before birth_start_hour")
        if self.values["sweep.dimension"] not in SWEEP_DIMENSIONS:
            raise DataError(f"config sweep.dimension: choose from {', '.join(SWEEP_DIMENSIONS)}")
        try:
            self.network_config()
            self.slot_scheme()
        except ValueError as exc:
            raise DataError(f"config: {exc}") from exc

    def network_config(self) -> NetworkBuildConfig:
        fields = {f.name for f in dataclasses.fields(NetworkBuildConfig)}
        kw = {k.split(".", 1)[1]: v for k, v in self.values.items()
              if k.startswith("network.") and k.split(".", 1)[1] in fields}
        kw["dbscan_min_pts"] = int(kw["dbscan_min_pts"])
        kw["min_flow"] = int(kw["min_flow"])
        return NetworkBuildConfig(**kw)

    def slot_scheme(self) -> TimeSlotScheme:
        return TimeSlotScheme(tuple(h * 3600.0 for h in self.values["slots.workday_hours"]),
                              tuple(h * 3600.0 for h in self.values["slots.restday_hours"]),
                              self.values["slots.utc_offset_hours"] * 3600.0)

    def workload(self, stream_start: float, scheme: TimeSlotScheme) -> WorkloadSpec:
        """Workload whose birth window sits on the local day of ``stream_start``."""
        local = _dt.datetime.fromtimestamp(stream_start + scheme.utc_offset, _dt.timezone.utc)
        midnight = local.replace(hour=0, minute=0, second=0, microsecond=0).timestamp() - scheme.utc_offset
        a = midnight + self.values["workload.birth_start_hour"] * 3600.0
        b = midnight + self.values["workload.birth_end_hour"] * 3600.0
        return WorkloadSpec(int(self.values["workload.packages"]), (a, b),
                            self.values["workload.od_sampling"],
                            float(self.values["workload.extraT"]), int(self.values["seed"]))

    def to_toml(self) -> str:
        echo = {k: v for k, v in sorted(self.values.items()) if v is not None}
        return tomli_w.dumps(nest(echo))
