"""Telemetry frames and the serialized formats they travel in.

One frame per control tick captures both robot states, the generated
reference, the operator wrench, the follower command, and the allocation
scalars.  Frames serialize to NDJSON (one UTF-8 JSON object per line,
schema ``telemetry.v1``); tables are RFC-4180 CSV.  Serialization uses
Python's shortest round-trip float repr, so identical runs produce
byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .geometry import Pose, Twist, Wrench

TELEMETRY_SCHEMA = "telemetry.v1"
SKILL_SCHEMA = "skill.v1"


@dataclass(frozen=True)
class TelemetryFrame:
    """One sample of the full simulation state."""

    t: float
    tr_pose: Pose
    pr_pose: Pose
    x_ref: Pose
    tr_twist: Twist
    pr_twist: Twist
    f_h_th: Wrench
    u_p: Wrench
    mu: float
    eta: float
    omega: float
    s: float
    err_norm: float
    i_s: float
    i_h: float

    def __post_init__(self):
        scalars = (self.t, self.mu, self.eta, self.omega, self.s, self.err_norm, self.i_s, self.i_h)
        if not all(math.isfinite(v) for v in scalars):
            raise ValueError("telemetry scalars must be finite")

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "tr_pose": _pose_dict(self.tr_pose),
            "pr_pose": _pose_dict(self.pr_pose),
            "x_ref": _pose_dict(self.x_ref),
            "tr_twist": _twist_dict(self.tr_twist),
            "pr_twist": _twist_dict(self.pr_twist),
            "f_h_th": _wrench_dict(self.f_h_th),
            "u_p": _wrench_dict(self.u_p),
            "mu": self.mu,
            "eta": self.eta,
            "omega": self.omega,
            "s": self.s,
            "err_norm": self.err_norm,
            "i_s": self.i_s,
            "i_h": self.i_h,
        }

    @staticmethod
    def from_dict(d: dict) -> "TelemetryFrame":
        return TelemetryFrame(
            t=d["t"],
            tr_pose=_pose_from(d["tr_pose"]),
            pr_pose=_pose_from(d["pr_pose"]),
            x_ref=_pose_from(d["x_ref"]),
            tr_twist=_twist_from(d["tr_twist"]),
            pr_twist=_twist_from(d["pr_twist"]),
            f_h_th=_wrench_from(d["f_h_th"]),
            u_p=_wrench_from(d["u_p"]),
            mu=d["mu"],
            eta=d["eta"],
            omega=d["omega"],
            s=d["s"],
            err_norm=d["err_norm"],
            i_s=d["i_s"],
            i_h=d["i_h"],
        )


def _pose_dict(x: Pose) -> dict:
    # quaternion scalar-first, as everywhere
    return {"p": list(x.p), "q": list(x.q)}


def _pose_from(d: dict) -> Pose:
    return Pose(np.array(d["p"]), np.array(d["q"]))


def _twist_dict(tw: Twist) -> dict:
    return {"v": list(tw.v), "omega": list(tw.omega)}


def _twist_from(d: dict) -> Twist:
    return Twist(np.array(d["v"]), np.array(d["omega"]))


def _wrench_dict(w: Wrench) -> dict:
    return {"f": list(w.f), "m": list(w.m)}


def _wrench_from(d: dict) -> Wrench:
    return Wrench(np.array(d["f"]), np.array(d["m"]))


def frame_to_json(frame: TelemetryFrame) -> str:
    body = {"schema": TELEMETRY_SCHEMA}
    body.update(frame.to_dict())
    return json.dumps(body, separators=(",", ":"))


def frame_from_json(line: str) -> TelemetryFrame:
    d = json.loads(line)
    if d.pop("schema", TELEMETRY_SCHEMA) != TELEMETRY_SCHEMA:
        raise ValueError("unsupported telemetry schema")
    return TelemetryFrame.from_dict(d)


def write_ndjson(frames, path, decimation: int = 1) -> int:
    """Write every ``decimation``-th frame; returns the number written.

    Raises if timestamps are not strictly increasing.
    """
    written = 0
    last_t = -math.inf
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for k, frame in enumerate(frames):
            if frame.t <= last_t:
                raise ValueError("telemetry timestamps must increase monotonically")
            last_t = frame.t
            if k % decimation:
                continue
            fh.write(frame_to_json(frame))
            fh.write("\n")
            written += 1
    return written


def read_ndjson(path) -> list[TelemetryFrame]:
    with open(path, encoding="utf-8") as fh:
        return [frame_from_json(line) for line in fh if line.strip()]


def write_csv(rows: list[dict], fieldnames: list[str], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)


def csv_text(rows: list[dict], fieldnames: list[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fieldnames)
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()
