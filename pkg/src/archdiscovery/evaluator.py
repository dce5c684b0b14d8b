"""Candidate evaluation: deterministic surrogate or external trainer adapter.

The surrogate converts a shape report into plausible metrics through fixed,
documented formulas; it exists so loop and property tests run in
milliseconds and reproduce bit-for-bit.  It is not a performance model.

The adapter mode speaks line-delimited JSON with a child process:

    -> {"type": "evaluate", "arch": <document>, "config": {...}}
    <- {"type": "progress", "epoch": k, "train_acc": x, "val_acc": y}   (0+)
    <- {"type": "result", "metrics": {...}} | {"type": "error", "message": s}

One evaluation per child process; the child exits after its terminal message.
"""

from __future__ import annotations

import json
import math
import shlex
import subprocess
import threading
from dataclasses import dataclass, field
from typing import Any, Sequence

from . import ir
from .metrics import MetricsRecord
from .scoring import PowerProfile, energy_kwh_pue

DEFAULT_POWER = PowerProfile(cpu_watts=100.0, ram_watts=50.0, gpu_watts=300.0, gpu_count=1)


class AdapterError(Exception):
    """Base for trainer-adapter failures; the loop records these and moves on."""


class AdapterLaunchFailed(AdapterError):
    pass


class ProtocolViolation(AdapterError):
    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class AdapterReportedError(AdapterError):
    """The trainer answered with an error message (unbuildable model etc.)."""


class AdapterTimeout(AdapterError):
    pass


@dataclass(frozen=True)
class EvalConfig:
    """How to evaluate candidates.

    mode "surrogate" needs nothing else; mode "adapter" launches
    `adapter_cmd` (list or shell-style string) once per evaluation.
    """

    mode: str = "surrogate"
    epochs: int = 20
    batch_size: int = 512
    dataset: str = "cifar10"
    augment: bool = False
    adapter_cmd: Sequence[str] | str | None = None
    power: PowerProfile = DEFAULT_POWER
    timeout_s: float = 3600.0
    notes: str = ""

    def __post_init__(self):
        if self.mode not in ("surrogate", "adapter"):
            raise ValueError(f"unknown eval mode {self.mode!r}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs!r}")
        if self.mode == "adapter" and not self.adapter_cmd:
            raise ValueError("adapter mode requires adapter_cmd")

    def command(self) -> list[str]:
        if isinstance(self.adapter_cmd, str):
            return shlex.split(self.adapter_cmd)
        return list(self.adapter_cmd or [])


@dataclass(frozen=True)
class EvalResult:
    """Metrics plus phase durations and provenance."""

    a1: float
    a2: float
    e1_kwh: float
    e2_kwh: float
    fps: float
    params: int
    train_hours: float
    eval_hours: float
    energy_source: str = "profile"  # "profile" or "adapter"
    transcript: tuple[str, ...] = ()

    def to_metrics(self) -> MetricsRecord:
        return MetricsRecord(
            a1=self.a1, a2=self.a2, e1_kwh=self.e1_kwh, e2_kwh=self.e2_kwh,
            fps=self.fps, params=self.params,
        )


# --------------------------------------------------------------------------
# Surrogate
# --------------------------------------------------------------------------

# Fixed surrogate constants. Accuracy grows logarithmically with parameter
# count up to a cap; very deep conv stacks pay a small validation penalty;
# durations scale linearly with parameters.
_SURROGATE_A1_BASE = 0.20
_SURROGATE_A1_SLOPE = 0.15
_SURROGATE_A1_CAP = 0.95
_SURROGATE_VAL_GAP = 0.03
_SURROGATE_DEPTH_PENALTY = 0.01
_SURROGATE_DEPTH_FREE = 8
_SURROGATE_TRAIN_HOURS_PER_PARAM_EPOCH = 1e-7
_SURROGATE_EVAL_HOURS_PER_PARAM = 1e-8


def evaluate_surrogate(graph: ir.ArchGraph, cfg: EvalConfig) -> EvalResult:
    """Deterministic stand-in metrics derived from the shape report."""
    report = ir.infer_shapes(graph)
    p = report.total_params
    conv_count = sum(1 for s in graph.layers if s.kind == "Conv2D")

    a1 = min(_SURROGATE_A1_CAP, _SURROGATE_A1_BASE + _SURROGATE_A1_SLOPE * math.log(1 + p / 1e4))
    depth_penalty = max(0, conv_count - _SURROGATE_DEPTH_FREE)
    a2 = max(0.0, a1 - _SURROGATE_VAL_GAP - _SURROGATE_DEPTH_PENALTY * depth_penalty)
    train_hours = _SURROGATE_TRAIN_HOURS_PER_PARAM_EPOCH * p * cfg.epochs
    eval_hours = _SURROGATE_EVAL_HOURS_PER_PARAM * p
    fps = 1e9 / max(report.total_flops, 1)

    return EvalResult(
        a1=a1,
        a2=a2,
        e1_kwh=energy_kwh_pue(train_hours, cfg.power),
        e2_kwh=energy_kwh_pue(eval_hours, cfg.power),
        fps=fps,
        params=p,
        train_hours=train_hours,
        eval_hours=eval_hours,
        energy_source="profile",
    )


# --------------------------------------------------------------------------
# Adapter protocol client
# --------------------------------------------------------------------------

_RESULT_FIELDS = {
    "a1": float, "a2": float, "train_hours": float, "eval_hours": float,
    "fps": float, "params": int,
}


def evaluate_adapter(graph: ir.ArchGraph, cfg: EvalConfig) -> EvalResult:
    """Run one evaluation through the external trainer adapter."""
    request = {
        "type": "evaluate",
        "arch": json.loads(ir.serialize_arch(graph)),
        "config": {
            "epochs": cfg.epochs,
            "batch_size": cfg.batch_size,
            "dataset": cfg.dataset,
            "augment": cfg.augment,
        },
    }
    try:
        proc = subprocess.Popen(
            cfg.command(),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
    except OSError as exc:
        raise AdapterLaunchFailed(f"cannot launch {cfg.command()!r}: {exc}") from exc

    timed_out = threading.Event()

    def _kill():
        timed_out.set()
        proc.kill()

    timer = threading.Timer(cfg.timeout_s, _kill)
    timer.start()
    transcript: list[str] = []
    try:
        try:
            proc.stdin.write(json.dumps(request) + "\n")
            proc.stdin.flush()
            proc.stdin.close()
        except BrokenPipeError as exc:
            raise AdapterLaunchFailed("adapter closed stdin before request") from exc

        terminal: dict[str, Any] | None = None
        line_no = 0
        for line in proc.stdout:
            line_no += 1
            line = line.rstrip("\n")
            transcript.append(line)
            msg = _parse_protocol_line(line, line_no)
            if msg["type"] == "progress":
                continue
            terminal = msg
            break
        if terminal is None:
            if timed_out.is_set():
                raise AdapterTimeout(f"no terminal message within {cfg.timeout_s}s")
            raise ProtocolViolation("stream ended without result or error", line_no + 1)
        if terminal["type"] == "error":
            raise AdapterReportedError(str(terminal.get("message", "unspecified")))
        return _result_from_message(terminal, cfg, tuple(transcript), line_no)
    finally:
        timer.cancel()
        if proc.poll() is None:
            proc.kill()
        proc.wait()
        if proc.stdout is not None:
            proc.stdout.close()


def _parse_protocol_line(line: str, line_no: int) -> dict[str, Any]:
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolViolation(f"not JSON: {exc.msg}", line_no) from exc
    if not isinstance(msg, dict) or msg.get("type") not in ("progress", "result", "error"):
        raise ProtocolViolation(f"unexpected message {line[:100]!r}", line_no)
    return msg


def _result_from_message(
    msg: dict[str, Any], cfg: EvalConfig, transcript: tuple[str, ...], line_no: int
) -> EvalResult:
    metrics = msg.get("metrics")
    if not isinstance(metrics, dict):
        raise ProtocolViolation("result without metrics object", line_no)
    values: dict[str, Any] = {}
    for name, caster in _RESULT_FIELDS.items():
        if name not in metrics:
            raise ProtocolViolation(f"metrics missing field {name!r}", line_no)
        try:
            values[name] = caster(metrics[name])
        except (TypeError, ValueError) as exc:
            raise ProtocolViolation(f"metrics field {name!r}: {exc}", line_no) from exc
        if isinstance(values[name], float) and not math.isfinite(values[name]):
            raise ProtocolViolation(f"metrics field {name!r} is not finite", line_no)

    # Adapter-reported energy wins per field; null falls back to the profile
    # estimate over the reported duration.
    if "e1_kwh" not in metrics or "e2_kwh" not in metrics:
        raise ProtocolViolation("metrics missing e1_kwh/e2_kwh (null is allowed)", line_no)
    e1 = metrics["e1_kwh"]
    e2 = metrics["e2_kwh"]
    adapter_energy = e1 is not None or e2 is not None
    if e1 is None:
        e1 = energy_kwh_pue(values["train_hours"], cfg.power)
    if e2 is None:
        e2 = energy_kwh_pue(values["eval_hours"], cfg.power)
    return EvalResult(
        a1=values["a1"],
        a2=values["a2"],
        e1_kwh=float(e1),
        e2_kwh=float(e2),
        fps=values["fps"],
        params=values["params"],
        train_hours=values["train_hours"],
        eval_hours=values["eval_hours"],
        energy_source="adapter" if adapter_energy else "profile",
        transcript=transcript,
    )


def evaluate(graph: ir.ArchGraph, cfg: EvalConfig) -> EvalResult:
    if cfg.mode == "surrogate":
        return evaluate_surrogate(graph, cfg)
    return evaluate_adapter(graph, cfg)
