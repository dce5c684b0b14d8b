"""Pluggable LLM backend: prompt construction, completion, document extraction.

Two backend kinds.  `http_chat` posts an OpenAI-style chat-completion body to
a configurable endpoint; `scripted` replays canned responses from a directory
of numbered text files or a JSONL file, which makes whole discovery runs
deterministic and testable offline.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import requests

from . import ir
from .rules import DESCRIPTIONS, RefinedCommand


class BackendError(Exception):
    """Base for completion/extraction failures."""


class Timeout(BackendError):
    """The backend did not answer within the configured window."""


class HttpStatusError(BackendError):
    def __init__(self, code: int, body: str = ""):
        super().__init__(f"backend returned HTTP {code}: {body[:200]}")
        self.code = code


class AuthMissing(BackendError):
    """The configured token environment variable is not set."""


class ScriptExhausted(BackendError):
    """The scripted backend has no response for this iteration."""


class NoDocumentFound(BackendError):
    """No JSON object could be located in the response text."""


@dataclass(frozen=True)
class TaskSpec:
    """What to design for: dataset, tensor geometry, and free-text constraints."""

    dataset: str
    input_shape: tuple[int, int, int]
    num_classes: int
    constraints: str = ""


@dataclass(frozen=True)
class PromptRecord:
    system_text: str
    user_text: str
    temperature: float
    iteration: int

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must be in [0, 2], got {self.temperature!r}")


@dataclass(frozen=True)
class BackendConfig:
    """Connection settings for one backend.

    `kind` is "http_chat" or "scripted".  http_chat needs endpoint + model;
    auth_env optionally names an environment variable holding the bearer
    token (never logged).  scripted needs `script`: a directory of
    000.txt/001.txt/... files or a single .jsonl file, one response per
    iteration.
    """

    kind: str
    endpoint: str | None = None
    model: str | None = None
    auth_env: str | None = None
    temperature: float = 0.0
    timeout_s: float = 120.0
    max_retries: int = 0
    script: str | None = None

    def __post_init__(self):
        if self.kind not in ("http_chat", "scripted"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "http_chat" and (not self.endpoint or not self.model):
            raise ValueError("http_chat backend requires endpoint and model")
        if self.kind == "scripted" and not self.script:
            raise ValueError("scripted backend requires a script path")


# --------------------------------------------------------------------------
# Prompt construction
# --------------------------------------------------------------------------

_SCHEMA_TEXT = """\
Respond with exactly one JSON object inside a ```json fenced code block:

{"input_shape": [H, W, C], "num_classes": N,
 "layers": [{"id": "<unique>", "kind": "<kind>", "inputs": ["<id>", ...], ...attributes}]}

Layer kinds and their attributes:
- Input (no inputs, no attributes; exactly one per network)
- Conv2D: filters, kernel_h, kernel_w, stride_h, stride_w, padding ("same"|"valid")
- Dense: units
- MaxPool2D: pool_h, pool_w, stride, padding ("same"|"valid")
- BatchNorm, Flatten, GlobalAveragePool, Output (no attributes)
- Dropout: rate (0 <= rate < 1)
- Activation: name ("relu"|"softmax"|"sigmoid"|"tanh")
- Add, Concat: combine two or more inputs (Add needs identical shapes,
  Concat matching spatial dims)
Optional on any layer: "initializer", "regularizer" (strings).

Rules: exactly one Input and one Output layer; every other layer takes
exactly one input; all dimensions must stay positive; Dense needs a flat
input (Flatten or GlobalAveragePool first)."""

_SYSTEM_TEXT = (
    "You are an expert neural network architect. You design image "
    "classification networks as JSON documents and improve them from "
    "evaluation feedback.\n\n" + _SCHEMA_TEXT
)


@dataclass(frozen=True)
class PreviousAttempt:
    """Context from the prior iteration embedded into the next prompt."""

    arch_json: str | None = None
    metrics_line: str | None = None
    error: str | None = None


def build_prompt(
    ts: TaskSpec,
    rc: RefinedCommand,
    prev: PreviousAttempt | None = None,
    *,
    temperature: float = 0.0,
    iteration: int = 0,
) -> PromptRecord:
    """Deterministic prompt text; byte-identical for identical inputs."""
    h, w, c = ts.input_shape
    lines = [
        f"Task: design a neural network for the {ts.dataset} dataset.",
        f"Input shape: {h}x{w}x{c}. Output classes: {ts.num_classes}.",
    ]
    if ts.constraints:
        lines.append(ts.constraints)

    if rc:
        lines.append("")
        lines.append("Refinement instructions, highest priority first:")
        for code, weight in rc:
            lines.append(f"- {DESCRIPTIONS[code]} (priority {weight!r})")
    else:
        lines.append("")
        lines.append("Propose an initial architecture for this task.")

    if prev is not None:
        if prev.arch_json:
            lines.append("")
            lines.append("Previous architecture:")
            lines.append(prev.arch_json)
        if prev.metrics_line:
            lines.append("")
            lines.append(f"Previous evaluation: {prev.metrics_line}")
        if prev.error:
            lines.append("")
            lines.append(f"The previous response was invalid: {prev.error}")
            lines.append("Correct this error in the next architecture.")

    lines.append("")
    lines.append("Return the architecture JSON now.")
    return PromptRecord(
        system_text=_SYSTEM_TEXT,
        user_text="\n".join(lines),
        temperature=temperature,
        iteration=iteration,
    )


# --------------------------------------------------------------------------
# Completion
# --------------------------------------------------------------------------

def complete(cfg: BackendConfig, prompt: PromptRecord) -> str:
    """Return the backend's raw response text for one prompt."""
    if cfg.kind == "scripted":
        return _scripted_response(cfg, prompt.iteration)
    return _http_chat(cfg, prompt)


def _scripted_response(cfg: BackendConfig, iteration: int) -> str:
    path = Path(cfg.script)
    if path.is_dir():
        candidate = path / f"{iteration:03d}.txt"
        if not candidate.exists():
            raise ScriptExhausted(f"no scripted response {candidate}")
        return candidate.read_text(encoding="utf-8")
    if not path.exists():
        raise ScriptExhausted(f"script file {path} does not exist")
    lines = path.read_text(encoding="utf-8").splitlines()
    if iteration >= len(lines):
        raise ScriptExhausted(
            f"script {path} has {len(lines)} responses, iteration {iteration} requested"
        )
    entry = json.loads(lines[iteration])
    if isinstance(entry, str):
        return entry
    if isinstance(entry, dict) and isinstance(entry.get("text"), str):
        return entry["text"]
    raise ScriptExhausted(f"script line {iteration} is neither a string nor {{'text': ...}}")


def _http_chat(cfg: BackendConfig, prompt: PromptRecord) -> str:
    headers = {"Content-Type": "application/json"}
    if cfg.auth_env:
        token = os.environ.get(cfg.auth_env)
        if not token:
            raise AuthMissing(f"environment variable {cfg.auth_env} is not set")
        headers["Authorization"] = f"Bearer {token}"
    body = {
        "model": cfg.model,
        "temperature": prompt.temperature,
        "messages": [
            {"role": "system", "content": prompt.system_text},
            {"role": "user", "content": prompt.user_text},
        ],
    }
    try:
        resp = requests.post(
            cfg.endpoint, json=body, headers=headers, timeout=cfg.timeout_s
        )
    except requests.Timeout as exc:
        raise Timeout(f"no response within {cfg.timeout_s}s") from exc
    except requests.RequestException as exc:
        raise BackendError(f"request failed: {exc}") from exc
    if resp.status_code != 200:
        raise HttpStatusError(resp.status_code, resp.text)
    return _first_assistant_text(resp.json())


def _first_assistant_text(payload: Any) -> str:
    try:
        choices = payload["choices"]
        message = choices[0]["message"]
        content = message["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise BackendError(f"unrecognized completion payload: {exc}") from exc
    if not isinstance(content, str):
        raise BackendError("completion content is not text")
    return content


# --------------------------------------------------------------------------
# Extraction
# --------------------------------------------------------------------------

_FENCE_RE = re.compile(r"```(?:json)?\s*\n(.*?)```", re.DOTALL)


def find_json_object(text: str) -> str:
    """Locate the first fenced or bare JSON object in free-form text.

    Fenced blocks take precedence: the first block whose body parses as a
    JSON object wins; if blocks exist but none parses, the first block is
    reported as malformed.  Without fences, the first balanced {...} span
    that parses is used.
    """
    fences = _FENCE_RE.findall(text)
    for body in fences:
        candidate = body.strip()
        if _loads_object(candidate) is not None:
            return candidate
    if fences:
        raise _malformed_fragment(fences[0].strip())

    for candidate in _balanced_objects(text):
        if _loads_object(candidate) is not None:
            return candidate
    raise NoDocumentFound("no JSON object in response")


def _malformed_fragment(fragment: str) -> ir.MalformedDocument:
    try:
        json.loads(fragment)
        err = ir.MalformedDocument("fenced block is valid JSON but not an object")
    except json.JSONDecodeError as exc:
        err = ir.MalformedDocument(
            f"fenced block is not valid JSON: {exc.msg} (line {exc.lineno})"
        )
    err.fragment = fragment
    return err


def _loads_object(candidate: str) -> dict | None:
    try:
        value = json.loads(candidate)
    except json.JSONDecodeError:
        return None
    return value if isinstance(value, dict) else None


def _balanced_objects(text: str):
    depth = 0
    start = None
    in_string = False
    escaped = False
    for i, ch in enumerate(text):
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}" and depth > 0:
            depth -= 1
            if depth == 0 and start is not None:
                yield text[start : i + 1]
                start = None


def extract_arch(response: str) -> tuple[ir.ArchGraph, ir.ShapeReport]:
    """Pull the architecture document out of a response and validate it fully.

    Never returns a graph that fails shape inference; every raised error
    carries the offending fragment for repair prompting.
    """
    fragment = find_json_object(response)
    try:
        graph = ir.parse_arch(fragment)
        report = ir.infer_shapes(graph)
    except ir.ArchError as exc:
        exc.fragment = fragment
        raise
    return graph, report
