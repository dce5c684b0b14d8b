"""Test support: random architecture generation and adapter protocol fuzzing.

Shipped as part of the package so external trainer adapters can run the same
conformance suite the built-in stubs are held to.
"""

from __future__ import annotations

import json
import math
import random
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from . import ir

_INPUT_SHAPES = ((32, 32, 3), (28, 28, 1), (16, 16, 3), (12, 12, 4), (8, 8, 2))
_ACTIVATIONS = ("relu", "sigmoid", "tanh")


def random_valid_graph(
    rng: random.Random, max_blocks: int = 5, num_classes: int | None = None
) -> ir.ArchGraph:
    """Generate a random architecture that is valid by construction.

    Spatial blocks (conv / pool / batchnorm / dropout / skip) run while the
    tensor is still a feature map; the net always closes with Flatten or
    GlobalAveragePool, a Dense head sized to num_classes, and Output.
    """
    input_shape = rng.choice(_INPUT_SHAPES)
    classes = num_classes if num_classes is not None else rng.randint(2, 20)
    h, w, c = input_shape

    counter = 0

    def fresh(prefix: str) -> str:
        nonlocal counter
        counter += 1
        return f"{prefix}{counter}"

    layers: list[dict] = [{"id": "in", "kind": "Input", "inputs": []}]
    tip = "in"

    for _ in range(rng.randint(0, max_blocks)):
        choice = rng.random()
        if choice < 0.40:
            filters = rng.randint(1, 48)
            padding = rng.choice(("same", "valid"))
            if padding == "valid":
                kh = rng.randint(1, min(5, h))
                kw = rng.randint(1, min(5, w))
            else:
                kh = rng.randint(1, 5)
                kw = rng.randint(1, 5)
            sh = rng.randint(1, 2)
            sw = rng.randint(1, 2)
            lid = fresh("conv")
            layers.append({
                "id": lid, "kind": "Conv2D", "inputs": [tip],
                "filters": filters, "kernel_h": kh, "kernel_w": kw,
                "stride_h": sh, "stride_w": sw, "padding": padding,
            })
            if padding == "same":
                h, w = math.ceil(h / sh), math.ceil(w / sw)
            else:
                h, w = (h - kh) // sh + 1, (w - kw) // sw + 1
            c = filters
            tip = lid
        elif choice < 0.55 and min(h, w) >= 2:
            pool = rng.randint(2, min(3, h, w))
            lid = fresh("pool")
            layers.append({
                "id": lid, "kind": "MaxPool2D", "inputs": [tip],
                "pool_h": pool, "pool_w": pool, "stride": pool, "padding": "valid",
            })
            h, w = (h - pool) // pool + 1, (w - pool) // pool + 1
            tip = lid
        elif choice < 0.70:
            lid = fresh("bn")
            layers.append({"id": lid, "kind": "BatchNorm", "inputs": [tip]})
            tip = lid
        elif choice < 0.80:
            lid = fresh("drop")
            layers.append({
                "id": lid, "kind": "Dropout", "inputs": [tip],
                "rate": round(rng.uniform(0.05, 0.5), 2),
            })
            tip = lid
        elif choice < 0.90:
            lid = fresh("act")
            layers.append({
                "id": lid, "kind": "Activation", "inputs": [tip],
                "name": rng.choice(_ACTIVATIONS),
            })
            tip = lid
        else:
            # skip block: two shape-preserving conv branches joined by Add/Concat
            join = rng.choice(("Add", "Concat"))
            f_a = rng.randint(1, 32)
            f_b = f_a if join == "Add" else rng.randint(1, 32)
            branch_ids = []
            for filters in (f_a, f_b):
                lid = fresh("branch")
                layers.append({
                    "id": lid, "kind": "Conv2D", "inputs": [tip],
                    "filters": filters, "kernel_h": rng.randint(1, 3),
                    "kernel_w": rng.randint(1, 3),
                    "stride_h": 1, "stride_w": 1, "padding": "same",
                })
                branch_ids.append(lid)
            lid = fresh("join")
            layers.append({"id": lid, "kind": join, "inputs": branch_ids})
            c = f_a if join == "Add" else f_a + f_b
            tip = lid

    if rng.random() < 0.3:
        lid = fresh("gap")
        layers.append({"id": lid, "kind": "GlobalAveragePool", "inputs": [tip]})
    else:
        lid = fresh("flat")
        layers.append({"id": lid, "kind": "Flatten", "inputs": [tip]})
    tip = lid

    if rng.random() < 0.5:
        lid = fresh("fc")
        layers.append({
            "id": lid, "kind": "Dense", "inputs": [tip],
            "units": rng.randint(4, 64),
        })
        tip = lid
        if rng.random() < 0.5:
            lid = fresh("act")
            layers.append({
                "id": lid, "kind": "Activation", "inputs": [tip], "name": "relu",
            })
            tip = lid

    lid = fresh("head")
    layers.append({"id": lid, "kind": "Dense", "inputs": [tip], "units": classes})
    tip = lid
    if rng.random() < 0.5:
        lid = fresh("softmax")
        layers.append({
            "id": lid, "kind": "Activation", "inputs": [tip], "name": "softmax",
        })
        tip = lid
    layers.append({"id": "out", "kind": "Output", "inputs": [tip]})

    doc = {"input_shape": list(input_shape), "num_classes": classes, "layers": layers}
    return ir.parse_arch(json.dumps(doc))


def corrupt_arch_doc(rng: random.Random, graph: ir.ArchGraph) -> dict:
    """Break a valid graph into one of the classic invalid classes."""
    doc = json.loads(ir.serialize_arch(graph))
    mode = rng.choice(("negative_dim", "dangling", "mismatch"))
    if mode == "negative_dim":
        h, w, _ = doc["input_shape"]
        doc["layers"].insert(1, {
            "id": "bigconv", "kind": "Conv2D",
            "inputs": [doc["layers"][0]["id"]],
            "filters": 8, "kernel_h": h + 2, "kernel_w": w + 2,
            "stride_h": 1, "stride_w": 1, "padding": "valid",
        })
        doc["layers"][2]["inputs"] = ["bigconv"]
    elif mode == "dangling":
        victim = rng.choice([l for l in doc["layers"] if l["inputs"]])
        victim["inputs"] = ["ghost_layer"]
    else:
        src = doc["layers"][0]["id"]
        doc["layers"].insert(1, {
            "id": "mm_a", "kind": "Conv2D", "inputs": [src],
            "filters": 4, "kernel_h": 1, "kernel_w": 1,
            "stride_h": 1, "stride_w": 1, "padding": "same",
        })
        doc["layers"].insert(2, {
            "id": "mm_b", "kind": "Conv2D", "inputs": [src],
            "filters": 4, "kernel_h": 1, "kernel_w": 1,
            "stride_h": 2, "stride_w": 2, "padding": "same",
        })
        doc["layers"].insert(3, {
            "id": "mm_add", "kind": "Add", "inputs": ["mm_a", "mm_b"],
        })
        doc["layers"][4]["inputs"] = ["mm_add"]
    return doc


# --------------------------------------------------------------------------
# Adapter protocol fuzzing
# --------------------------------------------------------------------------

@dataclass
class FuzzExchange:
    index: int
    request: dict
    expects_result: bool
    violations: list[str]


_TERMINAL = ("result", "error")
_METRIC_FIELDS = ("a1", "a2", "e1_kwh", "e2_kwh", "train_hours", "eval_hours",
                  "fps", "params")


def check_exchange(
    index: int, request: dict, stdout: str, exit_code: int, expects_result: bool
) -> FuzzExchange:
    """Validate one raw adapter exchange against the wire protocol."""
    violations: list[str] = []
    lines = [l for l in stdout.split("\n") if l != ""]
    terminal_seen = None
    for no, line in enumerate(lines, start=1):
        try:
            msg = json.loads(line)
        except json.JSONDecodeError:
            violations.append(f"line {no} is not JSON: {line[:80]!r}")
            continue
        if not isinstance(msg, dict) or "type" not in msg:
            violations.append(f"line {no} has no type field")
            continue
        if terminal_seen is not None:
            violations.append(f"line {no} after terminal {terminal_seen!r}")
            continue
        kind = msg["type"]
        if kind == "progress":
            if not all(k in msg for k in ("epoch", "train_acc", "val_acc")):
                violations.append(f"line {no}: incomplete progress message")
        elif kind in _TERMINAL:
            terminal_seen = kind
            if kind == "result":
                metrics = msg.get("metrics")
                if not isinstance(metrics, dict):
                    violations.append(f"line {no}: result without metrics")
                else:
                    for field_name in _METRIC_FIELDS:
                        if field_name not in metrics:
                            violations.append(f"line {no}: metrics missing {field_name!r}")
                        elif field_name not in ("e1_kwh", "e2_kwh") and not isinstance(
                            metrics[field_name], (int, float)
                        ):
                            violations.append(f"line {no}: {field_name!r} not numeric")
            elif kind == "error" and not isinstance(msg.get("message"), str):
                violations.append(f"line {no}: error without message")
        else:
            violations.append(f"line {no}: unknown type {kind!r}")

    if terminal_seen is None:
        violations.append("no terminal message")
    elif terminal_seen == "result" and exit_code != 0:
        violations.append(f"exit code {exit_code} after result")
    elif terminal_seen == "error" and exit_code == 0:
        violations.append("exit code 0 after error")
    if expects_result and terminal_seen == "error":
        violations.append("error for a valid, trainable architecture")
    if not expects_result and terminal_seen == "result":
        violations.append("result for an invalid architecture")
    return FuzzExchange(index, request, expects_result, violations)


def _make_request(rng: random.Random) -> tuple[dict, bool, int | None]:
    valid = rng.random() >= 0.25
    if valid:
        graph = random_valid_graph(rng, max_blocks=3)
        doc = json.loads(ir.serialize_arch(graph))
        expected_params = ir.count_params(graph)
    else:
        graph = random_valid_graph(rng, max_blocks=2)
        doc = corrupt_arch_doc(rng, graph)
        expected_params = None
    request = {
        "type": "evaluate",
        "arch": doc,
        "config": {
            "epochs": rng.randint(1, 2),
            "batch_size": rng.choice((8, 16, 32)),
            "dataset": f"blobs:{rng.choice((24, 48))}",
            "augment": rng.random() < 0.2,
        },
    }
    return request, valid, expected_params


def _run_exchange(
    index: int, cmd: list[str], rng_seed: int, timeout_s: float
) -> FuzzExchange:
    rng = random.Random(rng_seed)
    request, expects_result, expected_params = _make_request(rng)
    try:
        proc = subprocess.run(
            cmd,
            input=json.dumps(request) + "\n",
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
            timeout=timeout_s,
        )
    except subprocess.TimeoutExpired:
        return FuzzExchange(index, request, expects_result,
                            [f"timed out after {timeout_s}s"])
    except OSError as exc:
        return FuzzExchange(index, request, expects_result, [f"launch failed: {exc}"])

    exchange = check_exchange(index, request, proc.stdout, proc.returncode,
                              expects_result)
    if expected_params is not None and not exchange.violations:
        for line in proc.stdout.splitlines():
            msg = json.loads(line)
            if msg["type"] == "result":
                reported = msg["metrics"]["params"]
                if reported != expected_params:
                    exchange.violations.append(
                        f"params {reported} != expected {expected_params}"
                    )
    return exchange


def fuzz_adapter(
    cmd: list[str],
    n: int = 1000,
    seed: int = 0,
    timeout_s: float = 120.0,
    workers: int = 4,
) -> list[FuzzExchange]:
    """Run n randomized exchanges against an adapter command.

    Returns only the exchanges that had violations; an empty list means the
    adapter is protocol-conformant over the sampled requests.
    """
    base = random.Random(seed)
    seeds = [base.randrange(2**31) for _ in range(n)]
    failures: list[FuzzExchange] = []
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(_run_exchange, i, list(cmd), s, timeout_s)
            for i, s in enumerate(seeds)
        ]
        for future in futures:
            exchange = future.result()
            if exchange.violations:
                failures.append(exchange)
    return failures
