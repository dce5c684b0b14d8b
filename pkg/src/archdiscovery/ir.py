"""Architecture intermediate representation.

A candidate network is a JSON document describing a DAG of typed layers:

    {"input_shape": [H, W, C],
     "num_classes": N,
     "layers": [{"id": "conv1", "kind": "Conv2D", "inputs": ["in"],
                 "filters": 16, "kernel_h": 3, "kernel_w": 3,
                 "stride_h": 1, "stride_w": 1, "padding": "same"}, ...]}

Parsing is strict: unknown kinds, unknown attributes, and unknown top-level
fields are rejected so that broken generated models are caught before any
training is attempted.  Shape inference walks the DAG and either assigns a
concrete output shape to every layer or raises a typed error naming the
offending layer.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping


class ArchError(Exception):
    """Base for every IR parse/validation failure.

    `layer_id` names the offending layer when one is identifiable and
    `fragment` carries the raw text the document was extracted from (set by
    the backend extraction step, used for repair prompting).
    """

    def __init__(self, message: str, layer_id: str | None = None):
        super().__init__(message)
        self.layer_id = layer_id
        self.fragment: str | None = None


class MalformedDocument(ArchError):
    """The text is not valid JSON at all."""


class SchemaViolation(ArchError):
    """Valid JSON that does not match the architecture document schema."""


class DanglingReference(ArchError):
    """A layer's `inputs` names an id that is never declared."""


class CycleDetected(ArchError):
    """The layer graph is not acyclic."""


class NegativeDimension(ArchError):
    """Shape inference computed an output dimension < 1."""


class ShapeMismatch(ArchError):
    """Add/Concat operands have incompatible shapes."""


class RankError(ArchError):
    """A layer was fed a tensor of the wrong rank (e.g. Dense on a feature map)."""


# --------------------------------------------------------------------------
# Layer schema
# --------------------------------------------------------------------------

def _check_int_ge(minimum: int) -> Callable[[Any], bool]:
    return lambda v: isinstance(v, int) and not isinstance(v, bool) and v >= minimum


def _check_rate(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and 0.0 <= v < 1.0


def _check_choice(*choices: str) -> Callable[[Any], bool]:
    return lambda v: v in choices


@dataclass(frozen=True)
class _Attr:
    check: Callable[[Any], bool]
    required: bool = True
    default: Any = None
    doc: str = ""


# Kind -> attribute schema. `default=USE_POOL` resolves to the pool height,
# mirroring the usual "stride defaults to pool size" convention.
_USE_POOL = object()

LAYER_SCHEMA: dict[str, dict[str, _Attr]] = {
    "Input": {},
    "Conv2D": {
        "filters": _Attr(_check_int_ge(1)),
        "kernel_h": _Attr(_check_int_ge(1)),
        "kernel_w": _Attr(_check_int_ge(1)),
        "stride_h": _Attr(_check_int_ge(1), required=False, default=1),
        "stride_w": _Attr(_check_int_ge(1), required=False, default=1),
        "padding": _Attr(_check_choice("same", "valid"), required=False, default="valid"),
    },
    "Dense": {
        "units": _Attr(_check_int_ge(1)),
    },
    "MaxPool2D": {
        "pool_h": _Attr(_check_int_ge(1)),
        "pool_w": _Attr(_check_int_ge(1)),
        "stride": _Attr(_check_int_ge(1), required=False, default=_USE_POOL),
        "padding": _Attr(_check_choice("same", "valid"), required=False, default="valid"),
    },
    "BatchNorm": {},
    "Dropout": {
        "rate": _Attr(_check_rate),
    },
    "Activation": {
        "name": _Attr(_check_choice("relu", "softmax", "sigmoid", "tanh")),
    },
    "Add": {},
    "Concat": {},
    "Flatten": {},
    "GlobalAveragePool": {},
    "Output": {},
}

KINDS = frozenset(LAYER_SCHEMA)

# Free-form hints the refinement instructions AWI/AR may introduce; accepted
# on any layer, validated only as strings.
_FREE_ATTRS = ("initializer", "regularizer")

_MULTI_INPUT_KINDS = frozenset({"Add", "Concat"})


@dataclass(frozen=True)
class LayerSpec:
    """One node of the architecture DAG."""

    id: str
    kind: str
    inputs: tuple[str, ...]
    attributes: Mapping[str, Any] = field(default_factory=dict)

    def attr(self, name: str) -> Any:
        return self.attributes[name]


@dataclass(frozen=True)
class ArchGraph:
    """A parsed, structurally valid architecture.

    `layers` preserves document order; use :func:`topological_order` for an
    evaluation order.  Instances are immutable and safe to share.
    """

    layers: tuple[LayerSpec, ...]
    input_shape: tuple[int, int, int]
    num_classes: int

    def layer(self, layer_id: str) -> LayerSpec:
        for spec in self.layers:
            if spec.id == layer_id:
                return spec
        raise KeyError(layer_id)


@dataclass(frozen=True)
class ShapeReport:
    """Per-layer output shapes plus totals.

    `total_flops` counts one forward pass with each multiply-accumulate as
    2 ops (Conv2D and Dense only; bias adds and elementwise layers are
    excluded).  `total_params` counts BatchNorm as 4 per channel, i.e. the
    trainable scale/offset and the moving statistics together, matching
    common framework "total params" output.
    """

    shapes: dict[str, tuple[int, ...]]
    params: dict[str, int]
    total_params: int
    total_flops: int


# --------------------------------------------------------------------------
# Parsing
# --------------------------------------------------------------------------

_TOP_LEVEL_FIELDS = ("input_shape", "num_classes", "layers")


def parse_arch(text: str) -> ArchGraph:
    """Parse and structurally validate an architecture document.

    Returns a complete :class:`ArchGraph` or raises; partially parsed graphs
    never escape.  Shape inference is a separate step (:func:`infer_shapes`).
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(
            f"not valid JSON: {exc.msg} (line {exc.lineno}, column {exc.colno})"
        ) from exc

    if not isinstance(doc, dict):
        raise SchemaViolation("top level must be a JSON object")
    unknown = sorted(set(doc) - set(_TOP_LEVEL_FIELDS))
    if unknown:
        raise SchemaViolation(f"unknown top-level fields: {', '.join(unknown)}")
    for name in _TOP_LEVEL_FIELDS:
        if name not in doc:
            raise SchemaViolation(f"missing top-level field '{name}'")

    shape = doc["input_shape"]
    if (
        not isinstance(shape, list)
        or len(shape) != 3
        or not all(_check_int_ge(1)(d) for d in shape)
    ):
        raise SchemaViolation("input_shape must be [height, width, channels], each >= 1")
    num_classes = doc["num_classes"]
    if not _check_int_ge(1)(num_classes):
        raise SchemaViolation("num_classes must be a positive integer")
    raw_layers = doc["layers"]
    if not isinstance(raw_layers, list) or not raw_layers:
        raise SchemaViolation("layers must be a non-empty array")

    layers = tuple(_parse_layer(obj, i) for i, obj in enumerate(raw_layers))
    _validate_structure(layers)
    graph = ArchGraph(layers=layers, input_shape=tuple(shape), num_classes=num_classes)
    topological_order(graph)  # raises CycleDetected
    return graph


def _parse_layer(obj: Any, index: int) -> LayerSpec:
    where = f"layers[{index}]"
    if not isinstance(obj, dict):
        raise SchemaViolation(f"{where}: layer must be an object")
    layer_id = obj.get("id")
    if not isinstance(layer_id, str) or not layer_id:
        raise SchemaViolation(f"{where}: missing or empty 'id'")
    kind = obj.get("kind")
    if kind not in KINDS:
        raise SchemaViolation(f"unknown kind {kind!r}", layer_id=layer_id)
    inputs = obj.get("inputs")
    if inputs is None:
        inputs = []
    if not isinstance(inputs, list) or not all(isinstance(x, str) and x for x in inputs):
        raise SchemaViolation("'inputs' must be an array of layer ids", layer_id=layer_id)

    schema = LAYER_SCHEMA[kind]
    allowed = set(schema) | set(_FREE_ATTRS) | {"id", "kind", "inputs"}
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise SchemaViolation(
            f"unknown attribute(s) for {kind}: {', '.join(unknown)}", layer_id=layer_id
        )

    attrs: dict[str, Any] = {}
    for name, spec in schema.items():
        if name in obj:
            value = obj[name]
            if not spec.check(value):
                raise SchemaViolation(
                    f"invalid value for {kind}.{name}: {value!r}", layer_id=layer_id
                )
            attrs[name] = value
        elif spec.required:
            raise SchemaViolation(f"missing attribute {kind}.{name}", layer_id=layer_id)
        else:
            attrs[name] = spec.default
    if kind == "MaxPool2D" and attrs["stride"] is _USE_POOL:
        attrs["stride"] = attrs["pool_h"]
    for name in _FREE_ATTRS:
        if name in obj:
            if not isinstance(obj[name], str) or not obj[name]:
                raise SchemaViolation(
                    f"'{name}' must be a non-empty string", layer_id=layer_id
                )
            attrs[name] = obj[name]

    return LayerSpec(id=layer_id, kind=kind, inputs=tuple(inputs), attributes=attrs)


def _validate_structure(layers: tuple[LayerSpec, ...]) -> None:
    ids: set[str] = set()
    for spec in layers:
        if spec.id in ids:
            raise SchemaViolation(f"duplicate layer id {spec.id!r}", layer_id=spec.id)
        ids.add(spec.id)

    n_input = sum(1 for s in layers if s.kind == "Input")
    n_output = sum(1 for s in layers if s.kind == "Output")
    if n_input != 1:
        raise SchemaViolation(f"expected exactly one Input layer, found {n_input}")
    if n_output != 1:
        raise SchemaViolation(f"expected exactly one Output layer, found {n_output}")

    for spec in layers:
        for ref in spec.inputs:
            if ref not in ids:
                raise DanglingReference(
                    f"layer {spec.id!r} references undeclared input {ref!r}",
                    layer_id=spec.id,
                )
        if spec.kind == "Input":
            if spec.inputs:
                raise SchemaViolation("Input layer takes no inputs", layer_id=spec.id)
        elif spec.kind in _MULTI_INPUT_KINDS:
            if len(spec.inputs) < 2:
                raise SchemaViolation(
                    f"{spec.kind} needs at least 2 inputs, got {len(spec.inputs)}",
                    layer_id=spec.id,
                )
        elif len(spec.inputs) != 1:
            raise SchemaViolation(
                f"{spec.kind} needs exactly 1 input, got {len(spec.inputs)}",
                layer_id=spec.id,
            )


def topological_order(graph: ArchGraph) -> tuple[LayerSpec, ...]:
    """Kahn's algorithm; ties broken by document order for determinism."""
    remaining_deps = {s.id: set(s.inputs) for s in graph.layers}
    by_id = {s.id: s for s in graph.layers}
    order: list[LayerSpec] = []
    ready = [s.id for s in graph.layers if not remaining_deps[s.id]]
    while ready:
        current = ready.pop(0)
        order.append(by_id[current])
        newly_ready = []
        for s in graph.layers:
            if current in remaining_deps[s.id]:
                remaining_deps[s.id].discard(current)
                if not remaining_deps[s.id]:
                    newly_ready.append(s.id)
        # preserve document order among newly released nodes
        ready.extend(sorted(newly_ready, key=lambda i: _doc_index(graph, i)))
    if len(order) != len(graph.layers):
        stuck = sorted(i for i, deps in remaining_deps.items() if deps)
        raise CycleDetected(f"cycle through layer(s): {', '.join(stuck)}", layer_id=stuck[0])
    return tuple(order)


def _doc_index(graph: ArchGraph, layer_id: str) -> int:
    for i, s in enumerate(graph.layers):
        if s.id == layer_id:
            return i
    raise KeyError(layer_id)


def serialize_arch(graph: ArchGraph, indent: int | None = 2) -> str:
    """Inverse of parse_arch; defaults are materialized so round-trips are stable."""
    layers = []
    for s in graph.layers:
        obj: dict[str, Any] = {"id": s.id, "kind": s.kind, "inputs": list(s.inputs)}
        obj.update(s.attributes)
        layers.append(obj)
    return json.dumps(
        {
            "input_shape": list(graph.input_shape),
            "num_classes": graph.num_classes,
            "layers": layers,
        },
        indent=indent,
    )


# --------------------------------------------------------------------------
# Shape inference and parameter counting
# --------------------------------------------------------------------------

def _window_dim(
    size: int, window: int, stride: int, padding: str, layer_id: str, axis: str
) -> int:
    if padding == "same":
        return math.ceil(size / stride)
    out = (size - window) // stride + 1
    if out < 1:
        raise NegativeDimension(
            f"layer {layer_id!r}: {axis} dimension {size} with window {window} "
            f"stride {stride} (valid padding) gives output {out}",
            layer_id=layer_id,
        )
    return out


def infer_shapes(graph: ArchGraph) -> ShapeReport:
    """Assign every layer a concrete output shape and count params/flops.

    Shapes are (H, W, C) feature maps or (F,) vectors; the batch axis is
    implicit.  Deterministic and order-independent: the report depends only
    on the graph, not on the layer list order.
    """
    shapes: dict[str, tuple[int, ...]] = {}
    params: dict[str, int] = {}
    flops: dict[str, int] = {}

    for spec in topological_order(graph):
        in_shapes = [shapes[i] for i in spec.inputs]
        shapes[spec.id] = _layer_output_shape(spec, in_shapes, graph.input_shape)
        params[spec.id], flops[spec.id] = _layer_params_flops(
            spec, in_shapes, shapes[spec.id]
        )

    return ShapeReport(
        shapes=shapes,
        params=params,
        total_params=sum(params.values()),
        total_flops=sum(flops.values()),
    )


def _layer_output_shape(
    spec: LayerSpec,
    in_shapes: list[tuple[int, ...]],
    input_shape: tuple[int, int, int],
) -> tuple[int, ...]:
    kind = spec.kind
    if kind == "Input":
        return input_shape

    if kind == "Conv2D":
        (shape,) = in_shapes
        if len(shape) != 3:
            raise RankError(
                f"layer {spec.id!r}: Conv2D needs an HxWxC input, got {shape}",
                layer_id=spec.id,
            )
        h, w, _ = shape
        a = spec.attributes
        out_h = _window_dim(h, a["kernel_h"], a["stride_h"], a["padding"], spec.id, "height")
        out_w = _window_dim(w, a["kernel_w"], a["stride_w"], a["padding"], spec.id, "width")
        return (out_h, out_w, a["filters"])

    if kind == "MaxPool2D":
        (shape,) = in_shapes
        if len(shape) != 3:
            raise RankError(
                f"layer {spec.id!r}: MaxPool2D needs an HxWxC input, got {shape}",
                layer_id=spec.id,
            )
        h, w, c = shape
        a = spec.attributes
        out_h = _window_dim(h, a["pool_h"], a["stride"], a["padding"], spec.id, "height")
        out_w = _window_dim(w, a["pool_w"], a["stride"], a["padding"], spec.id, "width")
        return (out_h, out_w, c)

    if kind == "Dense":
        (shape,) = in_shapes
        if len(shape) != 1:
            raise RankError(
                f"layer {spec.id!r}: Dense needs a flat input, got {shape} "
                "(insert Flatten or GlobalAveragePool first)",
                layer_id=spec.id,
            )
        return (spec.attributes["units"],)

    if kind == "Add":
        first = in_shapes[0]
        for other in in_shapes[1:]:
            if other != first:
                raise ShapeMismatch(
                    f"layer {spec.id!r}: Add operands differ: {first} vs {other}",
                    layer_id=spec.id,
                )
        return first

    if kind == "Concat":
        first = in_shapes[0]
        for other in in_shapes[1:]:
            if len(other) != len(first) or other[:-1] != first[:-1]:
                raise ShapeMismatch(
                    f"layer {spec.id!r}: Concat operands differ in spatial dims: "
                    f"{first} vs {other}",
                    layer_id=spec.id,
                )
        return first[:-1] + (sum(s[-1] for s in in_shapes),)

    if kind == "Flatten":
        (shape,) = in_shapes
        return (math.prod(shape),)

    if kind == "GlobalAveragePool":
        (shape,) = in_shapes
        if len(shape) != 3:
            raise RankError(
                f"layer {spec.id!r}: GlobalAveragePool needs an HxWxC input, got {shape}",
                layer_id=spec.id,
            )
        return (shape[2],)

    if kind in ("BatchNorm", "Dropout", "Activation", "Output"):
        (shape,) = in_shapes
        return shape

    raise AssertionError(f"unhandled kind {kind}")  # unreachable: parse rejects


def _layer_params_flops(
    spec: LayerSpec,
    in_shapes: list[tuple[int, ...]],
    out_shape: tuple[int, ...],
) -> tuple[int, int]:
    kind = spec.kind
    if kind == "Conv2D":
        in_c = in_shapes[0][2]
        a = spec.attributes
        kernel = a["kernel_h"] * a["kernel_w"] * in_c
        n_params = (kernel + 1) * a["filters"]
        out_h, out_w, filters = out_shape
        n_flops = 2 * kernel * out_h * out_w * filters
        return n_params, n_flops
    if kind == "Dense":
        in_features = in_shapes[0][0]
        units = spec.attributes["units"]
        return (in_features + 1) * units, 2 * in_features * units
    if kind == "BatchNorm":
        return 4 * in_shapes[0][-1], 0
    return 0, 0


def count_params(graph: ArchGraph) -> int:
    """Total trainable-plus-statistics parameter count for the graph."""
    return infer_shapes(graph).total_params
