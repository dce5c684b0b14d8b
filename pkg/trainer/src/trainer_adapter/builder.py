"""Build a trainable torch model from an architecture document.

The builder keeps its own shape walk (documents use channels-last HxWxC;
tensors run NCHW) so that dimension and wiring problems are reported as
clear build errors before any training starts.  "same" padding with stride
is emulated with asymmetric functional padding, which torch's Conv2d does
not support natively.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn


class BuildError(Exception):
    """The document cannot be turned into a trainable model."""


_SPATIAL = 3
_FLAT = 1

_ACTIVATIONS = {
    "relu": F.relu,
    "sigmoid": torch.sigmoid,
    "tanh": torch.tanh,
}


def _same_pad(size: int, window: int, stride: int) -> tuple[int, int]:
    out = math.ceil(size / stride)
    total = max(0, (out - 1) * stride + window - size)
    return total // 2, total - total // 2


def _window_out(size: int, window: int, stride: int, padding: str, lid: str) -> int:
    if padding == "same":
        return math.ceil(size / stride)
    out = (size - window) // stride + 1
    if out < 1:
        raise BuildError(
            f"negative dimension at layer {lid!r}: size {size} with window "
            f"{window} stride {stride} (valid padding) gives {out}"
        )
    return out


class DiscoveredNet(nn.Module):
    """The document's DAG as a torch module, evaluated in topological order."""

    def __init__(self, doc: dict):
        super().__init__()
        self.num_classes = int(doc["num_classes"])
        layers = self._validated_layers(doc)
        self.order = self._topo_sort(layers)
        self.input_shape = tuple(int(d) for d in doc["input_shape"])
        if len(self.input_shape) != 3 or any(d < 1 for d in self.input_shape):
            raise BuildError(f"bad input_shape {doc.get('input_shape')!r}")

        self.shapes: dict[str, tuple[int, ...]] = {}
        self.pads: dict[str, tuple[int, int, int, int]] = {}
        modules: list[nn.Module] = []
        for layer in self.order:
            try:
                modules.append(self._make_module(layer))
            except KeyError as exc:
                raise BuildError(
                    f"layer {layer.get('id')!r} missing attribute {exc}"
                ) from exc
            except (TypeError, ValueError) as exc:
                raise BuildError(f"layer {layer.get('id')!r}: {exc}") from exc
        self.mods = nn.ModuleList(modules)
        self.output_shape = self.shapes[self.order[-1]["id"]] if self.order else ()

    # -- validation ---------------------------------------------------------

    @staticmethod
    def _validated_layers(doc: dict) -> list[dict]:
        layers = doc.get("layers")
        if not isinstance(layers, list) or not layers:
            raise BuildError("document has no layers")
        ids = [l.get("id") for l in layers]
        if len(set(ids)) != len(ids):
            raise BuildError("duplicate layer ids")
        known = {"Input", "Conv2D", "Dense", "MaxPool2D", "BatchNorm", "Dropout",
                 "Activation", "Add", "Concat", "Flatten", "GlobalAveragePool",
                 "Output"}
        id_set = set(ids)
        for layer in layers:
            if layer.get("kind") not in known:
                raise BuildError(f"unknown layer kind {layer.get('kind')!r}")
            for ref in layer.get("inputs", []):
                if ref not in id_set:
                    raise BuildError(
                        f"layer {layer['id']!r} references undeclared {ref!r}"
                    )
        n_in = sum(1 for l in layers if l["kind"] == "Input")
        n_out = sum(1 for l in layers if l["kind"] == "Output")
        if n_in != 1 or n_out != 1:
            raise BuildError(f"need exactly one Input and one Output, "
                             f"got {n_in} and {n_out}")
        return layers

    @staticmethod
    def _topo_sort(layers: list[dict]) -> list[dict]:
        pending = {l["id"]: set(l.get("inputs", [])) for l in layers}
        by_id = {l["id"]: l for l in layers}
        order, ready = [], [l["id"] for l in layers if not pending[l["id"]]]
        while ready:
            current = ready.pop(0)
            order.append(by_id[current])
            for l in layers:
                deps = pending[l["id"]]
                if current in deps:
                    deps.discard(current)
                    if not deps:
                        ready.append(l["id"])
        if len(order) != len(layers):
            raise BuildError("layer graph contains a cycle")
        return order

    # -- construction -------------------------------------------------------

    def _in_shapes(self, layer: dict) -> list[tuple[int, ...]]:
        return [self.shapes[ref] for ref in layer.get("inputs", [])]

    def _make_module(self, layer: dict) -> nn.Module:
        kind, lid = layer["kind"], layer["id"]
        ins = self._in_shapes(layer)

        if kind == "Input":
            self.shapes[lid] = self.input_shape
            return nn.Identity()

        if kind == "Conv2D":
            (shape,) = ins
            if len(shape) != _SPATIAL:
                raise BuildError(f"layer {lid!r}: Conv2D on non-spatial input {shape}")
            h, w, c = shape
            kh, kw = int(layer["kernel_h"]), int(layer["kernel_w"])
            sh = int(layer.get("stride_h", 1))
            sw = int(layer.get("stride_w", 1))
            padding = layer.get("padding", "valid")
            filters = int(layer["filters"])
            out_h = _window_out(h, kh, sh, padding, lid)
            out_w = _window_out(w, kw, sw, padding, lid)
            if padding == "same":
                top, bottom = _same_pad(h, kh, sh)
                left, right = _same_pad(w, kw, sw)
                self.pads[lid] = (left, right, top, bottom)
            self.shapes[lid] = (out_h, out_w, filters)
            return nn.Conv2d(c, filters, (kh, kw), stride=(sh, sw))

        if kind == "MaxPool2D":
            (shape,) = ins
            if len(shape) != _SPATIAL:
                raise BuildError(f"layer {lid!r}: MaxPool2D on non-spatial input {shape}")
            h, w, c = shape
            ph, pw = int(layer["pool_h"]), int(layer["pool_w"])
            stride = int(layer.get("stride", ph))
            padding = layer.get("padding", "valid")
            out_h = _window_out(h, ph, stride, padding, lid)
            out_w = _window_out(w, pw, stride, padding, lid)
            if padding == "same":
                top, bottom = _same_pad(h, ph, stride)
                left, right = _same_pad(w, pw, stride)
                self.pads[lid] = (left, right, top, bottom)
            self.shapes[lid] = (out_h, out_w, c)
            return nn.MaxPool2d((ph, pw), stride=(stride, stride))

        if kind == "Dense":
            (shape,) = ins
            if len(shape) != _FLAT:
                raise BuildError(
                    f"layer {lid!r}: Dense needs a flat input, got {shape}"
                )
            units = int(layer["units"])
            self.shapes[lid] = (units,)
            return nn.Linear(shape[0], units)

        if kind == "BatchNorm":
            (shape,) = ins
            self.shapes[lid] = shape
            if len(shape) == _SPATIAL:
                return nn.BatchNorm2d(shape[2])
            return nn.BatchNorm1d(shape[0])

        if kind == "Dropout":
            (shape,) = ins
            self.shapes[lid] = shape
            return nn.Dropout(float(layer["rate"]))

        if kind == "Activation":
            (shape,) = ins
            name = layer.get("name")
            if name not in ("relu", "softmax", "sigmoid", "tanh"):
                raise BuildError(f"layer {lid!r}: unknown activation {name!r}")
            self.shapes[lid] = shape
            return nn.Identity()

        if kind == "Add":
            if len(ins) < 2:
                raise BuildError(f"layer {lid!r}: Add needs >= 2 inputs")
            first = ins[0]
            for other in ins[1:]:
                if other != first:
                    raise BuildError(
                        f"shape mismatch at layer {lid!r}: {first} vs {other}"
                    )
            self.shapes[lid] = first
            return nn.Identity()

        if kind == "Concat":
            if len(ins) < 2:
                raise BuildError(f"layer {lid!r}: Concat needs >= 2 inputs")
            first = ins[0]
            for other in ins[1:]:
                if len(other) != len(first) or other[:-1] != first[:-1]:
                    raise BuildError(
                        f"shape mismatch at layer {lid!r}: cannot concatenate "
                        f"{first} with {other}"
                    )
            self.shapes[lid] = first[:-1] + (sum(s[-1] for s in ins),)
            return nn.Identity()

        if kind == "Flatten":
            (shape,) = ins
            self.shapes[lid] = (math.prod(shape),)
            return nn.Flatten()

        if kind == "GlobalAveragePool":
            (shape,) = ins
            if len(shape) != _SPATIAL:
                raise BuildError(f"layer {lid!r}: GlobalAveragePool on {shape}")
            self.shapes[lid] = (shape[2],)
            return nn.Identity()

        if kind == "Output":
            (shape,) = ins
            self.shapes[lid] = shape
            return nn.Identity()

        raise BuildError(f"unhandled kind {kind}")

    # -- execution ----------------------------------------------------------

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        values: dict[str, torch.Tensor] = {}
        for layer, module in zip(self.order, self.mods):
            kind, lid = layer["kind"], layer["id"]
            if kind == "Input":
                values[lid] = x
                continue
            ins = [values[ref] for ref in layer["inputs"]]
            if kind in ("Conv2D", "MaxPool2D"):
                t = ins[0]
                if lid in self.pads:
                    fill = float("-inf") if kind == "MaxPool2D" else 0.0
                    t = F.pad(t, self.pads[lid], value=fill)
                values[lid] = module(t)
            elif kind == "Activation":
                name = layer["name"]
                if name == "softmax":
                    values[lid] = F.softmax(ins[0], dim=1)
                else:
                    values[lid] = _ACTIVATIONS[name](ins[0])
            elif kind == "Add":
                total = ins[0]
                for other in ins[1:]:
                    total = total + other
                values[lid] = total
            elif kind == "Concat":
                values[lid] = torch.cat(ins, dim=1)
            elif kind == "GlobalAveragePool":
                values[lid] = ins[0].mean(dim=(2, 3))
            else:
                values[lid] = module(ins[0])
        return values[self.order[-1]["id"]]

    def ends_with_softmax(self) -> bool:
        """True when the Output is fed (through it) by a softmax activation."""
        output = next(l for l in self.order if l["kind"] == "Output")
        feeder_id = output["inputs"][0]
        feeder = next(l for l in self.order if l["id"] == feeder_id)
        return feeder["kind"] == "Activation" and feeder.get("name") == "softmax"


def count_params(model: DiscoveredNet) -> int:
    """Trainable parameters plus BatchNorm moving statistics.

    Matches the document-level convention of 4 values per normalized
    channel; torch keeps the moving statistics as buffers, so they are
    added back in (the step counter buffer is not a statistic).
    """
    total = sum(p.numel() for p in model.parameters())
    total += sum(
        b.numel()
        for name, b in model.named_buffers()
        if not name.endswith("num_batches_tracked")
    )
    return total
