#!/usr/bin/env python3
"""Parse architecture documents, infer shapes, and catch broken models."""

import json
from pathlib import Path

from archdiscovery import ir

CORPUS = Path(__file__).resolve().parents[1] / "fixtures" / "corpus"

print("=== A valid model ===")
text = (CORPUS / "valid" / "four_block_skip.json").read_text()
graph = ir.parse_arch(text)
report = ir.infer_shapes(graph)
for spec in ir.topological_order(graph):
    shape = "x".join(str(d) for d in report.shapes[spec.id])
    print(f"  {spec.id:<10} {spec.kind:<12} -> {shape:<12} ({report.params[spec.id]} params)")
print(f"total params: {report.total_params}, forward flops: {report.total_flops}")

print()
print("=== Broken models are rejected with a typed error ===")
for name in ("negative_dim_conv", "add_channel_mismatch", "dangling_convX"):
    text = (CORPUS / "invalid" / f"{name}.json").read_text()
    try:
        ir.infer_shapes(ir.parse_arch(text))
    except ir.ArchError as exc:
        print(f"  {name}: {type(exc).__name__}: {exc}")

print()
print("=== Serialization round-trips ===")
again = ir.parse_arch(ir.serialize_arch(graph))
print(f"  parse(serialize(g)) == g: {again == graph}")
