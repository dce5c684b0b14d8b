#!/usr/bin/env python3
"""Regenerate the fixture corpus and scripted-run response sets.

Deterministic: same seed, same bytes.  Run from the repo root:

    python tools/gen_fixtures.py
"""

from __future__ import annotations

import json
import random
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from archdiscovery import ir
from archdiscovery.evaluator import EvalConfig, evaluate_surrogate
from archdiscovery.testing import random_valid_graph

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures"


def doc(input_shape, num_classes, layers) -> dict:
    return {"input_shape": input_shape, "num_classes": num_classes, "layers": layers}


def layer(id, kind, inputs, **attrs) -> dict:
    return {"id": id, "kind": kind, "inputs": inputs, **attrs}


# ----------------------------------------------------------------------
# Hand-designed valid models
# ----------------------------------------------------------------------

MINIMAL = doc([32, 32, 3], 10, [
    layer("in", "Input", []),
    layer("conv1", "Conv2D", ["in"], filters=16, kernel_h=3, kernel_w=3,
          stride_h=1, stride_w=1, padding="same"),
    layer("flat", "Flatten", ["conv1"]),
    layer("fc", "Dense", ["flat"], units=10),
    layer("out", "Output", ["fc"]),
])


def _conv_block(n, src, filters):
    return [
        layer(f"conv{n}", "Conv2D", [src], filters=filters, kernel_h=3, kernel_w=3,
              stride_h=1, stride_w=1, padding="same"),
        layer(f"bn{n}", "BatchNorm", [f"conv{n}"]),
        layer(f"relu{n}", "Activation", [f"bn{n}"], name="relu"),
    ], f"relu{n}"


def four_block_skip() -> dict:
    """Four conv blocks with two Add skip connections and two dense layers."""
    layers = [layer("in", "Input", [])]
    block1, tip1 = _conv_block(1, "in", 32)
    block2, tip2 = _conv_block(2, tip1, 32)
    layers += block1 + block2
    layers.append(layer("skip1", "Add", [tip1, tip2]))
    block3, tip3 = _conv_block(3, "skip1", 32)
    block4, tip4 = _conv_block(4, tip3, 32)
    layers += block3 + block4
    layers.append(layer("skip2", "Add", [tip3, tip4]))
    layers += [
        layer("pool", "MaxPool2D", ["skip2"], pool_h=2, pool_w=2, stride=2,
              padding="valid"),
        layer("flat", "Flatten", ["pool"]),
        layer("fc1", "Dense", ["flat"], units=64),
        layer("fc1relu", "Activation", ["fc1"], name="relu"),
        layer("fc2", "Dense", ["fc1relu"], units=10),
        layer("softmax", "Activation", ["fc2"], name="softmax"),
        layer("out", "Output", ["softmax"]),
    ]
    return doc([32, 32, 3], 10, layers)


def concat_tower() -> dict:
    layers = [
        layer("in", "Input", []),
        layer("a", "Conv2D", ["in"], filters=16, kernel_h=1, kernel_w=1,
              stride_h=1, stride_w=1, padding="same"),
        layer("b", "Conv2D", ["in"], filters=24, kernel_h=3, kernel_w=3,
              stride_h=1, stride_w=1, padding="same"),
        layer("c", "Conv2D", ["in"], filters=8, kernel_h=5, kernel_w=5,
              stride_h=1, stride_w=1, padding="same"),
        layer("cat", "Concat", ["a", "b", "c"]),
        layer("gap", "GlobalAveragePool", ["cat"]),
        layer("fc", "Dense", ["gap"], units=10),
        layer("out", "Output", ["fc"]),
    ]
    return doc([32, 32, 3], 10, layers)


def downsampler() -> dict:
    layers = [
        layer("in", "Input", []),
        layer("c1", "Conv2D", ["in"], filters=24, kernel_h=5, kernel_w=5,
              stride_h=2, stride_w=2, padding="valid"),
        layer("p1", "MaxPool2D", ["c1"], pool_h=2, pool_w=2, stride=2,
              padding="valid"),
        layer("c2", "Conv2D", ["p1"], filters=48, kernel_h=3, kernel_w=3,
              stride_h=1, stride_w=1, padding="valid"),
        layer("drop", "Dropout", ["c2"], rate=0.25),
        layer("flat", "Flatten", ["drop"]),
        layer("fc1", "Dense", ["flat"], units=32),
        layer("relu", "Activation", ["fc1"], name="relu"),
        layer("fc2", "Dense", ["relu"], units=10),
        layer("out", "Output", ["fc2"]),
    ]
    return doc([32, 32, 3], 10, layers)


def tiny_mnist_style() -> dict:
    layers = [
        layer("in", "Input", []),
        layer("c1", "Conv2D", ["in"], filters=8, kernel_h=3, kernel_w=3,
              stride_h=1, stride_w=1, padding="valid", initializer="he_normal"),
        layer("p1", "MaxPool2D", ["c1"], pool_h=2, pool_w=2, stride=2,
              padding="valid"),
        layer("flat", "Flatten", ["p1"]),
        layer("fc", "Dense", ["flat"], units=10, regularizer="l2"),
        layer("out", "Output", ["fc"]),
    ]
    return doc([28, 28, 1], 10, layers)


def passthrough_only() -> dict:
    return doc([8, 8, 2], 4, [
        layer("in", "Input", []),
        layer("flat", "Flatten", ["in"]),
        layer("out", "Output", ["flat"]),
    ])


def conv_only() -> dict:
    """Single 16-filter 3x3 conv on 3 channels: 448 params total."""
    return doc([32, 32, 3], 10, [
        layer("in", "Input", []),
        layer("conv", "Conv2D", ["in"], filters=16, kernel_h=3, kernel_w=3,
              stride_h=1, stride_w=1, padding="same"),
        layer("flat", "Flatten", ["conv"]),
        layer("out", "Output", ["flat"]),
    ])


# ----------------------------------------------------------------------
# Hand-designed invalid models
# ----------------------------------------------------------------------

def invalid_set() -> dict[str, tuple[str, str]]:
    """name -> (expected error class, document text)."""
    cases: dict[str, tuple[str, str]] = {}

    # conv kernel larger than the incoming feature map
    neg = doc([32, 32, 3], 10, [
        layer("in", "Input", []),
        layer("shrink", "MaxPool2D", ["in"], pool_h=8, pool_w=8, stride=8,
              padding="valid"),
        layer("shrink2", "MaxPool2D", ["shrink"], pool_h=2, pool_w=2, stride=2,
              padding="valid"),
        layer("bigconv", "Conv2D", ["shrink2"], filters=8, kernel_h=5, kernel_w=5,
              stride_h=1, stride_w=1, padding="valid"),
        layer("flat", "Flatten", ["bigconv"]),
        layer("fc", "Dense", ["flat"], units=10),
        layer("out", "Output", ["fc"]),
    ])
    cases["negative_dim_conv"] = ("NegativeDimension", json.dumps(neg, indent=1))

    neg2 = doc([16, 16, 3], 10, [
        layer("in", "Input", []),
        layer("pool", "MaxPool2D", ["in"], pool_h=20, pool_w=20, stride=1,
              padding="valid"),
        layer("flat", "Flatten", ["pool"]),
        layer("fc", "Dense", ["flat"], units=10),
        layer("out", "Output", ["fc"]),
    ])
    cases["negative_dim_pool"] = ("NegativeDimension", json.dumps(neg2, indent=1))

    mismatch = doc([32, 32, 3], 10, [
        layer("in", "Input", []),
        layer("left", "Conv2D", ["in"], filters=32, kernel_h=3, kernel_w=3,
              stride_h=1, stride_w=1, padding="same"),
        layer("right", "Conv2D", ["in"], filters=64, kernel_h=3, kernel_w=3,
              stride_h=1, stride_w=1, padding="same"),
        layer("merge", "Add", ["left", "right"]),
        layer("flat", "Flatten", ["merge"]),
        layer("fc", "Dense", ["flat"], units=10),
        layer("out", "Output", ["fc"]),
    ])
    cases["add_channel_mismatch"] = ("ShapeMismatch", json.dumps(mismatch, indent=1))

    spatial = doc([32, 32, 3], 10, [
        layer("in", "Input", []),
        layer("full", "Conv2D", ["in"], filters=16, kernel_h=1, kernel_w=1,
              stride_h=1, stride_w=1, padding="same"),
        layer("half", "Conv2D", ["in"], filters=16, kernel_h=1, kernel_w=1,
              stride_h=2, stride_w=2, padding="same"),
        layer("cat", "Concat", ["full", "half"]),
        layer("flat", "Flatten", ["cat"]),
        layer("fc", "Dense", ["flat"], units=10),
        layer("out", "Output", ["fc"]),
    ])
    cases["concat_spatial_mismatch"] = ("ShapeMismatch", json.dumps(spatial, indent=1))

    dangling = doc([32, 32, 3], 10, [
        layer("in", "Input", []),
        layer("c1", "Conv2D", ["convX"], filters=16, kernel_h=3, kernel_w=3,
              stride_h=1, stride_w=1, padding="same"),
        layer("flat", "Flatten", ["c1"]),
        layer("fc", "Dense", ["flat"], units=10),
        layer("out", "Output", ["fc"]),
    ])
    cases["dangling_convX"] = ("DanglingReference", json.dumps(dangling, indent=1))

    dangling2 = doc([32, 32, 3], 10, [
        layer("in", "Input", []),
        layer("flat", "Flatten", ["in"]),
        layer("fc", "Dense", ["flat"], units=10),
        layer("merge", "Add", ["fc", "phantom"]),
        layer("out", "Output", ["merge"]),
    ])
    cases["dangling_in_add"] = ("DanglingReference", json.dumps(dangling2, indent=1))

    rank = doc([32, 32, 3], 10, [
        layer("in", "Input", []),
        layer("fc", "Dense", ["in"], units=10),
        layer("out", "Output", ["fc"]),
    ])
    cases["dense_on_feature_map"] = ("RankError", json.dumps(rank, indent=1))

    cycle = doc([32, 32, 3], 10, [
        layer("in", "Input", []),
        layer("c1", "Conv2D", ["c2"], filters=8, kernel_h=3, kernel_w=3,
              stride_h=1, stride_w=1, padding="same"),
        layer("c2", "Conv2D", ["c1"], filters=8, kernel_h=3, kernel_w=3,
              stride_h=1, stride_w=1, padding="same"),
        layer("flat", "Flatten", ["c2"]),
        layer("fc", "Dense", ["flat"], units=10),
        layer("out", "Output", ["fc"]),
    ])
    cases["conv_cycle"] = ("CycleDetected", json.dumps(cycle, indent=1))

    unknown_kind = doc([32, 32, 3], 10, [
        layer("in", "Input", []),
        layer("sep", "SeparableConv2D", ["in"], filters=16, kernel_h=3, kernel_w=3),
        layer("flat", "Flatten", ["sep"]),
        layer("fc", "Dense", ["flat"], units=10),
        layer("out", "Output", ["fc"]),
    ])
    cases["unknown_kind"] = ("SchemaViolation", json.dumps(unknown_kind, indent=1))

    missing_attr = doc([32, 32, 3], 10, [
        layer("in", "Input", []),
        layer("c1", "Conv2D", ["in"], filters=16),
        layer("flat", "Flatten", ["c1"]),
        layer("fc", "Dense", ["flat"], units=10),
        layer("out", "Output", ["fc"]),
    ])
    cases["missing_kernel"] = ("SchemaViolation", json.dumps(missing_attr, indent=1))

    two_inputs = doc([32, 32, 3], 10, [
        layer("in", "Input", []),
        layer("in2", "Input", []),
        layer("flat", "Flatten", ["in"]),
        layer("fc", "Dense", ["flat"], units=10),
        layer("out", "Output", ["fc"]),
    ])
    cases["two_input_layers"] = ("SchemaViolation", json.dumps(two_inputs, indent=1))

    cases["not_json"] = ("MalformedDocument", "this is not json {{{")
    return cases


# ----------------------------------------------------------------------
# Scripted response sets
# ----------------------------------------------------------------------

_PROSE = [
    "Here is an architecture for this task.",
    "Based on the feedback, this design adds capacity where it helps.",
    "The following network should improve the weak metrics.",
    "This revision follows the given instructions.",
]


def wrap_response(document: dict, note_index: int) -> str:
    prose = _PROSE[note_index % len(_PROSE)]
    body = json.dumps(document, indent=1)
    return f"{prose}\n\n```json\n{body}\n```\n"


def growing_model(size: int) -> dict:
    """A valid model whose parameter count grows with `size` (1-based)."""
    filters = 8 * size
    units = 16 * size
    layers = [layer("in", "Input", [])]
    tip = "in"
    for k in range(1 + (size - 1) // 3):
        cid = f"conv{k+1}"
        layers.append(layer(cid, "Conv2D", [tip], filters=filters, kernel_h=3,
                            kernel_w=3, stride_h=1, stride_w=1, padding="same"))
        layers.append(layer(f"relu{k+1}", "Activation", [cid], name="relu"))
        tip = f"relu{k+1}"
    layers += [
        layer("pool", "MaxPool2D", [tip], pool_h=2, pool_w=2, stride=2,
              padding="valid"),
        layer("flat", "Flatten", ["pool"]),
        layer("fc1", "Dense", ["flat"], units=units),
        layer("fcact", "Activation", ["fc1"], name="relu"),
        layer("fc2", "Dense", ["fcact"], units=10),
        layer("out", "Output", ["fc2"]),
    ]
    return doc([32, 32, 3], 10, layers)


def write_run_a() -> None:
    """Three valid models with strictly increasing surrogate scores."""
    out = FIXTURES / "runs" / "run_a"
    out.mkdir(parents=True, exist_ok=True)
    cfg = EvalConfig(mode="surrogate", epochs=2)
    last_a = -1.0
    for i, size in enumerate((1, 3, 6)):
        model = growing_model(size)
        graph = ir.parse_arch(json.dumps(model))
        result = evaluate_surrogate(graph, cfg)
        assert result.a1 + result.a2 > last_a, "run_a must strictly improve"
        last_a = result.a1 + result.a2
        (out / f"{i:03d}.txt").write_text(wrap_response(model, i), encoding="utf-8")


def write_run_recovery() -> None:
    """Middle response is invalid (negative dimension); loop must recover."""
    out = FIXTURES / "runs" / "run_recovery"
    out.mkdir(parents=True, exist_ok=True)
    bad = doc([32, 32, 3], 10, [
        layer("in", "Input", []),
        layer("pool", "MaxPool2D", ["in"], pool_h=8, pool_w=8, stride=8,
              padding="valid"),
        layer("pool2", "MaxPool2D", ["pool"], pool_h=2, pool_w=2, stride=2,
              padding="valid"),
        layer("conv5", "Conv2D", ["pool2"], filters=32, kernel_h=5, kernel_w=5,
              stride_h=1, stride_w=1, padding="valid"),
        layer("flat", "Flatten", ["conv5"]),
        layer("fc", "Dense", ["flat"], units=10),
        layer("out", "Output", ["fc"]),
    ])
    responses = [
        wrap_response(growing_model(2), 0),
        wrap_response(bad, 1),
        wrap_response(growing_model(4), 2),
    ]
    for i, text in enumerate(responses):
        (out / f"{i:03d}.txt").write_text(text, encoding="utf-8")


def write_run30(rng: random.Random) -> None:
    """Thirty responses mixing valid models and the observed failure classes."""
    out = FIXTURES / "runs" / "run30"
    out.mkdir(parents=True, exist_ok=True)
    invalid = invalid_set()
    failures = {
        3: wrap_response(json.loads(invalid["negative_dim_conv"][1]), 3),
        9: wrap_response(json.loads(invalid["add_channel_mismatch"][1]), 1),
        13: wrap_response(json.loads(invalid["dangling_convX"][1]), 2),
        20: "I cannot design a better architecture than the previous one.\n",
        24: "```json\n{\"input_shape\": [32, 32, 3], \"num_classes\": 10, \"layers\": [}\n```\n",
        28: wrap_response(json.loads(invalid["unknown_kind"][1]), 0),
    }
    sizes = [1, 1, 2, None, 2, 3, 3, 4, 4, None, 5, 5, 6, None, 6, 7, 7, 8,
             8, 9, None, 9, 10, 10, None, 11, 11, 12, None, 12]
    n_invalid = 0
    for i in range(30):
        if i in failures:
            text = failures[i]
            n_invalid += 1
        else:
            size = sizes[i] if sizes[i] is not None else rng.randint(1, 12)
            text = wrap_response(growing_model(size), i)
        (out / f"{i:03d}.txt").write_text(text, encoding="utf-8")
    (out / "manifest.json").write_text(
        json.dumps({"responses": 30, "invalid": sorted(failures),
                    "invalid_count": n_invalid}, indent=2) + "\n",
        encoding="utf-8",
    )


def main() -> None:
    rng = random.Random(20240229)

    valid_dir = FIXTURES / "corpus" / "valid"
    invalid_dir = FIXTURES / "corpus" / "invalid"
    valid_dir.mkdir(parents=True, exist_ok=True)
    invalid_dir.mkdir(parents=True, exist_ok=True)

    named = {
        "minimal": MINIMAL,
        "four_block_skip": four_block_skip(),
        "concat_tower": concat_tower(),
        "downsampler": downsampler(),
        "tiny_mnist_style": tiny_mnist_style(),
        "passthrough_only": passthrough_only(),
        "conv_only": conv_only(),
    }
    for name, document in named.items():
        (valid_dir / f"{name}.json").write_text(
            json.dumps(document, indent=1) + "\n", encoding="utf-8"
        )
    for i in range(16):
        graph = random_valid_graph(rng, max_blocks=5)
        (valid_dir / f"random_{i:02d}.json").write_text(
            ir.serialize_arch(graph, indent=1) + "\n", encoding="utf-8"
        )

    manifest = {}
    for name, (error_class, text) in invalid_set().items():
        (invalid_dir / f"{name}.json").write_text(text + "\n", encoding="utf-8")
        manifest[f"{name}.json"] = error_class
    (invalid_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )

    write_run_a()
    write_run_recovery()
    write_run30(rng)
    n_valid = len(list(valid_dir.glob("*.json")))
    n_invalid = len(list(invalid_dir.glob("*.json"))) - 1  # minus manifest
    print(f"wrote {n_valid} valid, {n_invalid} invalid, 3 scripted run sets")


if __name__ == "__main__":
    main()
