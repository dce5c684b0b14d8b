"""Architecture IR: parsing, shape inference, parameter counting."""

import json
import random

import numpy as np
import pytest

from archdiscovery import ir
from archdiscovery.testing import random_valid_graph

MINIMAL = json.dumps({
    "input_shape": [32, 32, 3],
    "num_classes": 10,
    "layers": [
        {"id": "in", "kind": "Input", "inputs": []},
        {"id": "conv1", "kind": "Conv2D", "inputs": ["in"],
         "filters": 16, "kernel_h": 3, "kernel_w": 3, "padding": "same"},
        {"id": "flat", "kind": "Flatten", "inputs": ["conv1"]},
        {"id": "fc", "kind": "Dense", "inputs": ["flat"], "units": 10},
        {"id": "out", "kind": "Output", "inputs": ["fc"]},
    ],
})


class TestParse:
    def test_minimal_document(self):
        graph = ir.parse_arch(MINIMAL)
        assert len(graph.layers) == 5
        assert graph.input_shape == (32, 32, 3)
        assert graph.num_classes == 10
        # optional conv attributes got their defaults
        conv = graph.layer("conv1")
        assert conv.attributes["stride_h"] == 1
        assert conv.attributes["padding"] == "same"

    def test_dangling_reference(self):
        doc = json.loads(MINIMAL)
        doc["layers"][1]["inputs"] = ["convX"]
        with pytest.raises(ir.DanglingReference, match="convX"):
            ir.parse_arch(json.dumps(doc))

    def test_four_block_skip_fixture(self, fixtures_dir):
        text = (fixtures_dir / "corpus" / "valid" / "four_block_skip.json").read_text()
        graph = ir.parse_arch(text)
        adds = [s.id for s in graph.layers if s.kind == "Add"]
        assert len(adds) == 2
        order = [s.id for s in ir.topological_order(graph)]
        for spec in graph.layers:
            if spec.kind == "Add":
                for operand in spec.inputs:
                    assert order.index(operand) < order.index(spec.id)

    def test_not_json(self):
        with pytest.raises(ir.MalformedDocument):
            ir.parse_arch("{nope")

    def test_unknown_top_level_field(self):
        doc = json.loads(MINIMAL)
        doc["optimizer"] = "adam"
        with pytest.raises(ir.SchemaViolation, match="optimizer"):
            ir.parse_arch(json.dumps(doc))

    def test_unknown_kind(self):
        doc = json.loads(MINIMAL)
        doc["layers"][1]["kind"] = "DepthwiseConv2D"
        with pytest.raises(ir.SchemaViolation):
            ir.parse_arch(json.dumps(doc))

    def test_unknown_layer_attribute(self):
        doc = json.loads(MINIMAL)
        doc["layers"][1]["dilation"] = 2
        with pytest.raises(ir.SchemaViolation, match="dilation"):
            ir.parse_arch(json.dumps(doc))

    def test_missing_required_attribute(self):
        doc = json.loads(MINIMAL)
        del doc["layers"][1]["filters"]
        with pytest.raises(ir.SchemaViolation, match="filters"):
            ir.parse_arch(json.dumps(doc))

    def test_cycle(self):
        doc = json.loads(MINIMAL)
        doc["layers"][1]["inputs"] = ["flat"]
        with pytest.raises(ir.CycleDetected):
            ir.parse_arch(json.dumps(doc))

    def test_add_needs_two_inputs(self):
        doc = json.loads(MINIMAL)
        doc["layers"].insert(2, {"id": "a", "kind": "Add", "inputs": ["conv1"]})
        with pytest.raises(ir.SchemaViolation, match="at least 2"):
            ir.parse_arch(json.dumps(doc))

    def test_free_attrs_accepted(self):
        doc = json.loads(MINIMAL)
        doc["layers"][1]["initializer"] = "he_normal"
        doc["layers"][3]["regularizer"] = "l2"
        graph = ir.parse_arch(json.dumps(doc))
        assert graph.layer("conv1").attributes["initializer"] == "he_normal"

    def test_bool_rejected_for_int_attr(self):
        doc = json.loads(MINIMAL)
        doc["layers"][1]["filters"] = True
        with pytest.raises(ir.SchemaViolation):
            ir.parse_arch(json.dumps(doc))


class TestRoundTrip:
    def test_minimal_round_trip(self):
        graph = ir.parse_arch(MINIMAL)
        again = ir.parse_arch(ir.serialize_arch(graph))
        assert again == graph

    def test_random_graphs_round_trip(self):
        rng = random.Random(7)
        for _ in range(50):
            graph = random_valid_graph(rng)
            assert ir.parse_arch(ir.serialize_arch(graph)) == graph

    def test_corpus_round_trip(self, valid_corpus):
        for name, text in valid_corpus:
            graph = ir.parse_arch(text)
            assert ir.parse_arch(ir.serialize_arch(graph)) == graph, name


class TestShapes:
    def test_pool_example(self):
        doc = {
            "input_shape": [32, 32, 3], "num_classes": 10,
            "layers": [
                {"id": "in", "kind": "Input", "inputs": []},
                {"id": "p", "kind": "MaxPool2D", "inputs": ["in"],
                 "pool_h": 2, "pool_w": 2, "stride": 2, "padding": "valid"},
                {"id": "flat", "kind": "Flatten", "inputs": ["p"]},
                {"id": "fc", "kind": "Dense", "inputs": ["flat"], "units": 10},
                {"id": "out", "kind": "Output", "inputs": ["fc"]},
            ],
        }
        report = ir.infer_shapes(ir.parse_arch(json.dumps(doc)))
        assert report.shapes["p"] == (16, 16, 3)  # floor((32-2)/2)+1

    def test_negative_dimension(self):
        doc = {
            "input_shape": [3, 3, 8], "num_classes": 2,
            "layers": [
                {"id": "in", "kind": "Input", "inputs": []},
                {"id": "c", "kind": "Conv2D", "inputs": ["in"],
                 "filters": 4, "kernel_h": 5, "kernel_w": 5, "padding": "valid"},
                {"id": "flat", "kind": "Flatten", "inputs": ["c"]},
                {"id": "fc", "kind": "Dense", "inputs": ["flat"], "units": 2},
                {"id": "out", "kind": "Output", "inputs": ["fc"]},
            ],
        }
        graph = ir.parse_arch(json.dumps(doc))
        with pytest.raises(ir.NegativeDimension) as excinfo:
            ir.infer_shapes(graph)
        assert excinfo.value.layer_id == "c"

    def test_add_mismatch(self):
        doc = {
            "input_shape": [16, 16, 3], "num_classes": 2,
            "layers": [
                {"id": "in", "kind": "Input", "inputs": []},
                {"id": "a", "kind": "Conv2D", "inputs": ["in"],
                 "filters": 32, "kernel_h": 1, "kernel_w": 1, "padding": "same"},
                {"id": "b", "kind": "Conv2D", "inputs": ["in"],
                 "filters": 64, "kernel_h": 1, "kernel_w": 1, "padding": "same"},
                {"id": "add", "kind": "Add", "inputs": ["a", "b"]},
                {"id": "flat", "kind": "Flatten", "inputs": ["add"]},
                {"id": "fc", "kind": "Dense", "inputs": ["flat"], "units": 2},
                {"id": "out", "kind": "Output", "inputs": ["fc"]},
            ],
        }
        graph = ir.parse_arch(json.dumps(doc))
        with pytest.raises(ir.ShapeMismatch):
            ir.infer_shapes(graph)

    def test_same_padding_with_stride(self):
        doc = {
            "input_shape": [15, 15, 3], "num_classes": 2,
            "layers": [
                {"id": "in", "kind": "Input", "inputs": []},
                {"id": "c", "kind": "Conv2D", "inputs": ["in"], "filters": 4,
                 "kernel_h": 3, "kernel_w": 3, "stride_h": 2, "stride_w": 2,
                 "padding": "same"},
                {"id": "flat", "kind": "Flatten", "inputs": ["c"]},
                {"id": "fc", "kind": "Dense", "inputs": ["flat"], "units": 2},
                {"id": "out", "kind": "Output", "inputs": ["fc"]},
            ],
        }
        report = ir.infer_shapes(ir.parse_arch(json.dumps(doc)))
        assert report.shapes["c"] == (8, 8, 4)  # ceil(15/2)

    def test_concat_sums_channels(self, fixtures_dir):
        text = (fixtures_dir / "corpus" / "valid" / "concat_tower.json").read_text()
        report = ir.infer_shapes(ir.parse_arch(text))
        assert report.shapes["cat"] == (32, 32, 48)
        assert report.shapes["gap"] == (48,)

    def test_dense_on_map_is_rank_error(self):
        doc = {
            "input_shape": [8, 8, 1], "num_classes": 2,
            "layers": [
                {"id": "in", "kind": "Input", "inputs": []},
                {"id": "fc", "kind": "Dense", "inputs": ["in"], "units": 2},
                {"id": "out", "kind": "Output", "inputs": ["fc"]},
            ],
        }
        with pytest.raises(ir.RankError):
            ir.infer_shapes(ir.parse_arch(json.dumps(doc)))

    def test_every_layer_has_positive_shape(self):
        rng = random.Random(11)
        for _ in range(100):
            graph = random_valid_graph(rng)
            report = ir.infer_shapes(graph)
            assert set(report.shapes) == {s.id for s in graph.layers}
            for shape in report.shapes.values():
                assert all(d >= 1 for d in shape)

    def test_order_independence(self):
        rng = random.Random(13)
        for _ in range(30):
            graph = random_valid_graph(rng)
            report = ir.infer_shapes(graph)
            doc = json.loads(ir.serialize_arch(graph))
            rng.shuffle(doc["layers"])
            shuffled = ir.parse_arch(json.dumps(doc))
            assert ir.infer_shapes(shuffled) == report


def brute_force_params(graph: ir.ArchGraph) -> int:
    """Independent count: materialize weight tensor shapes, multiply dims.

    Uses its own minimal shape walk so the production inference path is not
    in the loop being checked.
    """
    import math

    shapes: dict[str, tuple] = {}
    tensors: list[tuple] = []
    for spec in ir.topological_order(graph):
        ins = [shapes[i] for i in spec.inputs]
        a = spec.attributes
        if spec.kind == "Input":
            out = graph.input_shape
        elif spec.kind == "Conv2D":
            h, w, c = ins[0]
            tensors.append((a["kernel_h"], a["kernel_w"], c, a["filters"]))
            tensors.append((a["filters"],))
            if a["padding"] == "same":
                out = (math.ceil(h / a["stride_h"]), math.ceil(w / a["stride_w"]),
                       a["filters"])
            else:
                out = ((h - a["kernel_h"]) // a["stride_h"] + 1,
                       (w - a["kernel_w"]) // a["stride_w"] + 1, a["filters"])
        elif spec.kind == "Dense":
            tensors.append((ins[0][0], a["units"]))
            tensors.append((a["units"],))
            out = (a["units"],)
        elif spec.kind == "BatchNorm":
            tensors.extend([(ins[0][-1],)] * 4)  # gamma, beta, mean, var
            out = ins[0]
        elif spec.kind == "MaxPool2D":
            h, w, c = ins[0]
            if a["padding"] == "same":
                out = (math.ceil(h / a["stride"]), math.ceil(w / a["stride"]), c)
            else:
                out = ((h - a["pool_h"]) // a["stride"] + 1,
                       (w - a["pool_w"]) // a["stride"] + 1, c)
        elif spec.kind == "Flatten":
            out = (int(np.prod(ins[0])),)
        elif spec.kind == "GlobalAveragePool":
            out = (ins[0][2],)
        elif spec.kind == "Concat":
            out = ins[0][:-1] + (sum(s[-1] for s in ins),)
        else:  # Add, Dropout, Activation, Output
            out = ins[0]
        shapes[spec.id] = out
    return int(sum(np.prod(t) for t in tensors))


class TestParams:
    def test_conv_example(self):
        graph = ir.parse_arch(MINIMAL)
        report = ir.infer_shapes(graph)
        assert report.params["conv1"] == 448  # (3*3*3 + 1) * 16

    def test_dense_example(self):
        doc = {
            "input_shape": [1, 1, 10], "num_classes": 10,
            "layers": [
                {"id": "in", "kind": "Input", "inputs": []},
                {"id": "flat", "kind": "Flatten", "inputs": ["in"]},
                {"id": "fc", "kind": "Dense", "inputs": ["flat"], "units": 10},
                {"id": "out", "kind": "Output", "inputs": ["fc"]},
            ],
        }
        assert ir.count_params(ir.parse_arch(json.dumps(doc))) == 110

    def test_no_parameterized_layers(self, fixtures_dir):
        text = (fixtures_dir / "corpus" / "valid" / "passthrough_only.json").read_text()
        assert ir.count_params(ir.parse_arch(text)) == 0

    def test_batchnorm_counts_four_per_channel(self):
        doc = {
            "input_shape": [4, 4, 7], "num_classes": 2,
            "layers": [
                {"id": "in", "kind": "Input", "inputs": []},
                {"id": "bn", "kind": "BatchNorm", "inputs": ["in"]},
                {"id": "flat", "kind": "Flatten", "inputs": ["bn"]},
                {"id": "fc", "kind": "Dense", "inputs": ["flat"], "units": 2},
                {"id": "out", "kind": "Output", "inputs": ["fc"]},
            ],
        }
        report = ir.infer_shapes(ir.parse_arch(json.dumps(doc)))
        assert report.params["bn"] == 28

    def test_brute_force_oracle_on_random_graphs(self):
        rng = random.Random(101)
        for _ in range(100):
            graph = random_valid_graph(rng)
            assert ir.count_params(graph) == brute_force_params(graph)
