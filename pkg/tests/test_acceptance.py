"""Acceptance gate: one test per release criterion, at its stated tolerance.

Each test's docstring first line is the criterion name; the terminal summary
(see conftest) prints one PASS/FAIL line per criterion.
"""

import json
import random
import time
import warnings
from pathlib import Path

import pytest

from archdiscovery import ir
from archdiscovery.cli import main
from archdiscovery.loop import replay
from archdiscovery.metrics import MetricsRecord, UserCriteria, load_preset
from archdiscovery.rules import (
    CODES,
    CONFLICTS,
    generate_instructions,
    resolve_conflicts,
)
from archdiscovery.scoring import PowerProfile, co2_lbs, energy_kwh_pue
from archdiscovery.testing import random_valid_graph
from test_ir import brute_force_params

ROOT = Path(__file__).resolve().parents[1]
RUN30 = ROOT / "fixtures" / "runs" / "run30"


# ---------------------------------------------------------------------------
# Independent oracles (duplicated here on purpose: the gate must not share
# code paths with the implementation under test)
# ---------------------------------------------------------------------------

RULE_TABLE = (
    (lambda m, c: m.a1 < c.ta1, "pa1", ("ACL", "ADL", "AMK", "ASC")),
    (lambda m, c: m.a2 < c.ta2, "pa2", ("ACL", "ADL", "AMK", "ASC")),
    (lambda m, c: m.e1_kwh > c.te1, "pe1", ("AD", "AWI", "RCL", "RK", "RSC")),
    (lambda m, c: m.e2_kwh > c.te2, "pe2", ("AD", "RCL", "RK", "RDL")),
    (lambda m, c: m.fps < c.tf, "pf", ("AD", "RK", "RSC")),
    (lambda m, c: (m.a1 - m.a2) > c.ot, "pa1", ("ADL", "RCL", "RK", "RN", "AR")),
    (lambda m, c: (m.a2 - m.a1) > c.ut, "pa2",
     ("RD", "ACL", "AMK", "ADL", "AMN", "ASC", "RR")),
)


def oracle_instructions(m, c):
    cmd = {code: 0.0 for code in CODES}
    for fires, attr, codes in RULE_TABLE:
        if fires(m, c):
            p = getattr(c, attr)
            for code in codes:
                cmd[code] += p
    return cmd


def oracle_resolve(vector):
    """Enumerate all conflict-free subsets; keep the greedy-by-weight maximal."""
    order = sorted((c for c in CODES if vector.get(c, 0.0) > 0),
                   key=lambda c: (-vector[c], CODES.index(c)))
    n = len(order)
    index = {c: i for i, c in enumerate(order)}
    pair_masks = []
    for code in order:
        partner = CONFLICTS[code]
        if partner in index and index[partner] > index[code]:
            pair_masks.append((1 << (n - 1 - index[code]))
                              | (1 << (n - 1 - index[partner])))
    best = 0
    for mask in range(1 << n):
        if any(mask & pm == pm for pm in pair_masks):
            continue
        if mask > best:
            best = mask
    return [(order[i], vector[order[i]])
            for i in range(n) if best & (1 << (n - 1 - i))]


def sample_metrics(rng):
    return MetricsRecord(
        a1=rng.random(), a2=rng.random(),
        e1_kwh=rng.uniform(0, 2), e2_kwh=rng.uniform(0, 2),
        fps=rng.uniform(0, 1e5), params=rng.randrange(10**7),
    )


def sample_criteria(rng):
    return UserCriteria(
        pa1=rng.random(), pa2=rng.random(), pe1=rng.random(),
        pe2=rng.random(), pf=rng.random(),
        ta1=rng.random(), ta2=rng.random(),
        te1=rng.uniform(1e-6, 1), te2=rng.uniform(1e-6, 1),
        tf=rng.uniform(1, 1e5), ot=rng.random(), ut=rng.random(),
    )


def sample_vector(rng, max_positive=15):
    n = rng.randint(0, max_positive)
    return {code: rng.uniform(0.01, 3.0) for code in rng.sample(CODES, n)}


# ---------------------------------------------------------------------------
# Criteria
# ---------------------------------------------------------------------------

def test_expert_system_oracle_equivalence():
    """Expert-system oracle equivalence (100000 random pairs, exact, < 10 s)"""
    rng = random.Random(2024)
    started = time.monotonic()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for _ in range(100_000):
            m, c = sample_metrics(rng), sample_criteria(rng)
            assert generate_instructions(m, c) == oracle_instructions(m, c)
    elapsed = time.monotonic() - started
    assert elapsed < 10.0, f"took {elapsed:.1f}s"


def test_conflict_freedom_and_subset_oracle():
    """Conflict resolution: pair-freedom over 100000 vectors + subset oracle (< 30 s)"""
    rng = random.Random(2025)
    started = time.monotonic()
    for _ in range(100_000):
        vector = sample_vector(rng)
        refined = resolve_conflicts(vector)
        kept = {code for code, _ in refined}
        for code in kept:
            assert CONFLICTS[code] not in kept, (vector, refined)
        if sum(1 for w in vector.values() if w > 0) <= 8:
            assert refined == oracle_resolve(vector), vector
    elapsed = time.monotonic() - started
    assert elapsed < 30.0, f"took {elapsed:.1f}s"


def test_hand_traced_golden_vectors():
    """Hand-traced golden vectors reproduce exactly"""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        c1 = UserCriteria(pa1=0.4, pa2=0.6, pe1=0.0, pe2=0.0, pf=0.0,
                          ta1=0.9, ta2=0.85, te1=1.0, te2=1.0, tf=1.0)
        m1 = MetricsRecord(a1=0.5, a2=0.6, e1_kwh=0.0, e2_kwh=0.0,
                           fps=10.0, params=0)
        cmd = generate_instructions(m1, c1)
        expected = {code: 0.0 for code in CODES}
        for code in ("ACL", "ADL", "AMK", "ASC"):
            expected[code] = 1.0
        assert cmd == expected

        c2 = UserCriteria(pa1=0.0, pa2=0.0, pe1=0.5, pe2=0.0, pf=0.3,
                          ta1=0.01, ta2=0.01, te1=0.01, te2=1.0, tf=20000.0,
                          ot=1.0, ut=1.0)
        m2 = MetricsRecord(a1=0.5, a2=0.5, e1_kwh=0.02, e2_kwh=0.0,
                           fps=5000.0, params=0)
        cmd = generate_instructions(m2, c2)
        assert cmd["AD"] == 0.8 and cmd["RK"] == 0.8 and cmd["RSC"] == 0.8
        assert cmd["AWI"] == 0.5 and cmd["RCL"] == 0.5
        assert all(cmd[c] == 0.0 for c in
                   set(CODES) - {"AD", "RK", "RSC", "AWI", "RCL"})

    refined = resolve_conflicts({"ACL": 1.0, "RK": 0.9, "AMK": 0.8, "RCL": 0.5})
    assert refined == [("ACL", 1.0), ("RK", 0.9)]


def test_energy_formulas():
    """Energy: 1h @ 450W = 0.711 +-1e-12; CO2 factor exact; table spot-check +-5e-4"""
    profile = PowerProfile(cpu_watts=100.0, ram_watts=50.0,
                           gpu_watts=300.0, gpu_count=1)
    assert abs(energy_kwh_pue(1.0, profile) - 0.711) <= 1e-12
    rng = random.Random(2026)
    for _ in range(1000):
        p_t = rng.uniform(1e-9, 1e3)
        assert co2_lbs(p_t) == 0.954 * p_t
    assert abs(co2_lbs(0.7041) - 0.6717) <= 5e-4


def test_ir_validation_corpus(valid_corpus, invalid_corpus):
    """IR corpus: zero false accepts/rejects; params match brute-force oracle"""
    assert len(valid_corpus) >= 20
    assert len(invalid_corpus) >= 10
    classes = {expected for _, expected, _ in invalid_corpus}
    assert {"NegativeDimension", "ShapeMismatch", "DanglingReference"} <= classes

    for name, text in valid_corpus:
        graph = ir.parse_arch(text)  # must not raise
        report = ir.infer_shapes(graph)
        assert all(d >= 1 for shape in report.shapes.values() for d in shape), name

    for name, expected, text in invalid_corpus:
        with pytest.raises(ir.ArchError) as excinfo:
            ir.infer_shapes(ir.parse_arch(text))
        assert type(excinfo.value).__name__ == expected, name

    rng = random.Random(2027)
    for _ in range(100):
        graph = random_valid_graph(rng)
        assert ir.count_params(graph) == brute_force_params(graph)


def _normalized(path: Path) -> list[str]:
    lines = path.read_text(encoding="utf-8").splitlines()
    header = json.loads(lines[0])
    header.pop("run_id")
    header.pop("created_at")
    return [json.dumps(header, sort_keys=True)] + lines[1:]


def test_deterministic_end_to_end(tmp_path, capsys):
    """Deterministic discover: preset 3, 30 scripted iterations, < 5 s, replay-clean"""
    started = time.monotonic()
    paths = []
    for name in ("one", "two"):
        code = main([
            "discover", "--preset", "3", "--backend", "scripted",
            "--script", str(RUN30), "--max-iterations", "30",
            "--out", str(tmp_path), "--run-id", f"accept-{name}",
        ])
        assert code == 0
        paths.append(tmp_path / f"accept-{name}.trajectory.jsonl")
    elapsed = time.monotonic() - started
    assert elapsed < 5.0, f"took {elapsed:.2f}s"
    capsys.readouterr()

    assert _normalized(paths[0]) == _normalized(paths[1])

    trajectory = replay(paths[0])  # raises on any divergence
    assert len(trajectory.records) == 30
    scored = [r.score.cm for r in trajectory.records if r.score is not None]
    best_line = json.loads((tmp_path / "accept-one.best.arch.json").read_text())
    assert trajectory.best_score.cm == max(scored)
    stored_best = next(r for r in trajectory.records
                       if r.index == trajectory.best_index)
    assert json.loads(stored_best.arch_json) == best_line


def test_preset_fidelity():
    """Preset fidelity: settings 1-5 priority rows exact"""
    rows = {
        1: (0.4, 0.6, 0.0, 0.0, 0.0),
        2: (0.3, 0.3, 0.2, 0.2, 0.0),
        3: (0.0, 1.0, 0.0, 0.0, 0.0),
        4: (0.0, 0.0, 0.5, 0.5, 0.0),
        5: (0.3, 0.4, 0.0, 0.0, 0.3),
    }
    for n, row in rows.items():
        c = load_preset(n)
        assert (c.pa1, c.pa2, c.pe1, c.pe2, c.pf) == row, f"setting {n}"
