#!/usr/bin/env python3
"""From measured metrics to a conflict-free refinement command."""

from archdiscovery import DESCRIPTIONS, generate_instructions, resolve_conflicts
from archdiscovery.metrics import MetricsRecord, load_preset

criteria = load_preset(2)  # accuracy + energy emphasis
print("criteria: priorities "
      f"pa1={criteria.pa1} pa2={criteria.pa2} pe1={criteria.pe1} "
      f"pe2={criteria.pe2} pf={criteria.pf}")

# An oversized model: accurate enough, but energy-hungry and slow.
metrics = MetricsRecord(a1=0.97, a2=0.93, e1_kwh=0.08, e2_kwh=3e-5,
                        fps=9000.0, params=4_800_000)
print(f"metrics:  a1={metrics.a1} a2={metrics.a2} e1={metrics.e1_kwh} "
      f"e2={metrics.e2_kwh} fps={metrics.fps}")

vector = generate_instructions(metrics, criteria)
print("\nraw instruction weights (threshold violations fired these):")
for code, weight in vector.items():
    if weight > 0:
        print(f"  {code:<4} {DESCRIPTIONS[code]:<28} {weight:.3f}")

refined = resolve_conflicts(vector)
print("\nafter conflict resolution (add/reduce pairs cannot coexist):")
for code, weight in refined:
    print(f"  {code:<4} {DESCRIPTIONS[code]:<28} {weight:.3f}")
