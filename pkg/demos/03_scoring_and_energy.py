#!/usr/bin/env python3
"""Rank candidates by combined effectiveness; account energy and CO2."""

from archdiscovery import (
    PowerProfile,
    ScoringWeights,
    co2_lbs,
    combined_effectiveness,
    energy_kwh_pue,
)
from archdiscovery.metrics import MetricsRecord, load_preset

criteria = load_preset(5)  # accuracy + inference speed
weights = ScoringWeights(aw=0.35, fw=0.3, ew=0.0)

big = MetricsRecord(a1=0.93, a2=0.88, e1_kwh=0.4, e2_kwh=2e-5,
                    fps=6_000.0, params=2_400_000)
small = MetricsRecord(a1=0.88, a2=0.84, e1_kwh=0.1, e2_kwh=8e-6,
                      fps=26_000.0, params=140_000)

for name, m in (("big", big), ("small", small)):
    report = combined_effectiveness(m, criteria, weights)
    print(f"{name:<6} cm={report.cm:+.4f}  "
          f"(accuracy {report.ta:.2f}/{report.va:.2f}, normalized fps {report.nf:.2f})")
print("-> with speed weighted, the small fast model wins\n")

profile = PowerProfile(cpu_watts=100.0, ram_watts=50.0, gpu_watts=300.0, gpu_count=1)
hours = 4.25
kwh = energy_kwh_pue(hours, profile)
print(f"{hours} h on a {profile.total_watts:.0f} W node "
      f"-> {kwh:.4f} kWh-PUE -> {co2_lbs(kwh):.4f} lbs CO2e")
