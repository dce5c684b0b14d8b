"""Rule-based expert system: metrics in, weighted refinement instructions out.

Fifteen instruction codes form a closed vocabulary.  Seven fixed rules add
the relevant user priority to a subset of codes whenever a measurement
violates its threshold; a greedy pass then removes conflicting add/reduce
pairs, keeping the heavier instruction.
"""

from __future__ import annotations

from .metrics import MetricsRecord, UserCriteria

# Canonical listing order; sorting ties and serialization both use it.
CODES: tuple[str, ...] = (
    "ACL", "ASC", "ADL", "RCL", "RSC", "RDL", "AD", "AMK",
    "AWI", "AR", "RK", "RD", "AMN", "RN", "RR",
)

DESCRIPTIONS: dict[str, str] = {
    "ACL": "Add Convolutional Layer",
    "ASC": "Add Skip Connection",
    "ADL": "Add Dense Layer",
    "RCL": "Reduce Convolutional Layer",
    "RSC": "Reduce Skip Connection",
    "RDL": "Reduce Dense Layer",
    "AD": "Add Dropout Layer",
    "AMK": "Add More Kernel",
    "AWI": "Add Weight Initializer",
    "AR": "Add Regularization",
    "RK": "Reduce Number of Kernel",
    "RD": "Reduce Dropout Layer",
    "AMN": "Add More Neurons",
    "RN": "Reduce Neurons",
    "RR": "Reduce Regularization",
}

# Symmetric add/reduce pairs; AWI has no conflict partner.
CONFLICTS: dict[str, str | None] = {
    "ACL": "RCL", "RCL": "ACL",
    "ASC": "RSC", "RSC": "ASC",
    "ADL": "RDL", "RDL": "ADL",
    "AD": "RD", "RD": "AD",
    "AMK": "RK", "RK": "AMK",
    "AR": "RR", "RR": "AR",
    "AMN": "RN", "RN": "AMN",
    "AWI": None,
}

_CANONICAL_INDEX = {code: i for i, code in enumerate(CODES)}

# An instruction vector maps every code to a non-negative weight; a refined
# command is the conflict-free, descending-weight list of (code, weight).
InstructionVector = dict[str, float]
RefinedCommand = list[tuple[str, float]]


def zero_vector() -> InstructionVector:
    return {code: 0.0 for code in CODES}


def generate_instructions(m: MetricsRecord, c: UserCriteria) -> InstructionVector:
    """Apply the seven threshold rules additively.

    All comparisons are strict; a measurement exactly on its threshold fires
    nothing.  Raising any priority can only raise instruction weights.
    """
    cmd = zero_vector()

    if m.a1 < c.ta1:  # train accuracy short: grow capacity
        for code in ("ACL", "ADL", "AMK", "ASC"):
            cmd[code] += c.pa1
    if m.a2 < c.ta2:  # validation accuracy short
        for code in ("ACL", "ADL", "AMK", "ASC"):
            cmd[code] += c.pa2
    if m.e1_kwh > c.te1:  # train-phase energy over budget: shrink / regularize
        for code in ("AD", "AWI", "RCL", "RK", "RSC"):
            cmd[code] += c.pe1
    if m.e2_kwh > c.te2:  # validation-phase energy over budget
        for code in ("AD", "RCL", "RK", "RDL"):
            cmd[code] += c.pe2
    if m.fps < c.tf:  # too slow at inference
        for code in ("AD", "RK", "RSC"):
            cmd[code] += c.pf
    if (m.a1 - m.a2) > c.ot:  # overfitting gap
        for code in ("ADL", "RCL", "RK", "RN", "AR"):
            cmd[code] += c.pa1
    if (m.a2 - m.a1) > c.ut:  # underfitting gap
        for code in ("RD", "ACL", "AMK", "ADL", "AMN", "ASC", "RR"):
            cmd[code] += c.pa2

    return cmd


def resolve_conflicts(vector: InstructionVector) -> RefinedCommand:
    """Greedy conflict removal, heaviest instruction first.

    Codes are scanned in descending weight (ties broken by canonical order,
    so add-instructions beat their reduce-partners).  Each surviving code
    zeroes its conflict partner at any later scan position; zero-weight
    codes never enter the result.
    """
    weights = {code: float(vector.get(code, 0.0)) for code in CODES}
    for code in vector:
        if code not in weights:
            raise ValueError(f"unknown instruction code {code!r}")
    for code, w in weights.items():
        if w < 0:
            raise ValueError(f"negative weight for {code}: {w!r}")

    scan = sorted(CODES, key=lambda code: (-weights[code], _CANONICAL_INDEX[code]))
    refined: RefinedCommand = []
    for i, code in enumerate(scan):
        if weights[code] <= 0:
            continue
        refined.append((code, weights[code]))
        partner = CONFLICTS[code]
        if partner is not None and partner in scan[i + 1 :]:
            weights[partner] = 0.0
    return refined


def refined_to_json(rc: RefinedCommand) -> list[dict[str, float | str]]:
    """Trajectory-log form: ordered array of {"code", "weight"} objects."""
    return [{"code": code, "weight": weight} for code, weight in rc]


def refined_from_json(items: list[dict]) -> RefinedCommand:
    return [(item["code"], float(item["weight"])) for item in items]
