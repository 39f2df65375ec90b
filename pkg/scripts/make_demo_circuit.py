#!/usr/bin/env python3
"""Regenerate the bundled demonstration feeder.

A ~30-CCP suburban feeder: a short mains trunk that fans into three
branches, mostly single households plus three multi-household properties,
and three switchable elements giving the circuit exactly three radial
topology options (the as-built state and two alternate feeds of branches
A/B through a normally open link box).

Run from the repository root:

    python scripts/make_demo_circuit.py
"""
from __future__ import annotations

import json
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from lvvc.circuit import circuit_from_dict  # noqa: E402

# cable constants, ohm per metre (typical LV aluminium mains / copper service)
TRUNK_R, TRUNK_X = 0.000320, 0.000075   # 95 mm2 mains
BRANCH_R, BRANCH_X = 0.000443, 0.000078  # 70 mm2 branch mains
TIE_R, TIE_X = 0.000443, 0.000078

OUT = pathlib.Path(__file__).resolve().parents[1] / "src" / "lvvc" / "data" / "demo_circuit.json"


def chain(segments, nodes, start, prefix, count, spacing, r, x):
    prev = start
    for i in range(1, count + 1):
        node = f"{prefix}{i}"
        nodes.append(node)
        segments.append(
            {"from": prev, "to": node, "length_m": spacing, "r_per_m": r, "x_per_m": x}
        )
        prev = node
    return prev


def main() -> None:
    nodes = ["S"]
    segments = []

    # trunk S - T1 - T2 - T3
    chain(segments, nodes, "S", "T", 3, 45.0, TRUNK_R, TRUNK_X)
    # branch A off T1 (10 nodes), branch B off T2 (12), branch C off T3 (8)
    a_end = chain(segments, nodes, "T1", "A", 10, 32.0, BRANCH_R, BRANCH_X)
    b_end = chain(segments, nodes, "T2", "B", 12, 28.0, BRANCH_R, BRANCH_X)
    chain(segments, nodes, "T3", "C", 8, 38.0, BRANCH_R, BRANCH_X)

    # normally open tie between the ends of branches A and B
    segments.append(
        {"from": a_end, "to": b_end, "length_m": 55.0, "r_per_m": TIE_R, "x_per_m": TIE_X}
    )

    ccps = []
    for node in [f"A{i}" for i in range(1, 11)]:
        ccps.append({"node": node, "households": 1, "kind": "single"})
    for i in range(1, 13):
        if i == 6:
            ccps.append({"node": f"B{i}", "households": 6, "kind": "multi"})
        elif i == 12:
            ccps.append({"node": f"B{i}", "households": 4, "kind": "multi"})
        else:
            ccps.append({"node": f"B{i}", "households": 1, "kind": "single"})
    for i in range(1, 9):
        if i == 4:
            ccps.append({"node": f"C{i}", "households": 3, "kind": "multi"})
        else:
            ccps.append({"node": f"C{i}", "households": 1, "kind": "single"})

    switches = [
        {"kind": "fuse", "from": "T1", "to": "A1", "state": "closed"},
        {"kind": "fuse", "from": "T2", "to": "B1", "state": "closed"},
        {"kind": "link_box", "from": a_end, "to": b_end, "state": "open"},
    ]

    document = {
        "nominal_voltage": 230.0,
        "source": "S",
        "nodes": nodes,
        "segments": segments,
        "ccps": ccps,
        "switches": switches,
    }
    circuit_from_dict(document)  # validate before writing

    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(document, indent=2) + "\n", encoding="utf-8")
    households = sum(c["households"] for c in ccps)
    print(f"wrote {OUT}: {len(nodes)} nodes, {len(ccps)} CCPs, {households} households")


if __name__ == "__main__":
    main()
