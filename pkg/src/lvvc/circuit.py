"""LV circuit topology: types, JSON parsing, validation, tree traversal.

A circuit is a radial network of cable segments rooted at the source
busbar. Customer connection points (CCPs) sit on nodes and carry one or
more households. Fuses and link boxes sit on existing segments; their
open/closed state selects which segments are active, so one physical
cable layout can have several alternative radial topologies.
"""
from __future__ import annotations

import functools
import itertools
import json
from collections import deque
from dataclasses import dataclass, replace
from typing import Iterator, Mapping, Sequence

PHASES = (1, 2, 3)

CCP_KINDS = ("single", "multi")
SWITCH_KINDS = ("fuse", "link_box")
SWITCH_STATES = ("closed", "open")


class CircuitError(ValueError):
    """Malformed, inconsistent, or non-radial circuit description."""


def _edge_key(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class CableSegment:
    from_node: str
    to_node: str
    length_m: float
    r_per_m: float
    x_per_m: float

    @property
    def key(self) -> tuple[str, str]:
        return _edge_key(self.from_node, self.to_node)


@dataclass(frozen=True)
class CCP:
    node: str
    households: int
    kind: str  # "single" | "multi"


@dataclass(frozen=True)
class SwitchableElement:
    kind: str  # "fuse" | "link_box"
    from_node: str
    to_node: str
    state: str  # "open" | "closed"

    @property
    def key(self) -> tuple[str, str]:
        return _edge_key(self.from_node, self.to_node)


@dataclass(frozen=True)
class Circuit:
    source: str
    nodes: tuple[str, ...]
    segments: tuple[CableSegment, ...]
    ccps: tuple[CCP, ...]
    switches: tuple[SwitchableElement, ...] = ()
    nominal_voltage: float = 230.0

    def enabled_segments(self) -> tuple[CableSegment, ...]:
        """Segments not disabled by an open switch."""
        open_edges = {s.key for s in self.switches if s.state == "open"}
        return tuple(seg for seg in self.segments if seg.key not in open_edges)

    def ccp_at(self, node: str) -> CCP | None:
        for ccp in self.ccps:
            if ccp.node == node:
                return ccp
        return None

    @property
    def total_households(self) -> int:
        return sum(c.households for c in self.ccps)


def validate_circuit(circuit: Circuit) -> Circuit:
    """Check all structural invariants; raise CircuitError naming the offender."""
    if circuit.nominal_voltage <= 0:
        raise CircuitError("nominal_voltage must be > 0")
    nodes = circuit.nodes
    if len(set(nodes)) != len(nodes):
        dupes = sorted({n for n in nodes if nodes.count(n) > 1})
        raise CircuitError(f"duplicate node ids: {dupes}")
    known = set(nodes)
    if circuit.source not in known:
        raise CircuitError(f"unknown node {circuit.source!r} (source)")

    seen_edges: set[tuple[str, str]] = set()
    for seg in circuit.segments:
        for end in (seg.from_node, seg.to_node):
            if end not in known:
                raise CircuitError(f"unknown node {end!r} in segment {seg.from_node}-{seg.to_node}")
        if seg.from_node == seg.to_node:
            raise CircuitError(f"self-loop segment at node {seg.from_node!r}")
        if seg.key in seen_edges:
            raise CircuitError(f"duplicate segment {seg.from_node}-{seg.to_node}")
        seen_edges.add(seg.key)
        if not (seg.length_m > 0 and seg.length_m < float("inf")):
            raise CircuitError(f"segment {seg.from_node}-{seg.to_node}: length_m must be finite and > 0")
        if seg.r_per_m < 0 or seg.x_per_m < 0:
            raise CircuitError(f"segment {seg.from_node}-{seg.to_node}: r_per_m/x_per_m must be >= 0")

    seen_ccp_nodes: set[str] = set()
    for ccp in circuit.ccps:
        if ccp.node not in known:
            raise CircuitError(f"unknown node {ccp.node!r} in CCP")
        if ccp.node in seen_ccp_nodes:
            raise CircuitError(f"duplicate CCP on node {ccp.node!r}; use the households count instead")
        seen_ccp_nodes.add(ccp.node)
        if ccp.kind not in CCP_KINDS:
            raise CircuitError(f"CCP at {ccp.node!r}: kind must be one of {CCP_KINDS}")
        if ccp.kind == "single" and ccp.households != 1:
            raise CircuitError(f"CCP at {ccp.node!r}: single property must have exactly 1 household")
        if ccp.kind == "multi" and ccp.households < 2:
            raise CircuitError(f"CCP at {ccp.node!r}: multi property must have >= 2 households")

    seen_switch_edges: set[tuple[str, str]] = set()
    for sw in circuit.switches:
        if sw.kind not in SWITCH_KINDS:
            raise CircuitError(f"switch {sw.from_node}-{sw.to_node}: kind must be one of {SWITCH_KINDS}")
        if sw.state not in SWITCH_STATES:
            raise CircuitError(f"switch {sw.from_node}-{sw.to_node}: state must be one of {SWITCH_STATES}")
        if sw.key not in seen_edges:
            raise CircuitError(
                f"switch {sw.from_node}-{sw.to_node} does not sit on an existing segment"
            )
        if sw.key in seen_switch_edges:
            raise CircuitError(f"duplicate switch on segment {sw.from_node}-{sw.to_node}")
        seen_switch_edges.add(sw.key)

    _check_radial(circuit)
    return circuit


def _check_radial(circuit: Circuit) -> None:
    """The enabled segments must form a tree rooted at source reaching every CCP."""
    adj: dict[str, list[tuple[str, int]]] = {n: [] for n in circuit.nodes}
    enabled = circuit.enabled_segments()
    for i, seg in enumerate(enabled):
        adj[seg.from_node].append((seg.to_node, i))
        adj[seg.to_node].append((seg.from_node, i))

    visited = {circuit.source}
    used_edges: set[int] = set()
    queue = deque([circuit.source])
    while queue:
        node = queue.popleft()
        for neigh, edge in adj[node]:
            if edge in used_edges:
                continue
            if neigh in visited:
                seg = enabled[edge]
                raise CircuitError(
                    f"non-radial active topology: cycle through segment {seg.from_node}-{seg.to_node}"
                )
            visited.add(neigh)
            used_edges.add(edge)
            queue.append(neigh)

    for seg in enabled:
        if seg.from_node not in visited or seg.to_node not in visited:
            raise CircuitError(
                f"segment {seg.from_node}-{seg.to_node} is enabled but not connected to the source"
            )
    for ccp in circuit.ccps:
        if ccp.node not in visited:
            raise CircuitError(f"CCP at node {ccp.node!r} unreachable from source")


# ---------------------------------------------------------------------------
# JSON schema


def _require_keys(obj: Mapping, allowed: dict[str, bool], context: str) -> None:
    for key in obj:
        if key not in allowed:
            raise CircuitError(f"unknown key {key!r} in {context}")
    for key, required in allowed.items():
        if required and key not in obj:
            raise CircuitError(f"missing key {key!r} in {context}")


def circuit_from_dict(data: Mapping) -> Circuit:
    if not isinstance(data, Mapping):
        raise CircuitError("circuit document must be a JSON object")
    _require_keys(
        data,
        {
            "source": True,
            "nodes": True,
            "segments": True,
            "ccps": True,
            "switches": False,
            "nominal_voltage": False,
        },
        "circuit",
    )
    segments = []
    for raw in data["segments"]:
        _require_keys(raw, {"from": True, "to": True, "length_m": True, "r_per_m": True, "x_per_m": True}, "segment")
        segments.append(
            CableSegment(
                from_node=str(raw["from"]),
                to_node=str(raw["to"]),
                length_m=float(raw["length_m"]),
                r_per_m=float(raw["r_per_m"]),
                x_per_m=float(raw["x_per_m"]),
            )
        )
    ccps = []
    for raw in data["ccps"]:
        _require_keys(raw, {"node": True, "households": True, "kind": True}, "ccp")
        households = raw["households"]
        if not isinstance(households, int) or isinstance(households, bool) or households < 1:
            raise CircuitError(f"CCP at {raw['node']!r}: households must be an integer >= 1")
        ccps.append(CCP(node=str(raw["node"]), households=households, kind=str(raw["kind"])))
    switches = []
    for raw in data.get("switches", []):
        _require_keys(raw, {"kind": True, "from": True, "to": True, "state": True}, "switch")
        switches.append(
            SwitchableElement(
                kind=str(raw["kind"]),
                from_node=str(raw["from"]),
                to_node=str(raw["to"]),
                state=str(raw["state"]),
            )
        )
    circuit = Circuit(
        source=str(data["source"]),
        nodes=tuple(str(n) for n in data["nodes"]),
        segments=tuple(segments),
        ccps=tuple(ccps),
        switches=tuple(switches),
        nominal_voltage=float(data.get("nominal_voltage", 230.0)),
    )
    return validate_circuit(circuit)


def circuit_to_dict(circuit: Circuit) -> dict:
    return {
        "nominal_voltage": circuit.nominal_voltage,
        "source": circuit.source,
        "nodes": list(circuit.nodes),
        "segments": [
            {
                "from": s.from_node,
                "to": s.to_node,
                "length_m": s.length_m,
                "r_per_m": s.r_per_m,
                "x_per_m": s.x_per_m,
            }
            for s in circuit.segments
        ],
        "ccps": [{"node": c.node, "households": c.households, "kind": c.kind} for c in circuit.ccps],
        "switches": [
            {"kind": s.kind, "from": s.from_node, "to": s.to_node, "state": s.state}
            for s in circuit.switches
        ],
    }


def parse_circuit(path) -> Circuit:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CircuitError(f"malformed circuit file {path}: {exc}") from exc
    return circuit_from_dict(data)


def serialize_circuit(circuit: Circuit) -> str:
    return json.dumps(circuit_to_dict(circuit), indent=2) + "\n"


# ---------------------------------------------------------------------------
# Traversal over the active tree


@dataclass(frozen=True)
class TreeIndex:
    """Rooted-tree view of a circuit's enabled segments."""

    order: tuple[str, ...]  # topological, source first
    parent: dict[str, str | None]
    parent_segment: dict[str, CableSegment]
    children: dict[str, tuple[str, ...]]
    distance_m: dict[str, float]
    depth: dict[str, int]


@functools.lru_cache(maxsize=128)
def tree_index(circuit: Circuit) -> TreeIndex:
    adj: dict[str, list[tuple[str, CableSegment]]] = {n: [] for n in circuit.nodes}
    for seg in circuit.enabled_segments():
        adj[seg.from_node].append((seg.to_node, seg))
        adj[seg.to_node].append((seg.from_node, seg))

    order: list[str] = [circuit.source]
    parent: dict[str, str | None] = {circuit.source: None}
    parent_segment: dict[str, CableSegment] = {}
    children: dict[str, list[str]] = {n: [] for n in circuit.nodes}
    distance: dict[str, float] = {circuit.source: 0.0}
    depth: dict[str, int] = {circuit.source: 0}
    queue = deque([circuit.source])
    while queue:
        node = queue.popleft()
        for neigh, seg in adj[node]:
            if neigh in parent:
                continue
            parent[neigh] = node
            parent_segment[neigh] = seg
            children[node].append(neigh)
            distance[neigh] = distance[node] + seg.length_m
            depth[neigh] = depth[node] + 1
            order.append(neigh)
            queue.append(neigh)
    return TreeIndex(
        order=tuple(order),
        parent=parent,
        parent_segment=parent_segment,
        children={n: tuple(c) for n, c in children.items()},
        distance_m=distance,
        depth=depth,
    )


def path_nodes(circuit: Circuit, node: str) -> tuple[str, ...]:
    """Nodes on the unique source->node path, source first, node last."""
    index = tree_index(circuit)
    if node not in index.parent:
        raise CircuitError(f"node {node!r} unreachable from source")
    path = []
    cursor: str | None = node
    while cursor is not None:
        path.append(cursor)
        cursor = index.parent[cursor]
    return tuple(reversed(path))


def path_distance(circuit: Circuit, node: str) -> float:
    """Cable metres along the unique tree path from the source to ``node``."""
    index = tree_index(circuit)
    if node not in index.distance_m:
        raise CircuitError(f"node {node!r} unreachable from source")
    return index.distance_m[node]


def households_upstream(circuit: Circuit, node: str) -> int:
    """Households of all CCPs on the source->node path, endpoint inclusive.

    Side branches hanging off the path do not count; only the loading that
    shares the path's cables contributes to the drop at ``node``.
    """
    on_path = set(path_nodes(circuit, node))
    return sum(c.households for c in circuit.ccps if c.node in on_path)


def path_distance_between(circuit: Circuit, a: str, b: str) -> float:
    """Tree-path metres between two nodes (via their lowest common ancestor)."""
    index = tree_index(circuit)
    for node in (a, b):
        if node not in index.parent:
            raise CircuitError(f"node {node!r} unreachable from source")
    na, nb = a, b
    while index.depth[na] > index.depth[nb]:
        na = index.parent[na]
    while index.depth[nb] > index.depth[na]:
        nb = index.parent[nb]
    while na != nb:
        na = index.parent[na]
        nb = index.parent[nb]
    lca = na
    return index.distance_m[a] + index.distance_m[b] - 2.0 * index.distance_m[lca]


# ---------------------------------------------------------------------------
# Topology options

MAX_ENUMERATED_SWITCHES = 16


def effective_topology(circuit: Circuit, states: Sequence[str]) -> Circuit:
    """Circuit with switch states replaced by ``states`` (aligned with
    ``circuit.switches``), validated as a radial topology spanning all CCPs."""
    if len(states) != len(circuit.switches):
        raise CircuitError(
            f"expected {len(circuit.switches)} switch states, got {len(states)}"
        )
    for state in states:
        if state not in SWITCH_STATES:
            raise CircuitError(f"invalid switch state {state!r}")
    switches = tuple(replace(sw, state=state) for sw, state in zip(circuit.switches, states))
    return validate_circuit(replace(circuit, switches=switches))


def enumerate_topology_options(circuit: Circuit) -> list[tuple[str, ...]]:
    """All switch-state assignments that yield a valid radial topology.

    Assignments align with ``circuit.switches``; the result is ordered
    lexicographically over switches sorted by (kind, from, to), with
    "closed" before "open".
    """
    k = len(circuit.switches)
    if k > MAX_ENUMERATED_SWITCHES:
        raise CircuitError(f"too many switches to enumerate ({k} > {MAX_ENUMERATED_SWITCHES})")
    options = []
    for states in itertools.product(SWITCH_STATES, repeat=k):
        try:
            effective_topology(circuit, states)
        except CircuitError:
            continue
        options.append(states)
    rank = sorted(range(k), key=lambda i: (circuit.switches[i].kind,) + circuit.switches[i].key)
    options.sort(key=lambda states: tuple(states[i] for i in rank))
    return options
