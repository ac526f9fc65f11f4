"""Demand-supply instance model shared by the planner, policies and simulator.

An instance couples a bipartite targeting graph (ad campaigns x atomic user
types) with per-campaign exposure demands and a user-type arrival
distribution. Campaigns and types are dense zero-based indices; display
names live in the optional ``labels`` map and are never consulted by
algorithms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

PROB_SUM_TOL = 1e-9


class InstanceFormatError(ValueError):
    """Structurally malformed instance data (bad JSON or bad field types)."""

    def __init__(self, message: str, field_name: str | None = None):
        super().__init__(message)
        self.field_name = field_name


class InstanceValidationError(ValueError):
    """Instance parsed fine but violates model invariants."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


@dataclass
class Instance:
    """Problem instance, immutable by convention after construction.

    demands: exposures owed per campaign (all >= 1)
    probs: arrival probability per user type, summing to 1
    edges: targeting pairs (campaign_idx, type_idx), no duplicates
    labels: optional display names, ignored by all algorithms
    """

    demands: tuple[int, ...]
    probs: tuple[float, ...]
    edges: tuple[tuple[int, int], ...]
    labels: dict | None = None

    def __post_init__(self):
        self.demands = tuple(int(w) for w in self.demands)
        self.probs = tuple(float(p) for p in self.probs)
        self.edges = tuple((int(i), int(j)) for i, j in self.edges)

    @property
    def m(self) -> int:
        return len(self.demands)

    @property
    def n(self) -> int:
        return len(self.probs)

    @cached_property
    def total_demand(self) -> int:
        return sum(self.demands)

    @cached_property
    def p_min(self) -> float:
        return min(self.probs)

    @cached_property
    def p_max(self) -> float:
        return max(self.probs)

    @cached_property
    def frac_probs(self) -> tuple[Fraction, ...]:
        """Exact rational view of the stored float probabilities."""
        return tuple(Fraction(p) for p in self.probs)

    @cached_property
    def types_of_campaign(self) -> tuple[tuple[int, ...], ...]:
        """Targeted type indices per campaign, ascending."""
        out: list[list[int]] = [[] for _ in range(self.m)]
        for i, j in self.edges:
            out[i].append(j)
        return tuple(tuple(sorted(js)) for js in out)

    @cached_property
    def campaigns_of_type(self) -> tuple[tuple[int, ...], ...]:
        """Targeting campaign indices per type, ascending (fixes tie order)."""
        out: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in self.edges:
            out[j].append(i)
        return tuple(tuple(sorted(cs)) for cs in out)

    @cached_property
    def edge_index(self) -> dict[tuple[int, int], int]:
        """Position of each edge in ``self.edges``."""
        return {edge: k for k, edge in enumerate(self.edges)}

    @cached_property
    def edge_ids_of_type(self) -> tuple[tuple[int, ...], ...]:
        """Edge positions per type, parallel to ``campaigns_of_type``."""
        idx = self.edge_index
        return tuple(
            tuple(idx[(i, j)] for i in campaigns)
            for j, campaigns in enumerate(self.campaigns_of_type)
        )


def validate(instance: Instance) -> list[str]:
    """Check all model invariants; returns the violations (empty = valid)."""
    violations: list[str] = []
    m, n = instance.m, instance.n

    if m == 0:
        violations.append("no campaigns: at least one campaign is required")
    if n == 0:
        violations.append("no user types: at least one type is required")

    for i, w in enumerate(instance.demands):
        if w < 1:
            violations.append(f"campaign {i}: demand must be >= 1, got {w}")

    for j, p in enumerate(instance.probs):
        if not (0.0 < p <= 1.0):
            violations.append(f"type {j}: probability must be in (0, 1], got {p}")

    if n > 0:
        total = float(sum(instance.probs))
        if abs(total - 1.0) > PROB_SUM_TOL:
            violations.append(f"distribution not normalized: sum={total!r}")

    seen: set[tuple[int, int]] = set()
    degree = [0] * m
    for i, j in instance.edges:
        if not (0 <= i < m) or not (0 <= j < n):
            violations.append(f"edge ({i}, {j}) references an invalid index")
            continue
        if (i, j) in seen:
            violations.append(f"duplicate edge ({i}, {j})")
            continue
        seen.add((i, j))
        degree[i] += 1

    for i, d in enumerate(degree):
        if d == 0:
            violations.append(f"campaign {i}: unreachable campaign (no targeting edges)")

    return violations


def _require(condition: bool, message: str, field_name: str | None = None):
    if not condition:
        raise InstanceFormatError(message, field_name)


def _as_int(value, field_name: str) -> int:
    _require(isinstance(value, int) and not isinstance(value, bool),
             f"field '{field_name}' must be an integer, got {value!r}", field_name)
    return value


def load_instance(data: bytes | str) -> Instance:
    """Parse and validate an instance from its JSON serialization.

    Raises InstanceFormatError on malformed structure (naming the offending
    field and, for JSON syntax errors, the line/column) and
    InstanceValidationError when the parsed instance violates invariants.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(
            f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc

    _require(isinstance(obj, dict), "top-level value must be an object")
    for key in ("m", "n", "demands", "probs", "edges"):
        _require(key in obj, f"missing field '{key}'", key)

    m = _as_int(obj["m"], "m")
    n = _as_int(obj["n"], "n")

    demands = obj["demands"]
    _require(isinstance(demands, list), "field 'demands' must be a list", "demands")
    demands = [_as_int(w, "demands") for w in demands]
    _require(len(demands) == m, f"field 'demands' has {len(demands)} entries, expected m={m}",
             "demands")

    probs = obj["probs"]
    _require(isinstance(probs, list), "field 'probs' must be a list", "probs")
    for p in probs:
        _require(isinstance(p, (int, float)) and not isinstance(p, bool),
                 f"field 'probs' must contain numbers, got {p!r}", "probs")
    _require(len(probs) == n, f"field 'probs' has {len(probs)} entries, expected n={n}", "probs")

    raw_edges = obj["edges"]
    _require(isinstance(raw_edges, list), "field 'edges' must be a list", "edges")
    edges = []
    for entry in raw_edges:
        _require(isinstance(entry, list) and len(entry) == 2,
                 f"field 'edges' entries must be [campaign, type] pairs, got {entry!r}", "edges")
        edges.append((_as_int(entry[0], "edges"), _as_int(entry[1], "edges")))

    labels = obj.get("labels")

    instance = Instance(
        demands=tuple(demands),
        probs=tuple(float(p) for p in probs),
        edges=tuple(edges),
        labels=labels,
    )
    violations = validate(instance)
    if violations:
        raise InstanceValidationError(violations)
    return instance


def save_instance(instance: Instance) -> bytes:
    """Serialize to canonical JSON bytes; load(save(x)) == x for valid x."""
    obj = {
        "m": instance.m,
        "n": instance.n,
        "demands": list(instance.demands),
        "probs": list(instance.probs),
        "edges": [[i, j] for i, j in instance.edges],
    }
    if instance.labels is not None:
        obj["labels"] = instance.labels
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def read_instance_file(path) -> Instance:
    with open(path, "rb") as fh:
        return load_instance(fh.read())


def write_instance_file(instance: Instance, path):
    with open(path, "wb") as fh:
        fh.write(save_instance(instance))
        fh.write(b"\n")
