"""Run configuration files: strict JSON schemas with line-anchored diagnostics.

A run config is a JSON object::

    {
      "seed": 7,
      "topology": "topology.json",      # optional, relative to the config file
      "workload": {"n_ends": 10, ...},  # WorkloadSpec fields except the seed
      "services": [...],                # optional, needs "topology"
      "script": [...],                  # optional explicit events
      "pricing": {"default": {...}, "operators": {"cloud-op": {...}}},
      "peering": [{"home": "a", "foreign": "b", "share": 0.3}],
      "naming": {"ttl_ms": 500, "cache_bound": 4096},
      "mobility": {"reassociation_ms": 20, "grace_ms": 50, "dwell_ms": 100, "migration": true},
      "placement": {"max_sources": 2},
      "end_funds": 100000,
      "output_dir": "out"
    }

Every error is reported as ``file:line: path: message``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields, replace
from json.decoder import scanstring
from typing import Optional

import jsonschema

from .cloudos import PricingParams
from .errors import ConfigError, InvalidSpec, ParseError, SchemaError, TopologyError
from .harness.scenario import ScenarioConfig
from .harness.workload import MOBILITY_MODELS, WorkloadEvent, WorkloadSpec
from .model import RESOURCE_TYPES, NodeKind, ResourceVector, ServiceDescriptor, Topology

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_count = {"type": "integer", "minimum": 1}


def _pair(item):
    return {"type": "array", "items": item, "minItems": 2, "maxItems": 2}


def _obj(properties: dict, required=()) -> dict:
    return {"type": "object", "properties": properties, "required": list(required),
            "additionalProperties": False}


_resources = {
    "oneOf": [
        _obj({k: {"type": "integer", "minimum": 0} for k in RESOURCE_TYPES}),
        {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 3, "maxItems": 3},
    ]
}

_triple = {"type": "array", "items": _nonneg, "minItems": 3, "maxItems": 3}

_pricing_params = _obj({
    "base": {"oneOf": [_nonneg, _triple]},
    "alpha": _nonneg,
    "cap": {"oneOf": [_pos, _triple]},
})

TOPOLOGY_SCHEMA = _obj({
    "nodes": {"type": "array", "minItems": 1, "items": _obj({
        "id": {"type": "string", "minLength": 1},
        "kind": {"enum": [k.value for k in NodeKind]},
        "operator": {"type": "string", "minLength": 1},
        "capacity": _resources,
        "position": _pair(_num),
        "bandwidth": _pos,
    }, required=("id", "kind"))},
    "links": {"type": "array", "items": _obj({
        "a": {"type": "string"},
        "b": {"type": "string"},
        "latency_ms": _pos,
        "bandwidth": _pos,
    }, required=("a", "b", "latency_ms"))},
    "attachments": {"type": "array", "items": _obj({
        "end": {"type": "string"},
        "ap": {"type": "string"},
    }, required=("end", "ap"))},
}, required=("nodes",))

WORKLOAD_SCHEMA = _obj({
    "n_ends": _count,
    "horizon_s": _pos,
    "field_m": _pair(_pos),
    "ap_grid": _pair(_count),
    "edge_grid": _pair(_count),
    "n_cores": _count,
    "ap_edge_ms": _pos,
    "edge_edge_ms": _pos,
    "edge_core_ms": _pos,
    "core_core_ms": _pos,
    "access_bw": _pos,
    "edge_edge_bw": _pos,
    "edge_core_bw": _pos,
    "core_core_bw": _pos,
    "edge_egress_bw": _pos,
    "edge_capacity": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 3, "maxItems": 3},
    "core_capacity": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 3, "maxItems": 3},
    "mobility": {"enum": list(MOBILITY_MODELS)},
    "speed_mps": _pair(_pos),
    "pause_s": _pair(_nonneg),
    "scan_ms": _pos,
    "request_rate": _nonneg,
    "size_chunks": _pair(_count),
    "n_services": _count,
    "edge_replica_prob": {"type": "number", "minimum": 0, "maximum": 1},
    "chunk_size": _count,
})

RUN_SCHEMA = _obj({
    "seed": {"type": "integer"},
    "topology": {"type": "string", "minLength": 1},
    "workload": WORKLOAD_SCHEMA,
    "services": {"type": "array", "minItems": 1, "items": _obj({
        "name": {"type": "string", "minLength": 1},
        "replicas": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "size": {"type": "integer", "minimum": 1},
        "demand": _resources,
        "origin": {"type": "string"},
    }, required=("name", "replicas", "size"))},
    "script": {"type": "array", "items": _obj({
        "t_ms": _nonneg,
        "end": {"type": "string", "minLength": 1},
        "op": {"enum": ["attach", "handoff", "request"]},
        "ap": {"type": "string"},
        "service": {"type": "string"},
        "nbytes": {"type": "integer", "minimum": 1},
    }, required=("t_ms", "end", "op"))},
    "pricing": _obj({
        "default": _pricing_params,
        "operators": {"type": "object", "additionalProperties": _pricing_params},
    }),
    "peering": {"type": "array", "items": _obj({
        "home": {"type": "string"},
        "foreign": {"type": "string"},
        "share": {"type": "number", "minimum": 0, "maximum": 1},
    }, required=("home", "foreign", "share"))},
    "naming": _obj({"ttl_ms": _pos, "cache_bound": _count}),
    "mobility": _obj({
        "reassociation_ms": _nonneg,
        "grace_ms": _nonneg,
        "dwell_ms": _nonneg,
        "migration": {"type": "boolean"},
    }),
    "placement": _obj({"max_sources": _count}),
    "end_funds": _nonneg,
    "output_dir": {"type": "string", "minLength": 1},
}, required=("seed",))


# locating values in the source text


def _skip_ws(text: str, i: int) -> int:
    while i < len(text) and text[i] in " \t\r\n":
        i += 1
    return i


def index_positions(text: str) -> tuple:
    """``(values, keys)``: path -> offset of each value, and of each object key.

    ``text`` must already be valid JSON.
    """
    values, keys = {}, {}
    decoder = json.JSONDecoder()

    def walk(i: int, path: tuple) -> int:
        i = _skip_ws(text, i)
        values[path] = i
        c = text[i]
        if c == "{":
            i = _skip_ws(text, i + 1)
            if text[i] == "}":
                return i + 1
            while True:
                key_at = i
                key, i = scanstring(text, i + 1)
                keys[path + (key,)] = key_at
                i = _skip_ws(text, i) + 1  # ':'
                i = _skip_ws(text, walk(i, path + (key,)))
                if text[i] == "}":
                    return i + 1
                i = _skip_ws(text, i + 1)  # ','
        if c == "[":
            i = _skip_ws(text, i + 1)
            if text[i] == "]":
                return i + 1
            n = 0
            while True:
                i = _skip_ws(text, walk(i, path + (n,)))
                n += 1
                if text[i] == "]":
                    return i + 1
                i += 1
        _, end = decoder.raw_decode(text, i)
        return end

    walk(0, ())
    return values, keys


def _line_of(text: str, offset: int) -> int:
    return text.count("\n", 0, offset) + 1


def _fmt_path(path) -> str:
    return "/".join(str(p) for p in path) or "<root>"


class SourceFile:
    """A parsed JSON file that can point back at the line of any value."""

    def __init__(self, path: str, text: str):
        self.path = path
        self.text = text
        try:
            self.data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
        self._values, self._keys = index_positions(text)

    @classmethod
    def read(cls, path: str) -> "SourceFile":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls(path, fh.read())
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read: {exc.strerror}") from None

    def line(self, path: tuple, key: bool = False) -> int:
        table = self._keys if key else self._values
        while path not in table and path:
            path = path[:-1]
            table = self._values
        return _line_of(self.text, table.get(path, 0))

    def diag(self, path: tuple, message: str, key: bool = False) -> str:
        return f"{self.path}:{self.line(tuple(path), key)}: {_fmt_path(path)}: {message}"


def schema_errors(source: SourceFile, schema: dict) -> list:
    validator = jsonschema.Draft202012Validator(schema)
    out = []
    for err in sorted(validator.iter_errors(source.data), key=lambda e: [str(p) for p in e.absolute_path]):
        path = tuple(err.absolute_path)
        if err.validator == "additionalProperties" and isinstance(err.instance, dict):
            allowed = set(err.schema.get("properties", {}))
            for extra in sorted(set(err.instance) - allowed):
                out.append(source.diag(path + (extra,), f"unknown key {extra!r}", key=True))
            continue
        if err.validator == "oneOf" and err.context:
            # report the branch that got furthest instead of the generic message
            best = max(err.context, key=lambda e: len(e.absolute_path))
            path = tuple(best.absolute_path)
            out.append(source.diag(path, best.message))
            continue
        out.append(source.diag(path, err.message))
    return out


def check_schema(source: SourceFile, schema: dict) -> None:
    errors = schema_errors(source, schema)
    if errors:
        raise SchemaError(f"{len(errors)} schema error(s) in {source.path}", errors)


# building the typed config


def _pricing(d: dict) -> PricingParams:
    def triple(v, default):
        if v is None:
            return default
        return tuple(float(x) for x in v) if isinstance(v, list) else (float(v),) * 3

    base = PricingParams()
    return PricingParams(triple(d.get("base"), base.base), float(d.get("alpha", base.alpha)),
                         triple(d.get("cap"), base.cap))


@dataclass
class RunConfig:
    """A validated run config and where it came from."""

    path: str
    seed: int
    scenario: ScenarioConfig
    topology_path: Optional[str] = None
    output_dir: Optional[str] = None

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=seed, scenario=self.scenario.with_seed(seed))


def load_topology(path: str) -> Topology:
    source = SourceFile.read(path)
    check_schema(source, TOPOLOGY_SCHEMA)
    try:
        return Topology.from_json(source.data)
    except (TopologyError, ValueError) as exc:
        raise SchemaError(str(exc), [source.diag((), str(exc))]) from None


def load_config(path: str) -> RunConfig:
    """Parse and validate a run config; raises :class:`ConfigError` subclasses."""
    source = SourceFile.read(path)
    check_schema(source, RUN_SCHEMA)
    data = source.data
    diag = source.diag

    topology = None
    topology_path = None
    if "topology" in data:
        topology_path = os.path.join(os.path.dirname(os.path.abspath(path)), data["topology"])
        if not os.path.exists(topology_path):
            msg = f"topology file not found: {data['topology']}"
            raise ConfigError(msg, [diag(("topology",), msg)])
        topology = load_topology(topology_path)

    wl = dict(data.get("workload", {}))
    try:
        spec = WorkloadSpec.from_json({"seed": data["seed"], **wl})
    except InvalidSpec as exc:
        raise SchemaError(str(exc), [diag(("workload",), str(exc))]) from None

    services = None
    if "services" in data:
        if topology is None:
            msg = "services need an explicit topology"
            raise SchemaError(msg, [diag(("services",), msg)])
        services = []
        for k, s in enumerate(data["services"]):
            for r in s["replicas"]:
                if r not in topology.nodes or topology.node(r).kind is NodeKind.ACCESS_POINT:
                    msg = f"replica {r!r} is not a cloud node of the topology"
                    raise SchemaError(msg, [diag(("services", k, "replicas"), msg)])
            try:
                services.append(ServiceDescriptor(
                    s["name"], tuple(s["replicas"]), s["size"],
                    ResourceVector.from_json(s["demand"]) if "demand" in s else ResourceVector(1, 1, 1),
                    origin=s.get("origin"),
                ))
            except ValueError as exc:
                raise SchemaError(str(exc), [diag(("services", k), str(exc))]) from None
        services = tuple(services)

    script = None
    if "script" in data:
        if topology is None or services is None:
            msg = "a script needs an explicit topology and services"
            raise SchemaError(msg, [diag(("script",), msg)])
        names = {s.name for s in services}
        aps = set(topology.access_points)
        script = []
        for k, e in enumerate(data["script"]):
            if e["op"] in ("attach", "handoff") and e.get("ap") not in aps:
                msg = f"{e['op']} needs a known access point, got {e.get('ap')!r}"
                raise SchemaError(msg, [diag(("script", k), msg)])
            if e["op"] == "request" and (e.get("service") not in names or "nbytes" not in e):
                msg = "request needs a known service and nbytes"
                raise SchemaError(msg, [diag(("script", k), msg)])
            script.append(WorkloadEvent.from_json(e))
        script = tuple(script)

    pricing = data.get("pricing", {})
    try:
        default_pricing = _pricing(pricing.get("default", {}))
        operators = {op: _pricing(p) for op, p in pricing.get("operators", {}).items()}
    except ValueError as exc:
        raise SchemaError(str(exc), [diag(("pricing",), str(exc))]) from None
    peering = {(p["home"], p["foreign"]): p["share"] for p in data.get("peering", [])}

    naming = data.get("naming", {})
    mobility = data.get("mobility", {})
    defaults = {f.name: f.default for f in fields(ScenarioConfig)}
    scenario = ScenarioConfig(
        spec,
        topology=topology,
        services=services,
        script=script,
        pricing=operators,
        default_pricing=default_pricing,
        peering=peering,
        ttl_ms=naming.get("ttl_ms", defaults["ttl_ms"]),
        cache_bound=naming.get("cache_bound", defaults["cache_bound"]),
        reassociation_ms=mobility.get("reassociation_ms", defaults["reassociation_ms"]),
        grace_ms=mobility.get("grace_ms", defaults["grace_ms"]),
        dwell_ms=mobility.get("dwell_ms", defaults["dwell_ms"]),
        migration=mobility.get("migration", defaults["migration"]),
        max_sources=data.get("placement", {}).get("max_sources", defaults["max_sources"]),
        end_funds=data.get("end_funds", defaults["end_funds"]),
    )
    out = data.get("output_dir")
    if out is not None:
        out = os.path.join(os.path.dirname(os.path.abspath(path)), out)
    return RunConfig(path, data["seed"], scenario, topology_path, out)
