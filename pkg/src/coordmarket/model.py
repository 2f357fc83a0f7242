"""Supply-chain data model: products, nodes, stakeholders, scenarios.

Everything here is immutable. Datasets are loaded from JSON documents whose
top-level keys are ``products``, ``nodes``, ``suppliers``, ``consumers``,
``transports``, ``technologies`` and ``scenarios`` (plus an optional free-form
``meta`` block). A ``capacity`` of ``null`` means unbounded.
"""
from __future__ import annotations

import json
import math
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Any, Union

INF = math.inf


class ModelError(ValueError):
    """Invalid dataset content. ``path`` points into the source document."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)


@dataclass(frozen=True)
class Product:
    id: str
    unit: str = "t"
    name: str = ""


@dataclass(frozen=True)
class GeoNode:
    id: str
    name: str = ""


@dataclass(frozen=True)
class Supplier:
    id: str
    node: str
    product: str
    bid: float
    capacity: float = INF
    lower: float = 0.0
    tags: tuple[str, ...] = ()
    name: str = ""


@dataclass(frozen=True)
class Consumer:
    id: str
    node: str
    product: str
    bid: float
    capacity: float = INF
    lower: float = 0.0
    tags: tuple[str, ...] = ()
    name: str = ""


@dataclass(frozen=True)
class TransportProvider:
    id: str
    source: str
    sink: str
    product: str
    bid: float
    capacity: float = INF
    lower: float = 0.0
    tags: tuple[str, ...] = ()
    name: str = ""


@dataclass(frozen=True)
class Technology:
    """Conversion process. Bid and capacity are per unit of the reference input."""

    id: str
    node: str
    reference: str
    inputs: tuple[tuple[str, float], ...]
    outputs: tuple[tuple[str, float], ...]
    bid: float
    capacity: float = INF
    lower: float = 0.0
    tags: tuple[str, ...] = ()
    name: str = ""

    @property
    def input_products(self) -> tuple[str, ...]:
        return tuple(p for p, _ in self.inputs)

    @property
    def output_products(self) -> tuple[str, ...]:
        return tuple(p for p, _ in self.outputs)

    def yield_of(self, product: str) -> float:
        for p, g in self.inputs + self.outputs:
            if p == product:
                return g
        raise KeyError(f"{self.id} neither consumes nor produces {product}")


Stakeholder = Union[Supplier, Consumer, TransportProvider, Technology]


@dataclass(frozen=True)
class Scenario:
    """Named set of modifications applied on top of a base model.

    ``beta_policy`` is either ``"default"`` or a mapping
    ``{activator: {target: beta}}`` of explicit revenue shares. ``epsilon`` is
    the per-unit premium used to break ties between a zero-profit cleared
    market and the dry one.
    """

    name: str
    bid_overrides: Mapping[str, float] = field(default_factory=dict)
    capacity_overrides: Mapping[str, float] = field(default_factory=dict)
    forced_lower_bounds: Mapping[str, float] = field(default_factory=dict)
    beta_policy: Any = "default"
    epsilon: float = 0.0
    description: str = ""


@dataclass(frozen=True)
class SupplyChainModel:
    products: tuple[Product, ...] = ()
    nodes: tuple[GeoNode, ...] = ()
    suppliers: tuple[Supplier, ...] = ()
    consumers: tuple[Consumer, ...] = ()
    transports: tuple[TransportProvider, ...] = ()
    technologies: tuple[Technology, ...] = ()
    scenarios: tuple[Scenario, ...] = ()
    meta: Mapping[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        _validate(self)

    # lookups

    @cached_property
    def stakeholders(self) -> dict[str, Stakeholder]:
        out: dict[str, Stakeholder] = {}
        for group in (self.suppliers, self.consumers, self.transports, self.technologies):
            for s in group:
                out[s.id] = s
        return out

    def get(self, sid: str) -> Stakeholder:
        try:
            return self.stakeholders[sid]
        except KeyError:
            raise KeyError(f"unknown stakeholder {sid!r}") from None

    def kind(self, sid: str) -> str:
        return _KIND[type(self.get(sid))]

    def scenario(self, name: str) -> Scenario:
        for sc in self.scenarios:
            if sc.name == name:
                return sc
        raise KeyError(f"unknown scenario {name!r}")

    @cached_property
    def product_ids(self) -> tuple[str, ...]:
        return tuple(p.id for p in self.products)

    @cached_property
    def node_ids(self) -> tuple[str, ...]:
        return tuple(n.id for n in self.nodes)

    # nested index sets keyed by (node, product)

    @cached_property
    def suppliers_at(self) -> dict[tuple[str, str], tuple[str, ...]]:
        return _group(((s.node, s.product), s.id) for s in self.suppliers)

    @cached_property
    def consumers_at(self) -> dict[tuple[str, str], tuple[str, ...]]:
        return _group(((d.node, d.product), d.id) for d in self.consumers)

    @cached_property
    def transports_in(self) -> dict[tuple[str, str], tuple[str, ...]]:
        return _group(((l.sink, l.product), l.id) for l in self.transports)

    @cached_property
    def transports_out(self) -> dict[tuple[str, str], tuple[str, ...]]:
        return _group(((l.source, l.product), l.id) for l in self.transports)

    @cached_property
    def technologies_con(self) -> dict[tuple[str, str], tuple[str, ...]]:
        return _group(((t.node, p), t.id) for t in self.technologies for p in t.input_products)

    @cached_property
    def technologies_gen(self) -> dict[tuple[str, str], tuple[str, ...]]:
        return _group(((t.node, p), t.id) for t in self.technologies for p in t.output_products)

    @cached_property
    def active_pairs(self) -> tuple[tuple[str, str], ...]:
        """(node, product) pairs touched by at least one stakeholder, in dataset order."""
        seen: dict[tuple[str, str], None] = {}
        for idx in (self.suppliers_at, self.consumers_at, self.transports_out,
                    self.transports_in, self.technologies_con, self.technologies_gen):
            for key in idx:
                seen.setdefault(key, None)
        order = {n: i for i, n in enumerate(self.node_ids)}
        porder = {p: i for i, p in enumerate(self.product_ids)}
        return tuple(sorted(seen, key=lambda k: (order[k[0]], porder[k[1]])))

    # sign classes

    @cached_property
    def suppliers_pos(self) -> frozenset[str]:
        return frozenset(s.id for s in self.suppliers if s.bid >= 0)

    @cached_property
    def suppliers_neg(self) -> frozenset[str]:
        return frozenset(s.id for s in self.suppliers if s.bid < 0)

    @cached_property
    def consumers_pos(self) -> frozenset[str]:
        return frozenset(d.id for d in self.consumers if d.bid >= 0)

    @cached_property
    def consumers_neg(self) -> frozenset[str]:
        return frozenset(d.id for d in self.consumers if d.bid < 0)

    @property
    def has_forced_bounds(self) -> bool:
        return any(s.lower > 0 for s in self.stakeholders.values())

    def tagged(self, tag: str) -> tuple[str, ...]:
        return tuple(sid for sid, s in self.stakeholders.items() if tag in s.tags)


_KIND = {Supplier: "supplier", Consumer: "consumer",
         TransportProvider: "transport", Technology: "technology"}


def kind_of(s: Stakeholder) -> str:
    return _KIND[type(s)]


def _group(pairs) -> dict[tuple[str, str], tuple[str, ...]]:
    out: dict[tuple[str, str], list[str]] = {}
    for key, sid in pairs:
        out.setdefault(key, []).append(sid)
    return {k: tuple(v) for k, v in out.items()}


# validation


def _check_number(path: str, value: Any, *, allow_inf: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ModelError(path, f"expected a number, got {type(value).__name__}")
    value = float(value)
    if math.isnan(value) or (math.isinf(value) and not allow_inf):
        raise ModelError(path, "must be finite")
    return value


def _validate(m: SupplyChainModel) -> None:
    products = set()
    for k, p in enumerate(m.products):
        if not p.id:
            raise ModelError(f"products[{k}].id", "empty id")
        if p.id in products:
            raise ModelError(f"products[{k}].id", f"duplicate product {p.id!r}")
        products.add(p.id)
    nodes = set()
    for k, n in enumerate(m.nodes):
        if n.id in nodes:
            raise ModelError(f"nodes[{k}].id", f"duplicate node {n.id!r}")
        nodes.add(n.id)

    seen: set[str] = set()

    def common(path: str, s: Stakeholder) -> None:
        if not s.id:
            raise ModelError(f"{path}.id", "empty id")
        if s.id in seen:
            raise ModelError(f"{path}.id", f"duplicate stakeholder {s.id!r}")
        seen.add(s.id)
        _check_number(f"{path}.bid", s.bid)
        cap = _check_number(f"{path}.capacity", s.capacity, allow_inf=True)
        if cap < 0:
            raise ModelError(f"{path}.capacity", "capacity must be >= 0")
        lo = _check_number(f"{path}.lower", s.lower)
        if lo < 0:
            raise ModelError(f"{path}.lower", "forced lower bound must be >= 0")
        if lo > cap:
            raise ModelError(f"{path}.lower", f"forced lower bound {lo} exceeds capacity {cap}")

    def node_ref(path: str, n: str) -> None:
        if n not in nodes:
            raise ModelError(path, f"unknown node {n!r}")

    def product_ref(path: str, p: str) -> None:
        if p not in products:
            raise ModelError(path, f"unknown product {p!r}")

    for group, name in ((m.suppliers, "suppliers"), (m.consumers, "consumers")):
        for k, s in enumerate(group):
            path = f"{name}[{k}]"
            common(path, s)
            node_ref(f"{path}.node", s.node)
            product_ref(f"{path}.product", s.product)
    for k, l in enumerate(m.transports):
        path = f"transports[{k}]"
        common(path, l)
        node_ref(f"{path}.source", l.source)
        node_ref(f"{path}.sink", l.sink)
        if l.source == l.sink:
            raise ModelError(f"{path}.sink", "source and sink must differ")
        product_ref(f"{path}.product", l.product)
    for k, t in enumerate(m.technologies):
        path = f"technologies[{k}]"
        common(path, t)
        node_ref(f"{path}.node", t.node)
        if not t.inputs:
            raise ModelError(f"{path}.inputs", "a technology needs at least one input")
        for side in ("inputs", "outputs"):
            names = set()
            for q, (p, g) in enumerate(getattr(t, side)):
                product_ref(f"{path}.{side}[{q}].product", p)
                if p in names:
                    raise ModelError(f"{path}.{side}[{q}].product", f"repeated product {p!r}")
                names.add(p)
                if _check_number(f"{path}.{side}[{q}].gamma", g) <= 0:
                    raise ModelError(f"{path}.{side}[{q}].gamma", "yield must be > 0")
        both = set(t.input_products) & set(t.output_products)
        if both:
            raise ModelError(f"{path}.outputs", f"products both consumed and produced: {sorted(both)}")
        if t.reference not in t.input_products:
            raise ModelError(f"{path}.reference", "reference product must be an input")
        if t.yield_of(t.reference) != 1.0:
            raise ModelError(f"{path}.reference", "reference yield must equal 1")

    names = set()
    for k, sc in enumerate(m.scenarios):
        if sc.name in names:
            raise ModelError(f"scenarios[{k}].name", f"duplicate scenario {sc.name!r}")
        names.add(sc.name)
        _check_scenario(m, sc, f"scenarios[{k}]", seen)


def _check_scenario(m: SupplyChainModel, sc: Scenario, path: str, ids) -> None:
    for key in ("bid_overrides", "capacity_overrides", "forced_lower_bounds"):
        for sid, v in getattr(sc, key).items():
            if sid not in ids:
                raise ModelError(f"{path}.{key}.{sid}", f"unknown stakeholder {sid!r}")
            _check_number(f"{path}.{key}.{sid}", v, allow_inf=key == "capacity_overrides")
    by_id = {s.id: s for g in (m.suppliers, m.consumers, m.transports, m.technologies) for s in g}
    for sid, lo in sc.forced_lower_bounds.items():
        cap = sc.capacity_overrides.get(sid, by_id[sid].capacity)
        if lo < 0 or lo > cap:
            raise ModelError(f"{path}.forced_lower_bounds.{sid}",
                             f"forced bound {lo} outside [0, capacity {cap}]")
    if isinstance(sc.beta_policy, Mapping):
        for u, row in sc.beta_policy.items():
            if u not in ids:
                raise ModelError(f"{path}.beta_policy.{u}", f"unknown stakeholder {u!r}")
            for v, b in row.items():
                if v not in ids:
                    raise ModelError(f"{path}.beta_policy.{u}.{v}", f"unknown stakeholder {v!r}")
                if not 0.0 <= float(b) <= 1.0:
                    raise ModelError(f"{path}.beta_policy.{u}.{v}", "share must lie in [0, 1]")
    elif sc.beta_policy not in ("default", "single-activator", "pilot-proportional"):
        raise ModelError(f"{path}.beta_policy", f"unknown policy {sc.beta_policy!r}")


# scenario application


def apply_scenario(model: SupplyChainModel, scenario: Scenario | str) -> SupplyChainModel:
    """Return a new model with the scenario's overrides and forced bounds applied.

    The scenario list is carried over unchanged so the result can be
    serialised and reloaded like the input.
    """
    if isinstance(scenario, str):
        scenario = model.scenario(scenario)
    ids = set(model.stakeholders)
    _check_scenario(model, scenario, f"scenario {scenario.name!r}", ids)

    def patch(s):
        changes = {}
        if s.id in scenario.bid_overrides:
            changes["bid"] = float(scenario.bid_overrides[s.id])
        if s.id in scenario.capacity_overrides:
            changes["capacity"] = float(scenario.capacity_overrides[s.id])
        if s.id in scenario.forced_lower_bounds:
            changes["lower"] = float(scenario.forced_lower_bounds[s.id])
        return replace(s, **changes) if changes else s

    return replace(
        model,
        suppliers=tuple(patch(s) for s in model.suppliers),
        consumers=tuple(patch(s) for s in model.consumers),
        transports=tuple(patch(s) for s in model.transports),
        technologies=tuple(patch(s) for s in model.technologies),
    )


def with_bids(model: SupplyChainModel, bids: Mapping[str, float]) -> SupplyChainModel:
    return apply_scenario(model, Scenario("_bids", bid_overrides=dict(bids)))


# JSON io


def _req(doc: Mapping, key: str, path: str) -> Any:
    if not isinstance(doc, Mapping):
        raise ModelError(path, "expected an object")
    if key not in doc:
        raise ModelError(f"{path}.{key}", "missing field")
    return doc[key]


def _str(doc: Mapping, key: str, path: str) -> str:
    v = _req(doc, key, path)
    if not isinstance(v, str):
        raise ModelError(f"{path}.{key}", "expected a string")
    return v


def _cap(doc: Mapping, path: str) -> float:
    v = doc.get("capacity")
    if v is None:
        return INF
    return _check_number(f"{path}.capacity", v)


def _list(doc: Mapping, key: str) -> list:
    v = doc.get(key, [])
    if not isinstance(v, list):
        raise ModelError(key, "expected a list")
    return v


def _yields(raw: Any, path: str) -> tuple[tuple[str, float], ...]:
    if not isinstance(raw, list):
        raise ModelError(path, "expected a list of {product, gamma}")
    out = []
    for q, item in enumerate(raw):
        p = _str(item, "product", f"{path}[{q}]")
        g = _check_number(f"{path}[{q}].gamma", _req(item, "gamma", f"{path}[{q}]"))
        out.append((p, g))
    return tuple(out)


def _common(doc: Mapping, path: str) -> dict[str, Any]:
    tags = doc.get("tags", [])
    if not isinstance(tags, list) or not all(isinstance(t, str) for t in tags):
        raise ModelError(f"{path}.tags", "expected a list of strings")
    return dict(
        id=_str(doc, "id", path),
        bid=_check_number(f"{path}.bid", _req(doc, "bid", path)),
        capacity=_cap(doc, path),
        lower=_check_number(f"{path}.lower", doc.get("lower", 0.0)),
        tags=tuple(tags),
        name=doc.get("name", ""),
    )


def _scenario(doc: Mapping, path: str) -> Scenario:
    def mapping(key: str) -> dict[str, float]:
        raw = doc.get(key, {})
        if not isinstance(raw, Mapping):
            raise ModelError(f"{path}.{key}", "expected an object")
        out = {}
        for sid, v in raw.items():
            if key == "capacity_overrides" and v is None:
                out[sid] = INF
            else:
                out[sid] = _check_number(f"{path}.{key}.{sid}", v)
        return out

    policy = doc.get("beta_policy", "default")
    if isinstance(policy, Mapping):
        policy = {u: dict(row) for u, row in policy.items()}
    return Scenario(
        name=_str(doc, "name", path),
        bid_overrides=mapping("bid_overrides"),
        capacity_overrides=mapping("capacity_overrides"),
        forced_lower_bounds=mapping("forced_lower_bounds"),
        beta_policy=policy,
        epsilon=_check_number(f"{path}.epsilon", doc.get("epsilon", 0.0)),
        description=doc.get("description", ""),
    )


def model_from_dict(doc: Mapping[str, Any]) -> SupplyChainModel:
    if not isinstance(doc, Mapping):
        raise ModelError("", "dataset must be a JSON object")
    products = tuple(
        Product(_str(p, "id", f"products[{k}]"), p.get("unit", "t"), p.get("name", ""))
        for k, p in enumerate(_list(doc, "products"))
    )
    nodes = tuple(
        GeoNode(_str(n, "id", f"nodes[{k}]"), n.get("name", ""))
        for k, n in enumerate(_list(doc, "nodes"))
    )
    suppliers = tuple(
        Supplier(node=_str(s, "node", f"suppliers[{k}]"),
                 product=_str(s, "product", f"suppliers[{k}]"),
                 **_common(s, f"suppliers[{k}]"))
        for k, s in enumerate(_list(doc, "suppliers"))
    )
    consumers = tuple(
        Consumer(node=_str(s, "node", f"consumers[{k}]"),
                 product=_str(s, "product", f"consumers[{k}]"),
                 **_common(s, f"consumers[{k}]"))
        for k, s in enumerate(_list(doc, "consumers"))
    )
    transports = tuple(
        TransportProvider(source=_str(s, "source", f"transports[{k}]"),
                          sink=_str(s, "sink", f"transports[{k}]"),
                          product=_str(s, "product", f"transports[{k}]"),
                          **_common(s, f"transports[{k}]"))
        for k, s in enumerate(_list(doc, "transports"))
    )
    techs = []
    for k, t in enumerate(_list(doc, "technologies")):
        path = f"technologies[{k}]"
        inputs = _yields(_req(t, "inputs", path), f"{path}.inputs")
        ref = t.get("reference", inputs[0][0] if inputs else "")
        techs.append(Technology(node=_str(t, "node", path), reference=ref, inputs=inputs,
                                outputs=_yields(t.get("outputs", []), f"{path}.outputs"),
                                **_common(t, path)))
    scenarios = tuple(_scenario(s, f"scenarios[{k}]") for k, s in enumerate(_list(doc, "scenarios")))
    meta = doc.get("meta", {})
    return SupplyChainModel(products, nodes, suppliers, consumers, transports, tuple(techs),
                            scenarios, meta)


def load_model(source: Mapping[str, Any] | str | Path) -> SupplyChainModel:
    """Load and validate a dataset from a dict, a file path or JSON text."""
    if isinstance(source, Mapping):
        return model_from_dict(source)
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"line {exc.lineno}", f"invalid JSON: {exc.msg}") from None
    return model_from_dict(doc)


def _num(x: float) -> float | None:
    return None if math.isinf(x) else x


def model_to_dict(model: SupplyChainModel) -> dict[str, Any]:
    def base(s) -> dict[str, Any]:
        d: dict[str, Any] = {"id": s.id}
        if s.name:
            d["name"] = s.name
        return d

    def tail(s, d: dict[str, Any]) -> dict[str, Any]:
        d["bid"] = s.bid
        d["capacity"] = _num(s.capacity)
        if s.lower:
            d["lower"] = s.lower
        if s.tags:
            d["tags"] = list(s.tags)
        return d

    out: dict[str, Any] = {
        "products": [{"id": p.id, "unit": p.unit, **({"name": p.name} if p.name else {})}
                     for p in model.products],
        "nodes": [{"id": n.id, **({"name": n.name} if n.name else {})} for n in model.nodes],
        "suppliers": [tail(s, {**base(s), "node": s.node, "product": s.product})
                      for s in model.suppliers],
        "consumers": [tail(s, {**base(s), "node": s.node, "product": s.product})
                      for s in model.consumers],
        "transports": [tail(s, {**base(s), "source": s.source, "sink": s.sink,
                                "product": s.product}) for s in model.transports],
        "technologies": [
            tail(t, {**base(t), "node": t.node, "reference": t.reference,
                     "inputs": [{"product": p, "gamma": g} for p, g in t.inputs],
                     "outputs": [{"product": p, "gamma": g} for p, g in t.outputs]})
            for t in model.technologies
        ],
        "scenarios": [
            {
                "name": sc.name,
                **({"description": sc.description} if sc.description else {}),
                "bid_overrides": dict(sc.bid_overrides),
                "capacity_overrides": {k: _num(v) for k, v in sc.capacity_overrides.items()},
                "forced_lower_bounds": dict(sc.forced_lower_bounds),
                "beta_policy": sc.beta_policy,
                **({"epsilon": sc.epsilon} if sc.epsilon else {}),
            }
            for sc in model.scenarios
        ],
    }
    if model.meta:
        out["meta"] = model.meta
    return out


def dump_model(model: SupplyChainModel, path: str | Path | None = None) -> str:
    text = json.dumps(model_to_dict(model), indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
