"""JSON readers and writers for markets, claims, measure families and sequences."""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Union

import numpy as np

from .halmos_savage import FiniteMeasureFamily
from .market import ConsistentPriceSystem, EventTree, FiniteMarket, TradingStrategy, require_valid
from .sequence import MarketSequence

PathLike = Union[str, Path]


class FormatError(ValueError):
    """Input file is not in the expected shape."""


def _read(path: PathLike) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from None


def _need(obj: dict, key: str, where: str):
    if not isinstance(obj, dict) or key not in obj:
        raise FormatError(f"{where}: missing key {key!r}")
    return obj[key]


def market_from_dict(data: dict, where: str = "market") -> FiniteMarket:
    nodes = _need(data, "nodes", where)
    if not isinstance(nodes, list) or not nodes:
        raise FormatError(f"{where}: 'nodes' must be a nonempty array")
    n = len(nodes)
    parent = np.full(n, -2, dtype=int)
    time = np.zeros(n, dtype=int)
    price = np.zeros(n)
    for k, node in enumerate(nodes):
        nid = _need(node, "id", f"{where} node {k}")
        if not isinstance(nid, int) or not 0 <= nid < n or parent[nid] != -2:
            raise FormatError(f"{where}: node ids must be distinct integers 0..{n - 1}, got {nid!r}")
        par = _need(node, "parent", f"{where} node {nid}")
        parent[nid] = -1 if par is None else int(par)
        time[nid] = int(_need(node, "time", f"{where} node {nid}"))
        price[nid] = float(_need(node, "price", f"{where} node {nid}"))
    tree = EventTree(parent, time)
    horizon = data.get("horizon")
    if horizon is not None and int(horizon) != tree.horizon:
        raise FormatError(f"{where}: horizon {horizon} but the deepest node is at time {tree.horizon}")
    probs = _need(data, "leaf_probs", where)
    if not isinstance(probs, dict):
        raise FormatError(f"{where}: 'leaf_probs' must map leaf id to probability")
    leaf_ids = {int(v) for v in tree.leaves}
    given = {int(k): float(v) for k, v in probs.items()}
    if set(given) != leaf_ids:
        raise FormatError(f"{where}: leaf_probs keys {sorted(given)} differ from leaves {sorted(leaf_ids)}")
    p = np.array([given[int(v)] for v in tree.leaves])
    lam = float(data.get("lambda", 0.0))
    return FiniteMarket(tree, p, price, lam)


def load_market(path: PathLike, validate: bool = True) -> FiniteMarket:
    market = market_from_dict(_read(path), str(path))
    if validate:
        require_valid(market)
    return market


def market_to_dict(market: FiniteMarket) -> dict:
    tree = market.tree
    return {
        "horizon": tree.horizon,
        "nodes": [
            {"id": i, "parent": None if tree.parent[i] < 0 else int(tree.parent[i]),
             "time": int(tree.time[i]), "price": float(market.price[i])}
            for i in range(tree.n_nodes)
        ],
        "leaf_probs": {str(int(v)): float(p) for v, p in zip(tree.leaves, market.leaf_prob)},
        "lambda": market.lam,
    }


def save_market(market: FiniteMarket, path: PathLike) -> None:
    Path(path).write_text(json.dumps(market_to_dict(market), indent=2) + "\n", encoding="utf-8")


def load_claim(path: PathLike, market: FiniteMarket) -> np.ndarray:
    data = _read(path)
    if not isinstance(data, dict):
        raise FormatError(f"{path}: claim must map leaf id to payoff")
    given = {int(k): float(v) for k, v in data.items()}
    leaves = [int(v) for v in market.tree.leaves]
    if set(given) != set(leaves):
        raise FormatError(f"{path}: claim keys {sorted(given)} differ from leaves {leaves}")
    return np.array([given[v] for v in leaves])


def load_family(path: PathLike) -> FiniteMeasureFamily:
    data = _read(path)
    return FiniteMeasureFamily(np.asarray(_need(data, "p", str(path)), dtype=float),
                               np.asarray(_need(data, "generators", str(path)), dtype=float))


def load_sequence(path: PathLike) -> MarketSequence:
    """JSON array of {"market": path, "lambda": float}; paths relative to the file."""
    data = _read(path)
    if not isinstance(data, list) or not data:
        raise FormatError(f"{path}: sequence must be a nonempty array")
    base = Path(path).parent
    markets, lambdas, labels = [], [], []
    for k, entry in enumerate(data):
        rel = _need(entry, "market", f"{path} entry {k}")
        market = load_market(base / rel, validate=False)
        lam = float(entry.get("lambda", market.lam))
        markets.append(market.with_lambda(lam))
        lambdas.append(lam)
        labels.append(str(entry.get("label", k + 1)))
    return MarketSequence(markets, lambdas, labels)


# -- output ------------------------------------------------------------------------

def jsonable(x: Any) -> Any:
    """Plain JSON types; non-finite floats become the strings "inf", "-inf", "nan"."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def dumps(obj: Any) -> str:
    return json.dumps(jsonable(obj), indent=2) + "\n"


def node_map(tree: EventTree, values) -> dict[str, float]:
    return {str(i): float(v) for i, v in enumerate(values)}


def leaf_map(tree: EventTree, values) -> dict[str, float]:
    return {str(int(v)): float(x) for v, x in zip(tree.leaves, values)}


def cps_to_dict(cps: ConsistentPriceSystem) -> dict:
    tree = cps.measure.tree
    return {
        "leaf_weights": leaf_map(tree, cps.measure.leaf_weight),
        "shadow_price": node_map(tree, cps.shadow),
        "martingale_residual": cps.martingale_residual(),
    }


def strategy_to_dict(strategy: TradingStrategy) -> dict:
    tree = strategy.tree
    return {
        "initial_bond": strategy.initial_bond,
        "buy": node_map(tree, strategy.buy1),
        "sell": node_map(tree, strategy.sell1),
        "bond_change": node_map(tree, strategy.delta0),
        "bond": node_map(tree, strategy.phi0),
        "stock": node_map(tree, strategy.phi1),
    }
