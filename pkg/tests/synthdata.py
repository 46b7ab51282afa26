"""Deterministic synthetic data built on the package's own PRNG.

Everything here derives from SplitMix64 so the generated bytes are identical
on every platform and numpy version — the suite freezes expected values
against these exact streams.
"""

import math

import numpy as np

from hafcp.dataset import (CATEGORICAL, LABEL, NUMERIC, ColumnSchema,
                           ColumnarDataset)
from hafcp.miner import BINARY, MEMBERSHIP, ProfitTable, TransactionDB
from hafcp.rng import SplitMix64


def sm_uniform(r: SplitMix64) -> float:
    """Uniform in [0,1) with 53 random mantissa bits."""
    return (r.next_u64() >> 11) * 2.0 ** -53


def sm_normal(r: SplitMix64) -> float:
    """Standard normal via Box-Muller (one draw per call)."""
    u1 = sm_uniform(r)
    u2 = sm_uniform(r)
    return math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(2.0 * math.pi * u2)


def make_sample(dist: str, n: int, seed: int) -> list[float]:
    r = SplitMix64(seed)
    if dist == "normal":
        return [sm_normal(r) for _ in range(n)]
    if dist == "uniform":
        return [sm_uniform(r) for _ in range(n)]
    if dist == "exponential":
        return [-math.log(1.0 - sm_uniform(r)) for _ in range(n)]
    if dist == "lognormal":
        return [math.exp(0.5 * sm_normal(r)) for _ in range(n)]
    if dist == "bimodal":
        return [sm_normal(r) + (3.0 if sm_uniform(r) < 0.5 else -3.0)
                for _ in range(n)]
    raise ValueError(dist)


def random_db(seed: int, max_items: int = 12, max_transactions: int = 50
              ) -> tuple[TransactionDB, ProfitTable]:
    """Random mining instance: items a..l, random profits in [0,1]."""
    r = SplitMix64(seed)
    n_items = 2 + r.below(max_items - 1)  # 2..max_items
    n_trans = 1 + r.below(max_transactions)
    items = [chr(ord("a") + i) for i in range(n_items)]
    profits = {name: sm_uniform(r) for name in items}
    mode = BINARY if r.below(2) == 0 else MEMBERSHIP
    transactions = []
    for _ in range(n_trans):
        txn = {}
        for i in range(n_items):
            if sm_uniform(r) < 0.4:
                txn[i] = sm_uniform(r) if mode == MEMBERSHIP else 1.0
        if not txn:
            txn[r.below(n_items)] = 1.0 if mode == BINARY else sm_uniform(r)
        transactions.append(txn)
    db = TransactionDB(items=items, transactions=transactions, mode=mode)
    return db, ProfitTable(profits=profits)


def planted_dataset(n: int = 2000, seed: int = 424243) -> ColumnarDataset:
    """Churn rule planted in two numeric features, 5% label noise.

    UsageA and SpendB are uniform on [0,100); churn is (A < 25) and
    (25 < B < 75), XOR a 5% random flip. NoiseC (gaussian) and Region
    (4 categories) are distractors.
    """
    r = SplitMix64(seed)
    usage = np.array([sm_uniform(r) * 100.0 for _ in range(n)])
    spend = np.array([sm_uniform(r) * 100.0 for _ in range(n)])
    noise = np.array([50.0 + 10.0 * sm_normal(r) for _ in range(n)])
    region = np.array([r.below(4) for _ in range(n)], dtype=np.int64)
    rule = (usage < 25.0) & (spend > 25.0) & (spend < 75.0)
    flip = np.array([sm_uniform(r) < 0.05 for _ in range(n)])
    labels = (rule ^ flip).astype(np.int64)
    schema = [
        ColumnSchema("Region", CATEGORICAL, ("north", "south", "east", "west")),
        ColumnSchema("UsageA", NUMERIC),
        ColumnSchema("SpendB", NUMERIC),
        ColumnSchema("NoiseC", NUMERIC),
        ColumnSchema("Churn", LABEL, ("no", "yes")),
    ]
    columns = {"Region": region, "UsageA": usage, "SpendB": spend,
               "NoiseC": noise, "Churn": labels}
    return ColumnarDataset(schema, columns, labels)


def planted_csv_text(n: int = 2000, seed: int = 424243) -> str:
    """The planted dataset rendered as CSV (labels yes/no, regions named)."""
    ds = planted_dataset(n=n, seed=seed)
    region_names = ("north", "south", "east", "west")
    lines = ["Region,UsageA,SpendB,NoiseC,Churn"]
    for i in range(ds.n_rows):
        lines.append(",".join([
            region_names[int(ds.columns["Region"][i])],
            repr(float(ds.columns["UsageA"][i])),
            repr(float(ds.columns["SpendB"][i])),
            repr(float(ds.columns["NoiseC"][i])),
            "yes" if ds.label[i] else "no",
        ]))
    return "\n".join(lines) + "\n"


def toy_separable(n: int = 50, seed: int = 99) -> ColumnarDataset:
    """One informative feature: label = (x >= 0), plus a constant-ish tail."""
    r = SplitMix64(seed)
    x = np.array([(sm_uniform(r) - 0.5) * 10.0 for _ in range(n)])
    y = (x >= 0).astype(np.int64)
    schema = [ColumnSchema("x", NUMERIC),
              ColumnSchema("noise", NUMERIC),
              ColumnSchema("y", LABEL, ("0", "1"))]
    noise = np.array([sm_uniform(r) for _ in range(n)])
    return ColumnarDataset(schema, {"x": x, "noise": noise, "y": y}, y)


def random_labeled(n: int, d: int, seed: int) -> ColumnarDataset:
    """Noisy linear-ish binary problem for loss-curve and determinism checks."""
    r = SplitMix64(seed)
    cols = {}
    schema = []
    X = np.empty((n, d))
    for j in range(d):
        X[:, j] = [sm_normal(r) for _ in range(n)]
        schema.append(ColumnSchema(f"f{j}", NUMERIC))
    w = np.array([sm_normal(r) for _ in range(d)])
    margin = X @ w
    y = np.array([1 if m + 0.5 * sm_normal(r) > 0 else 0 for m in margin],
                 dtype=np.int64)
    if y.min() == y.max():  # keep both classes present
        y[0] = 1 - y[0]
    for j in range(d):
        cols[f"f{j}"] = X[:, j]
    schema.append(ColumnSchema("y", LABEL, ("0", "1")))
    cols["y"] = y
    return ColumnarDataset(schema, cols, y)
