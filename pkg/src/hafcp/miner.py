"""Top-k high-utility itemset mining over churn-filtered transactions.

A transaction is a churned row's set of items (one-hot categorical values and
fuzzy L/M/H terms). Each item carries a unit profit — its source column's
feature importance — and a quantity: 1 in binary mode, the membership degree
in membership mode. The utility of an itemset P is

    u(P) = sum over transactions containing P of
           sum over items of P of quantity * profit

and the miner returns the exact k itemsets of highest utility (ties broken by
smaller cardinality, then lexicographic item names).

The exact search is depth-first over item-index-ordered prefixes with the
classic remaining-utility upper bound: for prefix P with transaction set
T(P), bound = sum_{t in T(P)} [u(P,t) + sum of profits of t's items ordered
after P's last item]. Supersets of P only lose transactions and can only add
items from that remainder, so no extension can exceed the bound and the
prefix subtree may be pruned when bound < current k-th utility. A beam
variant (top-k frontier expansion, approximate) is available behind
algorithm="beam".

Recorded utilities are always recomputed in a canonical order (item names
sorted, transactions in database order) so the miner, the brute-force oracle,
and the standalone utility() agree bit-for-bit and output is independent of
item insertion order.
"""

from __future__ import annotations

import json
from bisect import insort
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from ._util import atomic_write_text
from .errors import (
    ConfigError,
    EmptyDatabase,
    MissingImportance,
    NoChurnRows,
    ParseError,
    TooManyItemsForOracle,
    UnknownItem,
)
from .fuzzify import BinaryFrame
from .gbdt import ImportanceTable

BINARY = "binary"
MEMBERSHIP = "membership"


@dataclass(frozen=True)
class Pattern:
    items: tuple[str, ...]  # sorted item names
    utility: float
    support: int

    def sort_key(self):
        return (-self.utility, len(self.items), self.items)

    def to_dict(self) -> dict:
        return {"items": list(self.items), "utility": self.utility,
                "support": self.support}

    @classmethod
    def from_dict(cls, d: dict) -> "Pattern":
        return cls(items=tuple(d["items"]), utility=float(d["utility"]),
                   support=int(d["support"]))


@dataclass(frozen=True)
class ProfitTable:
    profits: dict[str, float]


@dataclass
class TransactionDB:
    """Churn-only transactions as sparse {item index: quantity} maps."""

    items: list[str]
    transactions: list[dict[int, float]]
    mode: str
    dataset_fingerprint: str = ""
    specs_source: str = ""

    def index_of(self, name: str) -> int:
        index = self.__dict__.get("_index")
        if index is None or len(index) != len(self.items):
            index = {n: i for i, n in enumerate(self.items)}
            self.__dict__["_index"] = index
        try:
            return index[name]
        except KeyError:
            raise UnknownItem(f"item {name!r} not in database") from None


@dataclass(frozen=True)
class MiningConfig:
    k: int
    min_length: int = 2
    max_length: int | None = None
    mode: str = BINARY
    algorithm: str = "exact"

    def validate(self) -> "MiningConfig":
        if self.k < 1:
            raise ConfigError(f"mining k must be >= 1, got {self.k}")
        if self.min_length < 1:
            raise ConfigError(
                f"min_length must be >= 1, got {self.min_length}")
        if self.max_length is not None and self.max_length < self.min_length:
            raise ConfigError("max_length must be >= min_length")
        if self.mode not in (BINARY, MEMBERSHIP):
            raise ConfigError(f"unknown mining mode {self.mode!r}")
        if self.algorithm not in ("exact", "beam"):
            raise ConfigError(f"unknown mining algorithm {self.algorithm!r}")
        return self


def build_transactions(frame: BinaryFrame, labels, profits_src: ImportanceTable,
                       mode: str = BINARY) -> tuple[TransactionDB, ProfitTable]:
    """Filter churned rows and assemble the transaction database + profits.

    Each item inherits its parent column's importance score as unit profit.
    Items with zero support among churned rows are dropped, as are items
    whose profit is zero; rows left with no items are dropped too.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) != frame.n_rows:
        raise ValueError("labels do not align with frame rows")
    for src in frame.item_sources:
        if src not in profits_src.scores:
            raise MissingImportance(src)
    churned = np.nonzero(labels == 1)[0]
    if churned.size == 0:
        raise NoChurnRows("no churned rows to mine")

    rows = frame.rows[churned]
    mems = frame.memberships[churned]
    support = rows.sum(axis=0)
    keep: list[int] = []
    for j in range(frame.n_items):
        profit = profits_src.scores[frame.item_sources[j]]
        if support[j] > 0 and profit > 0:
            keep.append(j)

    items = [frame.item_names[j] for j in keep]
    profits = {frame.item_names[j]: float(profits_src.scores[frame.item_sources[j]])
               for j in keep}
    transactions: list[dict[int, float]] = []
    for r in range(len(churned)):
        txn: dict[int, float] = {}
        for new_idx, j in enumerate(keep):
            if rows[r, j]:
                txn[new_idx] = float(mems[r, j]) if mode == MEMBERSHIP else 1.0
        if txn:
            transactions.append(txn)

    db = TransactionDB(items=items, transactions=transactions, mode=mode,
                       dataset_fingerprint=frame.dataset_fingerprint,
                       specs_source=frame.specs_source)
    return db, ProfitTable(profits=profits)


def _canonical_utility(db: TransactionDB, pt: ProfitTable,
                       names_sorted: list[str], idxs: list[int],
                       tids: list[int]) -> float:
    """The one utility computation every code path shares.

    Folds profits in sorted-item-name order, transactions in database order,
    so equal itemsets get bit-equal utilities everywhere.
    """
    if db.mode == BINARY:
        total = 0.0
        for name in names_sorted:
            total += pt.profits[name]
        return len(tids) * total
    grand = 0.0
    for t in tids:
        txn = db.transactions[t]
        per = 0.0
        for name, idx in zip(names_sorted, idxs):
            per += txn[idx] * pt.profits[name]
        grand += per
    return grand


def utility(db: TransactionDB, pt: ProfitTable, items) -> tuple[float, int]:
    """Utility and support of an itemset, by definition (full database scan)."""
    names_sorted = sorted(set(items))
    if not names_sorted:
        raise UnknownItem("empty itemset")
    idxs = [db.index_of(n) for n in names_sorted]
    for n in names_sorted:
        if n not in pt.profits:
            raise UnknownItem(f"item {n!r} has no profit entry")
    tids = [t for t, txn in enumerate(db.transactions)
            if all(i in txn for i in idxs)]
    return _canonical_utility(db, pt, names_sorted, idxs, tids), len(tids)


class _TopK:
    """Sorted candidate pool trimmed to k; tracks the k-th utility threshold."""

    def __init__(self, k: int):
        self.k = k
        self.entries: list[tuple[tuple, Pattern]] = []

    def offer(self, pattern: Pattern) -> None:
        insort(self.entries, (pattern.sort_key(), pattern))
        if len(self.entries) > self.k:
            self.entries.pop()

    def threshold(self) -> float:
        if len(self.entries) < self.k:
            return float("-inf")
        return self.entries[self.k - 1][1].utility

    def result(self) -> list[Pattern]:
        return [p for _, p in self.entries]


def _prepare(db: TransactionDB, pt: ProfitTable):
    """Per-transaction sorted item arrays, contributions, and remaining-utility maps."""
    profit_by_idx = []
    for name in db.items:
        if name not in pt.profits:
            raise UnknownItem(f"item {name!r} has no profit entry")
        profit_by_idx.append(pt.profits[name])

    txn_items: list[list[int]] = []
    rem_after: list[dict[int, float]] = []
    for txn in db.transactions:
        idxs = sorted(txn)
        txn_items.append(idxs)
        rem = {}
        acc = 0.0
        for i in reversed(idxs):
            rem[i] = acc
            acc += txn[i] * profit_by_idx[i]
        rem[-1] = acc  # full transaction utility: "remainder after nothing"
        rem_after.append(rem)
    return profit_by_idx, txn_items, rem_after


def mine_topk(db: TransactionDB, pt: ProfitTable, cfg: MiningConfig) -> list[Pattern]:
    """Exact top-k patterns (or the beam approximation when configured)."""
    cfg.validate()
    if cfg.mode != db.mode:
        raise ConfigError(
            f"config mode {cfg.mode!r} != database mode {db.mode!r}")
    if not db.transactions or not db.items:
        raise EmptyDatabase("transaction database is empty")
    if cfg.algorithm == "beam":
        return _beam_topk(db, pt, cfg)

    n_items = len(db.items)
    max_len = min(cfg.max_length or n_items, n_items)
    if cfg.min_length > n_items:
        return []
    profit_by_idx, txn_items, rem_after = _prepare(db, pt)
    pool = _TopK(cfg.k)

    def consider(prefix: tuple[int, ...], tids: list[int]) -> None:
        if len(prefix) < cfg.min_length:
            return
        names = sorted(db.items[i] for i in prefix)
        idxs = [db.index_of(n) for n in names]
        u = _canonical_utility(db, pt, names, idxs, tids)
        pool.offer(Pattern(items=tuple(names), utility=u, support=len(tids)))

    def extend(prefix: tuple[int, ...], tids: list[int],
               tid_utils: list[float], last: int) -> None:
        for j in range(last + 1, n_items):
            new_tids: list[int] = []
            new_utils: list[float] = []
            for pos, t in enumerate(tids):
                q = db.transactions[t].get(j)
                if q is not None:
                    new_tids.append(t)
                    new_utils.append(tid_utils[pos] + q * profit_by_idx[j])
            if not new_tids:
                continue
            new_prefix = prefix + (j,)
            consider(new_prefix, new_tids)
            if len(new_prefix) >= max_len:
                continue
            bound = 0.0
            for pos, t in enumerate(new_tids):
                bound += new_utils[pos] + rem_after[t][j]
            theta = pool.threshold()
            slack = 1e-9 * max(1.0, abs(theta)) if theta > float("-inf") else 0.0
            if bound >= theta - slack:
                extend(new_prefix, new_tids, new_utils, j)

    all_tids = list(range(len(db.transactions)))
    extend((), all_tids, [0.0] * len(all_tids), -1)
    return pool.result()


def prefix_bound(db: TransactionDB, pt: ProfitTable, prefix_items) -> float:
    """The remaining-utility upper bound of a prefix, exposed for testing.

    Upper-bounds the utility of every extension of the prefix by items whose
    index follows the prefix's last item.
    """
    idxs = sorted(db.index_of(n) for n in prefix_items)
    profit_by_idx, _, rem_after = _prepare(db, pt)
    last = idxs[-1]
    bound = 0.0
    for t, txn in enumerate(db.transactions):
        if all(i in txn for i in idxs):
            u_here = sum(txn[i] * profit_by_idx[i] for i in idxs)
            bound += u_here + rem_after[t][last]
    return bound


def brute_force_topk(db: TransactionDB, pt: ProfitTable,
                     cfg: MiningConfig) -> list[Pattern]:
    """Exhaustive enumeration oracle with the same sort and tie rules."""
    cfg.validate()
    if len(db.items) > 20:
        raise TooManyItemsForOracle(
            f"{len(db.items)} items; the oracle enumerates at most 2^20 itemsets")
    if cfg.mode != db.mode:
        raise ConfigError(
            f"config mode {cfg.mode!r} != database mode {db.mode!r}")
    if not db.transactions or not db.items:
        raise EmptyDatabase("transaction database is empty")

    n_items = len(db.items)
    tidsets = [set() for _ in range(n_items)]
    for t, txn in enumerate(db.transactions):
        for i in txn:
            tidsets[i].add(t)

    found: list[tuple[tuple, Pattern]] = []
    max_len = min(cfg.max_length or n_items, n_items)
    for size in range(cfg.min_length, max_len + 1):
        for combo in combinations(range(n_items), size):
            tids = set(tidsets[combo[0]])
            for i in combo[1:]:
                tids &= tidsets[i]
                if not tids:
                    break
            if not tids:
                continue
            names = sorted(db.items[i] for i in combo)
            idxs = [db.index_of(n) for n in names]
            u = _canonical_utility(db, pt, names, idxs, sorted(tids))
            p = Pattern(items=tuple(names), utility=u, support=len(tids))
            found.append((p.sort_key(), p))
    found.sort(key=lambda e: e[0])
    return [p for _, p in found[:cfg.k]]


def _beam_topk(db: TransactionDB, pt: ProfitTable, cfg: MiningConfig) -> list[Pattern]:
    """Appendix-style approximate search: keep only the top-k prefixes per level."""
    n_items = len(db.items)
    max_len = min(cfg.max_length or n_items, n_items)
    pool = _TopK(cfg.k)
    profit_by_idx, _, _ = _prepare(db, pt)

    frontier: list[tuple[tuple, tuple[int, ...], list[int]]] = []
    for j in range(n_items):
        tids = [t for t, txn in enumerate(db.transactions) if j in txn]
        if not tids:
            continue
        names = [db.items[j]]
        u = _canonical_utility(db, pt, names, [j], tids)
        p = Pattern(items=tuple(names), utility=u, support=len(tids))
        if cfg.min_length <= 1:
            pool.offer(p)
        frontier.append((p.sort_key(), (j,), tids))

    depth = 1
    while frontier and depth < max_len:
        frontier.sort(key=lambda e: e[0])
        frontier = frontier[:cfg.k]
        nxt: list[tuple[tuple, tuple[int, ...], list[int]]] = []
        for _, prefix, tids in frontier:
            for j in range(prefix[-1] + 1, n_items):
                new_tids = [t for t in tids if j in db.transactions[t]]
                if not new_tids:
                    continue
                new_prefix = prefix + (j,)
                names = sorted(db.items[i] for i in new_prefix)
                idxs = [db.index_of(n) for n in names]
                u = _canonical_utility(db, pt, names, idxs, new_tids)
                p = Pattern(items=tuple(names), utility=u,
                            support=len(new_tids))
                if len(new_prefix) >= cfg.min_length:
                    pool.offer(p)
                nxt.append((p.sort_key(), new_prefix, new_tids))
        frontier = nxt
        depth += 1
    return pool.result()


def write_patterns(patterns: list[Pattern], path: str) -> None:
    """JSON lines, one pattern per line: {"items": [...], "utility": u, "support": s}."""
    lines = [json.dumps(p.to_dict(), ensure_ascii=False) for p in patterns]
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def read_patterns(path: str) -> list[Pattern]:
    patterns = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f):
            line = line.strip()
            if not line:
                continue
            try:
                patterns.append(Pattern.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise ParseError(f"{path}:{lineno + 1}: {e}") from None
    return patterns


def render_patterns_table(patterns: list[Pattern]) -> str:
    """Fixed-width text table of the top-k patterns by utility."""
    header = f"Top-{len(patterns)} patterns by utility"
    rows = [["Rank", "Pattern", "Utility", "Support"]]
    for rank, p in enumerate(patterns, start=1):
        rows.append([str(rank), "{" + ", ".join(p.items) + "}",
                     f"{p.utility:.4f}", str(p.support)])
    widths = [max(len(r[c]) for r in rows) for c in range(4)]
    lines = [header, ""]
    for r in rows:
        lines.append("  ".join(r[c].ljust(widths[c]) for c in range(4)).rstrip())
    return "\n".join(lines) + "\n"
