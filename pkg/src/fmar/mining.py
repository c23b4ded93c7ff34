"""Frequent itemset mining and association rules.

Two miners are provided and must agree exactly: a level-wise Apriori and
FP-growth over a frequency-ordered prefix tree. ``min_support`` is always an
absolute transaction count and thresholds are inclusive.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations
from os import PathLike
from typing import Iterable, Sequence

ItemSet = tuple[int, ...]


class UndefinedMetricError(ZeroDivisionError):
    """Confidence or lift requested for an itemset that never occurs."""


@dataclass(frozen=True, order=True)
class FrequentItemset:
    items: ItemSet
    support_count: int
    support_fraction: float


@dataclass(frozen=True)
class AssociationRule:
    antecedent: ItemSet
    consequent: ItemSet
    support: float
    confidence: float
    lift: float

    def __post_init__(self):
        if set(self.antecedent) & set(self.consequent):
            raise ValueError(f"rule sides overlap: {self.antecedent} -> {self.consequent}")


def itemset(items: Iterable[int]) -> ItemSet:
    out = tuple(sorted(set(items)))
    if not out:
        raise ValueError("itemset must be non-empty")
    return out


def _items(txn) -> frozenset:
    # accepts Transaction objects or bare sets
    return getattr(txn, "items", txn)


def _as_sets(txns) -> list[frozenset]:
    return [frozenset(_items(t)) for t in txns]


# ---------------------------------------------------------------------------
# interestingness measures


def support(xs: Iterable[int], txns: Sequence) -> tuple[int, float]:
    if not txns:
        raise ValueError("support needs at least one transaction")
    xs = frozenset(xs)
    count = sum(1 for t in txns if xs <= _items(t))
    return count, count / len(txns)


def confidence(antecedent: Iterable[int], consequent: Iterable[int], txns: Sequence) -> float:
    antecedent, consequent = frozenset(antecedent), frozenset(consequent)
    if antecedent & consequent:
        raise ValueError("antecedent and consequent must be disjoint")
    n_ante, _ = support(antecedent, txns)
    if n_ante == 0:
        raise UndefinedMetricError(f"antecedent {sorted(antecedent)} never occurs")
    n_both, _ = support(antecedent | consequent, txns)
    return n_both / n_ante


def lift(antecedent: Iterable[int], consequent: Iterable[int], txns: Sequence) -> float:
    """Confidence divided by the consequent's support fraction."""
    _, frac_cons = support(consequent, txns)
    if frac_cons == 0:
        raise UndefinedMetricError(f"consequent {sorted(consequent)} never occurs")
    return confidence(antecedent, consequent, txns) / frac_cons


# ---------------------------------------------------------------------------
# Apriori


def _sort_key(fi: FrequentItemset):
    return len(fi.items), fi.items


def apriori(txns: Sequence, min_support: int) -> list[FrequentItemset]:
    """Level-wise mining with candidate join and downward-closure prune.

    Candidate supports are counted by intersecting per-item transaction
    bitsets instead of rescanning the database.
    """
    if min_support < 1:
        raise ValueError("min_support must be >= 1")
    sets = _as_sets(txns)
    n = len(sets)
    tids: dict[int, int] = defaultdict(int)
    for t, items in enumerate(sets):
        bit = 1 << t
        for item in items:
            tids[item] |= bit

    level: dict[ItemSet, int] = {}
    for item in sorted(tids):
        count = tids[item].bit_count()
        if count >= min_support:
            level[(item,)] = tids[item]
    found: list[FrequentItemset] = []
    while level:
        found.extend(
            FrequentItemset(items, mask.bit_count(), mask.bit_count() / n)
            for items, mask in level.items()
        )
        next_level: dict[ItemSet, int] = {}
        keys = sorted(level)
        for i, a in enumerate(keys):
            for b in keys[i + 1:]:
                if a[:-1] != b[:-1]:
                    break  # keys are sorted, so no later b shares a's prefix
                cand = a + (b[-1],)
                if any(sub not in level for sub in combinations(cand, len(cand) - 1)):
                    continue
                mask = level[a] & tids[b[-1]]
                if mask.bit_count() >= min_support:
                    next_level[cand] = mask
        level = next_level
    found.sort(key=_sort_key)
    return found


def brute_force_itemsets(txns: Sequence, min_support: int) -> list[FrequentItemset]:
    """Enumerate every subset of the item universe. Exponential; for tests."""
    sets = _as_sets(txns)
    universe = sorted(set().union(*sets)) if sets else []
    out = []
    for size in range(1, len(universe) + 1):
        for cand in combinations(universe, size):
            c = frozenset(cand)
            count = sum(1 for t in sets if c <= t)
            if count >= min_support:
                out.append(FrequentItemset(cand, count, count / len(sets)))
    return out


# ---------------------------------------------------------------------------
# FP-tree


class FPNode:
    __slots__ = ("item", "count", "parent", "children", "next_same_item")

    def __init__(self, item=None, count=0, parent=None):
        self.item = item
        self.count = count
        self.parent = parent
        self.children: dict[int, FPNode] = {}
        self.next_same_item: FPNode | None = None

    @property
    def is_root(self) -> bool:
        return self.parent is None

    def __repr__(self):
        return f"FPNode({self.item!r}, {self.count})"


@dataclass
class FPTree:
    root: FPNode
    # item -> [total count, first node of the same-item chain]
    header: dict[int, list]
    # item -> rank; 0 is the most frequent item
    item_order: dict[int, int]
    n_transactions: int
    _tails: dict[int, FPNode] = field(default_factory=dict, repr=False)

    def chain(self, item: int):
        node = self.header[item][1]
        while node is not None:
            yield node
            node = node.next_same_item

    def is_empty(self) -> bool:
        return not self.root.children

    def _insert(self, path: Sequence[int], count: int) -> None:
        node = self.root
        for item in path:
            child = node.children.get(item)
            if child is None:
                child = FPNode(item, count, node)
                node.children[item] = child
                if self.header[item][1] is None:
                    self.header[item][1] = child
                else:
                    self._tails[item].next_same_item = child
                self._tails[item] = child
            else:
                child.count += count
            node = child


def _build_tree(weighted: Sequence[tuple[Iterable[int], int]], min_support: int, n_transactions: int) -> FPTree:
    freq: dict[int, int] = defaultdict(int)
    for items, count in weighted:
        for item in items:
            freq[item] += count
    kept = sorted((i for i, c in freq.items() if c >= min_support), key=lambda i: (-freq[i], i))
    order = {item: rank for rank, item in enumerate(kept)}
    tree = FPTree(FPNode(), {i: [freq[i], None] for i in kept}, order, n_transactions)
    for items, count in weighted:
        path = sorted((i for i in items if i in order), key=order.__getitem__)
        if path:
            tree._insert(path, count)
    return tree


def build_fp_tree(txns: Sequence, min_support: int) -> FPTree:
    """Insert each transaction's frequent items in descending global frequency.

    Frequency ties are broken by ascending item id so the tree shape is
    deterministic.
    """
    if min_support < 1:
        raise ValueError("min_support must be >= 1")
    sets = _as_sets(txns)
    return _build_tree([(s, 1) for s in sets], min_support, len(sets))


def _prefix_paths(tree: FPTree, item: int) -> list[tuple[list[int], int]]:
    base = []
    for node in tree.chain(item):
        path = []
        parent = node.parent
        while not parent.is_root:
            path.append(parent.item)
            parent = parent.parent
        if path:
            base.append((path, node.count))
    return base


def _single_path(tree: FPTree) -> list[FPNode] | None:
    path = []
    node = tree.root
    while node.children:
        if len(node.children) > 1:
            return None
        (node,) = node.children.values()
        path.append(node)
    return path


def _grow(tree: FPTree, suffix: ItemSet, min_support: int, out: dict[ItemSet, int]) -> None:
    path = _single_path(tree)
    if path is not None:
        # every combination of a single path is frequent with the count of its deepest node
        for size in range(1, len(path) + 1):
            for combo in combinations(path, size):
                out[tuple(sorted((n.item for n in combo), key=int)) + suffix] = combo[-1].count
        return
    # least frequent header items first
    for item in sorted(tree.header, key=tree.item_order.__getitem__, reverse=True):
        new_suffix = (item,) + suffix
        out[new_suffix] = tree.header[item][0]
        base = _prefix_paths(tree, item)
        if base:
            cond = _build_tree(base, min_support, tree.n_transactions)
            if not cond.is_empty():
                _grow(cond, new_suffix, min_support, out)


def mine_fp_tree(tree: FPTree, min_support: int) -> list[FrequentItemset]:
    """Recursive conditional-tree mining; output sorted like :func:`apriori`."""
    raw: dict[ItemSet, int] = {}
    if not tree.is_empty():
        _grow(tree, (), min_support, raw)
    n = tree.n_transactions
    out = [FrequentItemset(tuple(sorted(k)), c, c / n) for k, c in raw.items()]
    out.sort(key=_sort_key)
    return out


def fpgrowth(txns: Sequence, min_support: int) -> list[FrequentItemset]:
    return mine_fp_tree(build_fp_tree(txns, min_support), min_support)


# ---------------------------------------------------------------------------
# rules


def derive_rules(
    frequents: Sequence[FrequentItemset],
    txns: Sequence,
    min_confidence: float,
    min_lift: float = 1.0,
) -> list[AssociationRule]:
    """Every split of every frequent itemset of size >= 2 that passes both filters."""
    n = len(txns)
    counts = {fi.items: fi.support_count for fi in frequents}

    def count_of(xs: ItemSet) -> int:
        # subsets of a frequent itemset are frequent, so this only misses on partial input
        if xs not in counts:
            counts[xs] = support(xs, txns)[0]
        return counts[xs]

    rules = []
    for fi in sorted(frequents, key=_sort_key):
        items = fi.items
        if len(items) < 2:
            continue
        for size in range(1, len(items)):
            for ante in combinations(items, size):
                cons = tuple(i for i in items if i not in ante)
                conf = fi.support_count / count_of(ante)
                if conf < min_confidence:
                    continue
                lift_ = conf / (count_of(cons) / n)
                if lift_ < min_lift:
                    continue
                rules.append(AssociationRule(ante, cons, fi.support_count / n, conf, lift_))
    return rules


def mine_rules(
    txns: Sequence,
    min_support: int,
    min_confidence: float,
    min_lift: float = 1.0,
    algorithm: str = "apriori",
) -> tuple[list[FrequentItemset], list[AssociationRule]]:
    if algorithm == "apriori":
        frequents = apriori(txns, min_support)
    elif algorithm == "fpgrowth":
        frequents = fpgrowth(txns, min_support)
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    if not txns:
        return frequents, []
    return frequents, derive_rules(frequents, txns, min_confidence, min_lift)


def format_rule(rule: AssociationRule) -> str:
    ante = ",".join(map(str, rule.antecedent))
    cons = ",".join(map(str, rule.consequent))
    return f"{ante}|{cons}|{rule.support!r}|{rule.confidence!r}|{rule.lift!r}"


def parse_rule(line: str) -> AssociationRule:
    parts = line.strip().split("|")
    if len(parts) != 5:
        raise ValueError(f"malformed rule line {line!r}")
    ante, cons = (tuple(int(x) for x in p.split(",")) for p in parts[:2])
    sup, conf, lift_ = (float(x) for x in parts[2:])
    return AssociationRule(ante, cons, sup, conf, lift_)


def write_rules(rules: Iterable[AssociationRule], path: str | PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rule in rules:
            fh.write(format_rule(rule) + "\n")


def read_rules(path: str | PathLike) -> list[AssociationRule]:
    with open(path, encoding="utf-8") as fh:
        return [parse_rule(line) for line in fh if line.strip()]
