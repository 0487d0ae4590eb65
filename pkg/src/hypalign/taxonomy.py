"""Label trees, base/novel partitions, and taxonomic open-set metrics.

Metrics follow the usual taxonomic open-set definitions:

* LA  - accuracy of the argmax over the leaf set;
* HCA - the leaf is right *and* at every ancestor ``n`` of the true leaf the
  argmax over ``children(n)`` stays on the true path;
* MTA - mean over a set of treecuts of the accuracy of the argmax over the
  cut's frontier, judged against the frontier node on the true path.

Ties in any argmax go to the lexicographically smallest node id.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ContractViolation, TooLargeError

ROOT_ID = "root"
DEFAULT_TREECUTS = 25
ENUMERATION_LIMIT = 10_000


@dataclass(frozen=True)
class Treecut:
    frontier: frozenset

    def __iter__(self):
        return iter(sorted(self.frontier))

    def __len__(self):
        return len(self.frontier)


@dataclass(frozen=True, eq=False)
class Taxonomy:
    """Rooted label tree.  Build with :meth:`from_edges` or :func:`build_taxonomy`."""

    root: str
    parent: dict
    names: dict = field(default_factory=dict)

    def __post_init__(self):
        children = {self.root: []}
        for child, par in self.parent.items():
            if child == self.root:
                raise ContractViolation("the root cannot have a parent")
            children.setdefault(par, []).append(child)
            children.setdefault(child, [])
        nodes = set(children)
        if set(self.parent) != nodes - {self.root}:
            missing = sorted(nodes - {self.root} - set(self.parent))
            raise ContractViolation(f"nodes without a parent: {missing[:5]}")
        depth = {self.root: 0}
        stack = [self.root]
        while stack:
            n = stack.pop()
            for ch in children[n]:
                depth[ch] = depth[n] + 1
                stack.append(ch)
        if len(depth) != len(nodes):
            raise ContractViolation("taxonomy is not a single rooted tree (cycle or detached nodes)")
        object.__setattr__(self, "children", {n: tuple(sorted(c)) for n, c in children.items()})
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "nodes", tuple(sorted(nodes)))
        object.__setattr__(self, "leaves", tuple(n for n in self.nodes if not children[n]))
        object.__setattr__(self, "index", {n: i for i, n in enumerate(self.nodes)})

    @classmethod
    def from_edges(cls, root, edges, names=None):
        parent = {}
        for par, child in edges:
            if child in parent and parent[child] != par:
                raise ContractViolation(f"node {child!r} has more than one parent")
            parent[child] = par
        return cls(root, parent, dict(names or {}))

    @property
    def edges(self):
        return sorted((p, c) for c, p in self.parent.items())

    def is_leaf(self, node):
        return not self.children[node]

    def path(self, node):
        """Root-to-node list of ids."""
        out = [node]
        while node != self.root:
            node = self.parent[node]
            out.append(node)
        return out[::-1]

    def ancestors(self, node):
        return self.path(node)[:-1]

    def subtree(self, leaves):
        """Union of the root-to-leaf paths of ``leaves``."""
        parent = {}
        for leaf in leaves:
            for p, c in itertools.pairwise(self.path(leaf)):
                parent[c] = p
        return Taxonomy(self.root, parent, {n: self.names[n] for n in parent if n in self.names})

    def to_json(self):
        return {
            "root": self.root,
            "nodes": {n: self.names.get(n, n) for n in self.nodes},
            "edges": [list(e) for e in self.edges],
        }

    @classmethod
    def from_json(cls, obj):
        try:
            root = obj["root"]
            edges = obj["edges"]
            names = obj.get("nodes", {})
        except (KeyError, TypeError) as exc:
            raise ContractViolation(f"taxonomy JSON is missing a field: {exc}") from None
        tax = cls.from_edges(root, [tuple(e) for e in edges], names)
        unknown = set(names) - set(tax.nodes)
        if unknown:
            raise ContractViolation(f"nodes listed without edges: {sorted(unknown)[:5]}")
        return tax


def build_taxonomy(annotations):
    """Build a tree from per-sample label tuples (coarse to fine).

    A node at level ``l`` is identified by the concatenation of the first
    ``l`` labels, so a repeated fine label under two lineages yields two
    distinct leaves.
    """
    annotations = [tuple(str(x) for x in a) for a in annotations]
    if not annotations:
        raise ContractViolation("no annotations")
    depth = len(annotations[0])
    if depth == 0 or any(len(a) != depth for a in annotations):
        raise ContractViolation("all annotation tuples must have the same non-zero length")
    if any(x == "" for a in annotations for x in a):
        raise ContractViolation("empty labels are not allowed")
    parent, names, origin = {}, {}, {}
    for labels in annotations:
        prev = ROOT_ID
        for level in range(1, depth + 1):
            node = "".join(labels[:level])
            key = labels[:level]
            if node == ROOT_ID or origin.setdefault(node, key) != key:
                raise ContractViolation(f"label concatenation {node!r} is ambiguous")
            parent[node] = prev
            names[node] = labels[level - 1]
            prev = node
    names[ROOT_ID] = ROOT_ID
    return Taxonomy(ROOT_ID, parent, names)


def base_novel_split(tax, seed):
    """Shuffle the leaves under ``seed`` and halve them (base gets the odd one)."""
    leaves = list(tax.leaves)
    if len(leaves) < 2:
        raise ContractViolation("need at least two leaves to split")
    order = np.random.default_rng(seed).permutation(len(leaves))
    half = (len(leaves) + 1) // 2
    base = [leaves[i] for i in order[:half]]
    novel = [leaves[i] for i in order[half:]]
    return tax.subtree(base), tax.subtree(novel)


# ---------------------------------------------------------------------------
# predictions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PredictionTable:
    """Ground-truth leaves plus a score for every (sample, node) pair.

    ``scores[i, j]`` is the score of ``tax.nodes[j]``; missing entries are NaN
    and raise if a metric needs them.
    """

    tax: Taxonomy
    truth: tuple
    scores: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.ndim != 2 or scores.shape != (len(self.truth), len(self.tax.nodes)):
            raise ContractViolation(f"scores must have shape (samples, nodes), got {scores.shape}")
        for t in self.truth:
            if t not in self.tax.index or not self.tax.is_leaf(t):
                raise ContractViolation(f"ground truth {t!r} is not a leaf of the taxonomy")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "truth", tuple(self.truth))

    @classmethod
    def from_records(cls, tax, records):
        """Build from ``[{"truth_leaf": id, "scores": {id: value}}, ...]``."""
        truth, rows = [], []
        for k, rec in enumerate(records):
            try:
                truth.append(rec["truth_leaf"])
                sc = rec["scores"]
            except (KeyError, TypeError):
                raise ContractViolation(f"prediction record {k} needs truth_leaf and scores") from None
            row = np.full(len(tax.nodes), np.nan)
            for node, val in sc.items():
                if node not in tax.index:
                    raise ContractViolation(f"record {k}: unknown node {node!r}")
                row[tax.index[node]] = float(val)
            rows.append(row)
        return cls(tax, tuple(truth), np.array(rows).reshape(len(rows), len(tax.nodes)))

    def __len__(self):
        return len(self.truth)

    def argmax(self, candidates):
        """Predicted column per sample when restricted to ``candidates``."""
        cols = np.array(sorted(self.tax.index[c] for c in candidates), dtype=np.int64)
        sub = self.scores[:, cols]
        if np.any(np.isnan(sub)):
            raise ContractViolation("a queried node has no score")
        return cols[np.argmax(sub, axis=1)]

    def truth_cols(self):
        return np.array([self.tax.index[t] for t in self.truth], dtype=np.int64)


def _check_nonempty(preds):
    if len(preds) == 0:
        raise ContractViolation("no samples to evaluate")


def leaf_accuracy(tax, preds):
    _check_nonempty(preds)
    return float(np.mean(preds.argmax(tax.leaves) == preds.truth_cols()))


def hierarchical_consistent_accuracy(tax, preds):
    _check_nonempty(preds)
    ok = preds.argmax(tax.leaves) == preds.truth_cols()
    paths = [tax.path(t) for t in preds.truth]
    # group samples by ancestor so each decision is one vectorised argmax
    by_node = {}
    for i, path in enumerate(paths):
        for anc, nxt in itertools.pairwise(path):
            by_node.setdefault(anc, ([], []))
            by_node[anc][0].append(i)
            by_node[anc][1].append(tax.index[nxt])
    for node, (rows, want) in by_node.items():
        rows = np.array(rows)
        cols = np.array(sorted(tax.index[c] for c in tax.children[node]), dtype=np.int64)
        sub = preds.scores[np.ix_(rows, cols)]
        if np.any(np.isnan(sub)):
            raise ContractViolation("a queried node has no score")
        ok[rows] &= cols[np.argmax(sub, axis=1)] == np.array(want)
    return float(np.mean(ok))


# ---------------------------------------------------------------------------
# treecuts
# ---------------------------------------------------------------------------


def is_valid_treecut(tax, cut):
    """Leaf-covering antichain check."""
    frontier = set(cut.frontier if isinstance(cut, Treecut) else cut)
    if not frontier <= set(tax.nodes):
        return False
    for leaf in tax.leaves:
        if sum(1 for n in tax.path(leaf) if n in frontier) != 1:
            return False
    return all(not (set(tax.ancestors(n)) & frontier) for n in frontier)


def _random_cut(tax, rng):
    out = []
    stack = [tax.root]
    while stack:
        node = stack.pop()
        if tax.is_leaf(node) or rng.random() < 0.5:
            out.append(node)
        else:
            stack.extend(reversed(tax.children[node]))
    return Treecut(frozenset(out))


def sample_treecuts(tax, count=DEFAULT_TREECUTS, seed=0):
    """Random treecuts by recursive coin-flip expansion from the root.

    Duplicates are rejected while fresh cuts keep turning up; trees with
    fewer distinct cuts than ``count`` get repeats, which then count again
    in the mean.
    """
    if count <= 0:
        raise ContractViolation("treecut count must be positive")
    rng = np.random.default_rng(seed)
    cuts, seen = [], set()
    budget = 50 * count
    while len(cuts) < count:
        cut = _random_cut(tax, rng)
        if cut.frontier in seen and budget > 0:
            budget -= 1
            continue
        seen.add(cut.frontier)
        cuts.append(cut)
    return cuts


def count_treecuts(tax, limit=None):
    """Number of treecuts; stops early (returning ``limit + 1``) once above ``limit``."""

    def rec(node):
        kids = tax.children[node]
        if not kids:
            return 1
        prod = 1
        for ch in kids:
            prod *= rec(ch)
            if limit is not None and prod > limit:
                return limit + 1
        total = prod + 1
        return total if limit is None else min(total, limit + 1)

    return rec(tax.root)


def enumerate_treecuts(tax, limit=ENUMERATION_LIMIT):
    """All treecuts: ``cuts(n) = {n} + products of the children's cuts``."""
    if count_treecuts(tax, limit) > limit:
        raise TooLargeError(f"taxonomy has more than {limit} treecuts")

    def rec(node):
        kids = tax.children[node]
        if not kids:
            return [frozenset([node])]
        combos = [frozenset().union(*parts) for parts in itertools.product(*(rec(ch) for ch in kids))]
        return [frozenset([node])] + combos

    return [Treecut(f) for f in rec(tax.root)]


def _cut_arrays(tax, preds, cuts):
    width = max(len(c) for c in cuts)
    frontier = np.full((len(cuts), width), -1, dtype=np.int64)
    truth = np.empty((len(preds), len(cuts)), dtype=np.int64)
    paths = [[tax.index[n] for n in tax.path(t)] for t in preds.truth]
    for j, cut in enumerate(cuts):
        cols = sorted(tax.index[n] for n in cut.frontier)
        frontier[j, : len(cols)] = cols
        members = set(cols)
        for i, path in enumerate(paths):
            hit = [n for n in path if n in members]
            if len(hit) != 1:
                raise ContractViolation("not a valid treecut for this taxonomy")
            truth[i, j] = hit[0]
    return frontier, truth


def treecut_accuracies(tax, preds, cuts):
    """Per-cut accuracy (numpy array)."""
    _check_nonempty(preds)
    if not cuts:
        raise ContractViolation("need at least one treecut")
    frontier, truth = _cut_arrays(tax, preds, cuts)
    used = np.unique(frontier[frontier >= 0])
    if np.any(np.isnan(preds.scores[:, used])):
        raise ContractViolation("a queried node has no score")
    return kernels.treecut_hits(preds.scores, frontier, truth) / len(preds)


def mean_treecut_accuracy(tax, preds, cuts):
    _check_nonempty(preds)
    if not cuts:
        raise ContractViolation("need at least one treecut")
    frontier, truth = _cut_arrays(tax, preds, cuts)
    used = np.unique(frontier[frontier >= 0])
    if np.any(np.isnan(preds.scores[:, used])):
        raise ContractViolation("a queried node has no score")
    hits = kernels.treecut_hits(preds.scores, frontier, truth)
    # one division keeps the result the correctly rounded rational mean
    return int(hits.sum()) / (len(preds) * len(cuts))


def harmonic_mean(base, novel):
    """Returns ``(value, degenerate)``; both-zero inputs give ``(0.0, True)``."""
    if base < 0 or novel < 0:
        raise ContractViolation("harmonic mean needs non-negative inputs")
    if base + novel == 0:
        return 0.0, True
    return 2.0 * base * novel / (base + novel), False


def metric_report(tax, preds, count=DEFAULT_TREECUTS, seed=0, cuts=None):
    cuts = cuts if cuts is not None else sample_treecuts(tax, count, seed)
    return {
        "la": leaf_accuracy(tax, preds),
        "hca": hierarchical_consistent_accuracy(tax, preds),
        "mta": mean_treecut_accuracy(tax, preds, cuts),
        "num_treecuts": len(cuts),
        "seed": seed,
    }


def load_taxonomy(path):
    with open(path) as fh:
        return Taxonomy.from_json(json.load(fh))


def load_predictions(tax, path):
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ContractViolation(f"{path}:{lineno}: {exc.msg}") from None
    return PredictionTable.from_records(tax, records)


__all__ = [
    "Taxonomy",
    "Treecut",
    "PredictionTable",
    "build_taxonomy",
    "base_novel_split",
    "leaf_accuracy",
    "hierarchical_consistent_accuracy",
    "sample_treecuts",
    "enumerate_treecuts",
    "count_treecuts",
    "mean_treecut_accuracy",
    "treecut_accuracies",
    "harmonic_mean",
    "is_valid_treecut",
    "metric_report",
]
