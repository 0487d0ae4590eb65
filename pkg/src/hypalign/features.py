"""Semantic-aware feature trees: cross-attention extraction and synthetic data.

Per-level text features act as attention queries over a stack of class
tokens (mapped intermediate-layer tokens plus the final-layer token); each
query yields the visual feature for its level.  The backbone that produces
those tokens is outside this package: tokens come from JSON Lines files or
from :func:`synthesize_dataset`.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ContractViolation

DEFAULT_LAYER_IDS = (4, 7, 11)


@dataclass(frozen=True)
class TokenStack:
    tokens: np.ndarray  # (m+1, d), final-layer token last
    layer_ids: tuple = ()

    def __post_init__(self):
        tok = np.asarray(self.tokens, dtype=np.float64)
        if tok.ndim != 2 or tok.shape[0] < 1 or tok.shape[1] < 1:
            raise ContractViolation(f"token stack must be a non-empty matrix, got shape {tok.shape}")
        if not np.all(np.isfinite(tok)):
            raise ContractViolation("token stack has non-finite entries")
        if self.layer_ids and len(self.layer_ids) != tok.shape[0]:
            raise ContractViolation("one layer id per token row is required")
        object.__setattr__(self, "tokens", tok)
        object.__setattr__(self, "layer_ids", tuple(int(i) for i in self.layer_ids))


@dataclass(frozen=True)
class TextTree:
    features: np.ndarray  # (H, d), coarse to fine

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        if f.ndim != 2 or f.shape[0] < 1:
            raise ContractViolation(f"text tree must be an (H, d) matrix with H >= 1, got {f.shape}")
        object.__setattr__(self, "features", f)


@dataclass(frozen=True)
class FeatureTree:
    features: np.ndarray
    modality: str

    def __post_init__(self):
        if self.modality not in ("text", "visual"):
            raise ContractViolation(f"unknown modality {self.modality!r}")
        object.__setattr__(self, "features", np.asarray(self.features, dtype=np.float64))


@dataclass(frozen=True, eq=False)
class AttentionParams:
    W_Q: np.ndarray
    W_K: np.ndarray
    W_V: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        shapes = {np.shape(w) for w in (self.W_Q, self.W_K, self.W_V)}
        if len(shapes) != 1:
            raise ContractViolation("W_Q, W_K, W_V must share one shape")
        shape = shapes.pop()
        if len(shape) != 2 or shape[0] != shape[1]:
            raise ContractViolation(f"attention weights must be square, got {shape}")
        for name in ("W_Q", "W_K", "W_V"):
            w = np.asarray(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(w)):
                raise ContractViolation(f"{name} has non-finite entries")
            object.__setattr__(self, name, w)

    @property
    def dim(self):
        return self.W_Q.shape[0]

    def as_tuple(self):
        return self.W_Q, self.W_K, self.W_V

    def replace(self, W_Q, W_K, W_V):
        return AttentionParams(W_Q, W_K, W_V, self.seed)


def init_attention(d, seed, scale=0.02):
    """Draw ``W_Q, W_K, W_V`` i.i.d. from N(0, scale^2) using a generator keyed by ``seed``."""
    if int(d) <= 0:
        raise ContractViolation("attention dimension must be positive")
    rng = np.random.default_rng(seed)
    w = rng.normal(0.0, scale, size=(3, int(d), int(d)))
    return AttentionParams(w[0], w[1], w[2], seed)


def attend(text, tokens, W_Q, W_K, W_V):
    """Batched ``softmax(Q K^T / sqrt(d)) V``.

    ``text`` is ``(..., H, d)`` and ``tokens`` ``(..., M, d)``.  Returns the
    output and a cache for :func:`attend_vjp`.
    """
    d = W_Q.shape[0]
    q = text @ W_Q
    k = tokens @ W_K
    v = tokens @ W_V
    logits = q @ np.swapaxes(k, -1, -2) / np.sqrt(d)
    logits -= logits.max(axis=-1, keepdims=True)
    attn = np.exp(logits)
    attn /= attn.sum(axis=-1, keepdims=True)
    out = attn @ v
    return out, (text, tokens, q, k, v, attn)


def attend_vjp(cache, g_out, W_Q, W_K, W_V):
    """Gradients of :func:`attend`: ``(g_text, g_tokens, g_WQ, g_WK, g_WV)``."""
    text, tokens, q, k, v, attn = cache
    d = W_Q.shape[0]
    g_attn = g_out @ np.swapaxes(v, -1, -2)
    g_v = np.swapaxes(attn, -1, -2) @ g_out
    g_logits = attn * (g_attn - np.sum(g_attn * attn, axis=-1, keepdims=True)) / np.sqrt(d)
    g_q = g_logits @ k
    g_k = np.swapaxes(g_logits, -1, -2) @ q
    flat = lambda a: a.reshape(-1, a.shape[-1])  # noqa: E731
    g_WQ = flat(text).T @ flat(g_q)
    g_WK = flat(tokens).T @ flat(g_k)
    g_WV = flat(tokens).T @ flat(g_v)
    g_text = g_q @ W_Q.T
    g_tokens = g_k @ W_K.T + g_v @ W_V.T
    return g_text, g_tokens, g_WQ, g_WK, g_WV


def cross_attention_extract(text, stack, params):
    """Visual feature tree for one sample: one attention read-out per text level."""
    t = text.features if isinstance(text, TextTree) else np.asarray(text, dtype=np.float64)
    x = stack.tokens if isinstance(stack, TokenStack) else np.asarray(stack, dtype=np.float64)
    d = params.dim
    if t.ndim != 2 or x.ndim != 2 or t.shape[1] != d or x.shape[1] != d:
        raise ContractViolation(f"dimension mismatch: text {t.shape}, tokens {x.shape}, weights {d}x{d}")
    out, _ = attend(t, x, *params.as_tuple())
    return FeatureTree(out, "visual")


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------


@dataclass
class SyntheticSpec:
    """Balanced taxonomy with hierarchical prototypes and noisy per-layer tokens.

    ``branching[i]`` children per node at level ``i+1`` (``(2, 2, 2)`` gives a
    2-4-8 tree).  Child prototypes are the parent prototype plus a Gaussian
    step of norm about ``separation``; token row ``j`` carries the level-``j``
    prototype plus noise of norm about ``noise``.
    """

    branching: tuple = (2, 2, 2)
    dim: int = 64
    separation: float = 1.0
    noise: float = 0.3
    samples_per_leaf: int = 16
    heldout_per_leaf: int = 16
    seed: int = 0
    layer_ids: tuple = field(default=DEFAULT_LAYER_IDS)

    def __post_init__(self):
        self.branching = tuple(int(b) for b in self.branching)
        self.layer_ids = tuple(int(i) for i in self.layer_ids)
        if not self.branching or any(b < 1 for b in self.branching):
            raise ContractViolation("branching needs at least one level and positive factors")
        if self.dim < 1:
            raise ContractViolation("dim must be positive")
        if self.samples_per_leaf < 1 or self.heldout_per_leaf < 0:
            raise ContractViolation("samples_per_leaf must be positive and heldout_per_leaf non-negative")
        if self.separation < 0 or self.noise < 0:
            raise ContractViolation("separation and noise must be non-negative")
        if len(self.layer_ids) != len(self.branching):
            raise ContractViolation("one layer id per hierarchy level is required")

    @property
    def depth(self):
        return len(self.branching)

    @classmethod
    def from_dict(cls, obj):
        try:
            return cls(**obj)
        except TypeError as exc:
            raise ContractViolation(f"bad synthetic spec: {exc}") from None

    def to_dict(self):
        out = asdict(self)
        out["branching"] = list(self.branching)
        out["layer_ids"] = list(self.layer_ids)
        return out


@dataclass(eq=False)
class Dataset:
    """Samples with per-level labels plus the text feature of every taxonomy node.

    ``labels[i]`` holds the raw per-level labels (coarse to fine) of sample
    ``i``; node ids follow :func:`hypalign.taxonomy.build_taxonomy`.
    """

    tokens: np.ndarray  # (N, M, d)
    text: np.ndarray  # (N, H, d)
    labels: list
    split: np.ndarray  # (N,) "train" / "heldout"
    layer_ids: tuple
    node_text: dict  # node id -> feature
    node_level: dict  # node id -> level (0 = coarsest)

    def __len__(self):
        return self.tokens.shape[0]

    @property
    def depth(self):
        return self.text.shape[1]

    @property
    def dim(self):
        return self.text.shape[2]

    def subset(self, mask):
        mask = np.asarray(mask)
        return Dataset(
            self.tokens[mask],
            self.text[mask],
            [lab for lab, m in zip(self.labels, mask) if m],
            self.split[mask],
            self.layer_ids,
            self.node_text,
            self.node_level,
        )

    def level_nodes(self, level):
        return sorted(n for n, lv in self.node_level.items() if lv == level)

    def node_paths(self):
        """Per-sample node ids, coarse to fine."""
        return [["".join(lab[: i + 1]) for i in range(len(lab))] for lab in self.labels]


def _level_labels(branching):
    letters = "abcdefghijklmnopqrstuvwxyz"
    if len(branching) > len(letters):
        raise ContractViolation("at most 26 hierarchy levels are supported")
    paths = [()]
    for level, b in enumerate(branching):
        paths = [p + (f"{letters[level]}{i}",) for p in paths for i in range(b)]
    return paths


def synthesize_dataset(spec):
    """Deterministic synthetic dataset for ``spec`` (a :class:`SyntheticSpec` or dict)."""
    if isinstance(spec, dict):
        spec = SyntheticSpec.from_dict(spec)
    rng = np.random.default_rng(spec.seed)
    d = spec.dim
    node_text, node_level = {}, {}
    protos = {(): np.zeros(d)}
    for level in range(spec.depth):
        for path in _level_labels(spec.branching[: level + 1]):
            step = rng.normal(0.0, spec.separation / np.sqrt(d), size=d)
            protos[path] = protos[path[:-1]] + step
            node_text["".join(path)] = protos[path]
            node_level["".join(path)] = level
    leaves = _level_labels(spec.branching)
    per_leaf = spec.samples_per_leaf + spec.heldout_per_leaf
    tokens, text, labels, split = [], [], [], []
    for li, leaf in enumerate(leaves):
        leaf_rng = np.random.default_rng([spec.seed, li])
        levels = np.stack([protos[leaf[: i + 1]] for i in range(spec.depth)])
        for s in range(per_leaf):
            noise = leaf_rng.normal(0.0, spec.noise / np.sqrt(d), size=levels.shape)
            tokens.append(levels + noise)
            text.append(levels)
            labels.append(list(leaf))
            split.append("train" if s < spec.samples_per_leaf else "heldout")
    return Dataset(
        np.array(tokens),
        np.array(text),
        labels,
        np.array(split),
        spec.layer_ids,
        node_text,
        node_level,
    )


# ---------------------------------------------------------------------------
# JSON Lines ingestion
# ---------------------------------------------------------------------------


def write_jsonl(dataset, path):
    with open(path, "w") as fh:
        for i in range(len(dataset)):
            rec = {
                "token_stack": dataset.tokens[i].tolist(),
                "layer_ids": list(dataset.layer_ids),
                "text_tree": dataset.text[i].tolist(),
                "labels": list(dataset.labels[i]),
                "split": str(dataset.split[i]),
            }
            fh.write(json.dumps(rec) + "\n")


def read_jsonl(path):
    """Load feature-tree records; ``split`` is optional (missing means "train")."""
    tokens, text, labels, split = [], [], [], []
    layer_ids = None
    node_text, node_level = {}, {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                rec = json.loads(line)
                tok = np.asarray(rec["token_stack"], dtype=np.float64)
                tt = np.asarray(rec["text_tree"], dtype=np.float64)
                lab = [str(x) for x in rec["labels"]]
                ids = tuple(int(i) for i in rec.get("layer_ids", ()))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ContractViolation(f"{where}: malformed record ({exc})") from None
            if tok.ndim != 2 or tt.ndim != 2 or tok.shape[1] != tt.shape[1]:
                raise ContractViolation(f"{where}: token_stack and text_tree must be matrices of equal width")
            if len(lab) != tt.shape[0]:
                raise ContractViolation(f"{where}: need one label per text level")
            if tokens and (tok.shape != tokens[0].shape or tt.shape != text[0].shape):
                raise ContractViolation(f"{where}: record shape differs from the first record")
            layer_ids = ids if layer_ids is None else layer_ids
            for i in range(len(lab)):
                node = "".join(lab[: i + 1])
                node_text.setdefault(node, tt[i])
                node_level.setdefault(node, i)
            tokens.append(tok)
            text.append(tt)
            labels.append(lab)
            split.append(str(rec.get("split", "train")))
    if not tokens:
        raise ContractViolation(f"{path}: no records")
    return Dataset(np.array(tokens), np.array(text), labels, np.array(split), layer_ids or (), node_text, node_level)
