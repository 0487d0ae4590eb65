"""Desk-scale training loop for heterogeneous manifold alignment.

One step solves the intermediate curvature, extracts visual feature trees by
cross-attention, lifts both modalities onto the three hyperboloids, and takes
a plain gradient step on the attention weights and on both curvatures.  The
curvature gradients chain through ``c3*`` with the implicit partials.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import entailment, manifold, taxonomy
from .errors import ContractViolation, NonFiniteLossError
from .features import (
    AttentionParams,
    Dataset,
    SyntheticSpec,
    attend,
    attend_vjp,
    init_attention,
    read_jsonl,
    synthesize_dataset,
)
from .lorentz import C_MIN_DEFAULT, expm_origin, expm_origin_vjp

CURVATURE_INIT_GRID = (0.5, 0.25, 0.05, 0.025)
_EPS = 1e-12
CLAMP_MARGIN = 1e-6


@dataclass
class TrainConfig:
    alpha: float = 0.5
    lr: float = 0.5
    epochs: int = 200
    c1_init: float = 0.25
    c2_init: float = 0.25
    c_min: float = C_MIN_DEFAULT
    r_policy: str = "batch-computed"
    r_fixed: float | None = None
    seed: int = 0
    synthetic: dict | None = field(default_factory=dict)
    data_path: str | None = None
    treecuts: int = taxonomy.DEFAULT_TREECUTS
    temperature: float = 0.1
    schedule: str = "constant"
    curvature_lr: float | None = 1e-4
    init_scale: float = 0.1
    solver_tol: float = 1e-8
    compare_baseline: bool = False

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ContractViolation("alpha must be non-negative")
        if not self.lr > 0:
            raise ContractViolation("lr must be positive")
        if self.curvature_lr is not None and not self.curvature_lr >= 0:
            raise ContractViolation("curvature_lr must be non-negative")
        if isinstance(self.epochs, bool) or int(self.epochs) != self.epochs or self.epochs < 1:
            raise ContractViolation("epochs must be an integer >= 1")
        if not self.c_min > 0:
            raise ContractViolation("c_min must be positive")
        if self.c1_init < self.c_min or self.c2_init < self.c_min:
            raise ContractViolation("curvature initialisations must be >= c_min")
        if self.r_policy not in ("batch-computed", "fixed"):
            raise ContractViolation(f"unknown r_policy {self.r_policy!r}")
        if self.r_policy == "fixed" and (self.r_fixed is None or self.r_fixed < 0):
            raise ContractViolation("r_policy 'fixed' needs a non-negative r_fixed")
        if self.schedule not in ("constant", "cosine"):
            raise ContractViolation(f"unknown schedule {self.schedule!r}")
        if not self.temperature > 0:
            raise ContractViolation("temperature must be positive")
        if self.treecuts < 1:
            raise ContractViolation("treecuts must be >= 1")
        if self.data_path is None and self.synthetic is None:
            raise ContractViolation("either synthetic or data_path is required")
        self.epochs = int(self.epochs)

    @classmethod
    def from_dict(cls, obj):
        known = {f.name for f in fields(cls)}
        extra = set(obj) - known
        if extra:
            raise ContractViolation(f"unknown config fields: {sorted(extra)}")
        return cls(**obj)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ContractViolation(f"{path}:{exc.lineno}: {exc.msg}") from None
        return cls.from_dict(obj)

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------------------------------------
# surrogate task loss
# ---------------------------------------------------------------------------


def _cosine_and_grad(v, cand):
    """Cosine similarities ``(..., K)`` and the Jacobian helper pieces."""
    vn = np.linalg.norm(v, axis=-1, keepdims=True)
    cn = np.linalg.norm(cand, axis=-1, keepdims=True)
    vu = v / np.maximum(vn, _EPS)
    cu = cand / np.maximum(cn, _EPS)
    return vu, vn, cu


def surrogate_loss_batch(visual, candidates, truth, temperature):
    """Batched per-level cosine cross-entropy.

    ``visual`` is ``(B, H, d)``; ``candidates[i]`` is ``(K_i, d)``; ``truth``
    is ``(B, H)`` integer indices into the candidate rows.  Returns per-sample
    losses ``(B,)`` and the gradient of their sum w.r.t. ``visual``.
    """
    visual = np.asarray(visual, dtype=np.float64)
    truth = np.asarray(truth)
    b, h, _ = visual.shape
    if len(candidates) != h or truth.shape != (b, h):
        raise ContractViolation("need one candidate set and one truth index per level")
    losses = np.zeros(b)
    grad = np.zeros_like(visual)
    rows = np.arange(b)
    for i, cand in enumerate(candidates):
        cand = np.asarray(cand, dtype=np.float64)
        if np.any(truth[:, i] < 0) or np.any(truth[:, i] >= cand.shape[0]):
            raise ContractViolation(f"truth label missing from the level-{i} candidates")
        vu, vn, cu = _cosine_and_grad(visual[:, i], cand)
        logits = vu @ cu.T / temperature
        shift = logits.max(axis=1, keepdims=True)
        logz = np.log(np.exp(logits - shift).sum(axis=1)) + shift[:, 0]
        losses += logz - logits[rows, truth[:, i]]
        prob = np.exp(logits - logz[:, None])
        prob[rows, truth[:, i]] -= 1.0
        g_cos = prob / temperature
        g_u = g_cos @ cu
        # d(v/|v|) = (I - u u^T)/|v|
        grad[:, i] = (g_u - np.sum(g_u * vu, axis=1, keepdims=True) * vu) / np.maximum(vn, _EPS)
    return losses, grad


def surrogate_task_loss(visual_tree, candidates, truth, temperature=0.1):
    """Sum over levels of the softmax cross-entropy on cosine similarities.

    ``candidates`` is one mapping ``label -> text feature`` per level and
    ``truth`` the true label per level.
    """
    v = getattr(visual_tree, "features", visual_tree)
    v = np.asarray(v, dtype=np.float64)
    if len(candidates) != v.shape[0] or len(truth) != v.shape[0]:
        raise ContractViolation("need one candidate set and one label per level")
    arrays, idx = [], []
    for level, (cands, label) in enumerate(zip(candidates, truth)):
        keys = list(cands)
        if label not in cands:
            raise ContractViolation(f"truth {label!r} missing from level-{level} candidates")
        arrays.append(np.stack([np.asarray(cands[k], dtype=np.float64) for k in keys]))
        idx.append(keys.index(label))
    loss, _ = surrogate_loss_batch(v[None], arrays, np.array([idx]), temperature)
    return float(loss[0])


# ---------------------------------------------------------------------------
# state, batch, objective
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TrainState:
    params: AttentionParams
    c1: float
    c2: float
    step: int = 0


@dataclass(frozen=True, eq=False)
class Batch:
    tokens: np.ndarray  # (B, M, d)
    text: np.ndarray  # (B, H, d)
    truth: np.ndarray  # (B, H) candidate indices
    candidates: tuple  # per level (K_i, d)


@dataclass(frozen=True)
class StepTrace:
    step: int
    c1: float
    c2: float
    c3_star: float
    dc3_dc1: float
    dc3_dc2: float
    surrogate: float
    text_entailment: float
    visual_entailment: float
    cross_modal: float
    total: float
    r: float
    r_clamped: bool
    certified: bool
    stationarity: float

    def finite(self):
        return all(
            math.isfinite(x)
            for x in (self.surrogate, self.text_entailment, self.visual_entailment, self.cross_modal, self.total)
        )

    def in_bracket(self):
        return min(self.c1, self.c2) <= self.c3_star <= max(self.c1, self.c2)

    def to_dict(self):
        return asdict(self)


def batch_from_dataset(data, mask=None):
    """Full batch with candidates ordered by node id at every level."""
    if mask is not None:
        data = data.subset(mask)
    paths = data.node_paths()
    candidates, truth = [], np.zeros((len(data), data.depth), dtype=np.int64)
    for level in range(data.depth):
        ids = data.level_nodes(level)
        pos = {k: j for j, k in enumerate(ids)}
        candidates.append(np.stack([data.node_text[k] for k in ids]))
        truth[:, level] = [pos[p[level]] for p in paths]
    return Batch(data.tokens, data.text, truth, tuple(candidates))


def resolve_radius(text, visual, c1, c2, c_min, fixed=None):
    """Shared per-step radius, raised to the convexity threshold when needed."""
    if fixed is not None:
        rp = manifold.RadiusParameter(fixed, source="fixed")
    else:
        rows = np.concatenate([text.reshape(-1, text.shape[-1]), visual.reshape(-1, visual.shape[-1])])
        rp = manifold.compute_r(rows)
    cert = manifold.r_min_threshold(c1, c2, c_min)
    # the threshold itself can be a degenerate boundary (zero second
    # derivative when c1 == c2), so clamping lands strictly above it
    return rp.clamp_to(cert.r_min_star * (1.0 + CLAMP_MARGIN))


def objective(params, c1, c2, batch, alpha, temperature, c_min=C_MIN_DEFAULT, r=None, r_fixed=None, tol=1e-8):
    """Loss parts and gradients of the full objective on one batch.

    ``r`` (a float) freezes the radius exactly, bypassing clamping; this is what
    finite-difference checks of the curvature gradients use.  Returns
    ``(parts, grads, solution, radius)`` where ``grads`` has keys ``W_Q``,
    ``W_K``, ``W_V``, ``c1``, ``c2`` holding total derivatives.
    """
    W = params.as_tuple()
    b = batch.tokens.shape[0]
    visual, cache = attend(batch.text, batch.tokens, *W)
    if r is None:
        radius = resolve_radius(batch.text, visual, c1, c2, c_min, r_fixed)
    else:
        radius = manifold.RadiusParameter(r)
    sol = manifold.solve_intermediate(c1, c2, radius, tol=tol, c_min=c_min)
    c3 = sol.c3_star

    sur, g_vis = surrogate_loss_batch(visual, batch.candidates, batch.truth, temperature)
    g_vis /= b

    t1 = expm_origin(batch.text, c1)
    v2 = expm_origin(visual, c2)
    t3 = expm_origin(batch.text, c3)
    v3 = expm_origin(visual, c3)
    _, (tent, vent, ent), g = entailment.geometric_loss_vjp(t1, v2, t3, v3, c1, c2, c3)
    scale = alpha / b
    gv2, gc2_lift = expm_origin_vjp(visual, c2, g["visual_c2"], out=v2)
    gv3, gc3_vlift = expm_origin_vjp(visual, c3, g["visual_c3"], out=v3)
    _, gc1_lift = expm_origin_vjp(batch.text, c1, g["text_c1"], out=t1)
    _, gc3_tlift = expm_origin_vjp(batch.text, c3, g["text_c3"], out=t3)
    g_vis = g_vis + scale * (gv2 + gv3)

    d_c1 = scale * (g["c1"] + gc1_lift)
    d_c2 = scale * (g["c2"] + gc2_lift)
    d_c3 = scale * (g["c3"] + gc3_vlift + gc3_tlift)
    total_c1 = d_c1 + d_c3 * sol.dc3_dc1
    total_c2 = d_c2 + d_c3 * sol.dc3_dc2

    _, _, gWQ, gWK, gWV = attend_vjp(cache, g_vis, *W)
    parts = {
        "surrogate": float(sur.mean()),
        "text_entailment": tent / b,
        "visual_entailment": vent / b,
        "cross_modal": ent / b,
    }
    parts["total"] = parts["surrogate"] + alpha * (
        parts["text_entailment"] + parts["visual_entailment"] + parts["cross_modal"]
    )
    grads = {"W_Q": gWQ, "W_K": gWK, "W_V": gWV, "c1": float(total_c1), "c2": float(total_c2)}
    return parts, grads, sol, radius


def schedule_factor(config, step):
    if config.schedule == "cosine":
        return 0.5 * (1.0 + math.cos(math.pi * step / config.epochs))
    return 1.0


def learning_rate(config, step):
    return config.lr * schedule_factor(config, step)


def train_step(state, batch, config):
    """One gradient step; returns ``(new_state, trace)`` with the trace of the pre-update state."""
    parts, grads, sol, radius = objective(
        state.params,
        state.c1,
        state.c2,
        batch,
        config.alpha,
        config.temperature,
        c_min=config.c_min,
        r_fixed=config.r_fixed if config.r_policy == "fixed" else None,
        tol=config.solver_tol,
    )
    trace = StepTrace(
        step=state.step,
        c1=state.c1,
        c2=state.c2,
        c3_star=sol.c3_star,
        dc3_dc1=sol.dc3_dc1,
        dc3_dc2=sol.dc3_dc2,
        surrogate=parts["surrogate"],
        text_entailment=parts["text_entailment"],
        visual_entailment=parts["visual_entailment"],
        cross_modal=parts["cross_modal"],
        total=parts["total"],
        r=radius.r,
        r_clamped=radius.clamped,
        certified=sol.certified,
        stationarity=sol.stationarity,
    )
    if not trace.finite():
        raise NonFiniteLossError(f"non-finite loss at step {state.step}", trace)
    factor = schedule_factor(config, state.step)
    lr = config.lr * factor
    clr = (config.lr if config.curvature_lr is None else config.curvature_lr) * factor
    p = state.params
    params = p.replace(p.W_Q - lr * grads["W_Q"], p.W_K - lr * grads["W_K"], p.W_V - lr * grads["W_V"])
    c1 = max(config.c_min, state.c1 - clr * grads["c1"])
    c2 = max(config.c_min, state.c2 - clr * grads["c2"])
    return TrainState(params, c1, c2, state.step + 1), trace


# ---------------------------------------------------------------------------
# evaluation and experiments
# ---------------------------------------------------------------------------


def node_scores(params, data, tax):
    """Score of every taxonomy node for every sample.

    Node ``n`` is scored by querying the sample's tokens with the text feature
    of ``n`` and taking the cosine between the read-out and that feature.  The
    root (never a competing choice) scores 0.
    """
    ids = [n for n in tax.nodes if n != tax.root]
    queries = np.stack([data.node_text[n] for n in ids])
    out, _ = attend(queries[None], data.tokens, *params.as_tuple())
    on = np.linalg.norm(out, axis=-1)
    qn = np.linalg.norm(queries, axis=-1)
    cos = np.sum(out * queries[None], axis=-1) / np.maximum(on * qn[None], _EPS)
    scores = np.zeros((len(data), len(tax.nodes)))
    for j, n in enumerate(ids):
        scores[:, tax.index[n]] = cos[:, j]
    return scores


def evaluate(params, data, tax, treecuts, seed):
    paths = data.node_paths()
    preds = taxonomy.PredictionTable(tax, tuple(p[-1] for p in paths), node_scores(params, data, tax))
    return taxonomy.metric_report(tax, preds, count=treecuts, seed=seed)


def load_data(config):
    if config.data_path is not None:
        return read_jsonl(config.data_path)
    spec = dict(config.synthetic or {})
    spec.setdefault("seed", config.seed)
    return synthesize_dataset(SyntheticSpec.from_dict(spec))


def train(config, data=None):
    """Train on the ``train`` split; returns ``(state, traces)``."""
    data = load_data(config) if data is None else data
    batch = batch_from_dataset(data, data.split == "train")
    state = TrainState(init_attention(data.dim, config.seed, config.init_scale), config.c1_init, config.c2_init)
    traces = []
    for _ in range(config.epochs):
        state, trace = train_step(state, batch, config)
        traces.append(trace)
    return state, traces


def _experiment(config, data, tax):
    state, traces = train(config, data)
    heldout = data.subset(data.split == "heldout") if np.any(data.split == "heldout") else data
    metrics = evaluate(state.params, heldout, tax, config.treecuts, config.seed)
    last = traces[-1]
    summary = {
        "metrics": metrics,
        "final_curvatures": {"c1": state.c1, "c2": state.c2, "c3_star": last.c3_star},
        "first_step": traces[0].to_dict(),
        "last_step": last.to_dict(),
        "steps": len(traces),
    }
    return summary, traces


def run_experiment(config, out_dir=None):
    """Train, evaluate on held-out data, optionally write reports.

    Returns ``(report, traces)``.  With ``out_dir`` the report goes to
    ``report.json`` and the traces to ``traces.jsonl``; both are byte-identical
    across runs of the same config.
    """
    data = load_data(config)
    tax = taxonomy.build_taxonomy([tuple(lab) for lab in data.labels])
    summary, traces = _experiment(config, data, tax)
    report = {"config": config.to_dict(), "run": summary}
    if config.compare_baseline:
        base_cfg = TrainConfig.from_dict({**config.to_dict(), "alpha": 0.0, "compare_baseline": False})
        report["baseline"], _ = _experiment(base_cfg, data, tax)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "report.json"), "w") as fh:
            fh.write(dumps_report(report))
        with open(os.path.join(out_dir, "traces.jsonl"), "w") as fh:
            for t in traces:
                fh.write(json.dumps(t.to_dict(), sort_keys=True) + "\n")
    return report, traces


def dumps_report(report):
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


__all__ = [
    "CURVATURE_INIT_GRID",
    "Batch",
    "Dataset",
    "StepTrace",
    "TrainConfig",
    "TrainState",
    "batch_from_dataset",
    "evaluate",
    "learning_rate",
    "load_data",
    "node_scores",
    "objective",
    "resolve_radius",
    "run_experiment",
    "surrogate_loss_batch",
    "surrogate_task_loss",
    "train",
    "train_step",
]
