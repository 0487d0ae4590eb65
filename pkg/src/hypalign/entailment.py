"""Entailment-cone hinge losses within and across modalities."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ContractViolation, DegenerateGeometryError
from .lorentz import APERTURE_K, LorentzPoint, exterior_angle, half_aperture


@dataclass(frozen=True)
class EntailmentReport:
    per_level_losses: tuple
    total: float
    violation_count: int

    @classmethod
    def from_losses(cls, losses):
        losses = tuple(float(x) for x in losses)
        return cls(losses, float(sum(losses)), sum(1 for x in losses if x > 0.0))

    @classmethod
    def empty(cls):
        return cls((), 0.0, 0)


def _as_points(points, c):
    """Stack a list of LorentzPoints (or an (H, n+1) array) into coordinates."""
    if isinstance(points, LorentzPoint):
        points = [points]
    if isinstance(points, (list, tuple)) and points and isinstance(points[0], LorentzPoint):
        curvs = {p.c for p in points}
        if len(curvs) != 1 or (c is not None and float(c) not in curvs):
            raise ContractViolation("all points must share one curvature")
        return np.stack([p.coords for p in points]), curvs.pop()
    arr = np.asarray(points, dtype=np.float64)
    if c is None:
        raise ContractViolation("curvature is required for raw coordinate arrays")
    return arr.reshape(-1, arr.shape[-1]) if arr.ndim == 1 else arr, float(c)


def _depth(tree):
    if isinstance(tree, (list, tuple)):
        return len(tree)
    arr = tree.coords if isinstance(tree, LorentzPoint) else np.asarray(tree)
    return 1 if arr.ndim == 1 else arr.shape[0]


def cone_violation(child, parent, c=None, k=APERTURE_K):
    """``max(0, exterior_angle(child, parent) - half_aperture(parent))``."""
    angle = exterior_angle(child, parent, c)
    aperture = half_aperture(parent, c if c is not None else parent.c, k)
    return np.maximum(0.0, angle - aperture)


def cone_violation_vjp(child, parent, c, k=APERTURE_K):
    """Loss and gradients ``(loss, g_child, g_parent, g_c)`` of the batched hinge.

    The subgradient at the exact cone boundary is zero.
    """
    child = np.atleast_2d(np.asarray(child, dtype=np.float64))
    parent = np.atleast_2d(np.asarray(parent, dtype=np.float64))
    loss, gch, gpa, gc = kernels.cone_violation_batch(child, parent, c, k)
    if np.any(np.isnan(loss)):
        raise DegenerateGeometryError("degenerate child/parent pair (apex at origin or coincident points)")
    return loss, gch, gpa, float(np.sum(gc))


def cross_modal_loss(visual, textual, c=None):
    """Per-level hinge with each textual point as the parent of its visual counterpart."""
    v, c = _as_points(visual, c)
    t, c = _as_points(textual, c)
    if v.shape != t.shape:
        raise ContractViolation(f"visual and textual trees differ in shape: {v.shape} vs {t.shape}")
    losses = cone_violation(v, t, c)
    return EntailmentReport.from_losses(np.atleast_1d(losses))


def in_modal_loss(tree, c=None):
    """Sum over adjacent levels of the hinge pushing level ``i+1`` into the cone of level ``i``."""
    x, c = _as_points(tree, c)
    if x.shape[0] < 2:
        return EntailmentReport.empty()
    losses = cone_violation(x[1:], x[:-1], c)
    return EntailmentReport.from_losses(np.atleast_1d(losses))


def geometric_loss(text_c1, visual_c2, text_c3, visual_c3, c1=None, c2=None, c3=None):
    """In-modal textual + in-modal visual + cross-modal entailment.

    Returns ``(total, (text_report, visual_report, cross_report))``; the
    entailment weight is applied by the caller.
    """
    depths = {_depth(x) for x in (text_c1, visual_c2, text_c3, visual_c3)}
    if len(depths) != 1:
        raise ContractViolation(f"feature trees have inconsistent depths {sorted(depths)}")
    tent = in_modal_loss(text_c1, c1)
    vent = in_modal_loss(visual_c2, c2)
    ent = cross_modal_loss(visual_c3, text_c3, c3)
    return tent.total + vent.total + ent.total, (tent, vent, ent)


def geometric_loss_vjp(text_c1, visual_c2, text_c3, visual_c3, c1, c2, c3, k=APERTURE_K):
    """Gradients of :func:`geometric_loss` for batches of trees.

    Each tree argument has shape ``(H, n+1)`` or ``(B, H, n+1)``; the loss is
    summed over the batch.  Returns ``(total, parts, grads)`` with ``parts`` the
    three summed component losses and ``grads`` a dict holding gradients for
    each tree and each curvature.
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in (text_c1, visual_c2, text_c3, visual_c3)]
    squeeze = arrays[0].ndim == 2
    arrays = [a[None] if a.ndim == 2 else a for a in arrays]
    shape = arrays[0].shape
    if any(a.shape != shape for a in arrays):
        raise ContractViolation("feature trees have inconsistent shapes")
    b, h, dim = shape
    grads = {name: np.zeros(shape) for name in ("text_c1", "visual_c2", "text_c3", "visual_c3")}

    def in_modal(x, c):
        if h < 2:
            return 0.0, np.zeros(shape), 0.0
        child = x[:, 1:].reshape(-1, dim)
        parent = x[:, :-1].reshape(-1, dim)
        loss, gch, gpa, gc = cone_violation_vjp(child, parent, c, k)
        g = np.zeros(shape)
        g[:, 1:] += gch.reshape(b, h - 1, dim)
        g[:, :-1] += gpa.reshape(b, h - 1, dim)
        return float(loss.sum()), g, gc

    tent, grads["text_c1"], gc1 = in_modal(arrays[0], c1)
    vent, grads["visual_c2"], gc2 = in_modal(arrays[1], c2)
    loss, gv, gt, gc3 = cone_violation_vjp(arrays[3].reshape(-1, dim), arrays[2].reshape(-1, dim), c3, k)
    ent = float(loss.sum())
    grads["visual_c3"] = gv.reshape(shape)
    grads["text_c3"] = gt.reshape(shape)
    grads.update(c1=gc1, c2=gc2, c3=gc3)
    if squeeze:
        for name in ("text_c1", "visual_c2", "text_c3", "visual_c3"):
            grads[name] = grads[name][0]
    return tent + vent + ent, (tent, vent, ent), grads
