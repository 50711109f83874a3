"""Loss terms for depth completion: each evaluator returns the loss value and
its analytic subgradient with respect to the depth field.

Every term is piecewise linear in the depth values. Top-k selection sets are
treated as fixed when differentiating, and |x| takes subgradient 0 at x = 0,
so the returned gradient is a valid subgradient everywhere and the exact
gradient wherever no selection or sign boundary sits between evaluations.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import (
    GradientField,
    forward_gradients,
    image_gradient_magnitude,
    partition_windows,
    region_index,
)
from .validation import check_depth_field, check_image, check_mask

TERM_NAMES = ("dc", "gc", "sms", "smooth", "seg")
GC_BASES = ("mask", "image")
SMS_VARIANTS = ("selective_mask", "mask_all_gradients", "mask_smooth", "image_smooth")


@dataclass
class GcConfig:
    """Local windowed gradient constraint settings.

    basis "mask" ranks window candidates by raw gradient magnitude and, with
    edge_exclusion on, drops pixels whose forward neighbor carries a different
    label; basis "image" keeps all pixels but ranks by magnitude down-weighted
    with exp(-|grad I|). The loss value always sums raw magnitudes, so the
    basis changes which pixels are constrained, never the constraint scale.
    """

    window_size: int = 8
    select_fraction: float = 0.02
    basis: str = "mask"
    edge_exclusion: bool = True

    def __post_init__(self):
        if self.window_size < 1:
            raise ValueError(f"window size must be >= 1, got {self.window_size}")
        if not 0 < self.select_fraction <= 1:
            raise ValueError(f"select fraction must be in (0, 1], got {self.select_fraction}")
        if self.basis not in GC_BASES:
            raise ValueError(f"constraint basis must be one of {GC_BASES}, got {self.basis!r}")


@dataclass
class SmsConfig:
    """Mask-aware smoothness settings.

    selective_mask penalizes only the top fraction of intra-region gradients;
    mask_all_gradients penalizes every intra-region gradient; mask_smooth and
    image_smooth fall back to globally weighted smoothness with label-change
    or image-gradient weights.
    """

    select_fraction: float = 0.40
    variant: str = "selective_mask"

    def __post_init__(self):
        if not 0 < self.select_fraction <= 1:
            raise ValueError(f"select fraction must be in (0, 1], got {self.select_fraction}")
        if self.variant not in SMS_VARIANTS:
            raise ValueError(f"smoothness variant must be one of {SMS_VARIANTS}, got {self.variant!r}")


@dataclass
class LossConfig:
    """Which terms make up the objective and how each is configured.

    total = dc + alpha * seg + gc + sms (+ smooth); disabled terms are exactly 0.
    """

    terms: tuple = ("dc", "gc", "sms")
    gc: GcConfig = field(default_factory=GcConfig)
    sms: SmsConfig = field(default_factory=SmsConfig)
    alpha: float = 0.1

    def __post_init__(self):
        terms = tuple(t for t in TERM_NAMES if t in set(self.terms))
        unknown = set(self.terms) - set(TERM_NAMES)
        if unknown:
            raise ValueError(f"unknown loss terms {sorted(unknown)}; known: {TERM_NAMES}")
        if not terms:
            raise ValueError("at least one loss term must be enabled")
        self.terms = terms
        if self.alpha < 0:
            raise ValueError(f"segmentation weight must be >= 0, got {self.alpha}")


@dataclass(eq=False)
class Selection:
    """Selected pixels of a top-k loss, flattened across groups.

    group holds the window or region id of each selected pixel, pixel the flat
    row-major index; rows are sorted by (group, pixel) so two selections can
    be compared directly.
    """

    group: np.ndarray
    pixel: np.ndarray

    def __len__(self) -> int:
        return int(self.pixel.size)

    def for_group(self, g) -> np.ndarray:
        return self.pixel[self.group == g]

    def matches(self, other) -> bool:
        if other is None:
            return False
        return np.array_equal(self.group, other.group) and np.array_equal(
            self.pixel, other.pixel
        )


def _make_selection(group, pixel) -> Selection:
    group = np.asarray(group, dtype=np.int64)
    pixel = np.asarray(pixel, dtype=np.int64)
    order = np.lexsort((pixel, group))
    return Selection(group=group[order], pixel=pixel[order])


_EMPTY_SELECTION = Selection(
    group=np.empty(0, dtype=np.int64), pixel=np.empty(0, dtype=np.int64)
)


@dataclass
class LossReport:
    """Per-term values, their sum, and the total subgradient for one field."""

    dc: float = 0.0
    gc: float = 0.0
    sms: float = 0.0
    smooth: float = 0.0
    seg: float = 0.0
    total: float = 0.0
    gradient: np.ndarray = None
    selected_gc: Selection = None
    selected_sms: Selection = None
    sms_degenerate: bool = False


@dataclass
class SegPrediction:
    """Per-pixel class probabilities, H x W x C."""

    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 3 or self.probs.shape[2] < 1:
            raise ValueError(f"class probabilities must be HxWxC, got {self.probs.shape}")
        if not np.all(np.isfinite(self.probs)):
            raise ValueError("class probabilities contain non-finite values")
        sums = self.probs.sum(axis=2)
        if np.max(np.abs(sums - 1.0)) > 1e-6:
            raise ValueError("per-pixel class probabilities must sum to 1 within 1e-6")

    @property
    def classes(self) -> int:
        return self.probs.shape[2]

    @property
    def shape(self):
        return self.probs.shape[:2]


def top_k_indices(scores, k) -> np.ndarray:
    """Positions of the k largest scores, ties resolved toward the smallest
    position. Returned positions are ascending (the selection is a set)."""
    n = scores.size
    if k < 1:
        raise ValueError(f"selection count must be >= 1, got {k}")
    if k >= n:
        return np.arange(n)
    if k == 1:
        return np.array([np.argmax(scores)])
    part = np.argpartition(scores, n - k)
    thresh = scores[part[n - k]]
    above = np.flatnonzero(scores > thresh)
    ties = np.flatnonzero(scores == thresh)[: k - above.size]
    return np.sort(np.concatenate((above, ties)))


def label_boundary_count(labels) -> np.ndarray:
    """Per pixel, how many forward neighbors (right, down) carry a different
    label; neighbors beyond the grid edge count as same."""
    arr = check_mask(labels)
    out = np.zeros(arr.shape, dtype=np.float64)
    out[:, :-1] += arr[:, 1:] != arr[:, :-1]
    out[:-1, :] += arr[1:, :] != arr[:-1, :]
    return out


def _scatter_magnitude_grad(grads, pix, wgt, grad_flat, width):
    """Accumulate wgt * d(|dx|+|dy|)/dD at the given flat pixels."""
    sx = np.sign(grads.dx.ravel()[pix]) * wgt
    sy = np.sign(grads.dy.ravel()[pix]) * wgt
    np.add.at(grad_flat, pix, -(sx + sy))
    hx = sx != 0  # dx is 0 on the last column, so pix+1 never leaves the row
    np.add.at(grad_flat, pix[hx] + 1, sx[hx])
    hy = sy != 0  # dy is 0 on the last row
    np.add.at(grad_flat, pix[hy] + width, sy[hy])


def _weighted_smoothness(grads, weight):
    """Mean of weight * (|dx|+|dy|) and its fixed-weight subgradient."""
    n = weight.size
    value = float((grads.magnitude * weight).sum() / n)
    sx = np.sign(grads.dx) * weight
    sy = np.sign(grads.dy) * weight
    grad = np.zeros_like(weight)
    grad[:, :-1] -= sx[:, :-1]
    grad[:, 1:] += sx[:, :-1]
    grad[:-1, :] -= sy[:-1, :]
    grad[1:, :] += sy[:-1, :]
    grad /= n
    return value, grad


# ---------------------------------------------------------------------------
# depth consistency


def _dc_eval(d, sample_map, valid, count):
    resid = np.where(valid, d - sample_map, 0.0)
    value = float(np.abs(resid).sum() / count)
    grad = np.sign(resid) / count
    return value, grad


def depth_consistency(values, sparse):
    """Mean absolute deviation from the sparse samples.

    Returns (value, grad); grad is sign(D - S) / |V| at sample pixels and 0
    elsewhere, with 0 at exact agreement.
    """
    d = check_depth_field(values)
    if d.shape != sparse.shape:
        raise ValueError(f"depth {d.shape} and sparse map {sparse.shape} shapes differ")
    if sparse.count == 0:
        raise ValueError("depth consistency needs at least one sparse sample")
    return _dc_eval(d, sparse.map, sparse.valid, sparse.count)


# ---------------------------------------------------------------------------
# local windowed gradient constraint

# divisible grids with more windows than this take the batched matrix path
_FEW_WINDOWS = 4


@dataclass
class _GcPlan:
    shape: tuple
    fast: bool
    weight: np.ndarray = None  # flat static ranking weights, or None for raw
    flat_idx: np.ndarray = None  # fast path: (K, P) flat pixel index per window
    cand_mat: np.ndarray = None  # fast path: (K, P) candidate flags
    n_select: int = 0  # fast path: uniform N
    windows: list = None  # general path: (window_id, cand_flat_idx, n_k)
    # fast-path statics: candidates always outrank the -1 sentinel, so which
    # of the top slots hold real picks depends only on candidate counts
    counts: np.ndarray = None  # (K,) selected count per window
    nonempty: np.ndarray = None  # (K,) bool
    k_ne: int = 0
    picked_ok: np.ndarray = None  # (K, n_select) slot validity
    win_of: np.ndarray = None  # window id per selected slot, flattened
    wgt: np.ndarray = None  # subgradient weight per selected slot
    cand_neg: np.ndarray = None  # ~cand_mat, for sentinel fill
    gbuf: np.ndarray = None  # (K, P) gathered-score buffer
    off_p: np.ndarray = None  # (K, 1) row offsets into gbuf.ravel()


def _prepare_gc(shape, cfg, basis):
    h, w = shape
    if cfg.basis == "mask":
        labels = check_mask(basis, name="constraint basis mask")
        if labels.shape != shape:
            raise ValueError(f"basis shape {labels.shape} does not match depth {shape}")
        if cfg.edge_exclusion:
            cand = label_boundary_count(labels) == 0
        else:
            cand = np.ones(shape, dtype=bool)
        weight = None
    else:
        img = check_image(basis, name="constraint basis image")
        if img.shape != shape:
            raise ValueError(f"basis shape {img.shape} does not match depth {shape}")
        cand = np.ones(shape, dtype=bool)
        weight = np.exp(-image_gradient_magnitude(img)).ravel()

    s = cfg.window_size
    k_total = math.ceil(h / s) * math.ceil(w / s)
    if h % s == 0 and w % s == 0 and k_total > _FEW_WINDOWS:
        shape4 = (h // s, s, w // s, s)
        flat_idx = (
            np.arange(h * w).reshape(h, w).reshape(shape4).transpose(0, 2, 1, 3)
        ).reshape(k_total, s * s)
        cand_mat = cand.reshape(shape4).transpose(0, 2, 1, 3).reshape(k_total, s * s)
        n = max(1, round(cfg.select_fraction * s * s))
        counts = np.minimum(n, cand_mat.sum(axis=1))
        nonempty = counts > 0
        k_ne = int(nonempty.sum())
        picked_ok = np.arange(n)[None, :] < counts[:, None]
        win_of = np.broadcast_to(
            np.arange(k_total)[:, None], picked_ok.shape)[picked_ok]
        wgt = 1.0 / (k_ne * counts[win_of]) if k_ne else None
        return _GcPlan(shape=shape, fast=True, weight=weight, flat_idx=flat_idx,
                       cand_mat=cand_mat, n_select=n, counts=counts,
                       nonempty=nonempty, k_ne=k_ne, picked_ok=picked_ok,
                       win_of=win_of, wgt=wgt, cand_neg=~cand_mat,
                       gbuf=np.empty((k_total, s * s)),
                       off_p=np.arange(k_total)[:, None] * (s * s))

    part = partition_windows(h, w, s)
    cand_flat = cand.ravel()
    windows = []
    for k in range(len(part)):
        idx = part.indices(k)
        cidx = idx[cand_flat[idx]]
        if cidx.size == 0:
            continue  # empty candidate set: contributes 0 and leaves K
        windows.append((k, cidx, max(1, round(cfg.select_fraction * idx.size))))
    return _GcPlan(shape=shape, fast=False, weight=weight, windows=windows)


def _gc_eval(grads, plan, with_selection=True):
    h, w = plan.shape
    mag_flat = grads.magnitude.ravel()
    score_flat = mag_flat if plan.weight is None else mag_flat * plan.weight

    if plan.fast:
        if plan.k_ne == 0:
            sel = _EMPTY_SELECTION if with_selection else None
            return 0.0, np.zeros(plan.shape), sel
        scores = plan.gbuf
        np.take(score_flat, plan.flat_idx, out=scores)
        np.copyto(scores, -1.0, where=plan.cand_neg)
        if plan.n_select == 1:
            pos = np.argmax(scores, axis=1)[:, None]
        else:
            # partition out the winner set per window, then order it by
            # (score desc, index asc); rows with unselected threshold ties
            # fall back to the full stable sort for index-priority breaking
            n = plan.n_select
            kth = scores.shape[1] - n
            part = np.argpartition(scores, kth, axis=1)
            thresh = np.take_along_axis(scores, part[:, kth:kth + 1], axis=1)
            top_idx = np.sort(part[:, kth:], axis=1)
            top_scores = np.take_along_axis(scores, top_idx, axis=1)
            ok = (thresh[:, 0] < 0.0) | (
                (scores == thresh).sum(axis=1)
                == (top_scores == thresh).sum(axis=1))
            rank = np.argsort(-top_scores, axis=1, kind="stable")
            pos = np.take_along_axis(top_idx, rank, axis=1)
            if not ok.all():
                bad = np.flatnonzero(~ok)
                pos[bad] = np.argsort(-scores[bad], axis=1,
                                      kind="stable")[:, :n]
        picked_idx = plan.flat_idx.ravel()[pos + plan.off_p]
        sums = np.where(plan.picked_ok, mag_flat[picked_idx], 0.0).sum(axis=1)
        value = float((sums[plan.nonempty] / plan.counts[plan.nonempty]).mean())
        pix = picked_idx[plan.picked_ok]
        win_of, wgt = plan.win_of, plan.wgt
    else:
        if not plan.windows:
            sel = _EMPTY_SELECTION if with_selection else None
            return 0.0, np.zeros(plan.shape), sel
        means, pix_parts, win_parts, wgt_parts = [], [], [], []
        for win_id, cidx, n_k in plan.windows:
            pos = top_k_indices(score_flat[cidx], n_k)
            picked = cidx[pos]
            means.append(mag_flat[picked].mean())
            pix_parts.append(picked)
            win_parts.append(np.full(picked.size, win_id, dtype=np.int64))
            wgt_parts.append(np.full(picked.size, 1.0 / picked.size))
        k_ne = len(means)
        value = float(np.mean(means))
        pix = np.concatenate(pix_parts)
        win_of = np.concatenate(win_parts)
        wgt = np.concatenate(wgt_parts) / k_ne

    grad = np.zeros(h * w)
    _scatter_magnitude_grad(grads, pix, wgt, grad, w)
    selection = _make_selection(win_of, pix) if with_selection else None
    return value, grad.reshape(plan.shape), selection


def local_gradient_constraint(values, basis, cfg=None):
    """Mean of the top selected gradient magnitudes per non-overlapping window.

    Per window the top max(1, round(select_fraction * windowPixels)) candidate
    pixels by gradient magnitude are penalized; ties fall to the smaller
    row-major index. Windows with no candidates are skipped. Returns
    (value, grad, selection).
    """
    cfg = cfg if cfg is not None else GcConfig()
    d = check_depth_field(values)
    plan = _prepare_gc(d.shape, cfg, basis)
    return _gc_eval(forward_gradients(d), plan)


# ---------------------------------------------------------------------------
# smoothness terms


def edge_aware_smoothness(values, image):
    """Mean gradient magnitude, down-weighted by exp(-|grad I|). Returns
    (value, grad)."""
    d = check_depth_field(values)
    img = check_image(image)
    if img.shape != d.shape:
        raise ValueError(f"image shape {img.shape} does not match depth {d.shape}")
    weight = np.exp(-image_gradient_magnitude(img))
    return _weighted_smoothness(forward_gradients(d), weight)


@dataclass
class _SmsPlan:
    shape: tuple
    variant: str
    weight: np.ndarray = None  # mask_smooth / image_smooth: (H, W) weights
    regions: list = None  # selective variants: (region_id, cand_flat_idx, k_sel)
    # selection counts are fixed per region, so group ids, per-slot weights
    # and the per-region divisor never change between evaluations
    k_arr: np.ndarray = None  # (R,) selected count per kept region, float
    k_list: list = None  # same counts as plain ints, for row slicing
    groups: np.ndarray = None  # region id per selected slot
    wgt: np.ndarray = None  # subgradient weight per selected slot
    # candidate rows padded to a common width so one partition call ranks
    # every region; -1 sentinels rank below any gradient magnitude, and
    # +inf dummy columns top up each row's winner count to a uniform kmax
    pad_idx: np.ndarray = None  # (R, cmax) flat pixel index, 0-padded
    pad_ok: np.ndarray = None  # (R, cmax) real-candidate flags
    pad_neg: np.ndarray = None  # ~pad_ok, for sentinel fill
    sel_ok: np.ndarray = None  # (R, kmax) static prefix mask, col < k_r
    wide: np.ndarray = None  # (R, cmax + kmax) score buffer, dummy block set
    sbuf: np.ndarray = None  # (R, cmax) gathered-magnitude buffer
    off_w: np.ndarray = None  # (R, 1) row offsets into wide.ravel()
    off_n: np.ndarray = None  # (R, 1) row offsets into sbuf.ravel()
    cmax: int = 0
    kmax: int = 0
    take_all: bool = False  # every row selects all of its candidates
    # padding to a common width wastes work when region sizes are skewed
    # (one huge background region), so those plans loop per region instead
    batched: bool = True


def _sms_candidates(labels) -> np.ndarray:
    """Pixels whose forward x- and y-differences both stay inside their
    region. Last-row and last-column pixels have no such differences and are
    never candidates."""
    cand = label_boundary_count(labels) == 0
    cand[-1, :] = False
    cand[:, -1] = False
    return cand


def _prepare_sms(shape, cfg, mask=None, image=None):
    if cfg.variant == "image_smooth":
        if image is None:
            raise ValueError("image_smooth smoothness needs a luminance image")
        img = check_image(image)
        if img.shape != shape:
            raise ValueError(f"image shape {img.shape} does not match depth {shape}")
        return _SmsPlan(shape=shape, variant=cfg.variant,
                        weight=np.exp(-image_gradient_magnitude(img)))
    if mask is None:
        raise ValueError(f"{cfg.variant} smoothness needs a segmentation mask")
    labels = check_mask(mask)
    if labels.shape != shape:
        raise ValueError(f"mask shape {labels.shape} does not match depth {shape}")
    if cfg.variant == "mask_smooth":
        return _SmsPlan(shape=shape, variant=cfg.variant,
                        weight=np.exp(-label_boundary_count(labels)))
    cand_flat = _sms_candidates(labels).ravel()
    regions = []
    for rid, ridx in enumerate(region_index(labels)):
        cidx = ridx[cand_flat[ridx]]
        if cidx.size == 0:
            continue  # no intra-region differences: region leaves S
        if cfg.variant == "mask_all_gradients":
            k = cidx.size
        else:
            k = max(1, math.ceil(cfg.select_fraction * cidx.size))
        regions.append((rid, cidx, k))
    if not regions:
        return _SmsPlan(shape=shape, variant=cfg.variant, regions=regions)
    ks = np.array([k for _, _, k in regions], dtype=np.int64)
    k_arr = ks.astype(np.float64)
    rids = np.array([rid for rid, _, _ in regions], dtype=np.int64)
    sizes = [cidx.size for _, cidx, _ in regions]
    nreg = len(regions)
    cmax = max(sizes)
    common = dict(shape=shape, variant=cfg.variant, regions=regions,
                  k_arr=k_arr, k_list=[int(k) for k in ks],
                  groups=np.repeat(rids, ks),
                  wgt=np.repeat(1.0 / k_arr, ks) / nreg)
    if nreg * cmax > 2 * sum(sizes):
        return _SmsPlan(batched=False, **common)
    kmax = int(ks.max())
    pad_idx = np.zeros((nreg, cmax), dtype=np.int64)
    pad_ok = np.zeros((nreg, cmax), dtype=bool)
    for i, (_, cidx, _) in enumerate(regions):
        pad_idx[i, : cidx.size] = cidx
        pad_ok[i, : cidx.size] = True
    # +inf dummy columns raise every row's winner count to kmax so a single
    # uniform partition covers all regions; dummy columns sit past cmax, so
    # an ascending position sort leaves the k_r real winners first, in order
    wide = np.empty((nreg, cmax + kmax))
    wide[:, cmax:] = np.where(np.arange(kmax)[None, :] < (kmax - ks)[:, None],
                              np.inf, -1.0)
    return _SmsPlan(pad_idx=pad_idx, pad_ok=pad_ok, pad_neg=~pad_ok,
                    sel_ok=np.arange(kmax)[None, :] < ks[:, None],
                    wide=wide, sbuf=np.empty((nreg, cmax)),
                    off_w=np.arange(nreg)[:, None] * (cmax + kmax),
                    off_n=np.arange(nreg)[:, None] * cmax,
                    cmax=cmax, kmax=kmax,
                    take_all=bool(np.all(ks == sizes)), **common)


def _sms_eval(grads, plan, with_selection=True):
    if plan.weight is not None:
        value, grad = _weighted_smoothness(grads, plan.weight)
        return value, grad, None, False
    h, w = plan.shape
    if not plan.regions:
        sel = _EMPTY_SELECTION if with_selection else None
        return 0.0, np.zeros(plan.shape), sel, True
    mag_flat = grads.magnitude.ravel()
    sums = np.empty(len(plan.regions))
    if plan.batched:
        np.take(mag_flat, plan.pad_idx, out=plan.sbuf)
        if plan.take_all:
            svals, pvals = plan.sbuf, plan.pad_idx
        else:
            np.copyto(plan.sbuf, -1.0, where=plan.pad_neg)
            wide = plan.wide
            wide[:, : plan.cmax] = plan.sbuf
            part = np.argpartition(wide, plan.cmax, axis=1)
            wflat = wide.ravel()
            top = part[:, plan.cmax:]
            thresh = wflat[top[:, :1] + plan.off_w]
            top_scores = wflat[top + plan.off_w]
            # rows are safe when the threshold ties are all selected (the
            # winner set is value-determined); other rows fall back to a
            # full stable sort for index-priority tie breaking
            ok = (thresh[:, 0] < 0.0) | (
                (plan.sbuf == thresh).sum(axis=1)
                == (top_scores == thresh).sum(axis=1))
            if not ok.all():
                bad = np.flatnonzero(~ok)
                top[bad] = np.argsort(-wide[bad], axis=1,
                                      kind="stable")[:, : plan.kmax]
            top.sort(axis=1)
            safe = np.where(plan.sel_ok, top, 0) + plan.off_n
            svals = plan.sbuf.ravel()[safe]
            pvals = plan.pad_idx.ravel()[safe]
        for i, k in enumerate(plan.k_list):
            sums[i] = svals[i, :k].sum()
        pix = pvals[plan.sel_ok]
    else:
        pix_parts = []
        for i, (_, cidx, k) in enumerate(plan.regions):
            scores_r = mag_flat[cidx]
            if k == cidx.size:
                svals_r = scores_r
                pix_parts.append(cidx)
            else:
                kth = cidx.size - k
                part = np.argpartition(scores_r, kth)
                thresh = scores_r[part[kth]]
                top = part[kth:]
                if (scores_r == thresh).sum() == (scores_r[top] == thresh).sum():
                    sel = np.sort(top)
                else:
                    sel = np.sort(np.argsort(-scores_r, kind="stable")[:k])
                svals_r = scores_r[sel]
                pix_parts.append(cidx[sel])
            sums[i] = svals_r.sum()
        pix = np.concatenate(pix_parts)
    value = float(np.mean(sums / plan.k_arr))
    grad = np.zeros(h * w)
    _scatter_magnitude_grad(grads, pix, plan.wgt, grad, w)
    selection = _make_selection(plan.groups, pix) if with_selection else None
    return value, grad.reshape(plan.shape), selection, False


def selective_mask_smoothness(values, mask, cfg=None, image=None):
    """Intra-region smoothness: per region, the top ceil(select_fraction *
    candidates) gradient magnitudes are penalized, averaged per region then
    across regions.

    Candidates are pixels whose forward differences stay inside their region;
    cross-boundary differences never enter. Variants mask_all_gradients
    (penalize every candidate), mask_smooth (global smoothness weighted by
    label changes) and image_smooth (weighted by image gradients) share this
    entry point. Returns (value, grad, selection, degenerate); degenerate is
    True when no region has candidates, in which case value and grad are 0.
    """
    cfg = cfg if cfg is not None else SmsConfig()
    d = check_depth_field(values)
    plan = _prepare_sms(d.shape, cfg, mask=mask, image=image)
    return _sms_eval(forward_gradients(d), plan)


# ---------------------------------------------------------------------------
# segmentation cross-entropy (constant in the depth field)


def segmentation_cross_entropy(pred, pseudo_labels) -> float:
    """Mean cross-entropy of predicted class probabilities against one-hot
    pseudo labels. Evaluation-only: the value carries no depth gradient."""
    labels = check_mask(pseudo_labels, name="pseudo labels")
    if pred.shape != labels.shape:
        raise ValueError(f"prediction {pred.shape} and labels {labels.shape} shapes differ")
    if int(labels.max()) >= pred.classes:
        raise ValueError(
            f"class count {pred.classes} does not cover label {int(labels.max())}"
        )
    p = np.take_along_axis(pred.probs, labels[:, :, None], axis=2)[:, :, 0]
    if np.any(p <= 0):
        raise ValueError("zero probability at a labeled class")
    return float(-np.log(p).mean())


# ---------------------------------------------------------------------------
# total objective


class Objective:
    """Evaluator for the combined objective at a fixed configuration.

    Static structure (window partition, candidate sets, per-region selection
    counts, smoothness weights, the segmentation term) is built once here, so
    evaluate() costs only the per-iteration selection and gradient work.
    """

    def __init__(self, shape, cfg=None, sparse=None, mask=None, image=None,
                 seg_pred=None):
        self.cfg = cfg if cfg is not None else LossConfig()
        self.shape = tuple(shape)
        terms = self.cfg.terms
        self._sparse = None
        self._gc_plan = None
        self._sms_plan = None
        self._smooth_weight = None
        self._seg_value = 0.0

        if "dc" in terms:
            if sparse is None:
                raise ValueError("depth consistency needs sparse samples")
            if sparse.shape != self.shape:
                raise ValueError(
                    f"sparse map shape {sparse.shape} does not match {self.shape}")
            if sparse.count == 0:
                raise ValueError("depth consistency needs at least one sparse sample")
            self._sparse = sparse
        if "gc" in terms:
            basis = mask if self.cfg.gc.basis == "mask" else image
            if basis is None:
                raise ValueError(
                    f"gradient constraint with basis {self.cfg.gc.basis!r} needs "
                    f"a {self.cfg.gc.basis} input")
            self._gc_plan = _prepare_gc(self.shape, self.cfg.gc, basis)
        if "sms" in terms:
            self._sms_plan = _prepare_sms(self.shape, self.cfg.sms, mask=mask,
                                          image=image)
        if "smooth" in terms:
            if image is None:
                raise ValueError("edge-aware smoothness needs a luminance image")
            img = check_image(image)
            if img.shape != self.shape:
                raise ValueError(
                    f"image shape {img.shape} does not match {self.shape}")
            self._smooth_weight = np.exp(-image_gradient_magnitude(img))
        if "seg" in terms:
            if seg_pred is None or mask is None:
                raise ValueError(
                    "segmentation term needs class probabilities and pseudo labels")
            self._seg_value = segmentation_cross_entropy(seg_pred, check_mask(mask))

        self._needs_grads = bool({"gc", "sms", "smooth"} & set(terms))
        if self._needs_grads:
            # scratch buffers for the forward differences; every written
            # entry is overwritten per call and the fixed zeros stay fixed
            self._dx = np.zeros(self.shape)
            self._dy = np.zeros(self.shape)
            self._ax = np.zeros(self.shape)
            self._ay = np.zeros(self.shape)
            self._mag = np.zeros(self.shape)
        if self._sparse is not None:
            self._dc_buf = np.empty(self.shape)
            self._dc_inv = ~self._sparse.valid
            self._dc_vidx = np.flatnonzero(self._sparse.valid.ravel())
            self._dc_svals = self._sparse.map.ravel()[self._dc_vidx]

    def _gradients(self, d) -> GradientField:
        np.subtract(d[:, 1:], d[:, :-1], out=self._dx[:, :-1])
        np.subtract(d[1:, :], d[:-1, :], out=self._dy[:-1, :])
        np.abs(self._dx, out=self._ax)
        np.abs(self._dy, out=self._ay)
        np.add(self._ax, self._ay, out=self._mag)
        return GradientField(dx=self._dx, dy=self._dy, magnitude=self._mag)

    def evaluate(self, depth, with_selections=True) -> LossReport:
        d = np.asarray(depth, dtype=np.float64)
        terms = self.cfg.terms
        report = LossReport(gradient=np.zeros(self.shape))
        grads = self._gradients(d) if self._needs_grads else None
        if "dc" in terms:
            # residuals live only at sample pixels; the masked full-frame
            # sum keeps the value identical to the plain formulation
            buf, count = self._dc_buf, self._sparse.count
            np.subtract(d, self._sparse.map, out=buf)
            np.copyto(buf, 0.0, where=self._dc_inv)
            np.abs(buf, out=buf)
            report.dc = float(buf.sum() / count)
            gv = np.sign(d.ravel()[self._dc_vidx] - self._dc_svals)
            gv /= count
            report.gradient.ravel()[self._dc_vidx] = gv
        if "gc" in terms:
            value, g, sel = _gc_eval(grads, self._gc_plan, with_selections)
            report.gc = value
            report.gradient += g
            report.selected_gc = sel
        if "sms" in terms:
            value, g, sel, degen = _sms_eval(grads, self._sms_plan,
                                             with_selections)
            report.sms = value
            report.gradient += g
            report.selected_sms = sel
            report.sms_degenerate = degen
        if "smooth" in terms:
            value, g = _weighted_smoothness(grads, self._smooth_weight)
            report.smooth = value
            report.gradient += g
        if "seg" in terms:
            report.seg = self._seg_value  # constant in D: no gradient path
        report.total = (report.dc + self.cfg.alpha * report.seg + report.gc
                        + report.sms + report.smooth)
        return report


def total_objective(values, sparse=None, mask=None, image=None, cfg=None,
                    seg_pred=None) -> LossReport:
    """Evaluate the combined objective and its subgradient at one field."""
    d = check_depth_field(values)
    obj = Objective(d.shape, cfg=cfg, sparse=sparse, mask=mask, image=image,
                    seg_pred=seg_pred)
    return obj.evaluate(d)
