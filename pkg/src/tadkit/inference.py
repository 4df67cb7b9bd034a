"""Prediction-time fusion, non-maximum suppression, and video inference.

Each decoded anchor's class probabilities are combined with the mean
snippet scores over its span (summed over blocks, averaged over rows and
blocks) and gated by the predicted overlap:

    base = [class probabilities if enabled] + [mean snippet scores if enabled]
    fused = overlap * base            (when overlap gating is enabled)

The winning category is the argmax over action columns (background is
excluded); its fused score is the confidence. Per-category greedy NMS
with threshold 0.1 removes overlapping duplicates.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .data import Detection, ScoreSequence, slide_windows
from .errors import ConfigError, DataError, UsageError
from .matching import iou_1d
from .model import AnchorPrediction, Network
from .tensor import softmax

PREDICTION_OVERLAP = 0.25  # window overlap fraction at inference time


@dataclass(frozen=True)
class FusionConfig:
    use_class: bool = True
    use_sas: bool = True     # mean snippet scores over the candidate span
    use_over: bool = True    # gate by predicted overlap
    nms_threshold: float = 0.1
    suppress_background: bool = False

    def __post_init__(self):
        if not (self.use_class or self.use_sas):
            raise ConfigError("fusion needs class scores or snippet scores (or both)")
        if not (0 < self.nms_threshold <= 1):
            raise ConfigError(f"nms_threshold must be in (0, 1], got {self.nms_threshold}")


def block_alignment(seq: ScoreSequence, categories):
    """Map each block's columns onto the detection category space.

    Returns one integer array per block: entry j is the detection column
    (0 = background) fed by the block's column j. Blocks must either name
    their columns or already be ordered background-first over the same
    categories.
    """
    wanted = ["background"] + list(categories)
    out = []
    for block in seq.blocks:
        if block.class_names is not None:
            if sorted(block.class_names) != sorted(wanted):
                raise DataError(
                    f"block {block.name!r} classes {list(block.class_names)} do not "
                    f"cover categories {wanted}"
                )
            out.append(np.array([wanted.index(n) for n in block.class_names]))
        elif block.width == len(wanted):
            out.append(np.arange(len(wanted)))
        else:
            raise DataError(
                f"block {block.name!r} has width {block.width}, cannot align to "
                f"{len(wanted)} categories without class names"
            )
    return out


def mean_snippet_scores(seq: ScoreSequence, start, end, categories, alignment=None):
    """Mean per-category snippet score over [start, end).

    Scores are summed across blocks per snippet, then averaged over the
    covered snippet rows and divided by the number of blocks. The range is
    clamped to the video; rows floor(start)..ceil(end) are included. An
    empty range yields zeros and a warning.
    """
    if alignment is None:
        alignment = block_alignment(seq, categories)
    k1 = len(categories) + 1
    start = max(float(start), 0.0)
    end = min(float(end), float(seq.num_snippets))
    lo = int(np.floor(start))
    hi = int(np.ceil(end))
    if hi <= lo:
        warnings.warn(f"empty snippet range [{start}, {end}) in {seq.video_id!r}")
        return np.zeros(k1)
    out = np.zeros(k1)
    for offset, block, cols in zip(seq.block_offsets(), seq.blocks, alignment):
        rows = seq.matrix[lo:hi, offset:offset + block.width]
        np.add.at(out, cols, rows.mean(axis=0))
    return out / len(seq.blocks)


def fuse_scores(prediction: AnchorPrediction, mean_scores, config: FusionConfig):
    """Fill in fused_scores/category/confidence on a copy of ``prediction``.

    ``prediction.class_scores`` must already be softmax-normalized. The
    category is the argmax over action columns only; ties go to the lower
    category index.
    """
    mean_scores = np.asarray(mean_scores, dtype=float)
    if mean_scores.shape != prediction.class_scores.shape:
        raise UsageError(
            f"score shapes differ: {mean_scores.shape} vs {prediction.class_scores.shape}"
        )
    base = np.zeros_like(mean_scores)
    if config.use_class:
        base = base + prediction.class_scores
    if config.use_sas:
        base = base + mean_scores
    fused = prediction.overlap * base if config.use_over else base
    category = 1 + int(np.argmax(fused[1:]))
    return replace(
        prediction,
        fused_scores=fused,
        category=category,
        confidence=float(fused[category]),
    )


def nms(detections, threshold):
    """Greedy per-category suppression: visit detections by descending
    confidence (ties: earlier start, then input order) and drop any
    same-category detection whose IoU with a kept one exceeds the
    threshold. Kept detections return in input order."""
    if not (0 < threshold <= 1):
        raise ConfigError(f"nms threshold must be in (0, 1], got {threshold}")
    by_cat = {}
    for idx, det in enumerate(detections):
        by_cat.setdefault(det.category, []).append(idx)
    kept = []
    for cat in sorted(by_cat):
        order = sorted(by_cat[cat], key=lambda i: (-detections[i].confidence,
                                                   detections[i].start, i))
        chosen = []
        for i in order:
            det = detections[i]
            if all(
                iou_1d((det.start, det.end),
                       (detections[j].start, detections[j].end)) <= threshold
                for j in chosen
            ):
                chosen.append(i)
        kept.extend(chosen)
    return [detections[i] for i in sorted(kept)]


def predict_video(seq: ScoreSequence, network: Network, categories, config: FusionConfig):
    """Detect actions in one video.

    Windows at 25% overlap are decoded, candidates are mapped to video
    coordinates and clipped to [0, T], fused, suppressed per category,
    and returned sorted by descending confidence.
    """
    if len(categories) != network.config.num_classes:
        raise UsageError(
            f"network predicts {network.config.num_classes} categories, "
            f"annotation space has {len(categories)}"
        )
    if seq.dim != network.config.feature_dim:
        raise UsageError(
            f"sequence {seq.video_id!r} has dim {seq.dim}, network expects "
            f"{network.config.feature_dim}"
        )
    t_w = network.config.window_length
    t_v = seq.num_snippets
    alignment = block_alignment(seq, categories)
    windows = slide_windows(seq, None, t_w, PREDICTION_OVERLAP, keep_empty=True)

    candidates = []
    for window in windows:
        decoded = network.decode(window.features)
        probs = softmax(decoded.class_logits).data
        centers = window.start + decoded.centers.data * t_w
        widths = decoded.widths.data * t_w
        starts = np.clip(centers - widths / 2, 0.0, t_v)
        ends = np.clip(centers + widths / 2, 0.0, t_v)
        overlap = decoded.overlap.data
        for i in range(len(decoded)):
            if ends[i] - starts[i] <= 0:
                continue
            mean_scores = mean_snippet_scores(seq, starts[i], ends[i], categories, alignment)
            pred = AnchorPrediction(
                center=float((starts[i] + ends[i]) / 2),
                width=float(ends[i] - starts[i]),
                class_scores=probs[i],
                overlap=float(overlap[i]),
            )
            fused = fuse_scores(pred, mean_scores, config)
            if config.suppress_background and int(np.argmax(fused.fused_scores)) == 0:
                continue
            candidates.append(
                Detection(seq.video_id, float(starts[i]), float(ends[i]),
                          fused.category, fused.confidence)
            )
    kept = nms(candidates, config.nms_threshold)
    order = sorted(range(len(kept)), key=lambda i: (-kept[i].confidence, kept[i].start, i))
    return [kept[i] for i in order]
