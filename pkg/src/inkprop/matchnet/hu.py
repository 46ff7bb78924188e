"""Classical segment matcher: log-scaled Hu moment invariants plus
normalized centroid and log area, nearest-neighbor in feature space.

The non-learned baseline: strong on rigid translation (Hu moments are
similarity-invariant), blind to inclusion (a fragment of an occluded
region looks nothing like the whole region).
"""

from __future__ import annotations

import numpy as np

from ..raster import LineClass, RegionLabeling, SegmentMap

CENTROID_WEIGHT = 0.1


def hu_invariants(ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """The seven Hu moment invariants of a pixel set."""
    n = float(len(xs))
    cx, cy = xs.mean(), ys.mean()
    dx = xs - cx
    dy = ys - cy

    def mu(p, q):
        return float((dx**p * dy**q).sum())

    def eta(p, q):
        return mu(p, q) / n ** (1 + (p + q) / 2)

    n20, n02, n11 = eta(2, 0), eta(0, 2), eta(1, 1)
    n30, n03 = eta(3, 0), eta(0, 3)
    n21, n12 = eta(2, 1), eta(1, 2)

    a = n30 + n12
    b = n21 + n03
    c = n30 - 3 * n12
    d = 3 * n21 - n03

    return np.array(
        [
            n20 + n02,
            (n20 - n02) ** 2 + 4 * n11**2,
            c**2 + d**2,
            a**2 + b**2,
            c * a * (a**2 - 3 * b**2) + d * b * (3 * a**2 - b**2),
            (n20 - n02) * (a**2 - b**2) + 4 * n11 * a * b,
            d * a * (a**2 - 3 * b**2) - c * b * (3 * a**2 - b**2),
        ]
    )


def log_scaled(phi: np.ndarray) -> np.ndarray:
    """-log10(|phi| + eps): magnitude-compressed and sign-free.

    The high-order invariants of near-symmetric shapes sit at numerical
    zero with arbitrary sign; keeping the sign would inject +-15 of pure
    noise per coordinate, so only the magnitude enters the feature."""
    return -np.log10(np.abs(phi) + 1e-12)


def segment_features(segmap: SegmentMap, seg_ids: list[int]) -> np.ndarray:
    """[n, 10] feature rows: 7 log-Hu, weighted normalized centroid, log
    area."""
    h, w = segmap.ids.shape
    rows = np.empty((len(seg_ids), 10))
    for i, sid in enumerate(seg_ids):
        ys, xs = np.nonzero(segmap.ids == sid)
        hu = log_scaled(hu_invariants(ys.astype(float), xs.astype(float)))
        rows[i, :7] = hu
        rows[i, 7] = CENTROID_WEIGHT * xs.mean() / w
        rows[i, 8] = CENTROID_WEIGHT * ys.mean() / h
        rows[i, 9] = np.log(len(xs))
    return rows


def hu_match(
    ref: tuple[SegmentMap, RegionLabeling],
    tgt: SegmentMap,
    threshold: float = 0.2,
    background: tuple[int, int, int] = (255, 255, 255),
):
    """Match every target blank segment to the feature-nearest reference
    segment and take that segment's region color. Ties break toward the
    lower reference id; confidence is 1/(1+distance)."""
    from .pipeline import MatchResult, render_result

    ref_map, labeling = ref
    ref_ids = [
        r.id
        for r in ref_map.records
        if r.kind == LineClass.BLANK and labeling.region_of[r.id] >= 0
    ]
    if not ref_ids:
        raise ValueError("reference has no candidate segments")
    tgt_ids = [r.id for r in tgt.records if r.kind == LineClass.BLANK]

    ref_feat = segment_features(ref_map, ref_ids)
    tgt_feat = segment_features(tgt, tgt_ids)
    d2 = ((tgt_feat[:, None, :] - ref_feat[None, :, :]) ** 2).sum(axis=2)
    nearest = d2.argmin(axis=1)  # first minimum = lowest reference id
    dist = np.sqrt(d2[np.arange(len(tgt_ids)), nearest])

    regions = np.array(
        [labeling.region_of[ref_ids[j]] for j in nearest], dtype=np.int32
    )
    confidence = 1.0 / (1.0 + dist)
    assigned = confidence >= threshold
    assignments = np.where(assigned, regions, -1).astype(np.int32)

    raster = render_result(tgt, tgt_ids, assignments, labeling, background)
    return MatchResult(
        segment_ids=tuple(tgt_ids),
        assignments=assignments,
        confidence=confidence,
        raster=raster,
        threshold=threshold,
    )
