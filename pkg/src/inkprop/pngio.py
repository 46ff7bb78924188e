"""PNG and JSON serialization for rasters, segment maps, and labelings.

SegmentMap travels as a 16-bit grayscale PNG storing id+1 (0 = sentinel)
plus a JSON sidecar with the per-segment records. RegionLabeling is JSON
with hex color strings.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .raster import (
    LineClass,
    RegionLabeling,
    RgbRaster,
    SegmentMap,
    SegmentRecord,
)


def load_rgb(path: str | Path, allow_palette: bool = True) -> RgbRaster:
    img = Image.open(path)
    if img.mode not in ("RGB", "RGBA"):
        img = img.convert("RGBA" if "A" in img.mode or img.mode == "P" else "RGB")
    arr = np.asarray(img)
    if arr.shape[2] == 4:
        return RgbRaster(pixels=arr[..., :3], alpha=arr[..., 3])
    return RgbRaster(pixels=arr)


def save_rgb(frame: RgbRaster, path: str | Path) -> None:
    if frame.alpha is not None:
        arr = np.dstack([frame.pixels, frame.alpha])
        Image.fromarray(arr, mode="RGBA").save(path)
    else:
        Image.fromarray(frame.pixels, mode="RGB").save(path)


def rgb_to_png_bytes(frame: RgbRaster) -> bytes:
    import io

    buf = io.BytesIO()
    if frame.alpha is not None:
        Image.fromarray(np.dstack([frame.pixels, frame.alpha]), mode="RGBA").save(
            buf, format="PNG"
        )
    else:
        Image.fromarray(frame.pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def rgb_from_png_bytes(data: bytes) -> RgbRaster:
    import io

    img = Image.open(io.BytesIO(data))
    if img.mode not in ("RGB", "RGBA"):
        img = img.convert("RGBA")
    arr = np.asarray(img)
    if arr.shape[2] == 4:
        return RgbRaster(pixels=arr[..., :3], alpha=arr[..., 3])
    return RgbRaster(pixels=arr)


def segmap_to_png_bytes(seg: SegmentMap) -> bytes:
    import io

    if seg.n_segments >= 65535:
        raise ValueError("too many segments for 16-bit id PNG")
    ids16 = (seg.ids + 1).astype(np.uint16)
    buf = io.BytesIO()
    Image.fromarray(ids16).save(buf, format="PNG")  # uint16 -> 16-bit grayscale
    return buf.getvalue()


def save_segmap(seg: SegmentMap, png_path: str | Path, json_path: str | Path) -> None:
    Path(png_path).write_bytes(segmap_to_png_bytes(seg))
    Path(json_path).write_text(json.dumps(segmap_records_json(seg), indent=1))


def segmap_records_json(seg: SegmentMap) -> dict:
    return {
        "width": seg.width,
        "height": seg.height,
        "segments": [
            {
                "id": r.id,
                "area": r.area,
                "bbox": list(r.bbox),
                "kind": LineClass(r.kind).name.lower(),
            }
            for r in seg.records
        ],
    }


def load_segmap(png_path: str | Path, json_path: str | Path) -> SegmentMap:
    img = Image.open(png_path)
    ids16 = np.asarray(img, dtype=np.int32)
    meta = json.loads(Path(json_path).read_text())
    records = tuple(
        SegmentRecord(
            id=s["id"],
            area=s["area"],
            bbox=tuple(s["bbox"]),
            kind=LineClass[s["kind"].upper()],
        )
        for s in meta["segments"]
    )
    return SegmentMap(ids=ids16 - 1, records=records)


def color_to_hex(rgb) -> str:
    return "#{:02x}{:02x}{:02x}".format(int(rgb[0]), int(rgb[1]), int(rgb[2]))


def hex_to_color(s: str) -> tuple[int, int, int]:
    s = s.lstrip("#")
    return (int(s[0:2], 16), int(s[2:4], 16), int(s[4:6], 16))


def labeling_to_json(labeling: RegionLabeling) -> dict:
    out: dict = {
        "region_of": labeling.region_of.tolist(),
        "n_regions": labeling.n_regions,
    }
    if labeling.color_of_region is not None:
        out["colors"] = [color_to_hex(c) for c in labeling.color_of_region]
    if labeling.source_ids is not None:
        out["source_ids"] = list(labeling.source_ids)
    if labeling.background_region is not None:
        out["background_region"] = labeling.background_region
    return out


def labeling_from_json(data: dict) -> RegionLabeling:
    colors = None
    if "colors" in data:
        colors = np.array(
            [hex_to_color(c) for c in data["colors"]], dtype=np.uint8
        ).reshape(-1, 3)
    return RegionLabeling(
        region_of=np.array(data["region_of"], dtype=np.int32),
        n_regions=data["n_regions"],
        color_of_region=colors,
        source_ids=tuple(data["source_ids"]) if "source_ids" in data else None,
        background_region=data.get("background_region"),
    )


def save_labeling(labeling: RegionLabeling, path: str | Path) -> None:
    Path(path).write_text(json.dumps(labeling_to_json(labeling), indent=1))


def load_labeling(path: str | Path) -> RegionLabeling:
    return labeling_from_json(json.loads(Path(path).read_text()))
