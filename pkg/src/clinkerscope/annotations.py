"""Instance annotations and the interchange formats they travel in.

Supports polygon-outline documents (one JSON per image, as produced by common
labelling tools) and COCO-style datasets with either polygon or uncompressed
run-length segmentations. Run lengths are stored column-major with the count
of leading background pixels first.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .polygons import Polygon, mask_to_polygons, polygon_to_mask
from .raster import BBox, BinaryMask, LabelMap, PhaseLabel

CATEGORY_IDS = {PhaseLabel.ALITE: 1, PhaseLabel.BELITE: 2}
CATEGORY_NAMES = {1: "alite", 2: "belite"}
_PHASE_BY_NAME = {"alite": PhaseLabel.ALITE, "belite": PhaseLabel.BELITE}


@dataclass(eq=False)
class RleCounts:
    """Uncompressed run-length encoding of a mask.

    Runs walk the mask column by column (down each column, left to right).
    The first count is background, runs alternate, and every count except the
    first is positive.
    """

    width: int
    height: int
    counts: list[int]

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise DataError("run-length size must be positive")
        c = [int(v) for v in self.counts]
        if not c:
            raise DataError("run-length counts must be non-empty")
        if any(v < 0 for v in c) or any(v == 0 for v in c[1:]):
            raise DataError("run lengths must be positive (the leading count may be 0)")
        if sum(c) != self.width * self.height:
            raise DataError(
                f"run lengths sum to {sum(c)}, expected {self.width * self.height}"
            )
        self.counts = c


def rle_encode(mask: BinaryMask) -> RleCounts:
    """Encode a mask as column-major run lengths."""
    flat = mask.bits.flatten(order="F")
    n = flat.size
    breaks = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    edges = np.concatenate(([0], breaks, [n]))
    runs = np.diff(edges).tolist()
    if flat[0]:
        runs = [0] + runs
    return RleCounts(mask.width, mask.height, runs)


def rle_decode(rle: RleCounts) -> BinaryMask:
    """Expand run lengths back into a mask."""
    values = np.arange(len(rle.counts)) % 2 == 1
    flat = np.repeat(values, rle.counts)
    return BinaryMask(flat.reshape((rle.height, rle.width), order="F"))


@dataclass(eq=False)
class ParticleInstance:
    """One segmented particle: a phase, its pixel region, and derived geometry."""

    id: int
    phase: PhaseLabel
    region: BinaryMask
    polygons: list[Polygon]
    bbox: BBox
    confidence: float | None = None

    def __post_init__(self) -> None:
        if self.phase == PhaseLabel.OTHER:
            raise DataError("a particle cannot carry the background phase")
        if self.region.area == 0:
            raise DataError(f"particle {self.id} has an empty region")
        tight = BBox.around(self.region)
        if tight != self.bbox:
            raise DataError(f"particle {self.id} box {self.bbox} is not tight ({tight})")
        if self.confidence is not None and not (0.0 <= self.confidence <= 1.0):
            raise DataError(f"confidence must be within [0, 1], got {self.confidence}")

    @property
    def area(self) -> int:
        return self.region.area

    @classmethod
    def from_mask(
        cls,
        id: int,
        phase: PhaseLabel,
        region: BinaryMask,
        confidence: float | None = None,
    ) -> "ParticleInstance":
        return cls(
            id=id,
            phase=PhaseLabel(phase),
            region=region,
            polygons=mask_to_polygons(region),
            bbox=BBox.around(region),
            confidence=confidence,
        )


@dataclass(eq=False)
class AnnotatedImage:
    """All particle instances of one image plus the image metadata."""

    image_id: int
    source: str
    width: int
    height: int
    instances: list[ParticleInstance] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise DataError(f"image {self.image_id} has non-positive size")
        seen: set[int] = set()
        for inst in self.instances:
            if inst.id in seen:
                raise DataError(f"image {self.image_id} repeats instance id {inst.id}")
            seen.add(inst.id)
            if inst.region.width != self.width or inst.region.height != self.height:
                raise DataError(
                    f"instance {inst.id} mask is {inst.region.width}x{inst.region.height}, "
                    f"image is {self.width}x{self.height}"
                )

    def label_map(self) -> LabelMap:
        """Paint the instances onto a background of Other, later ids on top."""
        a = np.zeros((self.height, self.width), dtype=np.uint8)
        for inst in sorted(self.instances, key=lambda i: i.id):
            a[inst.region.bits] = int(inst.phase)
        return LabelMap(a)


def instances_from_label_map(labels: LabelMap, min_area: int = 1) -> list[ParticleInstance]:
    """Split a label map into per-particle instances (8-connected regions)."""
    from .particles import connected_components

    out: list[ParticleInstance] = []
    next_id = 1
    for phase in (PhaseLabel.ALITE, PhaseLabel.BELITE):
        for comp in connected_components(labels.mask(phase)):
            if comp.area < min_area:
                continue
            out.append(ParticleInstance.from_mask(next_id, phase, comp))
            next_id += 1
    return out


def import_labelme(doc: dict, image_id: int = 0) -> AnnotatedImage:
    """Build an annotated image from a polygon-outline JSON document."""
    for key in ("imageWidth", "imageHeight", "shapes"):
        if key not in doc:
            raise DataError(f"outline document is missing '{key}'")
    width = int(doc["imageWidth"])
    height = int(doc["imageHeight"])
    source = str(doc.get("imagePath", ""))
    instances: list[ParticleInstance] = []
    for k, shape in enumerate(doc["shapes"]):
        label = str(shape.get("label", "")).strip().lower()
        if label not in _PHASE_BY_NAME:
            raise DataError(f"shape {k}: unknown phase label {shape.get('label')!r}")
        kind = shape.get("shape_type", "polygon")
        if kind != "polygon":
            raise DataError(f"shape {k}: unsupported shape type {kind!r}")
        pts = shape.get("points", [])
        if len(pts) < 3:
            raise DataError(f"shape {k}: a polygon needs at least 3 points, got {len(pts)}")
        poly = Polygon(np.asarray(pts, dtype=np.float64))
        region = polygon_to_mask(poly, width, height)
        if region.area == 0:
            raise DataError(f"shape {k}: outline covers no pixel centers")
        instances.append(
            ParticleInstance.from_mask(k + 1, _PHASE_BY_NAME[label], region)
        )
    return AnnotatedImage(
        image_id=image_id, source=source, width=width, height=height, instances=instances
    )


def _segmentation_entry(inst: ParticleInstance, use_rle: bool) -> dict | list:
    if use_rle:
        rle = rle_encode(inst.region)
        return {"size": [rle.height, rle.width], "counts": rle.counts}
    return [poly.vertices.reshape(-1).tolist() for poly in inst.polygons]


def export_coco(images: list[AnnotatedImage], use_rle: bool = False) -> dict:
    """Serialize annotated images to a COCO-style dataset dictionary.

    Segmentations are polygon lists by default (holes included; even-odd
    semantics) or uncompressed run lengths when ``use_rle`` is set.
    """
    ids = [im.image_id for im in images]
    if len(set(ids)) != len(ids):
        raise DataError("image ids must be unique across the dataset")
    doc: dict = {
        "images": [
            {
                "id": im.image_id,
                "file_name": im.source,
                "width": im.width,
                "height": im.height,
            }
            for im in images
        ],
        "annotations": [],
        "categories": [
            {"id": cid, "name": CATEGORY_NAMES[cid]} for cid in sorted(CATEGORY_NAMES)
        ],
    }
    next_id = 1
    for im in images:
        for inst in im.instances:
            ann = {
                "id": next_id,
                "image_id": im.image_id,
                "category_id": CATEGORY_IDS[inst.phase],
                "segmentation": _segmentation_entry(inst, use_rle),
                "area": inst.area,
                "bbox": [inst.bbox.x, inst.bbox.y, inst.bbox.w, inst.bbox.h],
                "iscrowd": 0,
            }
            if inst.confidence is not None:
                ann["score"] = inst.confidence
            doc["annotations"].append(ann)
            next_id += 1
    return doc


def _region_from_segmentation(seg, width: int, height: int) -> BinaryMask:
    if isinstance(seg, dict):
        size = seg.get("size")
        if not size or len(size) != 2:
            raise DataError("run-length segmentation is missing its size")
        h, w = int(size[0]), int(size[1])
        if (w, h) != (width, height):
            raise DataError(f"run-length size {w}x{h} does not match image {width}x{height}")
        return rle_decode(RleCounts(w, h, list(seg.get("counts", []))))
    if isinstance(seg, list) and seg and isinstance(seg[0], (list, tuple)):
        polys = []
        for flat in seg:
            pts = np.asarray(flat, dtype=np.float64)
            if pts.size < 6 or pts.size % 2:
                raise DataError("polygon segmentation needs at least 3 x,y pairs")
            polys.append(Polygon(pts.reshape(-1, 2)))
        return polygon_to_mask(polys, width, height)
    raise DataError("segmentation must be a polygon list or a run-length dict")


def import_coco(doc: dict) -> list[AnnotatedImage]:
    """Rebuild annotated images from a COCO-style dataset dictionary."""
    for key in ("images", "annotations", "categories"):
        if key not in doc:
            raise DataError(f"dataset document is missing '{key}'")
    phase_of: dict[int, PhaseLabel] = {}
    for cat in doc["categories"]:
        name = str(cat.get("name", "")).strip().lower()
        if name not in _PHASE_BY_NAME:
            raise DataError(f"unknown category {cat.get('name')!r}")
        phase_of[int(cat["id"])] = _PHASE_BY_NAME[name]
    images: dict[int, AnnotatedImage] = {}
    order: list[int] = []
    for im in doc["images"]:
        img = AnnotatedImage(
            image_id=int(im["id"]),
            source=str(im.get("file_name", "")),
            width=int(im["width"]),
            height=int(im["height"]),
        )
        if img.image_id in images:
            raise DataError(f"image id {img.image_id} appears twice")
        images[img.image_id] = img
        order.append(img.image_id)
    per_image_next: dict[int, int] = {i: 1 for i in images}
    for ann in doc["annotations"]:
        image_id = int(ann["image_id"])
        if image_id not in images:
            raise DataError(f"annotation {ann.get('id')} references unknown image {image_id}")
        cid = int(ann["category_id"])
        if cid not in phase_of:
            raise DataError(f"annotation {ann.get('id')} references unknown category {cid}")
        img = images[image_id]
        region = _region_from_segmentation(ann["segmentation"], img.width, img.height)
        if region.area == 0:
            raise DataError(f"annotation {ann.get('id')} covers no pixel centers")
        score = ann.get("score")
        inst = ParticleInstance.from_mask(
            per_image_next[image_id],
            phase_of[cid],
            region,
            confidence=None if score is None else float(score),
        )
        per_image_next[image_id] += 1
        img.instances.append(inst)
    out = [images[i] for i in order]
    for img in out:
        # re-run the cross-field checks now that instances are attached
        AnnotatedImage(img.image_id, img.source, img.width, img.height, img.instances)
    return out


@dataclass(eq=False)
class SplitPlan:
    """A train/test assignment of images, with optional folds over train."""

    train_ids: list[int]
    test_ids: list[int]
    folds: dict[int, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        overlap = set(self.train_ids) & set(self.test_ids)
        if overlap:
            raise DataError(f"images {sorted(overlap)} assigned to both train and test")
        stray = set(self.folds) - set(self.train_ids)
        if stray:
            raise DataError(f"fold indices on non-train images {sorted(stray)}")

    def to_dict(self) -> dict:
        return {
            "train": list(self.train_ids),
            "test": list(self.test_ids),
            "folds": {str(k): v for k, v in sorted(self.folds.items())},
        }


def _tiekey(seed: int, image_id: int) -> str:
    return hashlib.sha256(f"{seed}:{image_id}".encode()).hexdigest()


def plan_split(
    images: list[AnnotatedImage],
    train_fraction: float = 0.8,
    folds: int = 4,
    seed: int = 0,
) -> SplitPlan:
    """Assign whole images to train/test so train holds at least the requested
    share of all particles, coming as close to it as whole images allow.

    Images are taken largest first (particle count, seeded hash as the tie
    break). If the greedy pass lands short of the target, the smallest
    remaining image that reaches it is moved over. Train images are then dealt
    round-robin into ``folds`` folds balanced within one image.
    """
    if not images:
        raise DataError("cannot split an empty image list")
    if not (0.0 < train_fraction < 1.0):
        raise DataError(f"train fraction must be in (0, 1), got {train_fraction}")
    if folds < 1:
        raise DataError(f"fold count must be positive, got {folds}")
    counts = {im.image_id: len(im.instances) for im in images}
    total = sum(counts.values())
    target = train_fraction * total
    order = sorted(counts, key=lambda i: (-counts[i], _tiekey(seed, i)))
    train: list[int] = []
    got = 0
    rest: list[int] = []
    for i in order:
        if got + counts[i] <= target:
            train.append(i)
            got += counts[i]
        else:
            rest.append(i)
    rest.sort(key=lambda i: (counts[i], _tiekey(seed, i)))
    while got < target and rest:
        # smallest image that reaches the target, else the largest available
        pick = next((i for i in rest if got + counts[i] >= target), rest[-1])
        rest.remove(pick)
        train.append(pick)
        got += counts[pick]
    test = sorted(rest)
    train_sorted = sorted(train)
    if len(train_sorted) < folds:
        raise DataError(
            f"cannot deal {len(train_sorted)} train images into {folds} folds"
        )
    dealt = sorted(train_sorted, key=lambda i: _tiekey(seed, i))
    fold_of = {i: k % folds for k, i in enumerate(dealt)}
    return SplitPlan(train_ids=train_sorted, test_ids=test, folds=fold_of)
