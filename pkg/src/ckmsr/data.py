"""Dataset ingestion, split management, and a synthetic scene generator.

Two public dataset layouts are supported through one adapter each
(RadioMapSeer DPM path-loss maps and CKMImageNet path-loss / AoA maps);
the synthetic generator produces deterministic log-distance path-loss and
bearing maps with rectangular buildings so that experiments run without
any external download. The generator is intentionally non-physical: no
ray tracing or diffraction, just a distance law plus per-wall penetration
loss.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .core import ChannelCodec, ChannelKind, CKMGrid, get_codec

SPLIT_TAGS = ("train", "test", "unsplit")


class DatasetLayout(enum.Enum):
    RADIOMAPSEER_DPM = "radiomapseer_dpm"
    CKMIMAGENET_PATHLOSS = "ckmimagenet_pathloss"
    CKMIMAGENET_AOA = "ckmimagenet_aoa"


class SplitMode(enum.Enum):
    BY_TRANSMITTER = "transmitter"
    BY_SCENE = "scene"
    RANDOM = "random"


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    split: str = "unsplit"
    scene: str = ""
    transmitter: str = ""

    def __post_init__(self) -> None:
        if self.split not in SPLIT_TAGS:
            raise ValueError(f"split tag must be one of {SPLIT_TAGS}, got {self.split!r}")


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    codec_name: str
    image_size: tuple[int, int]  # (width, height)
    entries: tuple[ManifestEntry, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))
        object.__setattr__(self, "image_size", tuple(self.image_size))
        paths = [e.path for e in self.entries]
        if len(set(paths)) != len(paths):
            raise ValueError("manifest contains duplicate image paths")
        get_codec(self.codec_name)  # must exist

    @property
    def codec(self) -> ChannelCodec:
        return get_codec(self.codec_name)

    def subset(self, split: str) -> tuple[ManifestEntry, ...]:
        return tuple(e for e in self.entries if e.split == split)

    def save(self, path) -> None:
        lines = [
            "# ckm-manifest v1",
            f"# name={self.name}",
            f"# codec={self.codec_name}",
            f"# size={self.image_size[0]}x{self.image_size[1]}",
        ]
        for e in self.entries:
            lines.append(f"{e.path}\t{e.split}\t{e.scene}\t{e.transmitter}")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        meta: dict[str, str] = {}
        entries = []
        for raw in Path(path).read_text().splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line.lstrip("#").strip()
                if "=" in body:
                    key, value = body.split("=", 1)
                    meta[key.strip()] = value.strip()
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ValueError(f"malformed manifest line: {raw!r}")
            entries.append(ManifestEntry(*parts))
        for key in ("name", "codec", "size"):
            if key not in meta:
                raise ValueError(f"manifest is missing the '{key}' header")
        w, h = (int(v) for v in meta["size"].split("x"))
        return cls(meta["name"], meta["codec"], (w, h), tuple(entries))


_LAYOUT_CODECS = {
    DatasetLayout.RADIOMAPSEER_DPM: "radiomapseer_pathloss",
    DatasetLayout.CKMIMAGENET_PATHLOSS: "ckmimagenet_pathloss",
    DatasetLayout.CKMIMAGENET_AOA: "ckmimagenet_aoa",
}

# Subdirectories tried for each layout, most specific first; a layout falls
# back to scanning the root when none exists. Upstream naming may change,
# which is why the rules live in this one table.
_LAYOUT_SUBDIRS = {
    DatasetLayout.RADIOMAPSEER_DPM: ("gain/DPM", "gain/dpm"),
    DatasetLayout.CKMIMAGENET_PATHLOSS: ("pathloss", "path_loss", "PL"),
    DatasetLayout.CKMIMAGENET_AOA: ("aoa", "AoA", "AOA"),
}


def _parse_ids(stem: str) -> tuple[str, str]:
    """'<scene>_<transmitter>' file stems; a stem without '_' is scene-only."""
    if "_" in stem:
        scene, tx = stem.split("_", 1)
        return scene, tx
    return stem, "0"


def ingest(root, layout: DatasetLayout, name: str | None = None) -> DatasetManifest:
    """Scan a dataset directory into a manifest with the layout's codec bound.

    Scene and transmitter ids are parsed from file names; all images must
    share one size.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root {root} does not exist")
    image_dir = root
    for sub in _LAYOUT_SUBDIRS[layout]:
        candidate = root / sub
        if candidate.is_dir():
            image_dir = candidate
            break
    paths = sorted(image_dir.rglob("*.png"))
    if not paths:
        raise FileNotFoundError(f"no PNG images under {image_dir}")

    size: tuple[int, int] | None = None
    entries = []
    for p in paths:
        with Image.open(p) as im:
            if size is None:
                size = im.size
            elif im.size != size:
                raise ValueError(f"mixed image sizes: {p} is {im.size}, expected {size}")
        scene, tx = _parse_ids(p.stem)
        entries.append(ManifestEntry(str(p), "unsplit", scene, tx))
    return DatasetManifest(
        name or layout.value,
        _LAYOUT_CODECS[layout],
        size,
        tuple(entries),
    )


def _grouped_split(
    entries: list[ManifestEntry],
    key,
    train_count: int,
    test_count: int,
    rng: np.random.Generator,
) -> list[ManifestEntry]:
    groups: dict[str, list[int]] = {}
    for i, e in enumerate(entries):
        groups.setdefault(key(e), []).append(i)
    names = sorted(groups)
    order = rng.permutation(len(names))
    test_idx: list[int] = []
    remaining = []
    for gi in order:
        members = groups[names[gi]]
        if len(test_idx) + len(members) <= test_count:
            test_idx.extend(members)
        else:
            remaining.append(gi)
    if len(test_idx) != test_count:
        raise ValueError(
            f"cannot form a test split of exactly {test_count} under the grouping constraint"
        )
    train_idx: list[int] = []
    for gi in remaining:
        members = groups[names[gi]]
        if len(train_idx) + len(members) <= train_count:
            train_idx.extend(members)
        if len(train_idx) == train_count:
            break
    if len(train_idx) != train_count:
        raise ValueError(
            f"cannot form a train split of exactly {train_count} under the grouping constraint"
        )
    tagged = list(entries)
    for i in test_idx:
        tagged[i] = replace(entries[i], split="test")
    for i in train_idx:
        tagged[i] = replace(entries[i], split="train")
    return tagged


def split(
    manifest: DatasetManifest,
    train_count: int,
    test_count: int,
    by: SplitMode = SplitMode.RANDOM,
    seed: int = 0,
) -> DatasetManifest:
    """Deterministically assign train/test tags.

    BY_TRANSMITTER guarantees no transmitter id appears in both splits
    (BY_SCENE likewise for scene ids); entries not selected stay unsplit.
    """
    entries = list(manifest.entries)
    if train_count < 0 or test_count < 1 or train_count + test_count > len(entries):
        raise ValueError(
            f"infeasible split {train_count}/{test_count} of {len(entries)} entries"
        )
    rng = np.random.default_rng(seed)
    if by is SplitMode.RANDOM:
        order = rng.permutation(len(entries))
        tagged = [replace(e, split="unsplit") for e in entries]
        for i in order[:train_count]:
            tagged[i] = replace(entries[i], split="train")
        for i in order[train_count : train_count + test_count]:
            tagged[i] = replace(entries[i], split="test")
    elif by is SplitMode.BY_SCENE:
        tagged = _grouped_split(entries, lambda e: e.scene, train_count, test_count, rng)
    else:
        tagged = _grouped_split(entries, lambda e: e.transmitter, train_count, test_count, rng)
    return replace(manifest, entries=tuple(tagged))


# --- synthetic scenes -------------------------------------------------------

SYNTHETIC_PATHLOSS_CODEC = "radiomapseer_pathloss"
SYNTHETIC_AOA_CODEC = "ckmimagenet_aoa"

Rect = tuple[int, int, int, int]  # (row0, col0, height, width) in cells


@dataclass(frozen=True)
class SyntheticSceneSpec:
    size: int = 64
    num_buildings: int = 6
    transmitter: tuple[int, int] | None = None  # (row, col); None = seeded random
    path_loss_exponent: float = 2.5
    reference_loss_db: float = -55.0  # loss at one cell of distance
    wall_loss_db: float = 10.0
    seed: int = 0
    buildings: tuple[Rect, ...] | None = None  # explicit rectangles; None = seeded random

    def __post_init__(self) -> None:
        if self.size < 4:
            raise ValueError(f"scene size must be >= 4, got {self.size}")
        if self.num_buildings < 0:
            raise ValueError("building count cannot be negative")
        if self.path_loss_exponent <= 0:
            raise ValueError("path-loss exponent must be positive")
        if self.buildings is not None:
            for r0, c0, h, w in self.buildings:
                if h < 1 or w < 1 or r0 < 0 or c0 < 0 or r0 + h > self.size or c0 + w > self.size:
                    raise ValueError(f"building {(r0, c0, h, w)} does not fit a {self.size}-cell grid")


def _inside(rect: Rect, row: int, col: int) -> bool:
    r0, c0, h, w = rect
    return r0 <= row < r0 + h and c0 <= col < c0 + w


def _segment_wall_crossings(
    tx: tuple[int, int], rows: np.ndarray, cols: np.ndarray, rect: Rect
) -> np.ndarray:
    """Number of rectangle-boundary crossings of the segments tx -> every cell.

    Liang-Barsky clipping against the rectangle that covers the building's
    cells (boundaries half a cell beyond the outermost cell centers).
    """
    r0, c0, h, w = rect
    lo = np.array([r0 - 0.5, c0 - 0.5])
    hi = np.array([r0 + h - 0.5, c0 + w - 0.5])
    p0 = np.array([float(tx[0]), float(tx[1])])
    d = np.stack([rows - p0[0], cols - p0[1]], axis=0).astype(np.float64)

    t_enter = np.zeros(rows.shape)
    t_exit = np.ones(rows.shape)
    feasible = np.ones(rows.shape, dtype=bool)
    for axis in range(2):
        da = d[axis]
        parallel = da == 0.0
        inside_slab = (lo[axis] <= p0[axis]) & (p0[axis] <= hi[axis])
        feasible &= ~parallel | inside_slab
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (lo[axis] - p0[axis]) / da
            t2 = (hi[axis] - p0[axis]) / da
        t_near = np.where(parallel, 0.0, np.minimum(t1, t2))
        t_far = np.where(parallel, 1.0, np.maximum(t1, t2))
        t_enter = np.maximum(t_enter, t_near)
        t_exit = np.minimum(t_exit, t_far)
    hit = feasible & (t_enter <= t_exit)
    crossings = np.where(hit & (t_enter > 0.0), 1, 0) + np.where(hit & (t_exit < 1.0), 1, 0)
    return crossings.astype(np.int64)


def generate_synthetic(spec: SyntheticSceneSpec) -> tuple[CKMGrid, CKMGrid]:
    """One deterministic scene: a path-loss grid and an AoA grid.

    Path loss follows a log-distance law from the transmitter with a fixed
    penalty per crossed building wall, clamped to the path-loss codec
    domain. AoA is the bearing from the transmitter (0 deg = east,
    counterclockwise positive, range (-180, 180]). Building cells are
    masked; they store the codec floor (path loss) or the sentinel (AoA).
    """
    rng = np.random.default_rng(spec.seed)
    size = spec.size
    if spec.transmitter is not None:
        tr, tc = spec.transmitter
        if not (0 <= tr < size and 0 <= tc < size):
            raise ValueError(f"transmitter {spec.transmitter} outside the {size}x{size} grid")
    else:
        tr, tc = (int(v) for v in rng.integers(0, size, size=2))

    if spec.buildings is not None:
        buildings = list(spec.buildings)
        for rect in buildings:
            if _inside(rect, tr, tc):
                raise ValueError(f"transmitter {(tr, tc)} lies inside building {rect}")
    else:
        buildings = []
        max_side = max(2, size // 4)
        attempts = 0
        while len(buildings) < spec.num_buildings and attempts < 50 * max(1, spec.num_buildings):
            attempts += 1
            h = int(rng.integers(2, max_side + 1))
            w = int(rng.integers(2, max_side + 1))
            r0 = int(rng.integers(0, size - h + 1))
            c0 = int(rng.integers(0, size - w + 1))
            if _inside((r0, c0, h, w), tr, tc):
                continue
            buildings.append((r0, c0, h, w))

    pl_codec = get_codec(SYNTHETIC_PATHLOSS_CODEC)
    aoa_codec = get_codec(SYNTHETIC_AOA_CODEC)

    rows, cols = np.meshgrid(np.arange(size, dtype=np.float64), np.arange(size, dtype=np.float64), indexing="ij")
    distance = np.hypot(rows - tr, cols - tc)
    walls = np.zeros((size, size), dtype=np.int64)
    mask = np.zeros((size, size), dtype=bool)
    for rect in buildings:
        walls += _segment_wall_crossings((tr, tc), rows, cols, rect)
        r0, c0, h, w = rect
        mask[r0 : r0 + h, c0 : c0 + w] = True

    path_loss = (
        spec.reference_loss_db
        - 10.0 * spec.path_loss_exponent * np.log10(np.maximum(distance, 1.0))
        - spec.wall_loss_db * walls
    )
    path_loss = np.clip(path_loss, pl_codec.v_min, pl_codec.v_max)
    path_loss[mask] = pl_codec.v_min

    bearing = np.degrees(np.arctan2(tr - rows, cols - tc))
    bearing[mask] = aoa_codec.sentinel

    return (
        CKMGrid(ChannelKind.PATH_LOSS, path_loss, mask),
        CKMGrid(ChannelKind.AOA, bearing, mask),
    )


def synthetic_dataset(
    count: int, size: int = 64, seed: int = 0, **spec_overrides
) -> list[tuple[CKMGrid, CKMGrid]]:
    """``count`` scenes with per-scene seeds derived deterministically from ``seed``."""
    if count < 1:
        raise ValueError(f"scene count must be >= 1, got {count}")
    children = np.random.SeedSequence(seed).spawn(count)
    scenes = []
    for child in children:
        scene_seed = int(child.generate_state(1)[0])
        scenes.append(
            generate_synthetic(SyntheticSceneSpec(size=size, seed=scene_seed, **spec_overrides))
        )
    return scenes
