"""Dataset ingestion for scene-per-directory video layouts and the
deterministic train/val/test split.

Expected tree (depth files optional, paired to images by basename stem):

    root/
      <scene_id>/
        imgs/   0000.png 0001.png ...     (or images/, or files directly
                                           in the scene directory)
        depth/  0000.tif 0001.tif ...     (or depths/)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParameterError

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".tif", ".tiff"}
DEPTH_SUFFIXES = {".tif", ".tiff", ".pfm"}

_TEST_CANDIDATES = 300
_TEST_STRIDE = 6
_VAL_COUNT = 50
_MIN_FULL_SCENE = _TEST_CANDIDATES + _VAL_COUNT + 1


@dataclass(frozen=True)
class Frame:
    image_path: Path
    depth_path: Path | None
    scene_id: str
    index: int

    @property
    def basename(self) -> str:
        return self.image_path.stem


@dataclass(frozen=True)
class Scene:
    scene_id: str
    frames: tuple[Frame, ...]

    def __len__(self) -> int:
        return len(self.frames)


@dataclass
class Split:
    train: list[Frame] = field(default_factory=list)
    val: list[Frame] = field(default_factory=list)
    test: list[Frame] = field(default_factory=list)

    def counts(self) -> dict:
        return {"train": len(self.train), "val": len(self.val),
                "test": len(self.test)}


def _image_dir(scene_dir: Path) -> Path:
    for name in ("imgs", "images"):
        cand = scene_dir / name
        if cand.is_dir():
            return cand
    return scene_dir


def _depth_dir(scene_dir: Path) -> Path | None:
    for name in ("depth", "depths"):
        cand = scene_dir / name
        if cand.is_dir():
            return cand
    return None


def scan_scenes(root: str | Path) -> list[Scene]:
    """One scene per subdirectory, frames ordered lexicographically by filename.

    Depth files pair with images by identical stem; unpaired depth files are
    logged as warnings, missing depths leave the frame's depth_path as None.
    """
    root = Path(root)
    if not root.is_dir():
        raise ParameterError(f"dataset root is not a directory: {root}")
    scenes = []
    for scene_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        img_dir = _image_dir(scene_dir)
        images = sorted(p for p in img_dir.iterdir()
                        if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
        depth_dir = _depth_dir(scene_dir)
        depth_by_stem: dict[str, Path] = {}
        if depth_dir is not None:
            for p in sorted(depth_dir.iterdir()):
                if p.is_file() and p.suffix.lower() in DEPTH_SUFFIXES:
                    depth_by_stem[p.stem] = p
        frames = []
        for i, img in enumerate(images):
            frames.append(Frame(image_path=img,
                                depth_path=depth_by_stem.pop(img.stem, None),
                                scene_id=scene_dir.name, index=i))
        for stem, orphan in depth_by_stem.items():
            logger.warning("scene %s: depth file %s has no matching image",
                           scene_dir.name, orphan.name)
        scenes.append(Scene(scene_id=scene_dir.name, frames=tuple(frames)))
    return scenes


def generate_ouc_split(scenes: list[Scene]) -> Split:
    """Deterministic per-scene split.

    The first 300 frames of each scene are test candidates, of which every
    6th (the 1st, 7th, 13th, ... = 50 frames) enters the test set; frames
    301-350 are validation; everything from frame 351 on is training.
    Scenes shorter than 351 frames contribute all frames to training with a
    warning.
    """
    split = Split()
    for scene in scenes:
        n = len(scene)
        if n < _MIN_FULL_SCENE:
            if n:
                logger.warning("scene %s has only %d frames; all assigned to train",
                               scene.scene_id, n)
            split.train.extend(scene.frames)
            continue
        candidates = scene.frames[:_TEST_CANDIDATES]
        split.test.extend(candidates[::_TEST_STRIDE])
        split.val.extend(scene.frames[_TEST_CANDIDATES:_TEST_CANDIDATES + _VAL_COUNT])
        split.train.extend(scene.frames[_TEST_CANDIDATES + _VAL_COUNT:])
    return split


def triplet_eligible(frames: list[Frame]) -> list[Frame]:
    """Frames whose both temporal neighbors are present in the same partition.

    Loss computation needs (previous, current, next) from one scene, so a
    frame qualifies only when the partition contains its index-adjacent
    neighbors.
    """
    by_scene: dict[str, set[int]] = {}
    for f in frames:
        by_scene.setdefault(f.scene_id, set()).add(f.index)
    return [f for f in frames
            if f.index - 1 in by_scene[f.scene_id]
            and f.index + 1 in by_scene[f.scene_id]]


def save_split(split: Split, out_dir: str | Path) -> dict[str, Path]:
    """Write train/val/test list files, one "scene_id basename" per line."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for part in ("train", "val", "test"):
        path = out_dir / f"{part}.txt"
        with open(path, "w") as fh:
            for frame in getattr(split, part):
                fh.write(f"{frame.scene_id} {frame.basename}\n")
        paths[part] = path
    return paths


def load_split_file(path: str | Path) -> list[tuple[str, str]]:
    entries = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            scene_id, basename = line.split(maxsplit=1)
            entries.append((scene_id, basename))
    return entries
