"""Canonical data model, filename parsing and manifest validation.

Filename grammar (stand-in; the real archive format is configurable once
known): component IDs look like ``FOAN-2021-00042``, serial tokens like
``SN778``, instance tags like ``f1``, joined by underscores with arbitrary
extra tokens allowed, e.g. ``FOAN-2021-00042_SN778_f1_2000x.png``.
"""

import math
import re
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import InvalidFraction, MalformedFilename
from .fileio import read_jsonl, write_jsonl
from .images import GrayImage, ensure_gray


class FractureClass(Enum):
    GREEN_BODY = "green_body"
    HARD_MACHINING = "hard_machining"
    MATERIAL = "material"
    UNKNOWN_ORIGIN = "unknown_origin"
    UNMATCHABLE = "unmatchable"

    @property
    def trainable(self) -> bool:
        return self in TRAINABLE_CLASSES


#: The three classes that receive folds and sampler weights, in canonical order.
TRAINABLE_CLASSES = (
    FractureClass.GREEN_BODY,
    FractureClass.HARD_MACHINING,
    FractureClass.MATERIAL,
)


class Magnification(Enum):
    X50 = "50x"
    X100 = "100x"
    X250 = "250x"
    X500 = "500x"
    X1K = "1000x"
    X2K = "2000x"
    X4K = "4000x"
    X10K = "10000x"
    UNKNOWN = "unknown"

    @property
    def numeric(self):
        """Magnification factor, or None for UNKNOWN."""
        if self is Magnification.UNKNOWN:
            return None
        return int(self.value[:-1])


#: The eight known magnification levels, ascending.
KNOWN_MAGNIFICATIONS = tuple(m for m in Magnification if m is not Magnification.UNKNOWN)


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    path: str
    foan: str
    serial: str
    instance_tag: str
    fracture_class: FractureClass
    magnification: Magnification
    fold: int | None = None

    def with_fold(self, fold: int | None) -> "ImageRecord":
        return replace(self, fold=fold)


@dataclass(frozen=True)
class ReportEntry:
    foan: str
    serial: str
    fracture_class: FractureClass
    sub_type: str = ""
    source_report: str = ""

    def __post_init__(self):
        if not self.foan:
            raise ValueError("report entry with empty foan")


@dataclass(frozen=True)
class FilenameParts:
    foan: str
    serial: str
    tag: str


FOAN_RE = re.compile(r"FOAN-\d{4}-\d{5}")
_SERIAL_RE = re.compile(r"(?:^|[_.])SN(\d+)(?=[_.]|$)")
_TAG_RE = re.compile(r"(?:^|[_.])(f\d)(?=[_.]|$)")
_MAG_RE = re.compile(r"(?:^|[_.])(50|100|250|500|1000|2000|4000|10000)x(?=[_.]|$)")


def parse_filename(name: str) -> FilenameParts:
    """Extract identity candidates from an image filename.

    Returns the longest FOAN-grammar token plus optional serial digits and
    instance tag; raises MalformedFilename when no FOAN token exists.
    """
    if not name or "/" in name or "\\" in name:
        raise MalformedFilename(f"not a bare filename: {name!r}")
    foans = FOAN_RE.findall(name)
    if not foans:
        raise MalformedFilename(f"no FOAN token in {name!r}")
    foan = max(foans, key=len)
    serial_m = _SERIAL_RE.search(name)
    tag_m = _TAG_RE.search(name)
    return FilenameParts(
        foan=foan,
        serial=serial_m.group(1) if serial_m else "",
        tag=tag_m.group(1) if tag_m else "",
    )


def parse_magnification_token(name: str) -> Magnification:
    """Magnification from a filename token like ``_2000x``; UNKNOWN if absent."""
    m = _MAG_RE.search(name)
    if not m:
        return Magnification.UNKNOWN
    return Magnification(m.group(1) + "x")


def format_filename(foan: str, serial: str = "", tag: str = "", extra: str = "", ext: str = ".png") -> str:
    """Canonical inverse of parse_filename (round-trips exactly)."""
    if not FOAN_RE.fullmatch(foan):
        raise ValueError(f"foan does not match the grammar: {foan!r}")
    if serial and not re.fullmatch(r"\d+", serial):
        raise ValueError(f"serial must be digits: {serial!r}")
    if tag and not re.fullmatch(r"f\d", tag):
        raise ValueError(f"instance tag must match f<digit>: {tag!r}")
    parts = [foan]
    if serial:
        parts.append("SN" + serial)
    if tag:
        parts.append(tag)
    if extra:
        parts.append(extra)
    return "_".join(parts) + ext


def crop_overlay(img: GrayImage, bottom_fraction: float) -> GrayImage:
    """Remove the bottom floor(height * fraction) rows (instrument banner)."""
    ensure_gray(img)
    if not (0.0 <= bottom_fraction <= 0.5):
        raise InvalidFraction(f"bottom_fraction {bottom_fraction} outside [0, 0.5]")
    h = img.shape[0]
    keep = h - math.floor(h * bottom_fraction)
    return np.ascontiguousarray(img[:keep, :])


@dataclass(frozen=True)
class Violation:
    kind: str
    image_id: str
    message: str


DUPLICATE_ID = "duplicate_id"
FOLD_ON_EXCLUDED_CLASS = "fold_on_excluded_class"
MISSING_FILE = "missing_file"


def validate_manifest(records, check_paths: bool = False, root=None) -> list[Violation]:
    """All invariant violations in a manifest; an empty list means valid."""
    violations = []
    seen = set()
    for rec in records:
        if rec.image_id in seen:
            violations.append(Violation(DUPLICATE_ID, rec.image_id, f"duplicate image_id {rec.image_id!r}"))
        seen.add(rec.image_id)
        if rec.fold is not None and not rec.fracture_class.trainable:
            violations.append(
                Violation(
                    FOLD_ON_EXCLUDED_CLASS,
                    rec.image_id,
                    f"{rec.image_id!r}: fold {rec.fold} set on excluded class {rec.fracture_class.value}",
                )
            )
        if check_paths:
            p = Path(rec.path)
            if root is not None and not p.is_absolute():
                p = Path(root) / p
            if not p.is_file():
                violations.append(Violation(MISSING_FILE, rec.image_id, f"{rec.image_id!r}: missing file {p}"))
    return violations


_MANIFEST_FIELDS = ("image_id", "path", "foan", "serial", "instance_tag", "fracture_class", "magnification", "fold")


def record_to_dict(rec: ImageRecord) -> dict:
    return {
        "image_id": rec.image_id,
        "path": rec.path,
        "foan": rec.foan,
        "serial": rec.serial,
        "instance_tag": rec.instance_tag,
        "fracture_class": rec.fracture_class.value,
        "magnification": rec.magnification.value,
        "fold": rec.fold,
    }


def record_from_dict(row: dict, where: str = "manifest") -> ImageRecord:
    missing = [k for k in _MANIFEST_FIELDS if k not in row]
    if missing:
        raise ValueError(f"{where}: missing fields {missing}")
    fold = row["fold"]
    if fold is not None and (not isinstance(fold, int) or isinstance(fold, bool) or fold < 0):
        raise ValueError(f"{where}: fold must be null or a non-negative integer, got {fold!r}")
    try:
        klass = FractureClass(row["fracture_class"])
        mag = Magnification(row["magnification"])
    except ValueError as exc:
        raise ValueError(f"{where}: {exc}") from exc
    return ImageRecord(
        image_id=str(row["image_id"]),
        path=str(row["path"]),
        foan=str(row["foan"]),
        serial=str(row["serial"]),
        instance_tag=str(row["instance_tag"]),
        fracture_class=klass,
        magnification=mag,
        fold=fold,
    )


def write_manifest(path, records) -> None:
    write_jsonl(path, (record_to_dict(r) for r in records))


def read_manifest(path) -> list[ImageRecord]:
    return [record_from_dict(row, where=f"{path}:{i + 1}") for i, row in enumerate(read_jsonl(path))]
