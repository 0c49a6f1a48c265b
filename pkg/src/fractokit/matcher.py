"""Record linkage between image filenames and report table entries.

Matching is exact-first on the FOAN, then fuzzy by normalised Levenshtein
similarity with a strict threshold, with serial-substring tie-breaking.
Ambiguous fuzzy ties are never resolved arbitrarily: they stay unmatched.
"""

from dataclasses import dataclass
from enum import Enum

from . import kernels
from .errors import BothEmpty, IllegalCharacter, MalformedFilename
from .fileio import read_jsonl, write_jsonl
from .manifest import (
    FractureClass,
    ImageRecord,
    ReportEntry,
    parse_filename,
    parse_magnification_token,
)

#: Two similarities within this distance count as tied.
TIE_EPS = 1e-12


def levenshtein(a: str, b: str) -> int:
    """Minimum number of single-character edits transforming a into b."""
    return kernels.levenshtein(a, b)


def similarity(a: str, b: str) -> float:
    """Normalised Levenshtein ratio: 1 - d / max(|a|, |b|)."""
    longest = max(len(a), len(b))
    if longest == 0:
        raise BothEmpty("similarity of two empty strings is undefined")
    return 1.0 - kernels.levenshtein(a, b) / longest


class MatchOutcome(Enum):
    EXACT = "exact"
    FUZZY = "fuzzy"
    TIE_BROKEN = "tie_broken"
    UNMATCHED = "unmatched"


@dataclass(frozen=True)
class MatchConfig:
    similarity_threshold: float = 0.9
    normalize: bool = True  # trim + uppercase before comparing FOANs

    def __post_init__(self):
        if not (0.0 < self.similarity_threshold <= 1.0):
            raise ValueError(f"similarity_threshold {self.similarity_threshold} outside (0, 1]")


@dataclass(frozen=True)
class MatchResult:
    image_id: str
    outcome: MatchOutcome
    similarity: float | None
    entry: ReportEntry | None
    uid: str | None


def assign_uid(foan: str, serial: str, fracture_class: FractureClass) -> str:
    """Deterministic identifier ``<foan>|<serial>|<class-token>``."""
    if not foan:
        raise ValueError("uid requires a non-empty foan")
    if fracture_class is FractureClass.UNMATCHABLE:
        raise ValueError("uid is undefined for unmatchable records")
    for field in (foan, serial):
        if "|" in field:
            raise IllegalCharacter(f"'|' not allowed in uid fields: {field!r}")
    return f"{foan}|{serial}|{fracture_class.value}"


def _norm(s: str, cfg: MatchConfig) -> str:
    return s.strip().upper() if cfg.normalize else s


def match_image(
    foan_candidate: str,
    serial_candidate: str,
    table: list[ReportEntry],
    cfg: MatchConfig = MatchConfig(),
    image_id: str = "",
) -> MatchResult:
    """Link one filename candidate to a report entry.

    Exact FOAN match wins (first entry in table order); otherwise the best
    fuzzy match above the threshold is taken if unique, serial substrings
    break exact ties, and anything still ambiguous is left unmatched.
    """
    if not table:
        raise ValueError("report table is empty")
    cand = _norm(foan_candidate, cfg)

    for entry in table:
        if _norm(entry.foan, cfg) == cand:
            return _matched(image_id, MatchOutcome.EXACT, 1.0, entry)

    sims = [similarity(cand, _norm(entry.foan, cfg)) for entry in table]
    best = max(sims)
    if best <= cfg.similarity_threshold:
        return MatchResult(image_id, MatchOutcome.UNMATCHED, None, None, None)

    tied = [i for i, s in enumerate(sims) if best - s <= TIE_EPS]
    if len(tied) == 1:
        return _matched(image_id, MatchOutcome.FUZZY, best, table[tied[0]])

    survivors = [i for i in tied if serial_candidate and serial_candidate in table[i].serial]
    if len(survivors) == 1:
        return _matched(image_id, MatchOutcome.TIE_BROKEN, best, table[survivors[0]])
    return MatchResult(image_id, MatchOutcome.UNMATCHED, None, None, None)


def _matched(image_id, outcome, sim, entry) -> MatchResult:
    return MatchResult(image_id, outcome, sim, entry, assign_uid(entry.foan, entry.serial, entry.fracture_class))


def match_files(files, table, cfg: MatchConfig = MatchConfig()):
    """Match a batch of image files against a report table.

    ``files`` is an iterable of (filename, path) pairs. Returns the list of
    MatchResults plus manifest records; files that fail parsing or matching
    become unmatchable records without folds.
    """
    results = []
    records = []
    for filename, path in files:
        stem = filename.rsplit(".", 1)[0]
        mag = parse_magnification_token(filename)
        try:
            parts = parse_filename(filename)
        except MalformedFilename:
            results.append(MatchResult(stem, MatchOutcome.UNMATCHED, None, None, None))
            records.append(
                ImageRecord(stem, str(path), "", "", "", FractureClass.UNMATCHABLE, mag)
            )
            continue
        res = match_image(parts.foan, parts.serial, table, cfg, image_id=stem)
        results.append(res)
        if res.entry is not None:
            records.append(
                ImageRecord(
                    stem, str(path), res.entry.foan, res.entry.serial, parts.tag, res.entry.fracture_class, mag
                )
            )
        else:
            records.append(
                ImageRecord(stem, str(path), parts.foan, parts.serial, parts.tag, FractureClass.UNMATCHABLE, mag)
            )
    return results, records


# --- file formats ---------------------------------------------------------

def write_report_table(path, entries) -> None:
    write_jsonl(
        path,
        (
            {
                "foan": e.foan,
                "serial": e.serial,
                "fracture_class": e.fracture_class.value,
                "sub_type": e.sub_type,
                "source_report": e.source_report,
            }
            for e in entries
        ),
    )


def read_report_table(path) -> list[ReportEntry]:
    entries = []
    for i, row in enumerate(read_jsonl(path)):
        where = f"{path}:{i + 1}"
        try:
            entries.append(
                ReportEntry(
                    foan=str(row["foan"]),
                    serial=str(row.get("serial", "")),
                    fracture_class=FractureClass(row["fracture_class"]),
                    sub_type=str(row.get("sub_type", "")),
                    source_report=str(row.get("source_report", "")),
                )
            )
        except (KeyError, ValueError) as exc:
            raise ValueError(f"{where}: bad report entry: {exc}") from exc
    return entries


def write_match_log(path, results) -> None:
    write_jsonl(
        path,
        (
            {
                "image_id": r.image_id,
                "outcome": r.outcome.value,
                "similarity": r.similarity,
                "foan": r.entry.foan if r.entry else None,
                "uid": r.uid,
            }
            for r in results
        ),
    )
