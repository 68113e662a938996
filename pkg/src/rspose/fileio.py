"""Plain-text correspondence files.

One correspondence per line, ``X Y Z r c`` (three world coordinates, then
image row and column), whitespace-separated.  ``#`` starts a comment, blank
lines are skipped, and ``key=value`` lines carry optional metadata: the
sensor row count per frame (``rows_per_frame``) and the reference row for
the shutter (``r0``).  Floats are written with ``repr`` so a round trip is
bit-exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import CorrespondenceParseError

HEADER_KEYS = ("rows_per_frame", "r0")


@dataclass(frozen=True)
class CorrespondenceFile:
    """Parsed contents: points plus whatever metadata the header declared."""

    world: np.ndarray
    image: np.ndarray
    rows_per_frame: int | None = None
    r0: float = 0.0

    @property
    def n_points(self) -> int:
        return self.world.shape[0]


def _parse_header_token(token: str, line_number: int):
    key, _, raw = token.partition("=")
    if key not in HEADER_KEYS:
        raise CorrespondenceParseError(
            f"unknown header key {key!r} (expected one of {HEADER_KEYS})",
            line_number,
        )
    try:
        if key == "rows_per_frame":
            value = int(raw)
            if value <= 0:
                raise ValueError
        else:
            value = float(raw)
    except ValueError:
        raise CorrespondenceParseError(
            f"bad value {raw!r} for header key {key!r}", line_number
        ) from None
    return key, value


def parse_correspondence_text(text: str) -> CorrespondenceFile:
    """Parse file contents; raises CorrespondenceParseError with the
    offending 1-based line number."""
    header = {}
    world_rows = []
    image_rows = []
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if any("=" in tok for tok in tokens):
            for tok in tokens:
                key, value = _parse_header_token(tok, line_number)
                header[key] = value
            continue
        if len(tokens) != 5:
            raise CorrespondenceParseError(
                f"expected 5 values 'X Y Z r c', got {len(tokens)}", line_number
            )
        try:
            values = [float(tok) for tok in tokens]
        except ValueError:
            raise CorrespondenceParseError(
                f"non-numeric value in {line!r}", line_number
            ) from None
        if not all(np.isfinite(values)):
            raise CorrespondenceParseError("non-finite value", line_number)
        world_rows.append(values[0:3])
        image_rows.append(values[3:5])
    world = np.array(world_rows, dtype=float).reshape(-1, 3)
    image = np.array(image_rows, dtype=float).reshape(-1, 2)
    return CorrespondenceFile(
        world=world,
        image=image,
        rows_per_frame=header.get("rows_per_frame"),
        r0=header.get("r0", 0.0),
    )


def read_correspondence_file(path) -> CorrespondenceFile:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_correspondence_text(fh.read())


def write_correspondence_file(path, world, image, *, rows_per_frame=None,
                              r0=None, comment=None):
    """Write points (and optional header) in the format read back by
    :func:`read_correspondence_file`."""
    world = np.asarray(world, dtype=float).reshape(-1, 3)
    image = np.asarray(image, dtype=float).reshape(-1, 2)
    if world.shape[0] != image.shape[0]:
        raise ValueError("world and image point counts differ")
    lines = []
    if comment:
        lines.extend(f"# {part}" for part in str(comment).splitlines())
    if rows_per_frame is not None:
        lines.append(f"rows_per_frame={int(rows_per_frame)}")
    if r0 is not None:
        lines.append(f"r0={float(r0)!r}")
    for xyz, rc in zip(world, image):
        lines.append(" ".join(repr(float(value)) for value in (*xyz, *rc)))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_inlier_mask(path, mask):
    """One 0/1 per input line, same order as the correspondence file."""
    mask = np.asarray(mask, dtype=bool).reshape(-1)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join("1" if flag else "0" for flag in mask) + "\n")


def read_inlier_mask(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        flags = [line.strip() for line in fh if line.strip()]
    return np.array([flag == "1" for flag in flags], dtype=bool)
