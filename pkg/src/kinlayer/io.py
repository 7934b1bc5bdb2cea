"""Small file formats: binary PGM images and delimited numeric tables."""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import numpy as np

SIG_DIGITS = 9


def fmt(value) -> str:
    """Number formatted with 9 significant digits (booleans and ints verbatim)."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.{SIG_DIGITS}g}"


def write_pgm(path, image: np.ndarray) -> None:
    """Write a boolean or 0..255 image as binary PGM (P5, maxval 255)."""
    img = np.asarray(image)
    if img.dtype == bool:
        img = img.astype(np.uint8) * 255
    img = img.astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM written by ``write_pgm`` as a uint8 array."""
    data = Path(path).read_bytes()
    fields = []
    pos = 0
    while len(fields) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end : end + 1].isspace():
            end += 1
        fields.append(data[pos:end])
        pos = end
    if fields[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = (int(x) for x in fields[1:])
    if maxval > 255:
        raise ValueError(f"{path}: 16-bit PGM not supported")
    pos += 1
    return np.frombuffer(data[pos : pos + w * h], dtype=np.uint8).reshape(h, w).copy()


def write_table(path, header: Sequence[str], rows, comment: str | None = None) -> None:
    """CSV with a header row; an optional ``# comment`` line goes first."""
    with open(path, "w", newline="") as f:
        if comment:
            f.write(f"# {comment}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])


def read_table(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as f:
        rows = [r for r in csv.reader(f) if r and not r[0].startswith("#")]
    if not rows:
        raise ValueError(f"{path}: empty table")
    return rows[0], rows[1:]


def joint_columns(joint_names: Sequence[str], dimension: int) -> list[str]:
    axes = "xyz"[:dimension]
    return [f"{j}_{a}" for j in joint_names for a in axes]
