"""Field serialization: CSV for 1-d signals, PGM (P2/P5) for 2-d images.

Both formats carry a grid tag in a comment line so a file is self-describing:
``# nlflow field N=1 M=256 L=16.0``.  CSV round-trips bit-exactly (shortest
round-trip float repr); PGM round-trips value-exactly at the declared maxval.
"""

from __future__ import annotations

import math
import re

import numpy as np

from .errors import DimensionMismatchError, FormatError
from .grid import Field, Grid

__all__ = ["save_field", "load_field"]

_HEADER_RE = re.compile(
    r"#\s*nlflow field\s+N=(\d+)\s+M=(\d+)\s+L=([-+0-9.eE]+)")


def _header(grid: Grid) -> str:
    return (f"# nlflow field N={grid.dimension} M={grid.points_per_axis} "
            f"L={grid.side_length!r}")


def _parse_header(line: str) -> Grid | None:
    m = _HEADER_RE.match(line.strip())
    if m is None:
        return None
    return Grid(dimension=int(m.group(1)),
                points_per_axis=int(m.group(2)),
                side_length=float(m.group(3)))


def save_field(field: Field, path: str, maxval: int = 255,
               ascii_pgm: bool = False) -> None:
    """Write a field: ``.csv`` for N=1 data, ``.pgm`` for N=2 images.

    PGM values must lie in [0, 1]; they are quantized to maxval levels
    (255 -> single byte, up to 65535 -> big-endian double byte).
    """
    grid = field.grid
    lower = path.lower()
    if lower.endswith(".csv"):
        if grid.dimension != 1:
            raise FormatError(
                f"CSV holds 1-d fields; grid is {grid.dimension}-d")
        lines = [_header(grid)]
        lines.extend(repr(float(v)) for v in field.values)
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        return
    if lower.endswith(".pgm"):
        if grid.dimension != 2:
            raise FormatError(
                f"PGM holds 2-d fields; grid is {grid.dimension}-d")
        if not (1 <= maxval <= 65535):
            raise FormatError(f"maxval must be in [1, 65535], got {maxval}")
        vals = field.values
        if np.min(vals) < -1e-12 or np.max(vals) > 1.0 + 1e-12:
            raise FormatError(
                f"PGM output needs values in [0, 1]; range is "
                f"[{np.min(vals):.3g}, {np.max(vals):.3g}]")
        px = np.clip(np.round(vals * maxval), 0, maxval).astype(np.uint32)
        m = grid.points_per_axis
        magic = "P2" if ascii_pgm else "P5"
        head = (f"{magic}\n{_header(grid)}\n{m} {m}\n{maxval}\n"
                .encode("ascii"))
        with open(path, "wb") as fh:
            fh.write(head)
            if ascii_pgm:
                rows = px.reshape(m, m)
                body = "\n".join(" ".join(str(int(v)) for v in row)
                                 for row in rows)
                fh.write(body.encode("ascii") + b"\n")
            else:
                dtype = ">u2" if maxval > 255 else "u1"
                fh.write(px.astype(dtype).tobytes())
        return
    raise FormatError(f"unknown field format for {path!r} (.csv or .pgm)")


def _load_csv(path: str, grid: Grid | None) -> Field:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError(f"{path}: empty file")
    file_grid = _parse_header(lines[0])
    body = lines[1:] if file_grid is not None else lines
    if file_grid is None and grid is None:
        raise FormatError(
            f"{path}: no grid header and no grid given")
    use = grid if grid is not None else file_grid
    if file_grid is not None and grid is not None and \
            not grid.compatible_with(file_grid):
        raise DimensionMismatchError(
            f"{path}: file grid (N={file_grid.dimension}, "
            f"M={file_grid.points_per_axis}, L={file_grid.side_length}) "
            f"does not match the requested grid")
    values = []
    for i, line in enumerate(body):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        try:
            values.append(float(text))
        except ValueError:
            raise FormatError(f"{path}:{i + 2}: not a number: {text!r}")
    if len(values) != use.n_nodes:
        raise DimensionMismatchError(
            f"{path}: {len(values)} values for a grid of {use.n_nodes} nodes")
    return Field(use, np.asarray(values))


def _tokens_skipping_comments(data: bytes, start: int, count: int,
                              path: str) -> tuple[list[bytes], int]:
    """PGM header tokens (magic already consumed), honoring # comments."""
    toks: list[bytes] = []
    i = start
    comment_grid: list[bytes] = []
    while len(toks) < count:
        if i >= len(data):
            raise FormatError(f"{path}: truncated header")
        c = data[i:i + 1]
        if c == b"#":
            j = data.find(b"\n", i)
            j = len(data) if j < 0 else j
            comment_grid.append(data[i:j])
            i = j + 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j:j + 1].isspace():
                j += 1
            toks.append(data[i:j])
            i = j
    return toks + comment_grid, i


def _load_pgm(path: str, grid: Grid | None) -> Field:
    with open(path, "rb") as fh:
        data = fh.read()
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise FormatError(f"{path}: not a PGM file (magic {magic!r})")
    toks, pos = _tokens_skipping_comments(data, 2, 3, path)
    try:
        width, height, maxval = (int(toks[0]), int(toks[1]), int(toks[2]))
    except ValueError:
        raise FormatError(f"{path}: malformed PGM header")
    if width != height:
        raise FormatError(
            f"{path}: only square images map to the grid "
            f"({width}x{height})")
    if not (1 <= maxval <= 65535):
        raise FormatError(f"{path}: maxval {maxval} out of [1, 65535]")
    file_grid = None
    for tok in toks[3:]:
        file_grid = file_grid or _parse_header(tok.decode("ascii", "replace"))
    if grid is None:
        grid = file_grid if file_grid is not None else Grid(
            dimension=2, side_length=16.0, points_per_axis=width)
    if grid.dimension != 2 or grid.points_per_axis != width:
        raise DimensionMismatchError(
            f"{path}: {width}x{height} image does not match grid "
            f"(N={grid.dimension}, M={grid.points_per_axis})")
    n = width * height
    if magic == b"P5":
        pos += 1                       # single whitespace after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = n * dtype.itemsize
        raw = data[pos:pos + need]
        if len(raw) != need:
            raise FormatError(
                f"{path}: expected {need} pixel bytes, found {len(raw)}")
        px = np.frombuffer(raw, dtype=dtype).astype(np.float64)
    else:
        body = data[pos:].split(b"#")[0].split()
        if len(body) < n:
            raise FormatError(
                f"{path}: expected {n} pixels, found {len(body)}")
        px = np.asarray([int(t) for t in body[:n]], dtype=np.float64)
    if np.max(px) > maxval:
        raise FormatError(f"{path}: pixel above declared maxval {maxval}")
    return Field(grid, px / maxval)


def load_field(path: str, grid: Grid | None = None) -> Field:
    """Load a CSV or PGM field; the grid argument cross-checks dimensions."""
    lower = path.lower()
    if lower.endswith(".pgm"):
        return _load_pgm(path, grid)
    if lower.endswith(".csv"):
        return _load_csv(path, grid)
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head in (b"P2", b"P5"):
        return _load_pgm(path, grid)
    return _load_csv(path, grid)
