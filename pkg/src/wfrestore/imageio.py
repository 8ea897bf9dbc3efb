"""PGM reading and writing, synthetic test images, PSNR and CSV helpers.

Images are plain 2-D ``float64`` arrays indexed ``[row, col]`` with nominal
range ``[0, 255]``.
"""

from __future__ import annotations

import csv
import math
import os

import numpy as np

PSNR_CAP = 999.0
SYNTH_KINDS = ("shapes", "ramp", "checker")


class PGMError(ValueError):
    """Malformed or truncated PGM data."""


def _as_image(x, what="image") -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim != 2 or a.size == 0:
        raise ValueError(f"{what} must be a non-empty 2-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{what} contains non-finite values")
    return a


# ---------------------------------------------------------------------------
# PGM


def _header_tokens(buf: bytes, count: int):
    """First ``count`` header tokens and the offset just past the last one.

    Comments run from ``#`` to end of line. The single whitespace byte that
    ends the last token is not consumed.
    """
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(buf) and (buf[pos : pos + 1].isspace() or buf[pos : pos + 1] == b"#"):
            if buf[pos : pos + 1] == b"#":
                while pos < len(buf) and buf[pos : pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            else:
                pos += 1
        if pos >= len(buf):
            raise PGMError(f"unexpected end of header at byte {pos}")
        start = pos
        while pos < len(buf) and not buf[pos : pos + 1].isspace() and buf[pos : pos + 1] != b"#":
            pos += 1
        tokens.append((buf[start:pos], start))
    return tokens, pos


def _header_int(tok: bytes, offset: int, what: str) -> int:
    if not tok.isdigit():
        raise PGMError(f"invalid {what} {tok!r} at byte {offset}")
    return int(tok)


def parse_pgm(buf: bytes) -> tuple[np.ndarray, int]:
    """Decode P2 or P5 bytes into ``(pixels, maxval)``."""
    magic = buf[:2]
    if magic not in (b"P2", b"P5"):
        raise PGMError(f"bad magic number {magic[:2]!r} at byte 0 (expected P2 or P5)")
    toks, pos = _header_tokens(buf, 4)
    width = _header_int(*toks[1], "width")
    height = _header_int(*toks[2], "height")
    maxval = _header_int(*toks[3], "maxval")
    if width < 1 or height < 1:
        raise PGMError(f"image dimensions must be positive, got {width}x{height} at byte {toks[1][1]}")
    if not 0 < maxval <= 65535:
        raise PGMError(f"maxval {maxval} at byte {toks[3][1]} outside 1..65535")
    n = width * height
    if magic == b"P5":
        pos += 1  # single whitespace byte after maxval
        bps = 1 if maxval < 256 else 2
        need = n * bps
        have = len(buf) - pos
        if have < need:
            raise PGMError(
                f"truncated P5 payload: expected {need} bytes from byte {pos}, found {have} "
                f"({need - have} bytes missing)"
            )
        dtype = np.uint8 if bps == 1 else np.dtype(">u2")
        pix = np.frombuffer(buf, dtype=dtype, count=n, offset=pos).astype(float)
    else:
        body = buf[pos:]
        vals = body.split()
        if len(vals) < n:
            raise PGMError(
                f"truncated P2 payload: expected {n} samples after byte {pos}, found {len(vals)} "
                f"({n - len(vals)} samples missing)"
            )
        try:
            pix = np.array([int(v) for v in vals[:n]], dtype=float)
        except ValueError:
            bad = next(v for v in vals[:n] if not v.isdigit())
            raise PGMError(f"invalid sample {bad!r} at byte {pos + body.find(bad)}") from None
    if np.any(pix > maxval):
        raise PGMError(f"sample exceeds maxval {maxval}")
    return pix.reshape(height, width), maxval


def read_pgm(path) -> np.ndarray:
    """Read a P2 or P5 PGM file into a float array."""
    with open(path, "rb") as fh:
        buf = fh.read()
    try:
        return parse_pgm(buf)[0]
    except PGMError as exc:
        raise PGMError(f"{os.fspath(path)}: {exc}") from None


def quantize(image, maxval: int = 255) -> np.ndarray:
    """Clamp to ``[0, maxval]`` and round half up."""
    a = _as_image(image)
    return np.floor(np.clip(a, 0, maxval) + 0.5).astype(np.int64)


def encode_pgm(image, maxval: int = 255, binary: bool = True) -> bytes:
    if not 0 < maxval <= 65535:
        raise ValueError(f"maxval must lie in 1..65535, got {maxval}")
    q = quantize(image, maxval)
    h, w = q.shape
    head = f"{'P5' if binary else 'P2'}\n{w} {h}\n{maxval}\n".encode("ascii")
    if binary:
        dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
        return head + q.astype(dtype).tobytes()
    rows = "\n".join(" ".join(str(int(x)) for x in row) for row in q)
    return head + rows.encode("ascii") + b"\n"


def write_pgm(image, path, maxval: int = 255, binary: bool = True) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pgm(image, maxval, binary))


# ---------------------------------------------------------------------------
# metrics


def psnr(x, y, peak: float = 255.0) -> float:
    """Peak signal-to-noise ratio in dB, capped at 999 for identical inputs."""
    x, y = _as_image(x, "x"), _as_image(y, "y")
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if not peak > 0:
        raise ValueError("peak must be positive")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(peak**2 / mse))


# ---------------------------------------------------------------------------
# synthetic data


def _check_size(size: int) -> int:
    size = int(size)
    if size < 8 or size & (size - 1):
        raise ValueError(f"size must be a power of two >= 8, got {size}")
    return size


def synth_image(kind: str = "shapes", size: int = 64, seed: int = 0) -> np.ndarray:
    """Deterministic test image in ``[0, 255]``.

    ``shapes`` is a piecewise-constant phantom of disks and rectangles whose
    placement is drawn from ``seed``; ``ramp`` a diagonal gradient and
    ``checker`` an 8-cell checkerboard.
    """
    size = _check_size(size)
    t = (np.arange(size) + 0.5) / size
    y, x = np.meshgrid(t, t, indexing="ij")
    if kind == "ramp":
        return 255.0 * (x + y) / 2.0
    if kind == "checker":
        return 255.0 * ((np.floor(8 * x) + np.floor(8 * y)) % 2)
    if kind != "shapes":
        raise ValueError(f"unknown image kind {kind!r}; expected one of {SYNTH_KINDS}")
    rng = np.random.default_rng(seed)
    img = np.full((size, size), 40.0)
    img[(x > 0.12) & (x < 0.88) & (y > 0.12) & (y < 0.88)] = 90.0
    for _ in range(3):
        x0, y0 = rng.uniform(0.15, 0.55, 2)
        w, h = rng.uniform(0.12, 0.3, 2)
        img[(x > x0) & (x < x0 + w) & (y > y0) & (y < y0 + h)] = rng.uniform(120, 230)
    for _ in range(4):
        cx, cy = rng.uniform(0.25, 0.75, 2)
        r = rng.uniform(0.06, 0.16)
        img[(x - cx) ** 2 + (y - cy) ** 2 < r**2] = rng.uniform(0, 255)
    return img


def add_gaussian_noise(image, sigma: float, seed: int = 0) -> np.ndarray:
    """``image`` plus i.i.d. ``N(0, sigma^2)`` noise from a seeded generator."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    a = _as_image(image)
    return a + sigma * np.random.default_rng(seed).standard_normal(a.shape)


# ---------------------------------------------------------------------------
# CSV


def format_number(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "" if math.isnan(x) else f"{x:.12e}"


def write_csv(path, header, rows) -> None:
    """Comma-separated table with a header row and LF line endings."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_number(v) if isinstance(v, (int, float, np.number)) else v for v in row])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]
