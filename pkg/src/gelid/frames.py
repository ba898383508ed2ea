"""Frame descriptors: normalized per-channel color histograms plus luminance.

The visual channel is a VideoTrack of 48-dim descriptors (16 bins x 3 RGB
channels by default, each channel block L1-normalized). Raw frames come in
as PPM only, so no image codec is needed; precomputed descriptors come in
as CSV.
"""

from __future__ import annotations

import csv
import io
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, ParseError

log = logging.getLogger(__name__)

DEFAULT_BINS = 16
_CHANNELS = 3
_HIST_ATOL = 1e-9

# Rec. 601 luma weights
_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass
class FrameDescriptor:
    timestamp_ms: int
    histogram: np.ndarray  # (3 * bins,) float64, each channel block sums to 1
    luminance_mean: float

    def validate(self, atol: float = _HIST_ATOL) -> None:
        if self.histogram.ndim != 1 or self.histogram.size % _CHANNELS:
            raise DataError(f"histogram length {self.histogram.size} is not a "
                            f"multiple of {_CHANNELS}")
        blocks = self.histogram.reshape(_CHANNELS, -1)
        if np.any(self.histogram < 0):
            raise DataError("histogram has negative bins")
        if not np.allclose(blocks.sum(axis=1), 1.0, atol=atol, rtol=0):
            raise DataError("histogram channel blocks must each sum to 1")
        if not 0.0 <= self.luminance_mean <= 1.0:
            raise DataError(f"luminance {self.luminance_mean} outside [0,1]")


@dataclass
class VideoTrack:
    video_id: str
    frames: list[FrameDescriptor] = field(default_factory=list)
    duration_ms: int = 0

    def validate(self) -> None:
        stamps = [f.timestamp_ms for f in self.frames]
        if stamps != sorted(stamps):
            raise DataError("track frames are not sorted by timestamp")
        if len(set(stamps)) != len(stamps):
            raise DataError("track has duplicate frame timestamps")
        if stamps and stamps[-1] > self.duration_ms:
            raise DataError(f"last frame at {stamps[-1]} ms exceeds duration "
                            f"{self.duration_ms} ms")

    def histogram_matrix(self) -> np.ndarray:
        if not self.frames:
            return np.zeros((0, _CHANNELS * DEFAULT_BINS))
        return np.stack([f.histogram for f in self.frames])

    def timestamps(self) -> np.ndarray:
        return np.array([f.timestamp_ms for f in self.frames], dtype=np.int64)


def compute_histogram(image: np.ndarray,
                      bins_per_channel: int = DEFAULT_BINS
                      ) -> tuple[np.ndarray, float]:
    """Histogram + mean luminance of an (H, W, 3) uint8 RGB image.

    Bin b of a channel counts values in [b*256/B, (b+1)*256/B); every
    channel block is L1-normalized, so the result is pixel-order free.
    """
    if not 2 <= bins_per_channel <= 64:
        raise DataError(f"bins_per_channel {bins_per_channel} outside [2, 64]")
    pixels = np.asarray(image, dtype=np.uint8).reshape(-1, _CHANNELS)
    if pixels.shape[0] == 0:
        raise DataError("cannot compute histogram of a zero-pixel image")
    bin_ids = (pixels.astype(np.int64) * bins_per_channel) // 256
    hist = np.empty(_CHANNELS * bins_per_channel)
    for c in range(_CHANNELS):
        counts = np.bincount(bin_ids[:, c], minlength=bins_per_channel)
        hist[c * bins_per_channel:(c + 1) * bins_per_channel] = (
            counts / pixels.shape[0])
    luminance = float((pixels @ _LUMA).mean() / 255.0)
    return hist, luminance


_WS_SPLIT = re.compile(rb"\s+")


def _ppm_tokens(data: bytes, limit: int):
    """Yield whitespace-separated header/ASCII tokens, skipping # comments."""
    pos = 0
    count = 0
    while pos < len(data) and count < limit:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            eol = data.find(b"\n", pos)
            pos = len(data) if eol < 0 else eol + 1
            continue
        if pos >= len(data):
            break
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        count += 1
        yield data[start:pos], pos


def parse_ppm_frame(data: bytes) -> np.ndarray:
    """Decode a P6 (binary) or P3 (ASCII) PPM with maxval 255."""
    header = []
    body_at = 0
    for token, pos in _ppm_tokens(data, 4):
        header.append(token)
        body_at = pos
    if len(header) < 4:
        raise ParseError("truncated PPM header")
    magic = header[0]
    if magic not in (b"P6", b"P3"):
        raise ParseError(f"not a PPM image (magic {magic!r})")
    try:
        width, height, maxval = (int(t) for t in header[1:4])
    except ValueError:
        raise ParseError("non-numeric PPM header field") from None
    if width < 1 or height < 1:
        raise ParseError(f"bad PPM dimensions {width}x{height}")
    if maxval != 255:
        raise ParseError(f"unsupported PPM maxval {maxval} (must be 255)")
    expected = width * height * _CHANNELS
    if magic == b"P6":
        payload = data[body_at + 1:body_at + 1 + expected]
        if len(payload) < expected:
            raise ParseError(f"truncated P6 payload: expected {expected} "
                             f"bytes, found {len(payload)}")
        flat = np.frombuffer(payload, dtype=np.uint8)
    else:
        values = [v for v in _WS_SPLIT.split(data[body_at:]) if v and
                  not v.startswith(b"#")]
        if len(values) < expected:
            raise ParseError(f"truncated P3 payload: expected {expected} "
                             f"values, found {len(values)}")
        try:
            flat = np.array([int(v) for v in values[:expected]], dtype=np.int64)
        except ValueError:
            raise ParseError("non-numeric P3 sample") from None
        if flat.min() < 0 or flat.max() > 255:
            raise ParseError("P3 sample outside [0, 255]")
        flat = flat.astype(np.uint8)
    return flat.reshape(height, width, _CHANNELS)


def descriptor_csv_header(bins_per_channel: int = DEFAULT_BINS) -> list[str]:
    return (["timestamp_ms"]
            + [f"h{i}" for i in range(_CHANNELS * bins_per_channel)]
            + ["luminance"])


def write_descriptor_csv(track: VideoTrack, path: str | Path | io.TextIOBase,
                         bins_per_channel: int | None = None) -> None:
    """Write `timestamp_ms,h0..h47,luminance` rows, 9 decimal digits."""
    if bins_per_channel is None:
        size = track.frames[0].histogram.size if track.frames else (
            _CHANNELS * DEFAULT_BINS)
        bins_per_channel = size // _CHANNELS
    rows = [",".join([str(f.timestamp_ms)]
                     + [f"{v:.9f}" for v in f.histogram]
                     + [f"{f.luminance_mean:.9f}"])
            for f in track.frames]
    text = "\n".join([",".join(descriptor_csv_header(bins_per_channel))] + rows)
    text += "\n"
    if isinstance(path, io.TextIOBase):
        path.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8", newline="\n")


def read_descriptor_csv(path: str | Path, video_id: str = "",
                        duration_ms: int | None = None) -> VideoTrack:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty descriptor CSV") from None
        if header[0] != "timestamp_ms" or header[-1] != "luminance":
            raise ParseError(f"{path}: bad descriptor CSV header")
        frames = []
        prev = None
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}: row has {len(row)} fields, "
                                 f"expected {len(header)}", line_no)
            ts = int(row[0])
            if prev is not None and ts <= prev:
                raise ParseError(f"{path}: non-monotone timestamp {ts} after "
                                 f"{prev}", line_no)
            prev = ts
            hist = np.array([float(v) for v in row[1:-1]])
            desc = FrameDescriptor(timestamp_ms=ts, histogram=hist,
                                   luminance_mean=float(row[-1]))
            # 9-decimal quantization can drift a block sum by bins/2 * 1e-9
            desc.validate(atol=_HIST_ATOL * (hist.size // _CHANNELS))
            frames.append(desc)
    return _build_track(frames, video_id, duration_ms)


def _build_track(frames: list[FrameDescriptor], video_id: str,
                 duration_ms: int | None) -> VideoTrack:
    frames.sort(key=lambda f: f.timestamp_ms)
    if duration_ms is None:
        duration_ms = frames[-1].timestamp_ms if frames else 0
    track = VideoTrack(video_id=video_id, frames=frames,
                       duration_ms=duration_ms)
    track.validate()
    return track


def load_track(path: str | Path, video_id: str = "",
               duration_ms: int | None = None,
               bins_per_channel: int = DEFAULT_BINS) -> VideoTrack:
    """Load a track from a directory of `<timestamp_ms>.ppm` or a CSV."""
    path = Path(path)
    if path.is_dir():
        by_stamp: dict[int, Path] = {}
        frames = []
        for entry in sorted(path.iterdir()):
            if entry.suffix.lower() != ".ppm":
                continue
            try:
                ts = int(entry.stem)
            except ValueError:
                raise DataError(f"{entry.name}: frame file name is not a "
                                f"millisecond timestamp") from None
            if ts in by_stamp:
                raise DataError(f"duplicate frame timestamp {ts} ms from "
                                f"{by_stamp[ts].name} and {entry.name}")
            by_stamp[ts] = entry
            hist, luminance = compute_histogram(
                parse_ppm_frame(entry.read_bytes()), bins_per_channel)
            frames.append(FrameDescriptor(ts, hist, luminance))
        if not frames:
            log.warning("no frames found in %s; track is empty", path)
        return _build_track(frames, video_id, duration_ms)
    if path.is_file():
        return read_descriptor_csv(path, video_id, duration_ms)
    raise DataError(f"track source {path} does not exist")
