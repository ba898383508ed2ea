"""Segment feature extraction and class rebalancing.

Feature vectors concatenate named groups so model variants (text only,
video only, everything) are produced by masking groups, never by refitting.
Names carry a `group:` prefix; masking is idempotent. Raw audio is out of
scope, so speech-timing statistics derived from subtitle cues stand in for
vocal activity.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .frames import VideoTrack
from .segmentation import Segment
from .subtitles import Transcript

log = logging.getLogger(__name__)

FEATURE_GROUPS = ("text", "embedding", "video", "speech")
BLANK_LUMINANCE = 0.05

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercased maximal alphanumeric runs."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    names: tuple[str, ...]
    segment_id: str = ""

    def __post_init__(self):
        if self.values.shape != (len(self.names),):
            raise DataError(f"{len(self.names)} names for "
                            f"{self.values.shape} values")
        if not np.all(np.isfinite(self.values)):
            raise DataError("feature vector contains NaN or Inf")


@dataclass(frozen=True)
class Vocabulary:
    terms: tuple[str, ...]
    document_frequencies: tuple[int, ...]
    n_documents: int

    def __post_init__(self):
        if len(self.terms) != len(set(self.terms)):
            raise DataError("vocabulary terms must be unique")
        if any(df < 1 for df in self.document_frequencies):
            raise DataError("document frequencies must be >= 1")

    def to_dict(self) -> dict:
        return {"schema_version": 1, "terms": list(self.terms),
                "document_frequencies": list(self.document_frequencies),
                "n_documents": self.n_documents}

    @staticmethod
    def from_dict(obj: dict) -> "Vocabulary":
        if obj.get("schema_version") != 1:
            raise DataError(f"unsupported vocabulary schema_version "
                            f"{obj.get('schema_version')!r}")
        return Vocabulary(terms=tuple(obj["terms"]),
                          document_frequencies=tuple(obj["document_frequencies"]),
                          n_documents=obj["n_documents"])


def _document_terms(text: str, ngram_max: int, stopwords: frozenset[str]
                    ) -> list[str]:
    tokens = [t for t in tokenize(text) if t not in stopwords]
    terms = list(tokens)
    if ngram_max >= 2:
        terms += [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]
    return terms


def fit_vocabulary(texts, ngram_max: int = 1,
                   stopwords=frozenset(), min_df: int = 1) -> Vocabulary:
    """Fit a bag-of-words vocabulary on training texts only."""
    if ngram_max not in (1, 2):
        raise DataError(f"ngram_max must be 1 or 2, got {ngram_max}")
    stopwords = frozenset(stopwords)
    texts = list(texts)
    if not texts:
        raise DataError("cannot fit a vocabulary on zero documents")
    df: dict[str, int] = {}
    any_tokens = False
    for text in texts:
        terms = set(_document_terms(text, ngram_max, stopwords))
        any_tokens = any_tokens or bool(terms)
        for term in terms:
            df[term] = df.get(term, 0) + 1
    if not any_tokens:
        raise DataError("all documents are empty after tokenization")
    kept = sorted(t for t, c in df.items() if c >= min_df)
    if not kept:
        raise DataError(f"no surviving terms with min_df={min_df}")
    return Vocabulary(terms=tuple(kept),
                      document_frequencies=tuple(df[t] for t in kept),
                      n_documents=len(texts))


def text_features(text: str, vocab: Vocabulary, ngram_max: int = 1,
                  stopwords=frozenset(), segment_id: str = "") -> FeatureVector:
    """tf-idf weights over the fitted vocabulary, L2-normalized.

    tf is the raw in-segment count; idf = ln((1+N)/(1+df)) + 1. Tokens
    outside the vocabulary are ignored; empty text gives the zero vector.
    """
    index = {t: i for i, t in enumerate(vocab.terms)}
    weights = np.zeros(len(vocab.terms))
    for term in _document_terms(text, ngram_max, frozenset(stopwords)):
        i = index.get(term)
        if i is not None:
            weights[i] += 1.0
    idf = np.log((1 + vocab.n_documents)
                 / (1 + np.asarray(vocab.document_frequencies))) + 1.0
    weights *= idf
    norm = np.linalg.norm(weights)
    if norm > 0:
        weights /= norm
    names = tuple(f"text:{t}" for t in vocab.terms)
    return FeatureVector(values=weights, names=names, segment_id=segment_id)


@dataclass(frozen=True)
class EmbeddingTable:
    vectors: dict[str, np.ndarray]
    dim: int

    def __post_init__(self):
        for token, vec in self.vectors.items():
            if vec.shape != (self.dim,):
                raise DataError(f"embedding for {token!r} has dimension "
                                f"{vec.shape}, expected ({self.dim},)")


def load_embedding_table(path: str | Path) -> EmbeddingTable:
    """Read `token v1 ... vd` lines (pretrained; never trained here)."""
    vectors: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            vec = np.array([float(v) for v in parts[1:]])
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise DataError(f"{path}:{line_no}: embedding dimension "
                                f"{vec.size} != {dim}")
            vectors[parts[0]] = vec
    if not vectors:
        raise DataError(f"{path}: empty embedding table")
    return EmbeddingTable(vectors=vectors, dim=dim)


def embedding_features(text: str, table: EmbeddingTable,
                       segment_id: str = "") -> FeatureVector:
    """Mean of the vectors of in-table tokens; zero vector when none hit."""
    if not table.vectors:
        raise DataError("embedding table is empty")
    hits = [table.vectors[t] for t in tokenize(text) if t in table.vectors]
    mean = np.mean(hits, axis=0) if hits else np.zeros(table.dim)
    names = tuple(f"embedding:{i}" for i in range(table.dim))
    return FeatureVector(values=mean, names=names, segment_id=segment_id)


_VIDEO_NAMES = ("video:duration_s", "video:n_frames", "video:motion_mean",
                "video:motion_std", "video:luminance_mean",
                "video:blank_fraction", "video:had_video")


def video_features(segment: Segment, track: VideoTrack) -> FeatureVector:
    """Six motion/luminance statistics plus a had_video flag.

    Segments with fewer than 2 frames get zero motion and had_video=0;
    empty video is itself a signal (likely non-informative).
    """
    inside = [f for f in track.frames
              if segment.start_ms <= f.timestamp_ms < segment.end_ms]
    duration_s = segment.duration_ms / 1000.0
    n = len(inside)
    if n >= 2:
        hists = np.stack([f.histogram for f in inside])
        motion = np.abs(np.diff(hists, axis=0)).sum(axis=1)
        motion_mean, motion_std = float(motion.mean()), float(motion.std())
        had_video = 1.0
    else:
        motion_mean = motion_std = 0.0
        had_video = 0.0
    luminance = np.array([f.luminance_mean for f in inside])
    values = np.array([
        duration_s,
        float(n),
        motion_mean,
        motion_std,
        float(luminance.mean()) if n else 0.0,
        float((luminance < BLANK_LUMINANCE).mean()) if n else 0.0,
        had_video,
    ])
    return FeatureVector(values=values, names=_VIDEO_NAMES,
                         segment_id=segment.segment_id)


_SPEECH_NAMES = ("speech:density", "speech:words_per_second", "speech:n_cues")


def speech_features(segment: Segment, transcript: Transcript) -> FeatureVector:
    """Speech-timing statistics over cues overlapping the segment window."""
    duration_ms = segment.duration_ms
    overlap_ms = 0
    words = 0
    n_cues = 0
    for cue in transcript.cues:
        lo = max(cue.start_ms, segment.start_ms)
        hi = min(cue.end_ms, segment.end_ms)
        if hi <= lo:
            continue
        n_cues += 1
        overlap_ms += hi - lo
        words += len(cue.text.split())
    density = overlap_ms / duration_ms if duration_ms else 0.0
    wps = words / (duration_ms / 1000.0) if duration_ms else 0.0
    values = np.array([density, wps, float(n_cues)])
    return FeatureVector(values=values, names=_SPEECH_NAMES,
                         segment_id=segment.segment_id)


def concat_features(parts: list[FeatureVector],
                    segment_id: str = "") -> FeatureVector:
    values = (np.concatenate([p.values for p in parts]) if parts
              else np.zeros(0))
    names = tuple(n for p in parts for n in p.names)
    return FeatureVector(values=values, names=names, segment_id=segment_id)


def mask_feature_groups(fv: FeatureVector, groups) -> FeatureVector:
    """Keep only features whose `group:` prefix is in groups. Idempotent."""
    groups = set(groups)
    unknown = groups - set(FEATURE_GROUPS)
    if unknown:
        raise DataError(f"unknown feature group(s): {sorted(unknown)}")
    keep = [i for i, name in enumerate(fv.names)
            if name.split(":", 1)[0] in groups]
    return FeatureVector(values=fv.values[keep],
                         names=tuple(fv.names[i] for i in keep),
                         segment_id=fv.segment_id)


def assemble_features(segment: Segment, transcript: Transcript,
                      track: VideoTrack, vocab: Vocabulary | None = None,
                      table: EmbeddingTable | None = None,
                      ngram_max: int = 1, stopwords=frozenset(),
                      groups=FEATURE_GROUPS) -> FeatureVector:
    """Concatenate the requested feature groups in canonical order."""
    text = " ".join(c.text for c in transcript.cues
                    if c.index in set(segment.cue_indices))
    parts = []
    for group in FEATURE_GROUPS:
        if group not in groups:
            continue
        if group == "text":
            if vocab is None:
                raise DataError("text features requested without a vocabulary")
            parts.append(text_features(text, vocab, ngram_max, stopwords,
                                       segment.segment_id))
        elif group == "embedding":
            if table is None:
                continue  # embedding group is optional without a table
            parts.append(embedding_features(text, table, segment.segment_id))
        elif group == "video":
            parts.append(video_features(segment, track))
        elif group == "speech":
            parts.append(speech_features(segment, transcript))
    return concat_features(parts, segment_id=segment.segment_id)


def segment_text(segment: Segment, transcript: Transcript) -> str:
    return " ".join(c.text for c in transcript.cues
                    if c.index in set(segment.cue_indices))


def smote_oversample(x: np.ndarray, y: np.ndarray, k_neighbors: int = 5,
                     seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Grow every minority class to the majority count with SMOTE.

    Synthetic points are x + u * (nn - x) with u ~ Uniform(0, 1) and nn one
    of the k nearest same-class neighbors by Euclidean distance. Originals
    are preserved and come first in the output.
    """
    if k_neighbors < 1:
        raise DataError("k_neighbors must be >= 1")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise DataError("x must be (n, d) with one label per row")
    classes, counts = np.unique(y, return_counts=True)
    majority = counts.max()
    rng = np.random.default_rng(seed)
    synth_x: list[np.ndarray] = []
    synth_y: list = []
    for cls, count in zip(classes, counts):
        if count == majority:
            continue
        if count < 2:
            raise DataError(
                f"class {cls!r} has a single member; SMOTE needs >= 2 "
                f"(lower k_neighbors or drop the class)")
        members = x[y == cls]
        k = min(k_neighbors, count - 1)
        # pairwise distances within the class; self excluded via inf
        diffs = members[:, None, :] - members[None, :, :]
        dists = np.sqrt((diffs ** 2).sum(axis=2))
        np.fill_diagonal(dists, np.inf)
        neighbor_ids = np.argsort(dists, axis=1, kind="stable")[:, :k]
        for _ in range(majority - count):
            base = int(rng.integers(count))
            nn = members[neighbor_ids[base][int(rng.integers(k))]]
            u = rng.random()
            synth_x.append(members[base] + u * (nn - members[base]))
            synth_y.append(cls)
    if not synth_x:
        return x.copy(), y.copy()
    return (np.vstack([x, np.array(synth_x)]),
            np.concatenate([y, np.array(synth_y, dtype=y.dtype)]))


def feature_matrix(vectors: list[FeatureVector]) -> tuple[np.ndarray, list[str]]:
    """Stack vectors into (n, d), checking name alignment."""
    if not vectors:
        raise DataError("no feature vectors to stack")
    names = vectors[0].names
    for fv in vectors[1:]:
        if fv.names != names:
            raise DataError(f"feature names differ between segments "
                            f"{vectors[0].segment_id!r} and {fv.segment_id!r}")
    return np.stack([fv.values for fv in vectors]), list(names)


def write_feature_csv(vectors: list[FeatureVector]) -> str:
    """CSV with a header row of feature names; one row per segment."""
    matrix, names = feature_matrix(vectors)
    lines = [",".join(["segment_id"] + names)]
    for fv, row in zip(vectors, matrix):
        lines.append(",".join([fv.segment_id] + [f"{v:.12g}" for v in row]))
    return "\n".join(lines) + "\n"


def read_feature_csv(text: str) -> list[FeatureVector]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataError("empty feature CSV")
    header = lines[0].split(",")
    if header[0] != "segment_id":
        raise DataError("feature CSV must start with a segment_id column")
    names = tuple(header[1:])
    out = []
    for ln in lines[1:]:
        cells = ln.split(",")
        out.append(FeatureVector(
            values=np.array([float(v) for v in cells[1:]]),
            names=names, segment_id=cells[0]))
    return out
