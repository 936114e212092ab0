"""Spectral clustering of speaker embeddings with eigengap model selection."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

from ..audio_io import atomic_write_bytes
from ..errors import DataError
from .rttm import Segment

MAGIC = b"CFEM"
_HEADER = struct.Struct("<4sII")


@dataclass
class EmbeddingSet:
    vectors: np.ndarray  # (N, dim)
    segments: List[Segment]

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1:
            raise DataError(f"embeddings must be (N >= 1, dim), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DataError("embeddings contain NaN or inf")
        if len(self.segments) != v.shape[0]:
            raise DataError(f"{v.shape[0]} vectors but {len(self.segments)} segment keys")
        self.vectors = v


def _key(seg: Segment) -> str:
    return f"{seg.recording_id} {seg.onset:.3f} {seg.duration:.3f}"


def _parse_key(line: str, lineno: int) -> Segment:
    parts = line.split()
    if len(parts) != 3:
        raise DataError(f"embedding key {lineno}: expected 'recording onset duration', got {line!r}")
    try:
        return Segment(parts[0], float(parts[1]), float(parts[2]), "?")
    except ValueError:
        raise DataError(f"embedding key {lineno}: bad times in {line!r}") from None


def write_embeddings(path, emb: EmbeddingSet) -> None:
    """Binary container: header, row-major float32 matrix, newline-separated keys."""
    n, dim = emb.vectors.shape
    payload = _HEADER.pack(MAGIC, n, dim) + emb.vectors.astype("<f4").tobytes()
    payload += "".join(_key(s) + "\n" for s in emb.segments).encode("utf-8")
    atomic_write_bytes(path, payload)


def read_embeddings(path) -> EmbeddingSet:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated header")
    magic, n, dim = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    body = _HEADER.size + 4 * n * dim
    if len(raw) < body:
        raise DataError(f"{path}: truncated matrix")
    vectors = np.frombuffer(raw, dtype="<f4", count=n * dim, offset=_HEADER.size).reshape(n, dim)
    keys = raw[body:].decode("utf-8").splitlines()
    segments = [_parse_key(line, i + 1) for i, line in enumerate(keys) if line.strip()]
    return EmbeddingSet(vectors.astype(np.float64), segments)


# ---------------------------------------------------------------------------


def cosine_affinity(vectors: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(vectors, axis=1, keepdims=True)
    unit = vectors / np.where(norm > 0, norm, 1.0)
    return np.clip(unit @ unit.T, -1.0, 1.0)


MIN_KEEP = 10  # entries kept per row however small N is


def prune_affinity(a: np.ndarray, p: float, min_keep: int = MIN_KEEP) -> np.ndarray:
    """Keep each row's top ``max(ceil(p * N), min(min_keep, N))`` entries (ties kept), then symmetrise.

    The self-affinity counts as one of the kept entries. Without the floor,
    small sets keep only one or two neighbours per row and the graph falls
    apart into spurious components.
    """
    n = a.shape[0]
    keep = max(1, int(np.ceil(p * n)), min(min_keep, n))
    thresh = -np.sort(-a, axis=1)[:, keep - 1 : keep]
    pruned = np.where(a >= thresh, a, 0.0)
    pruned = np.maximum(pruned, 0.0)
    return 0.5 * (pruned + pruned.T)


def kmeans(x: np.ndarray, k: int, seed: int = 0, restarts: int = 10, max_iter: int = 100) -> np.ndarray:
    """Lloyd's k-means with k-means++ seeding; best of ``restarts`` by inertia."""
    best_labels, best_inertia = None, np.inf
    n = x.shape[0]
    for r in range(restarts):
        rng = np.random.default_rng([seed, r])
        centers = [x[rng.integers(n)]]
        for _ in range(1, k):
            d2 = np.min(((x[:, None, :] - np.asarray(centers)[None]) ** 2).sum(-1), axis=1)
            total = d2.sum()
            idx = rng.choice(n, p=d2 / total) if total > 0 else rng.integers(n)
            centers.append(x[idx])
        centers = np.asarray(centers)
        labels = np.full(n, -1)
        for _ in range(max_iter):
            d2 = ((x[:, None, :] - centers[None]) ** 2).sum(-1)
            new = np.argmin(d2, axis=1)
            if np.array_equal(new, labels):
                break
            labels = new
            for j in range(k):
                members = x[labels == j]
                if len(members):
                    centers[j] = members.mean(axis=0)
        inertia = float(((x - centers[labels]) ** 2).sum())
        if inertia < best_inertia - 1e-12:
            best_labels, best_inertia = labels, inertia
    return best_labels


def _relabel(labels: np.ndarray) -> np.ndarray:
    mapping = {}
    out = np.empty_like(labels)
    for i, lab in enumerate(labels):
        out[i] = mapping.setdefault(int(lab), len(mapping))
    return out


def estimate_num_speakers(eigenvalues: np.ndarray, max_speakers: int) -> int:
    m = min(max_speakers, eigenvalues.size)
    if m <= 1:
        return 1
    vals = eigenvalues[: m + 1] if eigenvalues.size > m else eigenvalues[:m]
    gaps = np.diff(vals)
    return int(np.argmax(gaps)) + 1


def spectral_cluster(
    emb,
    max_speakers: int = 8,
    k: Optional[int] = None,
    p: float = 0.2,
    seed: int = 0,
) -> np.ndarray:
    """Cluster embeddings; returns integer labels ``0..k-1`` in order of first appearance."""
    vectors = emb.vectors if isinstance(emb, EmbeddingSet) else np.asarray(emb, dtype=np.float64)
    n = vectors.shape[0]
    if k is not None and k > n:
        raise DataError(f"k={k} exceeds the number of embeddings ({n})")
    if n == 1:
        return np.zeros(1, dtype=int)
    a = prune_affinity(cosine_affinity(vectors), p)
    deg = a.sum(axis=1)
    inv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0)), 0.0)
    lap = np.eye(n) - inv_sqrt[:, None] * a * inv_sqrt[None, :]
    vals, vecs = np.linalg.eigh(0.5 * (lap + lap.T))
    if k is None:
        k = estimate_num_speakers(vals, max_speakers)
    if k <= 1:
        return np.zeros(n, dtype=int)
    feats = vecs[:, :k]
    norm = np.linalg.norm(feats, axis=1, keepdims=True)
    feats = feats / np.where(norm > 0, norm, 1.0)
    return _relabel(kmeans(feats, k, seed=seed))
