"""Deterministic synthetic forgery corpus.

Pristine images are smooth procedural textures: a few low-frequency cosine
waves plus Gaussian-smoothed noise, clipped to [0, 1]. Each pristine source
is forged once per manipulation domain:

* domain 0: low-amplitude period-2 checkerboard added inside a random
  rectangle (periodic high-frequency artifact),
* domain 1: 5x5 box blur followed by unsharp masking inside a random
  rectangle (boundary/ringing artifact),
* domain 2: uniform quantization of the mid/high cosine-spectrum bands
  (compression-style artifact).

All randomness derives from ``np.random.default_rng`` seeded with explicit
(seed, index, domain) entropy lists, so a corpus is a pure function of its
seed and configuration. Images are stored channel-first (C, H, W) as
float32, matching the model's NCHW convention.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter, uniform_filter

from .masks import default_thresholds
from .spectral import dct_matrix

__all__ = [
    "REAL_DOMAIN",
    "SPLITS",
    "Corpus",
    "CorpusFormatError",
    "gen_real",
    "gen_forged",
    "generate_corpus",
    "balance_resample",
    "write_corpus",
    "read_corpus",
]

REAL_DOMAIN = -1
SPLITS = ("train", "val", "test")

_MAGIC = b"AFD1"
_MANIFEST = "manifest.json"


class CorpusFormatError(ValueError):
    """A corpus directory is missing files or structurally inconsistent."""


@dataclass
class Corpus:
    """In-memory corpus: images plus aligned per-image metadata arrays."""

    height: int
    width: int
    channels: int
    n_domains: int
    seed: int
    images: np.ndarray  # (N, C, H, W) float32
    labels: np.ndarray  # (N,) int64, 0 real / 1 fake
    domains: np.ndarray  # (N,) int64, REAL_DOMAIN for pristine images
    sources: np.ndarray  # (N,) int64, pristine source index, REAL_DOMAIN for reals
    splits: np.ndarray  # (N,) unicode, one of SPLITS

    def __len__(self) -> int:
        return self.images.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Corpus):
            return NotImplemented
        meta = (self.height, self.width, self.channels, self.n_domains, self.seed)
        other_meta = (other.height, other.width, other.channels, other.n_domains, other.seed)
        return (
            meta == other_meta
            and np.array_equal(self.images, other.images)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.domains, other.domains)
            and np.array_equal(self.sources, other.sources)
            and np.array_equal(self.splits, other.splits)
        )

    def indices(self, split: str | None = None, label: int | None = None, domain: int | None = None) -> np.ndarray:
        """Positions matching all given filters, in corpus order."""
        keep = np.ones(len(self), dtype=bool)
        if split is not None:
            if split not in SPLITS:
                raise ValueError(f"unknown split {split!r}, expected one of {SPLITS}")
            keep &= self.splits == split
        if label is not None:
            keep &= self.labels == label
        if domain is not None:
            keep &= self.domains == domain
        return np.flatnonzero(keep)


def gen_real(seed: int, count: int, height: int, width: int, channels: int = 3) -> np.ndarray:
    """(count, C, H, W) float32 smooth textures, deterministic per (seed, index)."""
    if count < 0:
        raise ValueError(f"gen_real: count must be >= 0, got {count}")
    out = np.empty((count, channels, height, width), dtype=np.float32)
    y = np.arange(height)[:, None] / height
    x = np.arange(width)[None, :] / width
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        base = np.full((height, width), 0.5)
        for _ in range(int(rng.integers(3, 7))):
            amp = rng.uniform(0.04, 0.12)
            fy, fx = rng.uniform(0.25, 2.5, size=2)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            base += amp * np.cos(2.0 * np.pi * (fy * y + fx * x) + phase)
        for c in range(channels):
            tint = rng.uniform(-0.04, 0.04)
            noise = gaussian_filter(rng.normal(0.0, 0.12, size=(height, width)), sigma=2.0)
            out[i, c] = np.clip(base + tint + noise, 0.0, 1.0).astype(np.float32)
    return out


def _random_rect(rng: np.random.Generator, height: int, width: int) -> tuple[int, int, int, int]:
    rh = int(round(height * rng.uniform(0.3, 0.7)))
    rw = int(round(width * rng.uniform(0.3, 0.7)))
    rh, rw = max(rh, 2), max(rw, 2)
    y0 = int(rng.integers(0, height - rh + 1))
    x0 = int(rng.integers(0, width - rw + 1))
    return y0, x0, rh, rw


def gen_forged(image: np.ndarray, domain_id: int, seed: int, amplitude: float = 0.02) -> np.ndarray:
    """Forge one (C, H, W) image with the given manipulation domain."""
    if image.ndim != 3:
        raise ValueError(f"gen_forged: expected (C, H, W) image, got shape {image.shape}")
    channels, height, width = image.shape
    rng = np.random.default_rng([seed, domain_id])
    work = image.astype(np.float64)

    if domain_id == 0:
        # period-2 checkerboard inside a random rectangle
        y0, x0, rh, rw = _random_rect(rng, height, width)
        yy = np.arange(y0, y0 + rh)[:, None]
        xx = np.arange(x0, x0 + rw)[None, :]
        pattern = amplitude * np.where((yy + xx) % 2 == 0, 1.0, -1.0)
        work[:, y0 : y0 + rh, x0 : x0 + rw] += pattern
    elif domain_id == 1:
        # 5x5 box blur then unsharp masking inside a random rectangle
        y0, x0, rh, rw = _random_rect(rng, height, width)
        for c in range(channels):
            region = work[c, y0 : y0 + rh, x0 : x0 + rw]
            blurred = uniform_filter(region, size=5, mode="nearest")
            sharp = blurred + 2.5 * (blurred - uniform_filter(blurred, size=5, mode="nearest"))
            work[c, y0 : y0 + rh, x0 : x0 + rw] = sharp
    elif domain_id == 2:
        # uniform quantization of mid/high spectrum bands
        t1, _ = default_thresholds(height, width)
        dh = dct_matrix(height).matrix
        dw = dct_matrix(width).matrix
        u = np.arange(height)[:, None]
        v = np.arange(width)[None, :]
        band = (u + v) >= t1
        step = 0.5
        for c in range(channels):
            coeffs = dh @ work[c] @ dw.T
            coeffs[band] = np.round(coeffs[band] / step) * step
            work[c] = dh.T @ coeffs @ dw
    else:
        raise ValueError(f"gen_forged: unknown domain_id {domain_id}")

    return np.clip(work, 0.0, 1.0).astype(np.float32)


def generate_corpus(
    seed: int = 0,
    sources: int = 600,
    split_sizes: tuple[int, int, int] = (400, 100, 100),
    n_domains: int = 3,
    height: int = 64,
    width: int = 64,
    channels: int = 3,
) -> Corpus:
    """Pristine sources plus one forgery per (source, domain).

    Sources are assigned to train/val/test contiguously by index per
    ``split_sizes``, and every forgery inherits its source's split, keeping
    splits disjoint by source.
    """
    if sum(split_sizes) != sources:
        raise ValueError(f"split sizes {split_sizes} must sum to sources={sources}")
    if not 0 <= n_domains <= 3:
        raise ValueError(f"n_domains must be in [0, 3], got {n_domains}")
    reals = gen_real(seed, sources, height, width, channels)
    total = sources * (1 + n_domains)
    images = np.empty((total, channels, height, width), dtype=np.float32)
    labels = np.zeros(total, dtype=np.int64)
    domains = np.full(total, REAL_DOMAIN, dtype=np.int64)
    source_of = np.full(total, REAL_DOMAIN, dtype=np.int64)
    split_names = np.empty(total, dtype="<U5")

    bounds = np.cumsum((0,) + split_sizes)
    splits_by_source = np.empty(sources, dtype="<U5")
    for name, lo, hi in zip(SPLITS, bounds[:-1], bounds[1:]):
        splits_by_source[lo:hi] = name

    images[:sources] = reals
    split_names[:sources] = splits_by_source
    pos = sources
    for i in range(sources):
        for d in range(n_domains):
            images[pos] = gen_forged(reals[i], d, seed=hash_seed(seed, i, d))
            labels[pos] = 1
            domains[pos] = d
            source_of[pos] = i
            split_names[pos] = splits_by_source[i]
            pos += 1
    return Corpus(
        height=height,
        width=width,
        channels=channels,
        n_domains=n_domains,
        seed=seed,
        images=images,
        labels=labels,
        domains=domains,
        sources=source_of,
        splits=split_names,
    )


def hash_seed(seed: int, index: int, domain: int) -> int:
    """Stable scalar seed for one (corpus seed, source, domain) triple."""
    return int(np.random.SeedSequence([seed, index, domain]).generate_state(1)[0])


def balance_resample(corpus: Corpus, seed: int, split: str = "train") -> np.ndarray:
    """One epoch of indices: per domain, all fakes plus an equal resample of reals.

    Real indices are drawn with replacement, so the emitted list is exactly
    class-balanced regardless of the corpus ratio. Domains are concatenated
    and shuffled.
    """
    real_pool = corpus.indices(split=split, label=0)
    if real_pool.size == 0:
        raise ValueError(f"balance_resample: split {split!r} has no pristine images")
    if corpus.n_domains < 1:
        raise ValueError("balance_resample: corpus has no manipulation domains")
    rng = np.random.default_rng([seed])
    chunks = []
    for d in range(corpus.n_domains):
        fakes = corpus.indices(split=split, label=1, domain=d)
        if fakes.size == 0:
            raise ValueError(f"balance_resample: split {split!r} has no forgeries for domain {d}")
        reals = rng.choice(real_pool, size=fakes.size, replace=True)
        chunks.append(np.concatenate([fakes, reals]))
    epoch = np.concatenate(chunks)
    return epoch[rng.permutation(epoch.size)]


def _write_tensor(path: str, array: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", array.ndim))
        fh.write(struct.pack(f"<{array.ndim}I", *array.shape))
        fh.write(np.ascontiguousarray(array, dtype="<f4").tobytes())


def _read_tensor(path: str) -> np.ndarray:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as err:
        raise CorpusFormatError(f"cannot read tensor file {path}: {err}") from err
    if raw[:4] != _MAGIC:
        raise CorpusFormatError(f"bad magic in {path}: expected {_MAGIC!r}, got {raw[:4]!r}")
    (ndim,) = struct.unpack_from("<I", raw, 4)
    dims = struct.unpack_from(f"<{ndim}I", raw, 8)
    payload = raw[8 + 4 * ndim :]
    expected = int(np.prod(dims)) * 4
    if len(payload) != expected:
        raise CorpusFormatError(f"{path}: payload is {len(payload)} bytes, dims {dims} need {expected}")
    return np.frombuffer(payload, dtype="<f4").reshape(dims)


def write_corpus(corpus: Corpus, out_dir: str) -> None:
    """Manifest plus one AFD1 tensor file per image."""
    os.makedirs(out_dir, exist_ok=True)
    records = []
    for i in range(len(corpus)):
        fname = f"img_{i:06d}.afd"
        _write_tensor(os.path.join(out_dir, fname), corpus.images[i])
        records.append(
            {
                "file": fname,
                "label": int(corpus.labels[i]),
                "domain": int(corpus.domains[i]),
                "source": int(corpus.sources[i]),
                "split": str(corpus.splits[i]),
            }
        )
    manifest = {
        "format": "afd-corpus-v1",
        "seed": corpus.seed,
        "height": corpus.height,
        "width": corpus.width,
        "channels": corpus.channels,
        "n_domains": corpus.n_domains,
        "count": len(corpus),
        "images": records,
    }
    with open(os.path.join(out_dir, _MANIFEST), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_corpus(corpus_dir: str) -> Corpus:
    manifest_path = os.path.join(corpus_dir, _MANIFEST)
    try:
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except OSError as err:
        raise CorpusFormatError(f"cannot read manifest {manifest_path}: {err}") from err
    except json.JSONDecodeError as err:
        raise CorpusFormatError(f"manifest {manifest_path} is not valid JSON: {err}") from err

    for key in ("height", "width", "channels", "n_domains", "seed", "count", "images"):
        if key not in manifest:
            raise CorpusFormatError(f"manifest {manifest_path} is missing key {key!r}")
    records = manifest["images"]
    if len(records) != manifest["count"]:
        raise CorpusFormatError(
            f"manifest {manifest_path} declares count={manifest['count']} but lists {len(records)} images"
        )

    shape = (manifest["channels"], manifest["height"], manifest["width"])
    images = np.empty((len(records), *shape), dtype=np.float32)
    labels = np.empty(len(records), dtype=np.int64)
    domains = np.empty(len(records), dtype=np.int64)
    sources = np.empty(len(records), dtype=np.int64)
    splits = np.empty(len(records), dtype="<U5")
    for i, rec in enumerate(records):
        path = os.path.join(corpus_dir, rec["file"])
        tensor = _read_tensor(path)
        if tensor.shape != shape:
            raise CorpusFormatError(f"{path}: shape {tensor.shape} does not match manifest {shape}")
        images[i] = tensor
        labels[i] = rec["label"]
        domains[i] = rec["domain"]
        sources[i] = rec["source"]
        splits[i] = rec["split"]
    return Corpus(
        height=manifest["height"],
        width=manifest["width"],
        channels=manifest["channels"],
        n_domains=manifest["n_domains"],
        seed=manifest["seed"],
        images=images,
        labels=labels,
        domains=domains,
        sources=sources,
        splits=splits,
    )
