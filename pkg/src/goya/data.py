"""Dataset containers, file formats, prompt grids, splits, and the synthetic
factor-model generator.

The GEMB file holds fixed-width records after a 32-byte header, all little
endian:

    magic  b"GEMB"
    u32    format version (currently 1)
    u64    record count
    u32    d_img
    u32    d_txt (0 = no text embeddings stored)
    u32    n_styles
    u32    flags (reserved, must be 0)
    per record:
        u64   record_id
        u64   content_id
        i32   style_id (-1 = unknown)
        i32   genre_id (-1 = unknown)
        i32   content_cluster (-1 = unknown)
        f32 * d_img  image embedding
        f32 * d_txt  text embedding (present only when d_txt > 0)

Readers validate structure (raising FormatError with a byte offset) and
content invariants (finite, nonzero embeddings; style ids below n_styles),
so nothing downstream needs to re-check.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, DegenerateInputError, FormatError

MAGIC = b"GEMB"
VERSION = 1
# keeps the record dtype far below numpy's C-int size limits
MAX_EMBED_DIM = 1 << 20

_HEADER = struct.Struct("<4sIQIIII")

# WikiArt label vocabularies used as the default sidecar tables.
STYLE_MOVEMENTS = (
    "Abstract Expressionism", "Action painting", "Analytical Cubism", "Art Nouveau",
    "Baroque", "Color Field Painting", "Contemporary Realism", "Cubism",
    "Early Renaissance", "Expressionism", "Fauvism", "High Renaissance",
    "Impressionism", "Mannerism Late Renaissance", "Minimalism",
    "Naive Art Primitivism", "New Realism", "Northern Renaissance", "Pointillism",
    "Pop Art", "Post Impressionism", "Realism", "Rococo", "Romanticism",
    "Symbolism", "Synthetic Cubism", "Ukiyo-e",
)

GENRES = (
    "abstract painting", "cityscape", "genre painting", "illustration", "landscape",
    "nude painting", "portrait", "sketch and study", "religious painting", "still life",
)


@dataclass(frozen=True)
class EmbeddingRecord:
    """One sample: joint image embedding plus tags and optional text embedding."""

    record_id: int
    image_embedding: np.ndarray
    style_id: int = -1
    content_id: int = 0
    text_embedding: np.ndarray | None = None
    genre_id: int = -1
    content_cluster: int = -1


def _record_dtype(d_img: int, d_txt: int) -> np.dtype:
    fields = [
        ("record_id", "<u8"),
        ("content_id", "<u8"),
        ("style_id", "<i4"),
        ("genre_id", "<i4"),
        ("content_cluster", "<i4"),
        ("image", "<f4", (d_img,)),
    ]
    if d_txt:
        fields.append(("text", "<f4", (d_txt,)))
    return np.dtype(fields)


@dataclass
class Dataset:
    """Columnar view of a record collection; immutable by convention after load."""

    record_ids: np.ndarray
    content_ids: np.ndarray
    style_ids: np.ndarray
    genre_ids: np.ndarray
    content_clusters: np.ndarray
    images: np.ndarray
    texts: np.ndarray | None
    n_styles: int

    def __len__(self) -> int:
        return self.record_ids.shape[0]

    @property
    def d_img(self) -> int:
        return self.images.shape[1]

    @property
    def d_txt(self) -> int:
        return 0 if self.texts is None else self.texts.shape[1]

    def validate(self) -> None:
        n = len(self)
        for name in ("content_ids", "style_ids", "genre_ids", "content_clusters"):
            if getattr(self, name).shape != (n,):
                raise DataError(f"column '{name}' does not have {n} rows")
        if self.images.shape[0] != n or self.images.ndim != 2 or self.d_img < 1:
            raise DataError(f"image matrix shape {self.images.shape} invalid for {n} records")
        if self.texts is not None and (self.texts.shape[0] != n or self.texts.ndim != 2):
            raise DataError(f"text matrix shape {self.texts.shape} invalid for {n} records")
        if self.n_styles < 0:
            raise DataError(f"n_styles must be >= 0, got {self.n_styles}")
        if n == 0:
            return
        if (self.style_ids < -1).any() or (self.style_ids >= self.n_styles).any():
            bad = int(np.flatnonzero((self.style_ids < -1) | (self.style_ids >= self.n_styles))[0])
            raise DataError(f"record {bad}: style_id {int(self.style_ids[bad])} outside "
                            f"[-1, {self.n_styles})")
        if (self.genre_ids < -1).any() or (self.content_clusters < -1).any():
            raise DataError("genre_id / content_cluster below -1")
        for label, mat in (("image", self.images), ("text", self.texts)):
            if mat is None:
                continue
            if not np.isfinite(mat).all():
                bad = int(np.flatnonzero(~np.isfinite(mat).all(axis=1))[0])
                raise DataError(f"record {bad}: non-finite {label} embedding")
            norms = np.linalg.norm(mat.astype(np.float64), axis=1)
            if (norms == 0.0).any():
                bad = int(np.flatnonzero(norms == 0.0)[0])
                raise DataError(f"record {bad}: zero {label} embedding")

    def subset(self, idx: np.ndarray) -> "Dataset":
        return Dataset(
            record_ids=self.record_ids[idx],
            content_ids=self.content_ids[idx],
            style_ids=self.style_ids[idx],
            genre_ids=self.genre_ids[idx],
            content_clusters=self.content_clusters[idx],
            images=self.images[idx],
            texts=None if self.texts is None else self.texts[idx],
            n_styles=self.n_styles,
        )

    def to_records(self) -> list[EmbeddingRecord]:
        out = []
        for i in range(len(self)):
            out.append(EmbeddingRecord(
                record_id=int(self.record_ids[i]),
                image_embedding=self.images[i].copy(),
                style_id=int(self.style_ids[i]),
                content_id=int(self.content_ids[i]),
                text_embedding=None if self.texts is None else self.texts[i].copy(),
                genre_id=int(self.genre_ids[i]),
                content_cluster=int(self.content_clusters[i]),
            ))
        return out

    @classmethod
    def from_records(cls, records, n_styles: int) -> "Dataset":
        records = list(records)
        if not records:
            raise DataError("cannot build a dataset from zero records")
        d_img = len(records[0].image_embedding)
        has_text = records[0].text_embedding is not None
        d_txt = len(records[0].text_embedding) if has_text else 0
        for i, r in enumerate(records):
            if len(r.image_embedding) != d_img:
                raise DataError(f"record {i}: image dim {len(r.image_embedding)} != {d_img}")
            if (r.text_embedding is not None) != has_text:
                raise DataError(f"record {i}: inconsistent presence of text embeddings")
            if has_text and len(r.text_embedding) != d_txt:
                raise DataError(f"record {i}: text dim {len(r.text_embedding)} != {d_txt}")
        ds = cls(
            record_ids=np.array([r.record_id for r in records], dtype=np.uint64),
            content_ids=np.array([r.content_id for r in records], dtype=np.uint64),
            style_ids=np.array([r.style_id for r in records], dtype=np.int32),
            genre_ids=np.array([r.genre_id for r in records], dtype=np.int32),
            content_clusters=np.array([r.content_cluster for r in records], dtype=np.int32),
            images=np.array([r.image_embedding for r in records], dtype=np.float32),
            texts=(np.array([r.text_embedding for r in records], dtype=np.float32)
                   if has_text else None),
            n_styles=n_styles,
        )
        ds.validate()
        return ds


def write_dataset(ds: Dataset, path) -> None:
    """Serialize to GEMB. Output bytes are a pure function of the dataset."""
    ds.validate()
    if max(ds.d_img, ds.d_txt) > MAX_EMBED_DIM:
        raise DataError(f"embedding dims {ds.d_img}/{ds.d_txt} "
                        f"exceed the format limit {MAX_EMBED_DIM}")
    n = len(ds)
    dtype = _record_dtype(ds.d_img, ds.d_txt)
    table = np.zeros(n, dtype=dtype)
    table["record_id"] = ds.record_ids
    table["content_id"] = ds.content_ids
    table["style_id"] = ds.style_ids
    table["genre_id"] = ds.genre_ids
    table["content_cluster"] = ds.content_clusters
    table["image"] = ds.images
    if ds.d_txt:
        table["text"] = ds.texts
    header = _HEADER.pack(MAGIC, VERSION, n, ds.d_img, ds.d_txt, ds.n_styles, 0)
    Path(path).write_bytes(header + table.tobytes())


def read_dataset(path) -> Dataset:
    """Parse and validate a GEMB file."""
    path = Path(path)
    buf = path.read_bytes()
    if len(buf) < _HEADER.size:
        raise FormatError(f"{path}: truncated header, {len(buf)} bytes < {_HEADER.size}")
    magic, version, count, d_img, d_txt, n_styles, flags = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at byte 0, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported format version {version} at byte 4")
    if flags != 0:
        raise FormatError(f"{path}: reserved flags {flags} at byte 28 must be 0")
    if d_img < 1:
        raise FormatError(f"{path}: d_img must be >= 1, got {d_img}")
    if max(d_img, d_txt) > MAX_EMBED_DIM:
        raise FormatError(f"{path}: embedding dims {d_img}/{d_txt} "
                          f"exceed the format limit {MAX_EMBED_DIM}")
    dtype = _record_dtype(d_img, d_txt)
    expected = _HEADER.size + count * dtype.itemsize
    if len(buf) < expected:
        raise FormatError(
            f"{path}: truncated payload at byte {len(buf)}, "
            f"{count} records of {dtype.itemsize} bytes need {expected}"
        )
    if len(buf) > expected:
        raise FormatError(f"{path}: {len(buf) - expected} trailing bytes at byte {expected}")
    table = np.frombuffer(buf, dtype=dtype, count=count, offset=_HEADER.size)
    ds = Dataset(
        record_ids=table["record_id"].copy(),
        content_ids=table["content_id"].copy(),
        style_ids=table["style_id"].copy(),
        genre_ids=table["genre_id"].copy(),
        content_clusters=table["content_cluster"].copy(),
        images=table["image"].copy(),
        texts=table["text"].copy() if d_txt else None,
        n_styles=int(n_styles),
    )
    ds.validate()
    return ds


# ---- label tables ---------------------------------------------------------------


def write_label_table(names, path) -> None:
    """Two-column CSV (id, name), ids dense from 0."""
    lines = ["id,name"]
    for i, name in enumerate(names):
        if "," in name or "\n" in name or '"' in name:
            raise DataError(f"label {i}: names must not contain commas, quotes, or newlines")
        lines.append(f"{i},{name}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_label_table(path) -> list[str]:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "id,name":
        raise FormatError(f"{path}: first line must be 'id,name'")
    names = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        ident, sep, name = line.partition(",")
        if not sep or ident != str(len(names)):
            raise FormatError(f"{path}: line {lineno}: expected id {len(names)}, got '{ident}'")
        names.append(name)
    return names


# ---- prompt manifest --------------------------------------------------------------


@dataclass(frozen=True)
class PromptEntry:
    content_id: int
    content_text: str
    style_id: int
    style_text: str
    prompt: str
    seeds: tuple[int, ...]


@dataclass
class PromptManifest:
    """The content x style x seed grid describing images to generate externally."""

    entries: list[PromptEntry] = field(default_factory=list)

    @property
    def n_prompts(self) -> int:
        return len(self.entries)

    @property
    def n_specs(self) -> int:
        return sum(len(e.seeds) for e in self.entries)

    def write_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for e in self.entries:
                fh.write(json.dumps({
                    "content_id": e.content_id,
                    "content_text": e.content_text,
                    "style_id": e.style_id,
                    "style_text": e.style_text,
                    "prompt": e.prompt,
                    "seeds": list(e.seeds),
                }, ensure_ascii=False) + "\n")

    @classmethod
    def read_jsonl(cls, path) -> "PromptManifest":
        path = Path(path)
        entries = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise FormatError(f"{path}: line {lineno}: invalid JSON ({exc})") from None
                try:
                    entry = PromptEntry(
                        content_id=obj["content_id"],
                        content_text=obj["content_text"],
                        style_id=obj["style_id"],
                        style_text=obj["style_text"],
                        prompt=obj["prompt"],
                        seeds=tuple(obj["seeds"]),
                    )
                except (KeyError, TypeError) as exc:
                    raise FormatError(f"{path}: line {lineno}: missing field ({exc})") from None
                if entry.prompt != f"{entry.content_text}, {entry.style_text}":
                    raise FormatError(
                        f"{path}: line {lineno}: prompt does not equal "
                        f"'content_text, style_text'"
                    )
                entries.append(entry)
        return cls(entries)


def gen_prompt_manifest(contents, styles, per_content: int, seeds_per_prompt: int,
                        rng_seed: int = 0) -> PromptManifest:
    """Build the prompt grid: for each content, ``per_content`` styles drawn
    without replacement, each prompt carrying ``seeds_per_prompt`` seeds.

    The prompt string is exactly ``content_text + ", " + style_text``.
    Deterministic per rng_seed.
    """
    contents = list(contents)
    styles = list(styles)
    if per_content < 1 or seeds_per_prompt < 1:
        raise ConfigError("per_content and seeds_per_prompt must be >= 1")
    if per_content > len(styles):
        raise ConfigError(f"per_content={per_content} exceeds {len(styles)} styles")
    rng = np.random.default_rng(rng_seed)
    entries = []
    n_styles = len(styles)
    for content_id, content_text in enumerate(contents):
        chosen = rng.choice(n_styles, size=per_content, replace=False)
        for style_id in chosen:
            style_text = styles[int(style_id)]
            seeds = rng.integers(0, 2**32, size=seeds_per_prompt, dtype=np.uint64)
            entries.append(PromptEntry(
                content_id=content_id,
                content_text=content_text,
                style_id=int(style_id),
                style_text=style_text,
                prompt=f"{content_text}, {style_text}",
                seeds=tuple(int(s) for s in seeds),
            ))
    return PromptManifest(entries)


# ---- splitting ----------------------------------------------------------------------


def split_by_group(group_keys: np.ndarray, fraction: float, rng_seed: int = 0):
    """Partition row indices so that rows sharing a group key never straddle
    the split. The train side receives round(fraction * n_groups) groups,
    chosen by a seeded shuffle. Returns (train_idx, val_idx)."""
    if not (0.0 < fraction < 1.0):
        raise ConfigError(f"fraction must lie in (0, 1), got {fraction}")
    group_keys = np.asarray(group_keys)
    n = group_keys.shape[0]
    if n == 0:
        raise DataError("cannot split an empty input")
    if group_keys.ndim == 1:
        _, inverse = np.unique(group_keys, return_inverse=True)
    else:
        _, inverse = np.unique(group_keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    n_groups = int(inverse.max()) + 1
    n_train = int(round(fraction * n_groups))
    perm = np.random.default_rng(rng_seed).permutation(n_groups)
    is_train = np.zeros(n_groups, dtype=bool)
    is_train[perm[:n_train]] = True
    mask = is_train[inverse]
    return np.flatnonzero(mask), np.flatnonzero(~mask)


def split_dataset(ds: Dataset, fraction: float, rng_seed: int = 0) -> tuple[Dataset, Dataset]:
    """Train/val split by prompt group, i.e. by the (content_id, style_id)
    pair, so all images of one prompt stay on one side."""
    keys = np.stack([ds.content_ids.astype(np.int64), ds.style_ids.astype(np.int64)], axis=1)
    train_idx, val_idx = split_by_group(keys, fraction, rng_seed)
    return ds.subset(train_idx), ds.subset(val_idx)


# ---- synthetic factor model ------------------------------------------------------------


def gen_synthetic_dataset(n: int, content_clusters: int, style_classes: int,
                          d_img: int = 512, d_txt: int = 512, noise: float = 0.3,
                          rng_seed: int = 0, *, latent_dim: int = 32,
                          content_scale: float = 1.0, style_scale: float = 1.0,
                          text_noise: float | None = None) -> Dataset:
    """Sample embeddings from a linear factor model with known ground truth.

    Each record draws a content cluster c and style class s uniformly; the
    image embedding is normalize(A mu_c + B nu_s + noise * eta) and the text
    embedding is normalize(C mu_c + text_noise * eta_t), with mu/nu seeded
    unit vectors per cluster/class and eta rows of expected unit norm. With
    noise=0, records sharing (c, s) have identical image embeddings and
    same-cluster text embeddings coincide. ``text_noise`` defaults to
    ``noise``.
    """
    if min(n, content_clusters, style_classes, d_img, d_txt, latent_dim) < 1:
        raise ConfigError("all counts and dims must be >= 1")
    if noise < 0.0 or (text_noise is not None and text_noise < 0.0):
        raise ConfigError("noise levels must be >= 0")
    if text_noise is None:
        text_noise = noise
    rng = np.random.default_rng(rng_seed)

    def unit_rows(k: int) -> np.ndarray:
        v = rng.normal(size=(k, latent_dim))
        return v / np.linalg.norm(v, axis=1, keepdims=True)

    mu = unit_rows(content_clusters)
    nu = unit_rows(style_classes)
    a = rng.normal(0.0, content_scale / np.sqrt(d_img), size=(d_img, latent_dim))
    b = rng.normal(0.0, style_scale / np.sqrt(d_img), size=(d_img, latent_dim))
    c_map = rng.normal(0.0, 1.0 / np.sqrt(d_txt), size=(d_txt, latent_dim))
    cluster = rng.integers(0, content_clusters, size=n)
    style = rng.integers(0, style_classes, size=n)
    eta_img = rng.normal(0.0, 1.0 / np.sqrt(d_img), size=(n, d_img))
    eta_txt = rng.normal(0.0, 1.0 / np.sqrt(d_txt), size=(n, d_txt))

    images = mu[cluster] @ a.T + nu[style] @ b.T + noise * eta_img
    texts = mu[cluster] @ c_map.T + text_noise * eta_txt
    for name, mat in (("image", images), ("text", texts)):
        norms = np.linalg.norm(mat, axis=1, keepdims=True)
        if (norms == 0.0).any():
            raise DegenerateInputError(f"synthetic {name} embedding collapsed to zero")
        mat /= norms

    ids = np.arange(n, dtype=np.uint64)
    ds = Dataset(
        record_ids=ids,
        content_ids=cluster.astype(np.uint64),
        style_ids=style.astype(np.int32),
        genre_ids=np.full(n, -1, dtype=np.int32),
        content_clusters=cluster.astype(np.int32),
        images=images.astype(np.float32),
        texts=texts.astype(np.float32),
        n_styles=style_classes,
    )
    ds.validate()
    return ds
