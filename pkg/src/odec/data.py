"""Datasets: IDX container parsing and a synthetic blob-image generator."""

from dataclasses import dataclass
import hashlib
import struct

import numpy as np

from .errors import BadMagicError, TruncatedPayloadError, UnsupportedDtypeError

# IDX type code -> (numpy big-endian dtype, bytes per element)
IDX_DTYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}


@dataclass(frozen=True, eq=False)
class Dataset:
    """Images of shape ``(samples, channels, h, w)`` in [0, 1] with integer labels."""

    images: np.ndarray
    labels: np.ndarray
    split: str = "train"
    name: str = "dataset"
    class_count: int = None

    def __post_init__(self):
        images = np.asarray(self.images, dtype=np.float64)
        if images.ndim == 3:
            images = images[:, None]
        labels = np.asarray(self.labels, dtype=np.int64)
        if images.shape[0] != labels.shape[0]:
            raise ValueError(f"{images.shape[0]} images but {labels.shape[0]} labels")
        classes = self.class_count
        if classes is None:
            classes = int(labels.max()) + 1 if labels.size else 0
        if labels.size and (labels.min() < 0 or labels.max() >= classes):
            raise ValueError(f"labels must lie in [0, {classes})")
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_count", classes)

    def __len__(self):
        return self.labels.shape[0]

    @property
    def shape(self):
        return self.images.shape[1:]

    def head(self, count):
        return Dataset(self.images[:count], self.labels[:count], self.split, self.name,
                       self.class_count)

    @property
    def ident(self):
        """Short content-derived identifier used in provenance records."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.images).tobytes())
        h.update(np.ascontiguousarray(self.labels).tobytes())
        return f"{self.name}:{self.split}:{h.hexdigest()[:16]}"


def parse_idx(data):
    """Decode an IDX byte string into an array.

    Header: two zero bytes, a type code, the number of dimensions, then one
    big-endian u32 per dimension. Unsigned-byte tensors with two or more
    dimensions are pixel data and get scaled by 1/255; one-dimensional u8
    payloads are label vectors and come back as integers.
    """
    arr = parse_idx_raw(data)
    if arr.dtype == np.uint8:
        if arr.ndim == 1:
            return arr.astype(np.int64)
        return arr.astype(np.float64) / 255.0
    return arr.astype(np.float64)


def parse_idx_raw(data):
    data = bytes(data)
    if len(data) < 4:
        raise TruncatedPayloadError(f"IDX header needs 4 bytes, got {len(data)}")
    if data[0] != 0 or data[1] != 0:
        raise BadMagicError(f"IDX magic must start with 00 00, got {data[:2].hex()}")
    code, ndim = data[2], data[3]
    if code not in IDX_DTYPES:
        raise UnsupportedDtypeError(f"unsupported IDX type code 0x{code:02x}")
    header = 4 + 4 * ndim
    if len(data) < header:
        raise TruncatedPayloadError(
            f"IDX dimension table needs {header} bytes, got {len(data)}"
        )
    dims = struct.unpack(f">{ndim}I", data[4:header])
    dtype = IDX_DTYPES[code]
    expected = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    actual = len(data) - header
    if actual < expected:
        raise TruncatedPayloadError(
            f"IDX payload truncated: expected {expected} bytes, got {actual}"
        )
    arr = np.frombuffer(data, dtype=dtype, count=expected // dtype.itemsize, offset=header)
    return arr.astype(dtype.newbyteorder("=")).reshape(dims)


def encode_idx(array, code=0x08):
    """Inverse of :func:`parse_idx_raw` for the given type code."""
    dtype = IDX_DTYPES[code]
    a = np.asarray(array)
    header = bytes([0, 0, code, a.ndim]) + struct.pack(f">{a.ndim}I", *a.shape)
    return header + a.astype(dtype).tobytes()


def load_idx(images_path, labels_path, split="train", name="idx"):
    with open(images_path, "rb") as fh:
        images = parse_idx(fh.read())
    with open(labels_path, "rb") as fh:
        labels = parse_idx(fh.read())
    return Dataset(images, labels.astype(np.int64), split, name)


def synth_dataset(seed=0, classes=10, samples=1000, shape=(1, 8, 8), margin=1.0,
                  noise=0.15, split="train", blobs=3):
    """Class-conditional Gaussian-blob images.

    Each class owns a prototype made of ``blobs`` Gaussian bumps; a sample is
    a shared background plus ``margin`` times its class prototype plus pixel
    noise, clipped to [0, 1]. Prototypes depend only on ``seed``; the
    ``split`` selects an independent noise stream, so train and test splits
    share class structure. ``margin=0`` makes classes indistinguishable.
    """
    c, h, w = shape
    proto_rng = np.random.default_rng([seed, 0])
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")

    def blob_image(rng, count):
        img = np.zeros((c, h, w))
        for _ in range(count):
            ch = rng.integers(c)
            cy, cx = rng.uniform(0, h - 1), rng.uniform(0, w - 1)
            s = rng.uniform(0.8, 1.8) * max(h, w) / 8
            img[ch] += np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s))
        return img / max(img.max(), 1e-12)

    background = 0.3 * blob_image(proto_rng, blobs)
    protos = np.stack([blob_image(proto_rng, blobs) for _ in range(classes)])
    stream = {"train": 1, "test": 2}.get(split, 3)
    rng = np.random.default_rng([seed, stream])
    labels = rng.integers(classes, size=samples)
    images = background[None] + 0.5 * margin * protos[labels]
    images = images + noise * rng.normal(size=images.shape)
    images = np.clip(images, 0.0, 1.0)
    return Dataset(images, labels, split, f"synth-{seed}", classes)
