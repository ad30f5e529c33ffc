"""Synthetic non-i.i.d. federated datasets, label-skew partitioning, IDX loading.

The synthetic generator follows the two-knob heterogeneity construction used
for softmax-regression benchmarks: each client k owns a labeling model
(W_k, b_k) drawn around a client offset u_k (spread controlled by alpha) and
an input mean v_k drawn around an offset B_k (spread controlled by beta);
inputs use a fixed diagonal covariance decaying as j^(-1.2).  At (1, 1) this
is exactly the standard construction; at (0, 0) every client shares one
labeling model, so the data are i.i.d. up to input noise.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .csvio import write_csv


class PartitionError(ValueError):
    """Raised when a label-partition request cannot be satisfied by the pool."""


class IdxError(ValueError):
    """Base class for IDX file-format failures."""


class IdxMagicError(IdxError):
    pass


class IdxTruncatedError(IdxError):
    pass


class IdxCountMismatchError(IdxError):
    pass


@dataclass(frozen=True)
class DataSample:
    features: np.ndarray
    label: int


@dataclass
class ClientShard:
    """One client's local data, stored as stacked arrays."""

    client_id: int
    features: np.ndarray  # (n_k, d)
    labels: np.ndarray  # (n_k,)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-d array (n_k, d)")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("labels length must match the number of samples")
        if self.n_k < 1:
            raise ValueError("a shard must hold at least one sample")
        if np.any(self.labels < 0):
            raise ValueError("labels must be non-negative")

    @property
    def n_k(self):
        return int(self.features.shape[0])

    @property
    def samples(self):
        return [DataSample(self.features[i], int(self.labels[i])) for i in range(self.n_k)]


@dataclass
class FederatedDataset:
    """Client shards plus the task dimensions (feature dim, class count)."""

    shards: list
    n_features: int
    n_classes: int

    def __post_init__(self):
        if not self.shards:
            raise ValueError("a dataset needs at least one shard")
        for shard in self.shards:
            if shard.features.shape[1] != self.n_features:
                raise ValueError("shard feature dimension does not match dataset")
            if shard.labels.max(initial=0) >= self.n_classes:
                raise ValueError("shard label exceeds the configured class count")

    @property
    def n_clients(self):
        return len(self.shards)

    @property
    def n(self):
        return sum(s.n_k for s in self.shards)

    @property
    def weights(self):
        """Per-client aggregation weights p_k = n_k / n."""
        counts = np.array([s.n_k for s in self.shards], dtype=float)
        return counts / counts.sum()


def _shard_sizes(rng, n_clients, size_mean, size_std):
    """Power-law (log-normal) shard sizes, moment-matched, clamped at 1."""
    if size_std == 0:
        return np.maximum(1, np.rint(np.full(n_clients, size_mean)).astype(int))
    sigma2 = np.log1p((size_std / size_mean) ** 2)
    mu = np.log(size_mean) - 0.5 * sigma2
    draws = rng.lognormal(mean=mu, sigma=np.sqrt(sigma2), size=n_clients)
    return np.maximum(1, np.rint(draws).astype(int))


def gen_synthetic(alpha, beta, n_clients, size_mean, size_std, seed, n_features=60, n_classes=10):
    """Generate a Synthetic(alpha, beta) federated dataset.

    alpha spreads the per-client labeling models, beta the per-client input
    means.  Shard sizes are log-normal with the requested mean/std.  All
    randomness derives from the single seed through one named sub-stream per
    client, so results are bit-identical across runs and thread counts.
    """
    for name, v in (("alpha", alpha), ("beta", beta), ("size_mean", size_mean), ("size_std", size_std)):
        if not np.isfinite(v):
            raise ValueError(f"{name} must be finite")
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be >= 0")
    if n_clients < 1:
        raise ValueError("n_clients must be >= 1")
    if size_mean <= 0 or size_std < 0:
        raise ValueError("size_mean must be > 0 and size_std >= 0")
    if n_features < 1 or n_classes < 2:
        raise ValueError("need n_features >= 1 and n_classes >= 2")

    streams = np.random.SeedSequence(seed).spawn(n_clients + 1)
    sizes = _shard_sizes(np.random.default_rng(streams[0]), n_clients, size_mean, size_std)
    cov_scale = np.sqrt(np.arange(1, n_features + 1, dtype=float) ** -1.2)

    shards = []
    for k in range(n_clients):
        rng = np.random.default_rng(streams[k + 1])
        u = np.sqrt(alpha) * rng.standard_normal()
        weight = u + np.sqrt(alpha) * rng.standard_normal((n_classes, n_features))
        bias = u + np.sqrt(alpha) * rng.standard_normal(n_classes)
        b_off = np.sqrt(beta) * rng.standard_normal()
        v = b_off + np.sqrt(beta) * rng.standard_normal(n_features)
        x = v + rng.standard_normal((int(sizes[k]), n_features)) * cov_scale
        labels = np.argmax(x @ weight.T + bias, axis=1)
        shards.append(ClientShard(client_id=k, features=x, labels=labels))
    return FederatedDataset(shards=shards, n_features=n_features, n_classes=n_classes)


def partition_by_label(pool, n_clients, labels_per_client, samples_per_client, seed):
    """Partition a sample pool into shards of exactly `labels_per_client`
    distinct labels and `samples_per_client` samples each.

    Labels are assigned to clients in a cyclic block pattern; the per-label
    quota is balanced (samples_per_client split as evenly as the label count
    allows).  No sample is assigned twice.
    """
    if n_clients < 1:
        raise ValueError("n_clients must be >= 1")
    if labels_per_client < 1 or samples_per_client < 1:
        raise ValueError("labels_per_client and samples_per_client must be >= 1")
    if samples_per_client < labels_per_client:
        raise PartitionError(
            f"samples_per_client={samples_per_client} cannot cover "
            f"{labels_per_client} distinct labels"
        )
    if not pool:
        raise PartitionError("empty sample pool")

    by_label = {}
    for idx, sample in enumerate(pool):
        by_label.setdefault(int(sample.label), []).append(idx)
    labels = sorted(by_label)
    if len(labels) < labels_per_client:
        raise PartitionError(
            f"pool holds {len(labels)} distinct labels, request needs {labels_per_client}"
        )

    base, rem = divmod(samples_per_client, labels_per_client)
    assignments = []  # per client: list of (label, take_count)
    demand = {lab: 0 for lab in labels}
    for c in range(n_clients):
        entry = []
        for t in range(labels_per_client):
            lab = labels[(c * labels_per_client + t) % len(labels)]
            take = base + (1 if t < rem else 0)
            entry.append((lab, take))
            demand[lab] += take
        assignments.append(entry)

    for lab in labels:
        if demand[lab] > len(by_label[lab]):
            raise PartitionError(
                f"label {lab} has {len(by_label[lab])} samples, request needs {demand[lab]}"
            )

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    cursors = {lab: 0 for lab in labels}
    order = {lab: rng.permutation(len(by_label[lab])) for lab in labels}

    n_features = np.asarray(pool[0].features, dtype=float).shape[0]
    feat = np.stack([np.asarray(s.features, dtype=float) for s in pool])
    labs = np.array([int(s.label) for s in pool], dtype=np.int64)

    shards = []
    for c, entry in enumerate(assignments):
        taken = []
        for lab, take in entry:
            pos = order[lab][cursors[lab] : cursors[lab] + take]
            cursors[lab] += take
            taken.extend(by_label[lab][p] for p in pos)
        taken = np.array(taken, dtype=int)
        shards.append(ClientShard(client_id=c, features=feat[taken], labels=labs[taken]))
    return FederatedDataset(
        shards=shards, n_features=n_features, n_classes=int(labs.max()) + 1
    )


_IDX_IMAGES_MAGIC = 0x00000803
_IDX_LABELS_MAGIC = 0x00000801


def _read_exact(fh, count, path):
    data = fh.read(count)
    if len(data) != count:
        raise IdxTruncatedError(f"{path}: expected {count} more bytes, got {len(data)}")
    return data


def load_idx(images_path, labels_path):
    """Load an IDX image/label file pair into a flat sample list.

    Pixels are scaled to [0, 1]; the image and label counts must agree.
    """
    with open(images_path, "rb") as fh:
        magic, n_images, rows, cols = struct.unpack(">IIII", _read_exact(fh, 16, images_path))
        if magic != _IDX_IMAGES_MAGIC:
            raise IdxMagicError(
                f"{images_path}: magic 0x{magic:08x}, expected 0x{_IDX_IMAGES_MAGIC:08x}"
            )
        raw = _read_exact(fh, n_images * rows * cols, images_path)
    with open(labels_path, "rb") as fh:
        magic, n_labels = struct.unpack(">II", _read_exact(fh, 8, labels_path))
        if magic != _IDX_LABELS_MAGIC:
            raise IdxMagicError(
                f"{labels_path}: magic 0x{magic:08x}, expected 0x{_IDX_LABELS_MAGIC:08x}"
            )
        raw_labels = _read_exact(fh, n_labels, labels_path)
    if n_images != n_labels:
        raise IdxCountMismatchError(f"{n_images} images but {n_labels} labels")

    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(n_images, rows * cols) / 255.0
    labels = np.frombuffer(raw_labels, dtype=np.uint8)
    return [DataSample(pixels[i], int(labels[i])) for i in range(n_images)]


def dataset_to_csv(dataset, path):
    """Serialize a dataset, one record per sample: client_id, label, features."""
    header = ["client_id", "label"] + [f"f{j}" for j in range(dataset.n_features)]

    def rows():
        for shard in dataset.shards:
            for i in range(shard.n_k):
                yield [shard.client_id, int(shard.labels[i]), *shard.features[i]]

    write_csv(path, header, rows())
