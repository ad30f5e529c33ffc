import struct

import numpy as np
import pytest

from fedcost.datagen import (
    ClientShard,
    DataSample,
    IdxCountMismatchError,
    IdxMagicError,
    IdxTruncatedError,
    PartitionError,
    dataset_to_csv,
    gen_synthetic,
    load_idx,
    partition_by_label,
)


def test_shard_size_mean_matches_request():
    ds = gen_synthetic(1, 1, 100, 245, 362, seed=7)
    sizes = np.array([s.n_k for s in ds.shards])
    assert abs(sizes.mean() - 245) / 245 < 0.20
    assert sizes.min() >= 1


def test_weights_sum_to_one_and_track_counts(small_dataset):
    w = small_dataset.weights
    assert abs(w.sum() - 1.0) < 1e-12
    counts = np.array([s.n_k for s in small_dataset.shards])
    np.testing.assert_allclose(w, counts / counts.sum(), rtol=0, atol=0)


def test_zero_heterogeneity_shares_labeling_model():
    # alpha = beta = 0 collapses every client's model to the same one, so
    # the labeling rule is identical across clients (inputs stay noisy).
    ds = gen_synthetic(0, 0, 2, 50, 0, seed=3)
    all_labels = np.concatenate([s.labels for s in ds.shards])
    assert np.unique(all_labels).size == 1


def test_generation_is_deterministic():
    a = gen_synthetic(1, 1, 5, 50, 20, seed=11)
    b = gen_synthetic(1, 1, 5, 50, 20, seed=11)
    for sa, sb in zip(a.shards, b.shards):
        assert sa.features.tobytes() == sb.features.tobytes()
        assert sa.labels.tobytes() == sb.labels.tobytes()


def test_different_seeds_differ():
    a = gen_synthetic(1, 1, 5, 50, 20, seed=11)
    b = gen_synthetic(1, 1, 5, 50, 20, seed=12)
    assert a.shards[0].features.tobytes() != b.shards[0].features.tobytes()


def test_input_variance_decays_with_coordinate():
    ds = gen_synthetic(1, 1, 30, 200, 50, seed=5)
    per_coord = np.mean([s.features.var(axis=0) for s in ds.shards], axis=0)
    ranks = np.empty(per_coord.size)
    ranks[np.argsort(per_coord)] = np.arange(per_coord.size)
    corr = np.corrcoef(ranks, np.arange(per_coord.size))[0, 1]
    assert corr < 0


def test_gen_synthetic_rejects_bad_arguments():
    with pytest.raises(ValueError):
        gen_synthetic(1, 1, 0, 100, 10, seed=0)
    with pytest.raises(ValueError):
        gen_synthetic(float("nan"), 1, 3, 100, 10, seed=0)
    with pytest.raises(ValueError):
        gen_synthetic(1, 1, 3, 0, 10, seed=0)


def _pool(per_label, n_labels, d=4, seed=0):
    rng = np.random.default_rng(seed)
    pool = []
    for lab in range(n_labels):
        for _ in range(per_label):
            pool.append(DataSample(rng.standard_normal(d), lab))
    return pool


def test_partition_exact_counts_and_labels():
    pool = _pool(per_label=900, n_labels=10)
    ds = partition_by_label(pool, n_clients=30, labels_per_client=2, samples_per_client=300, seed=1)
    assert ds.n_clients == 30
    for shard in ds.shards:
        assert shard.n_k == 300
        assert np.unique(shard.labels).size == 2
    assert ds.n == 9000


def test_partition_never_reuses_a_sample():
    pool = _pool(per_label=30, n_labels=4)
    ds = partition_by_label(pool, n_clients=4, labels_per_client=2, samples_per_client=20, seed=2)
    seen = set()
    for shard in ds.shards:
        for row in shard.features:
            key = row.tobytes()
            assert key not in seen
            seen.add(key)


def test_partition_single_label_pool_is_infeasible():
    pool = _pool(per_label=50, n_labels=1)
    with pytest.raises(PartitionError):
        partition_by_label(pool, n_clients=2, labels_per_client=2, samples_per_client=10, seed=0)


def test_partition_error_names_the_deficient_label():
    pool = _pool(per_label=10, n_labels=2)
    with pytest.raises(PartitionError, match="label 0"):
        partition_by_label(pool, n_clients=4, labels_per_client=2, samples_per_client=10, seed=0)


def test_partition_identity_when_one_client_takes_all():
    pool = _pool(per_label=12, n_labels=3)
    ds = partition_by_label(pool, n_clients=1, labels_per_client=3, samples_per_client=36, seed=4)
    assert ds.n_clients == 1
    want_rows = {np.asarray(s.features).tobytes() for s in pool}
    have_rows = {row.tobytes() for row in ds.shards[0].features}
    assert have_rows == want_rows


def _write_idx(tmp_path, images, labels, image_magic=0x803, label_magic=0x801,
               truncate_images=0, label_count=None):
    n, rows, cols = images.shape
    img_path = tmp_path / "imgs.idx"
    lab_path = tmp_path / "labs.idx"
    blob = struct.pack(">IIII", image_magic, n, rows, cols) + images.astype(np.uint8).tobytes()
    if truncate_images:
        blob = blob[:-truncate_images]
    img_path.write_bytes(blob)
    lab_path.write_bytes(
        struct.pack(">II", label_magic, n if label_count is None else label_count)
        + labels.astype(np.uint8).tobytes()[: (n if label_count is None else label_count)]
    )
    return str(img_path), str(lab_path)


def test_load_idx_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, size=(10, 3, 2))
    labels = rng.integers(0, 10, size=10)
    img, lab = _write_idx(tmp_path, images, labels)
    samples = load_idx(img, lab)
    assert len(samples) == 10
    for i, s in enumerate(samples):
        assert s.label == labels[i]
        assert s.features.min() >= 0.0 and s.features.max() <= 1.0
        np.testing.assert_allclose(s.features, images[i].reshape(-1) / 255.0)


def test_load_idx_magic_mismatch(tmp_path):
    rng = np.random.default_rng(1)
    img, lab = _write_idx(tmp_path, rng.integers(0, 256, (4, 2, 2)), rng.integers(0, 3, 4),
                          image_magic=0x801)
    with pytest.raises(IdxMagicError):
        load_idx(img, lab)


def test_load_idx_truncated(tmp_path):
    rng = np.random.default_rng(2)
    img, lab = _write_idx(tmp_path, rng.integers(0, 256, (4, 2, 2)), rng.integers(0, 3, 4),
                          truncate_images=5)
    with pytest.raises(IdxTruncatedError):
        load_idx(img, lab)


def test_load_idx_count_mismatch(tmp_path):
    rng = np.random.default_rng(3)
    img, lab = _write_idx(tmp_path, rng.integers(0, 256, (10, 2, 2)), rng.integers(0, 3, 10),
                          label_count=9)
    with pytest.raises(IdxCountMismatchError):
        load_idx(img, lab)


def test_dataset_csv_layout(tmp_path, small_dataset):
    path = tmp_path / "data.csv"
    dataset_to_csv(small_dataset, str(path))
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    assert header[:2] == ["client_id", "label"]
    assert len(header) == 2 + small_dataset.n_features
    assert len(lines) - 1 == small_dataset.n
    assert all(len(line.split(",")) == len(header) for line in lines[1:])


def test_shard_validation():
    with pytest.raises(ValueError):
        ClientShard(0, np.zeros((0, 3)), np.zeros(0, dtype=int))
    with pytest.raises(ValueError):
        ClientShard(0, np.zeros((2, 3)), np.zeros(3, dtype=int))
