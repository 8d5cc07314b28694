import hashlib
import subprocess

import numpy as np
import pytest

import pdegnn


def path3():
    return pdegnn.Graph(3, [(0, 1), (1, 2)])


def test_operators_match_numpy():
    g = pdegnn.make_random(30, 0.2, 5)
    n, edges = g.n, g.edges
    G = np.zeros((len(edges), n))
    A = np.zeros((len(edges), n))
    for k, (t, h) in enumerate(edges):
        G[k, t], G[k, h] = -1.0, 1.0
        A[k, t] = A[k, h] = 0.5
    adj = np.abs(G.T @ G)
    np.fill_diagonal(adj, 0)
    adj += np.eye(n)
    d = adj.sum(1) ** -0.5
    P = d[:, None] * adj * d[None, :]
    assert np.array_equal(pdegnn.gradient_matrix(g), G)
    assert np.array_equal(pdegnn.averaging_matrix(g), A)
    np.testing.assert_allclose(pdegnn.propagation_matrix(g), P, atol=1e-15)


def test_hand_examples():
    K = np.ones((1, 1))
    adv, _ = pdegnn.evaluate_block("advection", path3(), np.array([[1.0], [0], [0]]), K, h=0.5)
    np.testing.assert_allclose(adv.ravel(), [1.25, -0.25, 0.0], atol=1e-15)
    bur, _ = pdegnn.evaluate_block("burgers", path3(), np.array([[2.0], [0], [0]]), K, h=1.0)
    np.testing.assert_allclose(bur.ravel(), [3.0, -1.0, 0.0], atol=1e-15)
    dif, _ = pdegnn.evaluate_block("diffusion", path3(), np.array([[1.0], [0], [0]]), K, h=0.1, activation="identity")
    np.testing.assert_allclose(dif.ravel(), [0.9, 0.1, 0.0], atol=1e-15)


@pytest.mark.parametrize("kind", [b for b in pdegnn.BLOCKS if b != "gcn"])
def test_blocks_conserve_mass(kind):
    rng = np.random.default_rng(0)
    g = pdegnn.make_random(40, 0.1, 3)
    u = rng.uniform(0, 0.5, (40, 4))
    K = rng.uniform(-0.5, 0.5, (4, 4))
    out, _ = pdegnn.evaluate_block(kind, g, u, K, h=0.1)
    np.testing.assert_allclose(out.sum(0), u.sum(0), atol=1e-12)


def test_bundle_and_checksum(data_dir):
    path = data_dir / "toy_citation"
    b = pdegnn.load_bundle(str(path))
    assert (b.n, b.m, b.f_in, b.classes) == (180, 470, 24, 3)
    payload = b"".join((path / f).read_bytes() for f in ("edges.csv", "features.bin", "labels.csv", "masks.csv"))
    import json

    meta = json.loads((path / "meta.json").read_text())
    assert hashlib.sha256(payload).hexdigest() == meta["payload_sha256"]
    raw = np.frombuffer((path / "features.bin").read_bytes(), dtype="<f4").reshape(b.n, b.f_in)
    assert np.array_equal(b.features, raw)
    masks = b.masks
    assert int(masks["train"].sum()) == 15 and int(masks["val"].sum()) == 45 and int(masks["test"].sum()) == 90


def test_bad_bundle_raises(tmp_path):
    with pytest.raises(pdegnn.BundleError):
        pdegnn.load_bundle(str(tmp_path))


def test_splits(data_dir):
    b = pdegnn.load_bundle(str(data_dir / "toy_separable"))
    s = pdegnn.split(b, "full", 3)
    assert int(s["train"].sum()) == 12 and int(s["val"].sum()) == 4 and int(s["test"].sum()) == 4
    assert not np.any(s["train"] & s["val"])
    again = pdegnn.split(b, "full", 3)
    assert np.array_equal(s["test"], again["test"])


def test_preset():
    p = pdegnn.dataset_preset("cora", "semi")
    assert p == {"lr": 4.6e-5, "weight_decay": 1.2e-4, "channels": 64, "dropout": 0.5, "h": 0.6}
    assert pdegnn.dataset_preset("toy", "semi") is None


def test_train_toy(data_dir, tmp_path):
    runs = pdegnn.train(
        str(data_dir / "toy_citation"),
        {"block": "mix_ad", "depth": "2", "seed": "0,1", "max_epochs": "40", "patience": "40",
         "channels": "16", "h": "0.1", "out": str(tmp_path)},
        profile=True,
    )
    assert [r["seed"] for r in runs] == [0, 1]
    for r in runs:
        assert r["error"] == ""
        assert r["test"] > 50.0
        assert len(r["variance"]) == 3


def test_verify_passes():
    results = pdegnn.verify()
    assert len(results) == 7
    assert all(ok for _, ok, _ in results), results


def test_verify_catches_flipped_sign():
    assert not all(ok for _, ok, _ in pdegnn.verify(flip_advection_sign=True))


def _strip_seconds(csv_text):
    rows = [line.split(",") for line in csv_text.strip().splitlines()]
    col = rows[0].index("seconds")
    return [r[:col] + r[col + 1:] for r in rows]


def test_cli_is_deterministic(cli, data_dir, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        subprocess.run(
            [cli, "train", "--dataset", str(data_dir / "toy_citation"), "--block", "wave", "--depth", "2",
             "--seed", "0", "--max-epochs", "25", "--patience", "25", "--h", "0.1", "--out", str(out)],
            check=True, capture_output=True,
        )
        outs.append(_strip_seconds((out / "results.csv").read_text()))
    assert outs[0] == outs[1]


def test_cli_missing_dataset(cli):
    proc = subprocess.run([cli, "train"], capture_output=True, text=True)
    assert proc.returncode == 2
    assert "no dataset" in proc.stderr
