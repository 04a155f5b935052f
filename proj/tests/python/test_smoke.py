import math

import numpy as np
import pytest

import reshare


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    reshare.synth(str(out), overrides=["n_users=300", "n_posts=120", "n_hate_posts=50"])
    return out


def test_synth_and_load(data_dir):
    ds = reshare.load_dataset(str(data_dir))
    assert ds.num_users == 300
    assert ds.num_posts == 120
    assert ds.num_hate_posts == 50
    assert ds.num_edges > 0
    X, ids = ds.features()
    assert X.shape == (300, 5)
    assert len(ids) == 300
    assert list(reshare.ATTRIBUTE_NAMES)[0] == "verified"


def test_invalid_synth_config(tmp_path):
    with pytest.raises(ValueError, match="n_hate_posts"):
        reshare.synth(str(tmp_path), overrides=["n_posts=10", "n_hate_posts=20"])


def test_propensity_in_unit_interval(data_dir):
    ds = reshare.load_dataset(str(data_dir))
    for scheme in ("biased", "virality", "follower"):
        theta = reshare.propensity(ds, scheme)
        assert len(theta) == ds.num_posts
        assert all(0.0 < v <= 1.0 for v in theta.values())
    with pytest.raises(ValueError):
        reshare.propensity(ds, "virality", mu=0.0)


def test_train_plv_and_rank(data_dir):
    ds = reshare.load_dataset(str(data_dir)).hate_only()
    train, test = reshare.split(ds, 0.8, 1)
    model = reshare.train_plv(train, dim=4, epochs=3, seed=2)
    assert model.user_embeddings.shape == (300, 4)
    assert model.post_embeddings.shape == (50, 4)
    assert len(model.training_curve) == 3
    again = reshare.train_plv(train, dim=4, epochs=3, seed=2)
    assert np.array_equal(model.user_embeddings, again.user_embeddings)
    metrics = model.ranking(train, test, [5, 10])
    assert 0.0 <= metrics[("recall", 5)] <= metrics[("recall", 10)] <= 1.0


def test_outcomes(data_dir):
    ds = reshare.load_dataset(str(data_dir))
    table = reshare.outcomes(ds)
    y = np.asarray(table["y"])
    assert len(table["user_ids"]) == len(y)
    assert np.all((y >= 0.0) & (y <= 1.0))
    for column in table["clusters"].values():
        assert np.all(np.asarray(column) <= y + 1e-12)


def test_effect_models_recover_a_linear_signal():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(2000, 3))
    y = 0.5 * X[:, 0] - 0.2 * X[:, 2] + 0.01 * rng.normal(size=2000)
    lin = reshare.fit_linear(X, y.tolist(), ["a", "b", "c"])
    assert np.sqrt(np.mean((np.asarray(lin.predict(X)) - y) ** 2)) < 0.02
    ebm = reshare.fit_ebm(X, y.tolist(), ["a", "b", "c"], n_bags=2, n_interactions=0)
    pred = np.asarray(ebm.predict(X))
    assert np.corrcoef(pred, y)[0, 1] > 0.95
    ranked = [name for name, _ in ebm.importance(X)]
    assert ranked[0] == "a"
    curve = ebm.curve("a", 20)
    assert curve.shape == (20, 4)
    assert np.all(curve[:, 2] <= curve[:, 3])


def test_welch_reference():
    t, df, p = reshare.welch_t_test([1, 2, 3, 4, 5], [2, 4, 6, 8, 10])
    assert t == pytest.approx(-1.8973665961, rel=1e-9)
    assert df == pytest.approx(5.882352941, rel=1e-9)
    assert 0.1 < p < 0.11


def test_dbscan_and_silhouette():
    rng = np.random.default_rng(1)
    pts = np.vstack([rng.normal(0, 0.1, (20, 2)), rng.normal(10, 0.1, (20, 2))])
    labels = reshare.dbscan(pts, 0.5, 5)
    assert sorted(set(labels)) == [0, 1]
    assert reshare.silhouette(pts, labels) > 0.9
    assert math.isfinite(reshare.silhouette(pts, labels))


def test_pipeline_end_to_end(tmp_path):
    config = """{
      "synth": {"n_users": 250, "n_posts": 100, "n_hate_posts": 40},
      "propensity": {"variants": ["virality"]},
      "plv": {"embedding_dim": 4, "epochs": 3},
      "ebm": {"n_bags": 2, "max_rounds": 100, "n_interactions": 0},
      "effects": {"svg": false}
    }"""
    result = reshare.run_pipeline(str(tmp_path / "run"), config)
    assert "BPRMF-V" in result["report"]
    assert len(result["runs"]) == 1
    assert "Base" in result["runs"][0]["rmse"]
    assert (tmp_path / "run" / "report.txt").exists()

    rows = reshare.mu_sweep(str(tmp_path / "sweep"), [0.1, 1.0], config)
    assert len(rows) == 4
    assert {r[0] for r in rows} == {"BPRMF-V", "BPRMF-F"}

    emb = tmp_path / "run" / "run_0" / "plv_virality" / "plv_embeddings.csv"
    analysis = reshare.embed_analyze([str(emb)], str(tmp_path / "emb"), 0.5, 5)
    assert analysis[0]["tag"] == "plv_virality"
