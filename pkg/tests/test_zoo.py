import json

import numpy as np
import pytest

from blendnet import chem, data, zoo
from blendnet.data import BlendEntry

TOY = zoo.Dims(16, 8, 2, (8, 4))
SMALL = zoo.Dims(2048, 16, 2, (32, 16))


def _inputs(n, seed=0, width=16):
    rng = np.random.default_rng(seed)
    return (
        rng.integers(0, 2, (n, width)).astype(float),
        rng.integers(0, 2, (n, width)).astype(float),
        rng.uniform(size=(n, 1)),
    )


@pytest.fixture(scope="module")
def synthetic_model():
    entries = data.gen_synthetic(400, 21)
    tr, va, _ = data.random_split(entries, data.SplitSpec("random", 21))
    X = [[data.vectorize(e) for e in part] for part in (tr, va)]
    model = zoo.build_model("HDDN", SMALL, 21)
    trained, hist = zoo.train(model, X[0], X[1], zoo.TrainConfig(epochs=40, learning_rate=3e-3, seed=21))
    return trained, hist


# ---------------------------------------------------------------- construction


def test_default_hddn_runs_on_vectorized_entry():
    model = zoo.build_model("HDDN")
    assert model.dims == zoo.Dims(2048, 256, 3, (64, 16))
    assert model.weights["feat.proj.w"].shape == (2048, 256)
    assert model.weights["dec.1.w"].shape == (257, 64)
    score = zoo.predict(model, data.vectorize(BlendEntry("*CC*", "*CCO*", 0.4, "compatible")))
    assert np.isfinite(score)


@pytest.mark.parametrize("variant", zoo.VARIANTS)
def test_every_variant_builds_and_is_seeded(variant):
    a, b = zoo.build_model(variant, TOY, 3), zoo.build_model(variant, TOY, 3)
    assert all(np.array_equal(a.weights[k], b.weights[k]) for k in a.weights)
    xa, xb, c = _inputs(5)
    out, _ = zoo.forward(a, xa, xb, c)
    assert out.shape == (5, 1)
    for name, w in a.weights.items():
        fan_in = a.weights[name[:-2] + ".w"].shape[0]
        assert np.all(np.abs(w) <= 1 / np.sqrt(fan_in))


def test_nodiff_input_width():
    m = zoo.build_model("HDDN-nodiff", zoo.Dims(2048, 8, 1, (4,)))
    assert m.weights["feat.proj.w"].shape[0] == 4096


def test_layer_shapes_per_variant():
    d = zoo.Dims(16, 8, 3, (6, 4))
    cdn = zoo.build_model("CDN", d).weights
    assert [cdn[f"feat.dense{l}.w"].shape[0] for l in (1, 2, 3)] == [8, 16, 24]
    assert cdn["dec.1.w"].shape[0] == 4 * 8 + 1
    dn = zoo.build_model("DN", d).weights
    assert dn["dec.1.w"].shape == (9, 6) and dn["dec.2.w"].shape == (6, 6)
    assert zoo.build_model("MLP", d).weights["feat.proj.w"].shape[0] == 33
    assert zoo.build_model("HDDN-noc", d).weights["dec.1.w"].shape[0] == 8


def test_bad_variant_and_dims():
    with pytest.raises(zoo.UnknownVariant):
        zoo.build_model("ResNet", TOY)
    with pytest.raises(zoo.BadDims):
        zoo.Dims(16, 0, 2, (4,))
    m = zoo.build_model("HDDN", TOY)
    w = dict(m.weights)
    w["dec.out.w"] = np.zeros((3, 1))
    with pytest.raises(zoo.BadDims):
        zoo.ModelInstance("HDDN", TOY, w)


# ---------------------------------------------------------------- prediction


def test_hand_computed_all_ones_score():
    dims = zoo.Dims(2, 2, 1, (2,))
    m = zoo.build_model("HDDN", dims)
    m.weights = {k: (np.ones_like(v) if k.endswith(".w") else np.zeros_like(v)) for k, v in m.weights.items()}
    # proj: (1,0)@ones -> (1,1); dense1 -> (2,2); same for (0,1); |diff| = (0,0)
    # decision: (0,0,0.5)@ones -> (0.5,0.5); out -> 1.0
    assert zoo.predict_arrays(m, [[1, 0]], [[0, 1]], [[0.5]])[0] == 1.0


def test_hand_computed_asymmetric_score():
    dims = zoo.Dims(2, 2, 1, (2,))
    m = zoo.build_model("HDDN", dims)
    m.weights = {
        "feat.proj.w": np.array([[1.0, 0.0], [0.0, 2.0]]),
        "feat.proj.b": np.array([[0.0, -0.5]]),
        "feat.dense1.w": np.array([[1.0, -1.0], [0.5, 1.0]]),
        "feat.dense1.b": np.zeros((1, 2)),
        "dec.1.w": np.array([[1.0, 0.0], [0.0, 1.0], [4.0, -2.0]]),
        "dec.1.b": np.array([[0.0, 0.5]]),
        "dec.out.w": np.array([[2.0], [3.0]]),
        "dec.out.b": np.array([[-1.0]]),
    }
    # A=(1,0): proj relu(1, -0.5) = (1, 0); dense input = proj; relu(1, -1) = (1, 0)
    # B=(0,1): proj relu(0, 1.5) = (0, 1.5); relu(0.75, 1.5) = (0.75, 1.5)
    # |fA - fB| = (0.25, 1.5); concat 0.5 -> (0.25, 1.5, 0.5)
    # dec.1: (0.25 + 2, 1.5 - 1 + 0.5) = (2.25, 1.0); out: 4.5 + 3 - 1 = 6.5
    assert zoo.predict_arrays(m, [[1, 0]], [[0, 1]], [[0.5]])[0] == pytest.approx(6.5, abs=1e-12)


def test_identical_polymers_depend_only_on_composition():
    m = zoo.build_model("HDDN", TOY, 1)
    xa, _, _ = _inputs(6, 2)
    for x in (0.1, 0.6):
        comp = np.full((6, 1), x)
        scores = zoo.predict_arrays(m, xa, xa, comp)
        assert np.all(scores == scores[0])


def test_classify_tie_rule():
    assert zoo.classify(0.0, 5.0) == "compatible"
    assert zoo.classify(10.0, 5.0) == "incompatible"
    assert zoo.classify(5.0, 5.0) == "incompatible"


def test_noabs_is_asymmetric_before_canonicalisation():
    m = zoo.build_model("HDDN-noabs", TOY, 2)
    xa, xb, c = _inputs(20, 5)
    s_ab = zoo.predict_arrays(m, xa, xb, c)
    s_ba = zoo.predict_arrays(m, xb, xa, 1.0 - c)
    assert np.any(s_ab != s_ba)
    e = BlendEntry("*CC(*)c1ccccc1", "*CCO*", 0.3, "compatible")
    f = BlendEntry("*CCO*", "*CC(*)c1ccccc1", 0.7, "compatible")
    big = zoo.build_model("HDDN-noabs", zoo.Dims(2048, 8, 1, (4,)), 2)
    assert zoo.predict(big, data.vectorize(e)) == zoo.predict(big, data.vectorize(f))


def test_width_guard():
    m = zoo.build_model("HDDN", TOY)
    inp = data.vectorize(BlendEntry("*CC*", "*CCO*", 0.5, "compatible"))
    with pytest.raises(zoo.ad.ShapeMismatch):
        zoo.predict(m, inp)


# ---------------------------------------------------------------- training


def _toy_sets(n=60, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        fa = chem.Fingerprint.from_on_bits(rng.choice(16, 4, replace=False), 16)
        fb = chem.Fingerprint.from_on_bits(rng.choice(16, 4, replace=False), 16)
        bad = chem.tanimoto(fa, fb) < 0.2
        out.append(data.vectorize_fingerprints(fa, fb, float(rng.uniform()), bad))
    return out[: n * 2 // 3], out[n * 2 // 3 :]


def test_zero_epochs_returns_initial_model():
    tr, va = _toy_sets()
    m = zoo.build_model("HDDN", TOY, 0)
    out, hist = zoo.train(m, tr, va, zoo.TrainConfig(epochs=0))
    assert all(np.array_equal(out.weights[k], m.weights[k]) for k in m.weights)
    assert hist.train_loss == [] and hist.selected_epoch is None


def test_training_is_deterministic_and_leaves_input_untouched():
    tr, va = _toy_sets()
    m = zoo.build_model("DN", TOY, 0)
    before = {k: v.copy() for k, v in m.weights.items()}
    cfg = zoo.TrainConfig(epochs=5, batch_size=7, learning_rate=1e-3, seed=4)
    a, ha = zoo.train(m, tr, va, cfg, test_set=va)
    b, hb = zoo.train(m, tr, va, cfg, test_set=va)
    assert ha == hb and len(ha.train_loss) == 5 and len(ha.test_accuracy) == 5
    assert all(np.array_equal(a.weights[k], b.weights[k]) for k in a.weights)
    assert all(np.array_equal(m.weights[k], before[k]) for k in before)


def test_best_valid_selection_earliest_tie():
    tr, va = _toy_sets()
    _, hist = zoo.train(zoo.build_model("HDDN", TOY, 0), tr, va, zoo.TrainConfig(epochs=8, learning_rate=1e-3))
    best = max(hist.valid_accuracy)
    assert hist.selected_epoch == hist.valid_accuracy.index(best) + 1


def test_empty_and_diverged():
    tr, va = _toy_sets()
    m = zoo.build_model("HDDN", TOY, 0)
    with pytest.raises(zoo.EmptySet):
        zoo.train(m, [], va)
    broken = m.copy()
    broken.weights["dec.out.b"][:] = np.nan
    with pytest.raises(zoo.DivergedLoss) as info:
        zoo.train(broken, tr, va, zoo.TrainConfig(epochs=3))
    assert info.value.epoch == 1


def test_memorises_two_points():
    fa = chem.Fingerprint.from_on_bits([0, 1, 2], 16)
    fb = chem.Fingerprint.from_on_bits([9, 10], 16)
    fc = chem.Fingerprint.from_on_bits([0, 1, 3], 16)
    pts = [data.vectorize_fingerprints(fa, fb, 0.5, True), data.vectorize_fingerprints(fa, fc, 0.5, False)]
    m, _ = zoo.train(zoo.build_model("HDDN", TOY, 1), pts, pts, zoo.TrainConfig(epochs=300, batch_size=2, learning_rate=1e-2))
    assert [zoo.classify(zoo.predict(m, p), m.criterion) for p in pts] == ["incompatible", "compatible"]


def test_synthetic_train_accuracy(synthetic_model):
    _, hist = synthetic_model
    assert max(hist.train_accuracy) >= 0.9


# ---------------------------------------------------------------- evaluation and checkpoints


def test_evaluate_counts():
    tr, va = _toy_sets()
    m = zoo.build_model("HDDN", TOY, 0)
    r = zoo.evaluate(m, va)
    assert r.cm.total == len(va)
    assert r.report.mse == pytest.approx(float(np.mean((r.scores - [i.target for i in va]) ** 2)))


def test_checkpoint_roundtrip(tmp_path):
    m = zoo.build_model("CDN", TOY, 8)
    zoo.save_checkpoint(m, tmp_path / "c.json")
    back = zoo.load_checkpoint(tmp_path / "c.json")
    xa, xb, c = _inputs(100, 9)
    assert np.array_equal(zoo.predict_arrays(m, xa, xb, c), zoo.predict_arrays(back, xa, xb, c))
    assert (back.variant, back.dims, back.lam, back.criterion) == (m.variant, m.dims, m.lam, m.criterion)


def test_checkpoint_errors(tmp_path):
    m = zoo.build_model("HDDN", TOY, 8)
    path = tmp_path / "c.json"
    zoo.save_checkpoint(m, path)
    text = path.read_text()
    (tmp_path / "t.json").write_text(text[: len(text) // 2])
    with pytest.raises(zoo.CorruptPayload):
        zoo.load_checkpoint(tmp_path / "t.json")
    doc = json.loads(text)
    (tmp_path / "m.json").write_text(json.dumps({**doc, "magic": "XXXX"}))
    with pytest.raises(zoo.BadMagic):
        zoo.load_checkpoint(tmp_path / "m.json")
    (tmp_path / "v.json").write_text(json.dumps({**doc, "version": 99}))
    with pytest.raises(zoo.VersionMismatch):
        zoo.load_checkpoint(tmp_path / "v.json")
    doc["weights"]["dec.out.w"]["shape"] = [3, 7]
    (tmp_path / "s.json").write_text(json.dumps(doc))
    with pytest.raises(zoo.CorruptPayload):
        zoo.load_checkpoint(tmp_path / "s.json")


# ---------------------------------------------------------------- sweeps


def test_sweep_symmetry_and_identity():
    m = zoo.build_model("HDDN", zoo.Dims(2048, 8, 1, (4,)), 3)
    ab = zoo.composition_sweep(m, "*CC(*)c1ccccc1", "*CCO*", steps=11)
    ba = zoo.composition_sweep(m, "*CCO*", "*CC(*)c1ccccc1", steps=11)
    assert ab.fractions == tuple(k / 10 for k in range(11))
    assert ab.scores == ba.scores[::-1]
    same = zoo.composition_sweep(m, "*CCO*", "*CCO*", steps=11)
    assert same.scores == same.scores[::-1]


def test_sweep_accepts_edited_molecule():
    m = zoo.build_model("HDDN", zoo.Dims(2048, 8, 1, (4,)), 3)
    mol = chem.parse_smiles("*CC(*)c1ccc(O)cc1")
    cut = chem.delete_atoms(mol, {8})
    sw = zoo.composition_sweep(m, cut, "*CCO*", steps=5)
    assert len(sw.rows()) == 5
    with pytest.raises(ValueError):
        zoo.composition_sweep(m, "*CC*", "*CCO*", steps=1)


def test_trained_sweep_is_not_constant(synthetic_model):
    model, _ = synthetic_model
    sw = zoo.composition_sweep(model, "*CC(*)c1ccccc1", "*CC(*)c1ccc(O)cc1", steps=21)
    assert max(sw.scores) - min(sw.scores) > 0
