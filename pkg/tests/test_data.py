import json
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from blendnet import chem, data
from blendnet.data import BlendEntry, SplitSpec

# Rule oracle over the 12-unit pool: 144 ordered pairs x 101 fractions, labelled
# with set-based tanimoto and t0=0.25, alpha=0.3.  6256 of 14544 are incompatible.
GRID_INCOMPATIBLE_RATE = 6256 / 14544

POLY = data.DEFAULT_POOL


def _write(path, body):
    path.write_text(",".join(data.HEADER) + "\n" + body)
    return path


def _entries(n, seed=0, pool=POLY):
    return data.gen_synthetic(n, seed, pool=pool)


# ---------------------------------------------------------------- loading


def test_empty_data_section(tmp_path):
    assert data.load_entries(_write(tmp_path / "d.csv", "")) == []


def test_three_rows_in_order(tmp_path):
    p = _write(
        tmp_path / "d.csv",
        "*CC*,*CCO*,0.5,compatible,s1\n# note\n*CC(*)c1ccccc1,*CC*,0.25,incompatible,s2\n*CCO*,*CCO*,1,compatible,s3\n",
    )
    out = data.load_entries(p)
    assert [e.source_id for e in out] == ["s1", "s2", "s3"]
    assert out[1].incompatible and out[1].fraction_a == 0.25


def test_bad_fraction_row(tmp_path):
    p = _write(tmp_path / "d.csv", "*CC*,*CCO*,1.5,compatible,s1\n")
    with pytest.raises(data.BadRow) as info:
        data.load_entries(p)
    assert info.value.row == 2


def test_rejects_are_itemised(tmp_path):
    p = _write(
        tmp_path / "d.csv",
        "*CC*,*CCO*,0.5,compatible,a\n*CC*,C(,0.5,compatible,b\n*CC*,*CC*,x,compatible,c\n*CC*,*CC*,0.1,maybe,d\n"
        "*CC*,*CC*,0.1,compatible,e\n",
    )
    rejects = []
    out = data.load_entries(p, rejects)
    assert [e.source_id for e in out] == ["a", "e"]
    assert [r.row for r in rejects] == [3, 4, 5]
    assert len(out) + len(rejects) == 5


def test_missing_file_and_header(tmp_path):
    with pytest.raises(data.MissingFile):
        data.load_entries(tmp_path / "nope.csv")
    p = tmp_path / "h.csv"
    p.write_text("a,b,c\n")
    with pytest.raises(data.BadHeader):
        data.load_entries(p)


def test_write_read_roundtrip(tmp_path):
    entries = _entries(50, 2)
    data.write_entries(tmp_path / "x.csv", entries, comment="synthetic")
    assert data.load_entries(tmp_path / "x.csv") == entries


# ---------------------------------------------------------------- random split


def test_random_split_sizes_and_partition():
    entries = _entries(100, 1)
    spec = SplitSpec("random", 7)
    tr, va, te = data.random_split(entries, spec)
    assert (len(tr), len(va), len(te)) == (64, 16, 20)
    assert Counter(tr + va + te) == Counter(entries)
    assert data.random_split(entries, spec) == (tr, va, te)
    with pytest.raises(data.TooFewEntries):
        data.random_split(entries[:4], spec)


def test_split_spec_validation():
    with pytest.raises(ValueError):
        SplitSpec("random", 0, (0.5, 0.5, 0.5))
    with pytest.raises(ValueError):
        SplitSpec("other", 0)


# ---------------------------------------------------------------- balanced split


def test_balanced_split_properties():
    entries = _entries(600, 3)
    tr, va, te = data.balanced_split(entries, SplitSpec("balanced", 5))
    test_pairs = {data.pair_key(e) for e in te}
    assert not test_pairs & {data.pair_key(e) for e in tr + va}
    assert not {data.pair_key(e) for e in va} & {data.pair_key(e) for e in tr}
    for part in (tr, va, te):
        rates = data.class_rates(part)
        assert rates["incompatible_rate"] == 50.0
    # oversampling only duplicates rows; every original entry appears
    assert set(entries) == set(tr) | set(va) | set(te)
    assert data.balanced_split(entries, SplitSpec("balanced", 5)) == (tr, va, te)


def test_balanced_split_needs_pairs():
    entries = [BlendEntry("*CC*", "*CCO*", 0.5, "compatible"), BlendEntry("*CC*", "*CC*", 0.5, "incompatible")] * 5
    with pytest.raises(data.TooFewPairs):
        data.balanced_split(entries, SplitSpec("balanced", 0))


def test_balanced_split_single_class_subset():
    entries = [BlendEntry("*CC*", POLY[i], 0.5, "compatible") for i in range(1, 9)]
    entries += [BlendEntry("*CCO*", POLY[9], 0.5, "incompatible"), BlendEntry("*CCO*", POLY[10], 0.5, "incompatible")]
    with pytest.raises(data.SingleClassSubset):
        data.balanced_split(entries, SplitSpec("balanced", 0, (0.8, 0.1, 0.1)))


def test_write_split_manifest(tmp_path):
    entries = _entries(300, 4)
    spec = SplitSpec("balanced", 1)
    parts = data.balanced_split(entries, spec)
    manifest = data.write_split(tmp_path, parts, spec)
    on_disk = json.loads((tmp_path / "manifest.json").read_text())
    assert on_disk == manifest
    assert all(s["incompatible_rate"] == 50.0 for s in manifest["subsets"].values())
    assert data.load_entries(tmp_path / "test.csv") == list(parts[2])


# ---------------------------------------------------------------- vectorize


def test_vectorize_targets():
    c = BlendEntry("*CC*", "*CCO*", 0.3, "compatible")
    i = BlendEntry("*CC*", "*CCO*", 0.3, "incompatible")
    assert data.vectorize(c).target == 0.0
    assert data.vectorize(i, lam=10.0).target == 10.0


def test_vectorize_canonical_order():
    v = data.vectorize(BlendEntry("*CC(*)c1ccccc1", "*CCO*", 0.3, "compatible"))
    assert chem.canonical_pair_order(v.fp_first, v.fp_second) == "keep"


@given(st.sampled_from(POLY), st.sampled_from(POLY), st.floats(0.0, 1.0), st.booleans())
@settings(max_examples=300, deadline=None)
def test_vectorize_swap_symmetry(a, b, x, bad):
    label = "incompatible" if bad else "compatible"
    v1 = data.vectorize(BlendEntry(a, b, x, label))
    v2 = data.vectorize(BlendEntry(b, a, 1.0 - x, label))
    assert v1 == v2


def test_self_blend_composition_folds():
    v1 = data.vectorize(BlendEntry("*CCO*", "*CCO*", 0.8, "compatible"))
    v2 = data.vectorize(BlendEntry("*CCO*", "*CCO*", 0.2, "compatible"))
    assert v1 == v2 and v1.composition == pytest.approx(0.2)


def test_snap_fraction_makes_complement_exact():
    for x in (0.1, 0.3, 0.7, 1 / 3):
        s = data.snap_fraction(x)
        assert abs(s - x) <= 2.0**-33
        assert 1.0 - (1.0 - s) == s


# ---------------------------------------------------------------- synthetic generator


def test_identical_units_are_compatible():
    assert data.synthetic_rule(1.0, 0.5, 0.25, 0.3)
    ents = _entries(400, 9)
    assert all(not e.incompatible for e in ents if e.smiles_a == e.smiles_b)


def test_alpha_zero_ignores_fraction():
    for sim in (0.1, 0.24, 0.26, 0.6):
        labels = {data.synthetic_rule(sim, f / 20, 0.25, 0.0) for f in range(21)}
        assert len(labels) == 1


def test_default_class_balance_matches_grid_oracle():
    assert 0.2 <= GRID_INCOMPATIBLE_RATE <= 0.8
    ents = data.gen_synthetic(4000, 0)
    rate = sum(e.incompatible for e in ents) / len(ents)
    assert 0.2 <= rate <= 0.8
    assert rate == pytest.approx(GRID_INCOMPATIBLE_RATE, abs=0.04)


def test_gen_synthetic_is_seeded():
    assert data.gen_synthetic(50, 1) == data.gen_synthetic(50, 1)
    assert data.gen_synthetic(50, 1) != data.gen_synthetic(50, 2)


def test_pool_too_small():
    with pytest.raises(data.PoolTooSmall):
        data.gen_synthetic(10, 0, pool=POLY[:5])


def test_custom_rule_is_tagged():
    def planted(fa, fb, frac):
        return True

    ents = data.gen_synthetic(5, 0, rule=planted)
    assert all(e.source_id.startswith("synthetic;rule=planted") for e in ents)
