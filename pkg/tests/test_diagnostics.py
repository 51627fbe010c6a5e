"""Agreement diagnostics against exhaustive small-case oracles.

The reference implementation below recomputes agreement with explicit
Python loops (per point, per chain, manual argmax with ties going to the
lowest class index) so the vectorized code is checked against something
written independently.
"""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from partial_bnn.diagnostics import (
    ChainPredictions,
    agreement_report,
    all_chains_agreement,
    bootstrap_agreement,
    per_chain_accuracy,
    read_chain_blob,
    save_report,
    write_chain_blob,
)
from partial_bnn.rng import make_rng


def loop_argmax(row):
    best, best_v = 0, row[0]
    for j, v in enumerate(row):
        if v > best_v:
            best, best_v = j, v
    return best


def loop_agreement(probs):
    n_chains, n_points, _ = probs.shape
    agree = 0
    for p in range(n_points):
        picks = [loop_argmax(probs[c, p]) for c in range(n_chains)]
        if all(k == picks[0] for k in picks):
            agree += 1
    return agree / n_points


class TestAllChainsAgreement:
    def test_hand_case_partial_agreement(self):
        # point 0: both pick class 1; point 1: chain 0 picks 0, chain 1 picks 2
        probs = np.array(
            [
                [[0.2, 0.7, 0.1], [0.6, 0.3, 0.1]],
                [[0.1, 0.8, 0.1], [0.2, 0.2, 0.6]],
            ]
        )
        assert all_chains_agreement(ChainPredictions(probs)) == 0.5

    def test_full_agreement_is_one(self):
        probs = np.tile(np.array([[0.1, 0.9], [0.8, 0.2], [0.5, 0.5]]), (3, 1, 1))
        assert all_chains_agreement(ChainPredictions(probs)) == 1.0

    def test_ties_resolve_to_lowest_class(self):
        # chain 0 ties 0/1 at the only point, chain 1 picks 0 outright:
        # tie -> class 0, so the chains agree
        probs = np.array([[[0.5, 0.5]], [[0.9, 0.1]]])
        assert all_chains_agreement(ChainPredictions(probs)) == 1.0
        # flip chain 1 to class 1 and the tie now causes disagreement
        probs2 = np.array([[[0.5, 0.5]], [[0.1, 0.9]]])
        assert all_chains_agreement(ChainPredictions(probs2)) == 0.0

    def test_matches_loop_oracle_exhaustively(self, rng):
        for _ in range(200):
            shape = (
                rng.integers(2, 4),
                rng.integers(1, 5),
                rng.integers(2, 4),
            )
            probs = rng.dirichlet(np.ones(shape[2]), size=shape[:2])
            got = all_chains_agreement(ChainPredictions(probs))
            assert got == loop_agreement(probs)

    def test_invariant_to_chain_order(self, rng):
        probs = rng.dirichlet(np.ones(3), size=(3, 6))
        base = all_chains_agreement(ChainPredictions(probs))
        for perm in ([1, 0, 2], [2, 1, 0], [1, 2, 0]):
            assert all_chains_agreement(ChainPredictions(probs[perm])) == base

    def test_dropping_a_chain_never_lowers_agreement(self, rng):
        # agreement over a chain subset is at least the full-set agreement
        for _ in range(50):
            probs = rng.dirichlet(np.ones(3), size=(3, 8))
            full = all_chains_agreement(ChainPredictions(probs))
            for drop in range(3):
                keep = [c for c in range(3) if c != drop]
                sub = all_chains_agreement(ChainPredictions(probs[keep]))
                assert sub >= full

    @given(
        st.integers(min_value=2, max_value=3),
        st.integers(min_value=1, max_value=4),
        st.integers(min_value=2, max_value=3),
        st.integers(min_value=0, max_value=2**32 - 1),
    )
    @settings(max_examples=60, deadline=None)
    def test_loop_oracle_property(self, n_chains, n_points, n_classes, seed):
        local = np.random.default_rng(seed)
        probs = local.dirichlet(np.ones(n_classes), size=(n_chains, n_points))
        assert all_chains_agreement(ChainPredictions(probs)) == loop_agreement(probs)

    def test_single_chain_rejected(self):
        probs = np.ones((1, 3, 2)) * 0.5
        with pytest.raises(ValueError, match="two chains"):
            all_chains_agreement(ChainPredictions(probs))

    def test_bad_rank_rejected(self):
        with pytest.raises(ValueError, match="n_chains, n_points, n_classes"):
            ChainPredictions(np.ones((3, 2)))


class TestPerChainAccuracy:
    def test_hand_values(self):
        probs = np.array(
            [
                [[0.9, 0.1], [0.2, 0.8], [0.7, 0.3]],
                [[0.1, 0.9], [0.2, 0.8], [0.6, 0.4]],
            ]
        )
        labels = np.array([0, 1, 1])
        acc = per_chain_accuracy(ChainPredictions(probs), labels)
        # chain 0 picks 0,1,0 -> 2/3 right; chain 1 picks 1,1,0 -> 1/3
        np.testing.assert_allclose(acc, [2 / 3, 1 / 3])

    def test_label_count_checked(self):
        probs = np.ones((2, 3, 2)) * 0.5
        with pytest.raises(ValueError, match="label count"):
            per_chain_accuracy(ChainPredictions(probs), np.array([0, 1]))


class TestBootstrapAgreement:
    def test_matches_manual_rng_replay(self):
        rng = np.random.default_rng(99)
        sample_probs = rng.dirichlet(np.ones(3), size=(20, 5))
        got = bootstrap_agreement(sample_probs, n_pseudo_chains=3, seed=7)

        replay = make_rng(7, 13)
        pseudo = np.empty((3, 5, 3))
        for c in range(3):
            idx = replay.integers(0, 20, size=20)
            pseudo[c] = sample_probs[idx].mean(axis=0)
        assert got == loop_agreement(pseudo)

    def test_deterministic_and_seed_sensitive(self, rng):
        sample_probs = rng.dirichlet(np.ones(4), size=(30, 12))
        a = bootstrap_agreement(sample_probs, seed=3)
        b = bootstrap_agreement(sample_probs, seed=3)
        assert a == b
        vals = {bootstrap_agreement(sample_probs, seed=s) for s in range(40)}
        assert len(vals) > 1

    def test_pseudo_length_one_uses_single_samples(self):
        # two wildly different samples: length-1 pseudo-chains can disagree,
        # full-length averages of 2k draws almost never land on a knife edge
        sample_probs = np.array([[[0.99, 0.01]], [[0.01, 0.99]]])
        replay = make_rng(0, 13)
        picks = [int(replay.integers(0, 2, size=1)[0]) for _ in range(2)]
        expect = 1.0 if picks[0] == picks[1] else 0.0
        assert bootstrap_agreement(sample_probs, n_pseudo_chains=2, pseudo_length=1) == expect

    def test_input_validation(self):
        flat = np.ones((4, 3)) * 0.5
        with pytest.raises(ValueError, match="n_samples, n_points, n_classes"):
            bootstrap_agreement(flat)
        cube = np.ones((4, 3, 2)) * 0.5
        with pytest.raises(ValueError, match="two pseudo-chains"):
            bootstrap_agreement(cube, n_pseudo_chains=1)


class TestChainBlob:
    def test_roundtrip_bit_exact(self, tmp_path, rng):
        arr = rng.standard_normal((3, 4, 2))
        path = str(tmp_path / "chains.bin")
        write_chain_blob(path, arr)
        back = read_chain_blob(path)
        assert back.shape == arr.shape
        assert np.array_equal(back, arr)

    def test_roundtrip_one_dimensional(self, tmp_path):
        arr = np.array([1.5, -2.25, 3.125])
        path = str(tmp_path / "vec.bin")
        write_chain_blob(path, arr)
        assert np.array_equal(read_chain_blob(path), arr)

    def test_header_layout_is_pinned(self, tmp_path):
        # little-endian int64 ndim, int64 dims, float64 C-order payload
        arr = np.arange(6, dtype=np.float64).reshape(2, 3)
        path = str(tmp_path / "layout.bin")
        write_chain_blob(path, arr)
        raw = open(path, "rb").read()
        assert len(raw) == 8 + 16 + 48
        assert np.frombuffer(raw[:8], dtype="<i8")[0] == 2
        assert tuple(np.frombuffer(raw[8:24], dtype="<i8")) == (2, 3)
        np.testing.assert_array_equal(
            np.frombuffer(raw[24:], dtype="<f8"), arr.ravel(order="C")
        )

    def test_truncated_header_rejected(self, tmp_path):
        path = str(tmp_path / "bad.bin")
        with open(path, "wb") as fh:
            fh.write(np.int64(3).astype("<i8").tobytes())
            fh.write(np.int64(2).astype("<i8").tobytes())
        with pytest.raises(ValueError, match="malformed blob header"):
            read_chain_blob(path)

    def test_negative_ndim_rejected(self, tmp_path):
        path = str(tmp_path / "neg.bin")
        with open(path, "wb") as fh:
            fh.write(np.int64(-1).astype("<i8").tobytes())
        with pytest.raises(ValueError, match="malformed blob header"):
            read_chain_blob(path)

    def test_payload_size_mismatch_rejected(self, tmp_path):
        path = str(tmp_path / "short.bin")
        with open(path, "wb") as fh:
            fh.write(np.int64(1).astype("<i8").tobytes())
            fh.write(np.int64(5).astype("<i8").tobytes())
            fh.write(np.zeros(3, dtype="<f8").tobytes())
        with pytest.raises(ValueError, match="payload has 3 values, header wants 5"):
            read_chain_blob(path)


class TestReport:
    def test_report_contents(self):
        probs = np.array(
            [
                [[0.2, 0.7, 0.1], [0.6, 0.3, 0.1]],
                [[0.1, 0.8, 0.1], [0.2, 0.2, 0.6]],
            ]
        )
        report = agreement_report(ChainPredictions(probs))
        assert report == {
            "n_chains": 2,
            "n_points": 2,
            "all_chains_agreement": 0.5,
        }

    def test_report_with_labels(self):
        probs = np.array([[[0.9, 0.1], [0.2, 0.8]], [[0.8, 0.2], [0.9, 0.1]]])
        report = agreement_report(ChainPredictions(probs), labels=np.array([0, 1]))
        assert report["per_chain_accuracy"] == [1.0, 0.5]

    def test_save_report_is_valid_json(self, tmp_path):
        report = {"b": 2, "a": 1.5}
        path = str(tmp_path / "report.json")
        save_report(report, path)
        text = open(path).read()
        assert json.loads(text) == report
        assert text.index('"a"') < text.index('"b"')
        assert text.endswith("\n")
