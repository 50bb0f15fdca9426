import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from readsort.context_models import (
    FcmConfig, ModelEnsemble, StcmConfig, code_length, default_models, freeze, map_symbol,
    probability, reverse_complement, to_symbols, train, uniform_bits,
)
from readsort.errors import FrozenModel

from oracle import OracleEnsemble, small_stcm_models

TRAIN = ["".join("ACGT"[i] for i in np.random.default_rng(s).integers(0, 4, 300)) for s in range(3)]


def _pair(models):
    ens = ModelEnsemble(models, hash_bits=20)
    ens.train_many(TRAIN)
    ora = OracleEnsemble(models)
    for t in TRAIN:
        ora.train(t)
    return ens.freeze(), ora


def test_hand_count():
    ens = train(ModelEnsemble([FcmConfig(2, 1.0)]), "ACGTACGT")
    assert ens.count(0, "AC", "G") == 2


def test_train_empty_and_short():
    ens = train(ModelEnsemble([FcmConfig(2, 1.0)]), "")
    assert not ens._counts.any()
    ens = train(ModelEnsemble([FcmConfig(2, 1.0)]), "A")
    assert not ens._counts.any()


def test_probability_estimator():
    ens = train(ModelEnsemble([FcmConfig(2, 1.0)]), "ACGTACGT")
    assert probability(ens, "AC", "G") == pytest.approx(0.5, abs=1e-12)
    fresh = ModelEnsemble([FcmConfig(2, 1.0)])
    for s in "ACGT":
        assert probability(fresh, "GG", s) == pytest.approx(0.25, abs=1e-12)
    q = ModelEnsemble().train("ACGTTGCAACGT" * 20).distribution("ACGTTG")
    assert abs(q.sum() - 1.0) < 1e-12


def test_order0_code_length():
    ens = freeze(train(ModelEnsemble([FcmConfig(0, 1.0)]), "AAAA"))
    expect = -4 * math.log2(5 / 8)
    assert code_length(ens, "AAAA") == pytest.approx(expect, abs=1e-9)
    assert expect == pytest.approx(2.71229, abs=1e-5)


def test_untrained_is_two_bits_per_symbol():
    ens = freeze(ModelEnsemble())
    for L in (0, 1, 7, 150):
        s = "".join("ACGT"[i] for i in np.random.default_rng(L).integers(0, 4, L))
        assert code_length(ens, s) == pytest.approx(uniform_bits(L), abs=1e-9)


def test_freeze_rules():
    ens = freeze(train(ModelEnsemble(), "ACGTAGGCTAGCTAGCATCGA" * 5))
    s = "ACGTAGGCTAGGTTAGCAT"
    assert code_length(ens, s) == code_length(ens, s)
    with pytest.raises(FrozenModel):
        train(ens, "ACGT")
    with pytest.raises(FrozenModel):
        ModelEnsemble().code_length("ACGT")


def test_map_symbol():
    assert map_symbol(ord("C"), np.random.default_rng(0)) == 1
    a = map_symbol(ord("N"), np.random.default_rng(42))
    b = map_symbol(ord("N"), np.random.default_rng(42))
    assert a == b == 0  # golden value for this generator
    with pytest.raises(ValueError):
        to_symbols(b"ACN")


def test_reverse_complement():
    assert reverse_complement(to_symbols("AACG")).tolist() == to_symbols("CGTT").tolist()


def test_config_validation():
    with pytest.raises(ValueError):
        FcmConfig(21)
    with pytest.raises(ValueError):
        FcmConfig(3, 0.0)
    with pytest.raises(ValueError):
        StcmConfig(FcmConfig(3), max_substitutions=-1)
    with pytest.raises(ValueError):
        ModelEnsemble([])
    with pytest.raises(ValueError):
        ModelEnsemble(gamma=1.0)


@pytest.mark.parametrize("models", [default_models(), small_stcm_models()],
                         ids=["default", "low-order"])
def test_matches_oracle_all_short_strings(models):
    ens, ora = _pair(models)
    for k in range(0, 5):
        for t in itertools.product("ACGT", repeat=k):
            s = "".join(t)
            assert abs(ens.code_length(s) - ora.code_length(s)) < 1e-9, s


@settings(max_examples=60, deadline=None)
@given(st.text(alphabet="ACGT", max_size=40))
def test_matches_oracle_random(s):
    ens, ora = ORACLE_PAIR
    assert abs(ens.code_length(s) - ora.code_length(s)) < 1e-9


ORACLE_PAIR = _pair(small_stcm_models())


def test_tolerant_model_helps_on_substitutions():
    rng = np.random.default_rng(5)
    ref = rng.integers(0, 4, 5000).astype(np.uint8)
    noisy = ref[1000:1300].copy()
    noisy[::25] = (noisy[::25] + 1) % 4
    plain = ModelEnsemble([FcmConfig(12)]).train(ref).freeze()
    tolerant = ModelEnsemble([FcmConfig(12), StcmConfig(FcmConfig(12))]).train(ref).freeze()
    assert tolerant.code_length(noisy) < plain.code_length(noisy)


def test_stcm_without_substitutions_is_its_fcm():
    rng = np.random.default_rng(8)
    ref = rng.integers(0, 4, 3000).astype(np.uint8)
    fcm = ModelEnsemble([FcmConfig(6)]).train(ref).freeze()
    stcm = ModelEnsemble([StcmConfig(FcmConfig(6), max_substitutions=0)]).train(ref).freeze()
    for k in range(20):
        s = ref[100 * k:100 * k + 90].copy()
        s[::7] = rng.integers(0, 4, len(s[::7]))
        assert abs(fcm.code_length(s) - stcm.code_length(s)) < 1e-9


@settings(max_examples=30, deadline=None)
@given(st.text(alphabet="ACGT", max_size=300))
def test_code_length_bounds(s):
    ens = ORACLE_PAIR[0]
    bits = ens.code_length(s)
    assert 0 <= bits <= 16 * len(s)
    # a model that has only ever seen 'A' is the worst case for anything else
    skewed = ModelEnsemble([FcmConfig(0)]).train("A" * 70000).freeze()
    assert skewed.code_length(s) <= 16 * len(s) + 1e-9
