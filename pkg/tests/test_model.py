import json
from fractions import Fraction

import numpy as np
import pytest

from paced.engine import replay
from paced.hindsight import best_sequence_regret
from paced.model import (AuctionFormat, AuctionInstance, make_gamma_counterexample, make_half_counterexample,
                         make_second_price_counterexample, sample_iid_instance, validate_instance)
from paced.welfare import lw_star_exact, realized_lw


def test_validate_instance():
    assert validate_instance(AuctionInstance([[0.5]], [1])) == []
    bad = validate_instance(AuctionInstance([[1.5]], [1]))
    assert [(v.kind, v.index) for v in bad] == [("value", (0, 0))]
    bad = validate_instance(AuctionInstance([[0.5]], [-1]))
    assert [v.kind for v in bad] == ["budget"]


def test_instance_json_round_trip(tmp_path):
    inst = AuctionInstance([[0.1, 1 / 3], [0.2, 0.7]], [0.5, 2.0], AuctionFormat.SECOND_PRICE)
    doc = inst.to_json()
    assert set(doc) == {"n", "t", "format", "values", "budgets"}
    assert doc["format"] == "second_price"
    path = tmp_path / "inst.json"
    inst.dump(path)
    back = AuctionInstance.load(path)
    assert back.values == inst.values and back.budgets == inst.budgets and back.format is inst.format
    assert json.loads(path.read_text())["values"][0][1] == 1 / 3


def test_second_price_claims():
    cert = make_second_price_counterexample(100, Fraction(1, 100))
    assert cert.claimed_lw == 1 and cert.claimed_lw_star_lower == 100
    assert cert.claimed_ratio_bound == Fraction(1, 100)
    small = make_second_price_counterexample(1, Fraction(1, 2))
    assert small.claimed_lw == Fraction(1, 2) and small.claimed_lw_star_lower == 1


def test_second_price_simulated_lw_large_t():
    cert = make_second_price_counterexample(1000, Fraction(1, 1000))
    assert realized_lw(replay(cert.instance, cert.script)).lw == 1


def test_half_claims_and_replay():
    cert = make_half_counterexample(100, Fraction(1, 10))
    assert cert.claimed_lw == 10
    assert cert.claimed_lw_star_lower == Fraction(189, 10)
    assert cert.claimed_ratio_bound == 1 / Fraction(189, 100)
    tr = replay(cert.instance, cert.script)
    assert realized_lw(tr).lw == cert.claimed_lw
    assert tr.U == (90, 0)
    small = make_half_counterexample(10, Fraction(1, 10))
    assert all(w == 0 for w in replay(small.instance, small.script).winners())


def test_half_lw_star_meets_claim():
    cert = make_half_counterexample(10, Fraction(1, 10))
    assert lw_star_exact(cert.instance).lw_star >= Fraction(18, 10)


def test_half_rejects_small_eps():
    with pytest.raises(ValueError):
        make_half_counterexample(10, Fraction(1, 20))


def test_gamma_claims():
    cert = make_gamma_counterexample(100, 4)
    tr = replay(cert.instance, cert.script)
    star = lw_star_exact(cert.instance).lw_star
    assert realized_lw(tr).lw / star <= Fraction(1, 4) + Fraction(1, 100)
    one = make_gamma_counterexample(100, 1)
    tr1 = replay(one.instance, one.script)
    assert all(w == 0 for w in tr1.winners())
    assert realized_lw(tr1).lw == 100 == lw_star_exact(one.instance).lw_star


def test_gamma_player_two_regret():
    cert = make_gamma_counterexample(50, 2)
    assert cert.claimed_player_regrets[1] == Fraction(1, 100)
    tr = replay(cert.instance, cert.script)
    assert best_sequence_regret(tr, 1) == Fraction(1, 100)


def test_gamma_rounding_slack():
    cert = make_gamma_counterexample(100, 3)
    eps = Fraction(1, 100)
    assert cert.rounding_slack == (Fraction(100, 3) - 33) * (1 - eps)
    assert 0 <= cert.rounding_slack <= 1


@pytest.mark.parametrize("make, args", [
    (make_second_price_counterexample, (50, Fraction(1, 50))),
    (make_half_counterexample, (40, Fraction(1, 8))),
    (make_gamma_counterexample, (60, 3)),
])
def test_generators_valid_and_pure(make, args):
    a, b = make(*args), make(*args)
    assert validate_instance(a.instance) == []
    assert a == b


def test_iid_sampler():
    a = sample_iid_instance(3, 20, "uniform", "quarter", seed=7)
    b = sample_iid_instance(3, 20, "uniform", "quarter", seed=7)
    assert a == b and a.budgets == (5.0, 5.0, 5.0)
    ones = sample_iid_instance(2, 5, {"kind": "constant", "value": 1.0}, "full", seed=0)
    assert np.all(ones.values_array == 1.0) and ones.budgets == (5.0, 5.0)
    b1 = sample_iid_instance(2, 10, {"kind": "beta", "a": 2, "b": 3}, "quarter", seed=1)
    b2 = sample_iid_instance(2, 10, {"kind": "beta", "a": 2, "b": 3}, "quarter", seed=2)
    assert b1.values != b2.values
    assert validate_instance(b1) == []
    with pytest.raises(ValueError):
        sample_iid_instance(2, 10, "pareto", "quarter")
