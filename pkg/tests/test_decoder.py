import itertools
import math

import numpy as np
import pytest
from sklearn.base import clone

from floorline.code_model import SparseParityCheck, build_qc_matrix, random_qc_shifts
from floorline.decoder import (BeliefPropagationDecoder, DecoderConfig, DecoderConfigError,
                               check_update_cms, check_update_tanh, cms_correction, decode,
                               decode_batch, quantize, variable_update)
from floorline.density import evolve
from floorline.dynamics import noise_variance

ALGOS = ("sum-product", "corrected-min-sum")


def awgn_llrs(rng, frames, n, snr_db, rate):
    s2 = noise_variance(snr_db, rate)
    y = 1.0 + rng.normal(0.0, math.sqrt(s2), (frames, n))
    return 2.0 * y / s2


# ------------------------------------------------------------ scalar rules

def test_tanh_rule_examples():
    assert check_update_tanh([1.0, 1.0, 1.0]) == pytest.approx(
        [2 * math.atanh(math.tanh(0.5) ** 2)] * 3)
    assert check_update_tanh([1.0, 1.0, 1.0])[0] == pytest.approx(0.43378, abs=1e-5)
    np.testing.assert_array_equal(check_update_tanh([1e6] * 5, 10.0), 10.0)
    # inputs sitting exactly at the clip still lose magnitude through the product
    assert check_update_tanh([10.0] * 5, 10.0)[0] == pytest.approx(
        2 * math.atanh(math.tanh(5.0) ** 4))
    out = check_update_tanh([0.0, 3.0, -2.0, 5.0], 10.0)
    np.testing.assert_array_equal(out[1:], 0.0)


def test_tanh_rule_saturation_guard():
    out = check_update_tanh([1000.0] * 5, 1000.0)
    assert np.isfinite(out).all()
    assert out[0] == pytest.approx(math.log((2 - 1e-12) / 1e-12), rel=1e-6)


def test_cms_examples():
    out = check_update_cms([10.0] * 32, 32, 10.0)
    np.testing.assert_allclose(out, 10 - math.log(31) / 4)
    assert out[0] == pytest.approx(9.1415, abs=1e-4)
    inc = np.full(32, 5.0)
    inc[0] = 1.0
    out = check_update_cms(inc, 32, 10.0)
    assert out[1] == pytest.approx(1.0)
    assert 3 * math.log(31) / 8 == pytest.approx(1.2878, abs=1e-4)
    with pytest.raises(ValueError):
        check_update_cms([1.0, 2.0], 3)


def test_sign_parity():
    inc = np.array([-2.0, 3.0, 4.0, 5.0])
    for rule in (check_update_tanh, lambda x: check_update_cms(x, 4)):
        out = rule(inc)
        assert out[0] > 0
        assert (out[1:] < 0).all()


def test_correction_threshold():
    lg = math.log(4)
    assert cms_correction(3 * lg / 8, 5) == pytest.approx(-lg / 4)
    assert cms_correction(3 * lg / 8 - 1e-9, 5) == 0.0


def test_variable_update_examples():
    out, acc = variable_update(1.0, [0.0, 0.0, 0.0])
    np.testing.assert_array_equal(out, 1.0)
    out, acc = variable_update(1.0, [2.0, 3.0, 4.0], 10.0)
    np.testing.assert_array_equal(out, [8.0, 7.0, 6.0])
    assert acc == 10.0
    out, _ = variable_update(1.0, [9.0, 9.0, 9.0], 10.0)
    np.testing.assert_array_equal(out, 10.0)


def test_quantizer_examples():
    for b in (2, 6, 10):
        assert quantize(0.0, b, 10.0) == 0.0
        assert quantize(10.0, b, 10.0) == 10.0
        assert quantize(-10.0, b, 10.0) == -10.0
    assert quantize(5.0, 6, 10.0) == pytest.approx(16 * 10 / 31)
    step = 10 / 31
    assert quantize(0.5 * step, 6, 10.0) == pytest.approx(step)
    assert quantize(-0.5 * step, 6, 10.0) == pytest.approx(-step)
    assert quantize(50.0, 6, 10.0) == 10.0
    with pytest.raises(ValueError):
        quantize(1.0, 1, 10.0)


def test_config_validation():
    assert DecoderConfig("cms").algorithm == "corrected-min-sum"
    for bad in (dict(algorithm="bp"), dict(max_iters=0), dict(clip=-1.0),
                dict(bits=1), dict(bits=6, clip=math.inf)):
        with pytest.raises(DecoderConfigError):
            DecoderConfig(**bad)


def test_cms_envelope_as_stated():
    """|cms| <= |tanh| + ln(d_c - 1)/4 on random vectors."""
    rng = np.random.default_rng(0)
    worst = -np.inf
    for d_c in (3, 5, 6, 32):
        for _ in range(500):
            x = rng.uniform(-10, 10, d_c)
            gap = np.abs(check_update_cms(x, d_c, 10.0)) - np.abs(check_update_tanh(x, 10.0))
            worst = max(worst, float(np.max(gap - math.log(d_c - 1) / 4)))
    assert worst <= 1e-12, f"envelope exceeded by {worst:.3f}"


def test_cms_envelope_provable_bound():
    # tanh output >= min - ln(d_c - 1), so the offset version sits within 3/4 of that
    rng = np.random.default_rng(1)
    for d_c in (3, 5, 6, 32):
        for _ in range(500):
            x = rng.uniform(-10, 10, d_c)
            gap = np.abs(check_update_cms(x, d_c, 10.0)) - np.abs(check_update_tanh(x, 10.0))
            assert gap.max() <= 0.75 * math.log(d_c - 1) + 1e-9
    x = np.full(32, 10.0)
    gap = check_update_cms(x, 32, 10.0)[0] - check_update_tanh(x, 1e9)[0]
    assert gap == pytest.approx(0.75 * math.log(31), abs=0.03)


# ------------------------------------------------------------ whole decoder

def test_all_positive_converges_in_one_iteration(tanner):
    for algo in ALGOS:
        out = decode(tanner, np.full(155, 4.0), DecoderConfig(algo))
        assert out.converged and out.iterations_used == 1
        assert not out.decoded.any()


@pytest.fixture(scope="module")
def even_code():
    # negating every LLR is a code symmetry only when all check degrees are even
    return build_qc_matrix(random_qc_shifts(3, 6, 29, rng=9), 29)


@pytest.mark.parametrize("algo", ALGOS)
def test_negation_symmetry(even_code, algo):
    rng = np.random.default_rng(3)
    n = even_code.n_cols
    llrs = awgn_llrs(rng, 40, n, 2.0, 0.5)
    cfg = DecoderConfig(algo, max_iters=15, early_stop=False)
    pos = decode_batch(even_code, llrs, cfg, track=range(n))
    neg = decode_batch(even_code, -llrs, cfg, track=range(n))
    np.testing.assert_array_equal(pos.trace, -neg.trace)
    np.testing.assert_array_equal(pos.decoded, 1 - neg.decoded)


@pytest.mark.parametrize("algo", ALGOS)
@pytest.mark.parametrize("bits", [None, 6])
def test_messages_respect_clip(tanner, algo, bits):
    rng = np.random.default_rng(4)
    llrs = 5 * awgn_llrs(rng, 20, 155, 6.0, 64 / 155)
    out = decode_batch(tanner, llrs, DecoderConfig(algo, max_iters=10, clip=7.0, bits=bits,
                                                   early_stop=False), track=range(155))
    assert np.nanmax(np.abs(out.trace)) <= 7.0


def test_zero_llr_tie_goes_to_zero():
    H = SparseParityCheck.from_rows(3, [[0, 1, 2]])
    out = decode(H, np.zeros(3), DecoderConfig(max_iters=2))
    assert not out.decoded.any() and out.converged


def tree_code():
    rows = [[0, 1, 2], [2, 3, 4], [4, 5], [1, 6, 7], [3, 8]]
    return SparseParityCheck.from_rows(9, rows)


def bitwise_map(H, llr):
    dense = H.toarray().astype(int)
    words = [np.array(w) for w in itertools.product((0, 1), repeat=H.n_cols)
             if not (dense @ np.array(w) % 2).any()]
    words = np.array(words)
    logp = (1 - 2 * words) @ llr / 2
    p = np.exp(logp - logp.max())
    p1 = p @ words / p.sum()
    return np.log((1 - p1) / p1)


def test_tree_decoding_is_exact_map():
    H = tree_code()
    rng = np.random.default_rng(5)
    for _ in range(20):
        llr = rng.normal(1.0, 1.5, H.n_cols)
        out = decode(H, llr, DecoderConfig("sp", max_iters=H.n_cols, clip=1000.0,
                                           early_stop=False), track=range(H.n_cols))
        ref = bitwise_map(H, llr)
        np.testing.assert_allclose(out.trace[-1], ref, atol=1e-8)
        np.testing.assert_array_equal(out.decoded, (ref < 0).astype(np.uint8))


def test_fixed_point_approaches_float(tanner):
    rng = np.random.default_rng(6)
    llrs = awgn_llrs(rng, 200, 155, 3.0, 64 / 155)
    base = decode_batch(tanner, llrs, DecoderConfig("sp", 30, 10.0)).decoded
    diffs = []
    for bits in (4, 8, 16, 24):
        fp = decode_batch(tanner, llrs, DecoderConfig("sp", 30, 10.0, bits=bits)).decoded
        diffs.append(int((fp != base).sum()))
    assert diffs[0] > diffs[-1]
    assert diffs[-1] == 0


def test_means_follow_density_evolution():
    H = build_qc_matrix(random_qc_shifts(3, 5, 1000, rng=2), 1000)
    snr, rate = 2.5, 0.4
    rng = np.random.default_rng(7)
    llrs = awgn_llrs(rng, 10, H.n_cols, snr, rate)
    out = decode_batch(H, llrs, DecoderConfig("sp", 5, 10.0, early_stop=False),
                       record_means=True)
    de = evolve(3, 5, noise_variance(snr, rate), 10.0, 5)
    np.testing.assert_allclose(out.message_means["check_to_var"], de.m_ext, rtol=0.05)
    np.testing.assert_allclose(out.message_means["var_to_check"], de.m_vc[1:], rtol=0.05)


def test_batch_matches_single(tanner):
    rng = np.random.default_rng(8)
    llrs = awgn_llrs(rng, 8, 155, 2.5, 64 / 155)
    cfg = DecoderConfig("cms", 20)
    batch = decode_batch(tanner, llrs, cfg)
    for k in range(8):
        one = decode(tanner, llrs[k], cfg)
        assert np.array_equal(one.decoded, batch.decoded[k])
        assert one.iterations_used == batch.iterations_used[k]


def test_bad_inputs(tanner):
    with pytest.raises(ValueError):
        decode(tanner, np.zeros(10))
    with pytest.raises(ValueError):
        decode(tanner, np.zeros((2, 155)))
    with pytest.raises(ValueError):
        decode(tanner, np.zeros(155), track=[155])


def test_estimator(tanner):
    est = BeliefPropagationDecoder(algorithm="cms", max_iters=20)
    assert clone(est).get_params() == est.get_params()
    est.fit(tanner.toarray())
    llrs = np.full((3, 155), 3.0)
    llrs[1, :4] = -0.5
    assert not est.predict(llrs).any()
    assert (est.transform(llrs) == 1.0).all()
    assert est.score(llrs) == 1.0
    assert est.score(llrs, np.zeros((3, 155))) == 1.0
