import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpfs.filters import (
    BuildConfig,
    DisjointnessViolation,
    a_if_c1_closed_form,
    build_filter,
    build_if,
    build_naive,
    build_plain,
    build_tf,
    compute_a_if_c1,
    compute_a_tf,
    compute_c_min,
    query,
    residual_set,
    select_if_params,
)
from fpfs.harness import gen_disjoint_sets, measure_fpp, verify
from fpfs.hashing import fingerprint_batch, fingerprint_seed
from fpfs.keys import KeyBatch
from fpfs.xorfunc import BuildExhausted, XorTable


# parameter selection ---------------------------------------------------------


def test_compute_a_tf_examples():
    # t = 3 * 2**(r-1) * s crosses the threshold by one doubling
    s, r = 1000, 8
    assert compute_a_tf(s, 3 * 2 ** (r - 1) * s, r) == 1
    # ratio 78125 <= 2s keeps a = 0
    assert compute_a_tf(10**5, 10**7, 8) == 0
    # ratio 125 needs ceil(log2(125)) - 1 = 6
    assert compute_a_tf(10**5, 10**8, 4) == 6


def test_compute_a_tf_minimality():
    s, t, r = 10**5, 10**8, 4
    a = compute_a_tf(s, t, r)
    assert t / 2 ** (r + a - 1) <= 2 * s
    assert t / 2 ** (r + a - 2) > 2 * s  # a - 1 violates the bound


def test_compute_a_tf_equality_boundary():
    # exactly t = s * 2**r sits on the threshold and keeps a = 0
    s, r = 1000, 8
    assert compute_a_tf(s, s << r, r) == 0
    assert compute_a_tf(s, (s << r) + 1, r) == 1


def test_compute_a_tf_matches_float_formula():
    for s, t, r in [(10**5, 10**8, 4), (10**4, 10**7, 8), (2500, 2 * 10**7, 8)]:
        ratio = t / (2 ** (r - 1) * s)
        if ratio > 2:
            assert compute_a_tf(s, t, r) == math.ceil(math.log2(ratio)) - 1


@given(st.integers(1, 10**7), st.integers(0, 10**10), st.integers(2, 20))
@settings(max_examples=300, deadline=None)
def test_compute_a_tf_is_minimal_bound_restorer(s, t, r):
    a = compute_a_tf(s, t, r)
    assert t <= s << (r + a)
    if a:
        assert t > s << (r + a - 1)


def test_compute_c_min_examples():
    s, r = 1000, 8
    ratio_to_t = lambda ratio: int(ratio * s * 2 ** (r - 1))
    assert compute_c_min(s, ratio_to_t(3.6), r) == 5
    assert compute_c_min(s, ratio_to_t(0.9), r) == 2
    assert compute_c_min(s, 0, r) == 1


def test_select_if_params_examples():
    s, r = 1000, 8
    ratio_to_t = lambda ratio: int(ratio * s * 2 ** (r - 1))
    assert select_if_params(s, ratio_to_t(3.6), r) == (2, 2)
    assert select_if_params(10**5, 10**7, 8) == (0, 2)  # ratio 0.781
    # ratio 1.8: both alternatives cost four bits; widening wins the tie
    assert select_if_params(s, ratio_to_t(1.8), r) == (1, 2)
    assert select_if_params(s, 0, r) == (0, 1)


@given(st.integers(1, 10**6), st.integers(0, 10**10), st.integers(2, 20))
@settings(max_examples=300, deadline=None)
def test_select_if_params_recomputes_to_two(s, t, r):
    a, c = select_if_params(s, t, r)
    if t == 0:
        assert (a, c) == (0, 1)
    else:
        assert c <= 2
        if a:
            assert compute_c_min(s, t, r + a) == 2


def test_compute_a_if_c1_examples():
    assert compute_a_if_c1(10**5, 10**6, 8) == 0  # ratio 0.547
    assert compute_a_if_c1(10**5, 0, 8) == 0


def test_compute_a_if_c1_vs_closed_form():
    s, t, r = 10**5, 10**8, 8
    scanned = compute_a_if_c1(s, t, r)
    closed = a_if_c1_closed_form(s, t, r)
    assert abs(scanned - closed) <= 1


def test_compute_a_if_c1_is_argmin():
    # the scan must land on the brute-force minimum of the cost curve
    def cost(s, t, r, a):
        return (s + t / 2 ** (r + a - 1)) * (r + a)

    for s, t, r in [(10**4, 10**6, 4), (10**5, 10**8, 8), (2500, 2 * 10**7, 8), (10, 1, 16)]:
        a = compute_a_if_c1(s, t, r)
        brute = min(range(40), key=lambda x: cost(s, t, r, x))
        assert cost(s, t, r, a) == cost(s, t, r, brute)


# constructions ---------------------------------------------------------------


@pytest.fixture(scope="module")
def small_sets():
    return gen_disjoint_sets(2000, 20_000, 17)


def test_build_naive_contract(small_sets):
    S, T = small_sets
    filt = build_naive(S, T, BuildConfig(r=8, variant="naive"))
    fn, tp = verify(filt, S, T)
    assert not fn and not tp
    # stored value for protected keys is the fingerprint with its low
    # bit flipped, so the mismatch is exact, not probabilistic
    d_fp = T.digests(fingerprint_seed(filt.table.seed))
    v = fingerprint_batch(d_fp, filt.r)
    ev = filt.table.eval_batch(T)
    assert np.array_equal(ev, v ^ np.uint32(1))


def test_build_naive_empty_t_degenerates_to_plain(small_sets):
    S, _ = small_sets
    filt = build_naive(S, KeyBatch.from_keys([]), BuildConfig(r=8, variant="naive"))
    assert filt.variant == "plain"
    assert filt.table2 is None
    assert not verify(filt, S, KeyBatch.from_keys([]))[0]


def test_build_naive_size_tracks_model():
    from fpfs.sizing import m_naive

    S, T = gen_disjoint_sets(5000, 50_000, 23)
    filt = build_naive(S, T, BuildConfig(r=8, variant="naive"))
    model = m_naive(5000, 50_000, 8)
    assert abs(filt.memory_bits - model) / model < 0.05


def test_build_tf_contract(small_sets):
    S, T = small_sets
    cfg = BuildConfig(r=8, variant="tf")
    filt = build_tf(S, T, cfg)
    fn, tp = verify(filt, S, T)
    assert not fn and not tp
    assert filt.a == compute_a_tf(2000, 20_000, 8)

    # residual keys match the first stage and are blocked by the second
    res = residual_set(filt.table, T)
    assert res.f == filt.f
    if res.f:
        ev1 = filt.table.eval_batch(res.keys)
        v1 = fingerprint_batch(
            res.keys.digests(fingerprint_seed(filt.table.seed)), filt.first_stage_width
        )
        assert np.array_equal(ev1, v1)
        assert (filt.table2.eval_batch(res.keys) == 0).all()
        assert not filt.query_batch(res.keys).any()


def test_residual_set_statistics():
    # f concentrates around t / 2**(r+a-1)
    s, t, r = 10**5, 10**6, 8
    S, T = gen_disjoint_sets(s, t, 29)
    filt = build_tf(S, T, BuildConfig(r=r, variant="tf"))
    assert filt.a == 0
    expect = t / 2 ** (r - 1)
    sigma = math.sqrt(t * (1 / 2 ** (r - 1)) * (1 - 1 / 2 ** (r - 1)))
    assert abs(filt.f - expect) <= 5 * sigma


def test_residual_set_empty_t(small_sets):
    S, _ = small_sets
    filt = build_plain(S, BuildConfig(r=8, variant="plain"))
    res = residual_set(filt.table, KeyBatch.from_keys([]))
    assert res.f == 0 and len(res.keys) == 0


def test_build_tf_empty_t_degenerates_to_plain(small_sets):
    S, _ = small_sets
    filt = build_tf(S, KeyBatch.from_keys([]), BuildConfig(r=8, variant="tf"))
    assert filt.variant == "plain"
    assert filt.f == 0 and filt.table2 is None


def test_build_tf_size_tracks_model(small_sets):
    from fpfs.sizing import m_tf

    S, T = small_sets
    filt = build_tf(S, T, BuildConfig(r=8, variant="tf"))
    model, _ = m_tf(2000, 20_000, 8)
    assert abs(filt.memory_bits - model) / model < 0.05


def test_build_if_contract_both_modes(small_sets):
    S, T = small_sets
    for if_c1 in (False, True):
        cfg = BuildConfig(r=8, variant="if", if_c1=if_c1)
        filt = build_if(S, T, cfg)
        fn, tp = verify(filt, S, T)
        assert not fn and not tp, f"if_c1={if_c1}"
        assert filt.c == (1 if if_c1 else 2)
        assert filt.table2 is None
        assert filt.table.cell_width == filt.first_stage_width + filt.c


def test_build_if_size_tracks_models(small_sets):
    from fpfs.sizing import m_if

    S, T = small_sets
    c1 = build_if(S, T, BuildConfig(r=8, variant="if", if_c1=True))
    model_c1, _, _ = m_if(2000, 20_000, 8, c_mode="c1")
    assert abs(c1.memory_bits - model_c1) / model_c1 < 0.05

    c2 = build_if(S, T, BuildConfig(r=8, variant="if"))
    model_c2, _, _ = m_if(2000, 20_000, 8, c_mode="cmin")
    assert abs(c2.memory_bits - model_c2) / model_c2 < 0.05


def test_if_query_reads_exactly_three_cells(small_sets, monkeypatch):
    S, T = small_sets
    filt = build_if(S, T, BuildConfig(r=8, variant="if"))
    reads = []
    orig = XorTable.get_cell

    def counting(self, idx):
        reads.append(idx)
        return orig(self, idx)

    monkeypatch.setattr(XorTable, "get_cell", counting)
    for key in [S.key(0), T.key(0), b"definitely-not-a-member"]:
        reads.clear()
        filt.query(key)
        assert len(reads) == 3, key


def test_if_residual_consistency(small_sets):
    # keys of T matching stage 1 fail their subfilter; the rest fail stage 1
    S, T = small_sets
    filt = build_if(S, T, BuildConfig(r=8, variant="if"))
    w1 = filt.first_stage_width
    ev = filt.table.eval_batch(T)
    v = fingerprint_batch(T.digests(fingerprint_seed(filt.table.seed)), w1)
    stage1 = (ev & np.uint32((1 << w1) - 1)) == v
    assert int(stage1.sum()) == filt.f
    assert not filt.query_batch(T).any()


def test_query_fpp_three_sigma(small_sets):
    S, T = small_sets
    n = 10**6
    for variant, if_c1 in [("naive", False), ("tf", False), ("if", False), ("if", True)]:
        filt = build_filter(S, T, BuildConfig(r=8, variant=variant, if_c1=if_c1))
        fpp, _ = measure_fpp(filt, n, 4242, exclude=None)
        p = filt.predicted_fpp
        sigma = math.sqrt(p * (1 - p) / n)
        assert abs(fpp - p) <= 3 * sigma, (variant, if_c1, fpp, p)


def test_zero_violations_across_seeds():
    # exhaustive correctness across many masters on small sets
    S, T = gen_disjoint_sets(1000, 10_000, 41)
    for variant, if_c1 in [("naive", False), ("tf", False), ("if", False), ("if", True)]:
        for master in range(100):
            cfg = BuildConfig(r=5, variant=variant, if_c1=if_c1, master_seed=master)
            filt = build_filter(S, T, cfg)
            fn, tp = verify(filt, S, T)
            assert not fn and not tp, (variant, if_c1, master)


def test_disjointness_violation():
    S, _ = gen_disjoint_sets(100, 0, 5)
    T = KeyBatch.concat([KeyBatch.from_keys([b"fresh-key"]), S.take(np.arange(3))])
    with pytest.raises(DisjointnessViolation) as exc:
        build_naive(S, T, BuildConfig(r=8, variant="naive"))
    assert len(exc.value.overlap) == 3


def test_build_exhausted_propagates():
    S = KeyBatch.from_keys([b"a", b"a2"])
    T = KeyBatch.from_keys([b"b"])
    # epsilon 0 with max_retries 0 cannot fail for 2 keys; force failure
    # through duplicate keys instead
    dup = KeyBatch.from_keys([b"x", b"x"])
    with pytest.raises(BuildExhausted):
        build_naive(dup, T, BuildConfig(r=8, variant="naive", max_retries=0))


def test_query_function_wrapper(small_sets):
    S, T = small_sets
    filt = build_tf(S, T, BuildConfig(r=8, variant="tf"))
    assert query(filt, S.key(0)) is True
    assert query(filt, T.key(0)) is False


def test_config_validation():
    with pytest.raises(ValueError):
        BuildConfig(r=1, variant="tf")
    with pytest.raises(ValueError):
        BuildConfig(r=25, variant="tf")
    with pytest.raises(ValueError):
        BuildConfig(r=8, variant="bogus")
    with pytest.raises(ValueError):
        BuildConfig(r=8, variant="tf", epsilon=1.5)


def test_manual_a_override(small_sets):
    S, T = small_sets
    filt = build_tf(S, T, BuildConfig(r=8, variant="tf", auto_a=False, a=2))
    assert filt.a == 2
    fn, tp = verify(filt, S, T)
    assert not fn and not tp


def test_if_oversized_residual_survives():
    # a deliberately narrow first stage makes the residual dwarf the
    # member set; the fused table must grow to the observed load
    from fpfs.xorfunc import table_size

    S, T = gen_disjoint_sets(100, 100_000, 71)
    for if_c1, master in [(True, 0), (True, 1), (False, 2), (False, 3)]:
        cfg = BuildConfig(
            r=8, variant="if", if_c1=if_c1, auto_a=False, a=0, master_seed=master
        )
        filt = build_if(S, T, cfg)
        assert filt.f > len(S)
        loads = [len(S), filt.f + len(S) if if_c1 else (filt.f + len(S) + 1) // 2]
        assert filt.table.segment_len >= table_size(max(loads)) - 1
        fn, tp = verify(filt, S, T)
        assert not fn and not tp, (if_c1, master)
