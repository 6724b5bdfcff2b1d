import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import cardinal_closed_form, oracle_basis
from kansim.bspline_unit import (
    BSplineLut,
    LutOverflowError,
    QuantParams,
    SparseActivationBlock,
    align,
    build_lut,
    calibrate,
    check_calibration,
    compare,
    default_lut_scale,
    dump_lut,
    evaluate,
    evaluate_codes,
    knot_code,
    load_lut,
    lookup,
)
from kansim.spline import UniformGrid, interval_index


def cal(G, P, lo=-1.0, hi=1.0, **kw):
    return calibrate(UniformGrid.from_domain(lo, hi, G, P), **kw)


@pytest.mark.parametrize("p, scale", [(1, 127.0), (2, 127 / 0.75), (3, 190.5)])
def test_default_lut_scale_puts_peak_at_127(p, scale):
    assert default_lut_scale(p) == pytest.approx(scale)


def test_quant_params_validation():
    with pytest.raises(ValueError):
        QuantParams(x_scale=0.0, x_zero=0, lut_scale=1.0)
    with pytest.raises(ValueError):
        QuantParams(x_scale=1.0, x_zero=256, lut_scale=1.0)
    with pytest.raises(ValueError):
        QuantParams(x_scale=1.0, x_zero=0, lut_scale=-1.0)


def test_calibration_symmetric_domain():
    grid, q = cal(5, 3)
    # the extended knot range straddles zero evenly, so the zero point sits mid-range
    assert q.x_zero in (127, 128)
    # t0 moves by less than half a code
    assert abs(grid.t0 - UniformGrid.from_domain(-1, 1, 5, 3).t0) <= q.x_scale / 2
    assert q.x_scale == pytest.approx(grid.n_intervals * grid.delta / 255)
    check_calibration(grid, q)


def test_calibration_needs_zero_near_the_domain():
    # x_scale is pinned by the address formula; only the zero point can move
    with pytest.raises(ValueError):
        cal(5, 3, 10.0, 11.0)


def test_calibration_rejects_off_lattice_grid():
    grid, q = cal(5, 3)
    shifted = UniformGrid(grid.t0 + q.x_scale / 3, grid.delta, grid.G, grid.P)
    with pytest.raises(ValueError):
        knot_code(shifted, q)


def test_fig4_bytes():
    _, q = cal(5, 3)
    lut = build_lut(3, q)
    assert tuple(lut.table[0]) == (0, 32)
    # mirrored read: row 255 read in reverse lane order
    assert tuple(lut.table[255][::-1]) == (127, 32)
    assert lookup(lut, 0) == (32, 127, 32, 0)


def test_spec_default_scale_overflows_the_int8_peak():
    # with 192 the sample at B(2) stores 128, one more than the 127 shown in the figure
    q = QuantParams(x_scale=1.0, x_zero=0, lut_scale=192.0)
    lut = build_lut(3, q)
    assert tuple(lut.table[0]) == (0, 32)
    assert lut.table[255, 1] == 128


def test_lut_overflow():
    q = QuantParams(x_scale=1.0, x_zero=0, lut_scale=400.0)
    with pytest.raises(LutOverflowError):
        build_lut(3, q)


@pytest.mark.parametrize("p", [1, 2, 3])
def test_lut_bytes_within_half_lsb(p):
    _, q = cal(5, p)
    lut = build_lut(p, q)
    assert lut.table[0, 0] == 0
    assert lut.n_banks == (p + 2) // 2
    for bank in range(lut.n_banks):
        rows = lut.depth // 2 if bank == lut.folded_bank else lut.depth
        for a in range(rows):
            want = cardinal_closed_form(p, lut.sample_point(a, bank))
            assert abs(lut.table[a, bank] / q.lut_scale - want) <= 0.5 / q.lut_scale + 1e-12


def test_lut_row_at_half_depth():
    _, q = cal(5, 3)
    lut = build_lut(3, q)
    b15 = cardinal_closed_form(3, 1.5) * q.lut_scale
    # row 128 samples 1 + 128/255, a hair past 1.5
    assert abs(int(lut.table[128, 1]) - round(b15)) <= 1


def test_degree1_lut_is_the_hat_ramp():
    _, q = cal(5, 1)
    lut = build_lut(1, q)
    assert lut.n_banks == 1
    for a in range(256):
        assert abs(int(lut.table[a, 0]) - round(a / 256 * q.lut_scale)) <= 1


def test_p2_folded_bank_storage():
    _, q = cal(5, 2)
    lut = build_lut(2, q)
    assert lut.folded_bank == 1
    assert lut.stored_bytes == 256 + 128


def test_lut_is_read_only():
    _, q = cal(5, 3)
    lut = build_lut(3, q)
    with pytest.raises(ValueError):
        lut.table[0, 0] = 1


def test_grid_independence():
    _, q1 = cal(5, 3, -1, 1)
    _, q2 = cal(5, 3, 10, 250)
    assert build_lut(3, q1) == build_lut(3, q2)


@pytest.mark.parametrize("G, P", [(G, P) for G in (2, 5, 10) for P in (1, 2, 3)])
def test_compare_matches_float_interval(G, P):
    grid, q = cal(G, P)
    codes = np.arange(256)
    ks = compare(codes, grid, q)
    for c in codes:
        assert ks[c] == interval_index(grid, float(q.dequantize(c)))


def test_compare_left_edge_and_clamp():
    grid, q = cal(3, 1)  # 51 codes per interval, knots on integer codes
    left = knot_code(grid, q) + 51 * grid.P
    assert compare(left, grid, q) == grid.P
    assert compare(0, grid, q) == grid.P
    assert compare(255, grid, q) == grid.G + grid.P - 1


def test_align_at_knot_is_zero():
    grid, q = cal(3, 1)
    t_q0 = knot_code(grid, q)
    for k in range(grid.P, grid.G + grid.P):
        x_q = t_q0 + 51 * k
        assert align(x_q, compare(x_q, grid, q), grid, q) == 0


def test_align_at_interval_midpoint():
    grid, q = cal(2, 1)  # G+2P = 4 intervals of 63.75 codes
    t_q0 = knot_code(grid, q)
    k = 1
    x_q = round(t_q0 + (k + 0.5) * 255 / 4)
    assert abs(align(x_q, compare(x_q, grid, q), grid, q) - 128) <= 1


def test_align_clips_low():
    grid, q = cal(5, 3)
    assert align(0, compare(0, grid, q), grid, q) == 0


def test_align_other_address_width():
    grid, q = cal(5, 3, addr_bits=6)
    addr = align(np.arange(256), compare(np.arange(256), grid, q), grid, q)
    assert addr.min() == 0 and addr.max() <= 63


def test_lookup_degree1_lanes_sum():
    _, q = cal(5, 1)
    lut = build_lut(1, q)
    for a in range(256):
        lo, hi = lookup(lut, a)
        assert abs(lo + hi - q.lut_scale) <= 1


def test_lookup_last_address_mirrors_first():
    _, q = cal(5, 3)
    lut = build_lut(3, q)
    first = np.array(lookup(lut, 0))
    last = np.array(lookup(lut, 255))
    assert np.abs(first[::-1] - last).max() <= 1


def test_lookup_range_checked():
    _, q = cal(5, 3)
    with pytest.raises(IndexError):
        lookup(build_lut(3, q), 256)


def test_evaluate_at_knot():
    grid, q = cal(9, 3)  # 15 intervals, 17 codes each
    lut = build_lut(3, q)
    t_q0 = knot_code(grid, q)
    for k in range(grid.P, grid.G + grid.P):
        blk = evaluate(t_q0 + 17 * k, grid, lut, q)
        assert blk.k == k
        assert blk.select == k - 3
        assert blk.values == (32, 127, 32, 0)
        ref = oracle_basis(grid.t0, grid.delta, grid.G, grid.P, grid.knot(k))[k - 3 : k + 1]
        assert np.abs(blk.dequantized(q.lut_scale) - ref).max() <= 2 / q.lut_scale


def test_evaluate_degree_mismatch():
    grid, q = cal(5, 3)
    with pytest.raises(ValueError):
        evaluate(10, grid, build_lut(2, q), q)


def test_out_of_domain_codes_match_edges():
    grid, q = cal(5, 3)
    lut = build_lut(3, q)
    lo_code = int(np.ceil(knot_code(grid, q) + 255 * 3 / 11))
    hi_code = int(np.floor(knot_code(grid, q) + 255 * 8 / 11))
    values, k = evaluate_codes(np.arange(256), grid, lut, q)
    assert (values[:lo_code] == values[0]).all() and (k[:lo_code] == 3).all()
    assert (values[hi_code + 1 :] == values[255]).all() and (k[hi_code + 1 :] == 7).all()


@settings(max_examples=60, deadline=None)
@given(G=st.integers(2, 10), P=st.integers(1, 3), lo=st.floats(-20, -0.1), hi=st.floats(0.1, 20))
def test_oracle_equivalence_exhaustive_codes(G, P, lo, hi):
    grid, q = cal(G, P, lo, hi)
    lut = build_lut(P, q)
    values, k = evaluate_codes(np.arange(256), grid, lut, q)
    a, b = grid.domain
    for c in range(256):
        x = min(max(float(q.dequantize(c)), a), b)
        ref = oracle_basis(grid.t0, grid.delta, G, P, x)[k[c] - P : k[c] + 1]
        assert np.abs(values[c] / q.lut_scale - ref).max() <= 2 / q.lut_scale
        assert abs(values[c].sum() / q.lut_scale - 1) <= (P + 1) / q.lut_scale


def test_evaluate_codes_matches_scalar_path():
    grid, q = cal(7, 2)
    lut = build_lut(2, q)
    values, k = evaluate_codes(np.arange(256), grid, lut, q)
    for c in (0, 17, 100, 128, 200, 255):
        blk = evaluate(c, grid, lut, q)
        assert blk.values == tuple(values[c]) and blk.k == k[c]


def test_block_helpers():
    blk = SparseActivationBlock(values=(32, 127, 32, 0), k=5, P=3)
    assert blk.select == 2
    assert blk.dequantized(190.5).sum() == pytest.approx(191 / 190.5)


@pytest.mark.parametrize("p", [1, 2, 3])
def test_dump_load_round_trip(p, tmp_path):
    _, q = cal(5, p)
    lut = build_lut(p, q)
    text = dump_lut(lut)
    assert text.startswith("# kansim-lut v1")
    assert load_lut(text) == lut
    path = tmp_path / "lut.txt"
    path.write_text(text)
    assert load_lut(path) == lut


def test_load_rejects_garbage():
    with pytest.raises(ValueError):
        load_lut("no header\n")
    with pytest.raises(ValueError):
        load_lut("# kansim-lut v1 degree=3 depth=4 banks=2 lut_scale=190.5\n00: 00 20\n")


def test_lut_equality_against_other_types():
    _, q = cal(5, 3)
    assert build_lut(3, q) != "lut"
    assert isinstance(build_lut(3, q), BSplineLut)
