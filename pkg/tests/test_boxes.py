from fractions import Fraction
from itertools import product

import numpy as np
import pytest

from disasterbrw.boxes import (
    SpaceTimeBox,
    classify_exit,
    exit_counts,
    exit_product_bounds_check,
    face_regions,
    fkg_test,
    top_regions,
    zero_pattern_product_bound,
)
from disasterbrw.brw import BRWParams, offspring_pmf, simulate
from disasterbrw.env import DisasterField


BINARY = offspring_pmf({0: 0.5, 2: 0.5})


# -- classification ------------------------------------------------------------

def test_classify_top_origin_two_dim():
    box = SpaceTimeBox(half_width=5, height=1.0, dimension=2)
    r = classify_exit(box, 1.0, (0, 0))
    assert (r.kind, r.sign, r.theta) == ("top", 1, (1,))  # sign(0) = +1


def test_classify_face_two_dim():
    box = SpaceTimeBox(half_width=5, height=1.0, dimension=2)
    r = classify_exit(box, 0.5, (5, -3))
    assert (r.kind, r.axis, r.sign, r.theta) == ("face", 0, 1, (-1,))


def test_classify_rejects_interior_and_outside():
    box = SpaceTimeBox(half_width=3, height=1.0, dimension=1)
    with pytest.raises(ValueError):
        classify_exit(box, 0.5, (0,))
    with pytest.raises(ValueError):
        classify_exit(box, 0.5, (4,))
    with pytest.raises(ValueError):
        classify_exit(box, 2.0, (0,))


def test_boundary_partition_exhaustive():
    for d in (1, 2, 3):
        for L in (1, 2, 4):
            box = SpaceTimeBox(half_width=L, height=1.0, dimension=d)
            tops = set(top_regions(d))
            faces = set(face_regions(d))
            assert len(tops) == 2**d and len(faces) == d * 2**d
            top_seen = set()
            for x in product(range(-L, L + 1), repeat=d):
                r = classify_exit(box, 1.0, x)
                assert r in tops
                top_seen.add(r)
                if max(abs(c) for c in x) == L:
                    for t in (0.0, 0.37, 0.99):
                        rf = classify_exit(box, t, x)
                        assert rf in faces
            assert top_seen == tops


def test_classification_with_offsets():
    box = SpaceTimeBox(half_width=2, height=1.0, dimension=1, t0=3.0, x0=(10,))
    assert classify_exit(box, 4.0, (10,)).kind == "top"
    assert classify_exit(box, 3.5, (12,)).kind == "face"


# -- exit counts ----------------------------------------------------------------

def _oracle_exit_counts(result, box):
    """Independent route: rebuild each particle's full ancestral path and take
    first boundary hits by brute-force scanning."""
    tops = {r: 0 for r in top_regions(box.dimension)}
    faces = {r: 0 for r in face_regions(box.dimension)}
    recs = result.records
    L = box.half_width

    def full_path(pid):
        chain = [pid[: i + 1] for i in range(len(pid))]
        moves = []
        for node in chain:
            r = recs[node]
            if node == chain[0]:
                moves.append((r.birth_time, r.birth_site))
            for jump in r.jumps:
                if jump[0] <= recs[pid].end_time or recs[pid].end_time is None:
                    moves.append(jump)
        return moves

    for pid, rec in recs.items():
        end = rec.end_time if rec.end_time is not None else result.horizon
        moves = [(t, s) for t, s in full_path(pid) if t <= end]
        hit = None
        for t, s in moves:
            rel = box.rel(s)
            if box.t0 <= t <= box.t_end and max(abs(c) for c in rel) == L:
                hit = (t, s)
                break
        own_alive_at_end = rec.end_time is None or rec.end_time >= box.t_end
        lineage_alive = own_alive_at_end and rec.end_cause in ("horizon", None)
        if hit is not None and hit[0] < box.t_end:
            # only the earliest node of the lineage records the hit
            t, s = hit
            first_owner = None
            for node in [pid[: i + 1] for i in range(len(pid))]:
                r = recs[node]
                node_end = r.end_time if r.end_time is not None else result.horizon
                if r.birth_time <= t <= node_end:
                    first_owner = node
                    break
            if first_owner == pid:
                faces[classify_exit(box, t, s)] += 1
        elif hit is None and lineage_alive:
            pos = moves[-1][1]
            if max(abs(c) for c in box.rel(pos)) <= L:
                tops[classify_exit(box, box.t_end, pos)] += 1
    return tops, faces


def test_exit_counts_trivial_cases():
    # nobody moves, nobody dies: one particle on the top, no face hits
    params = BRWParams(0.0, 0.0, (1.0,), 0.0, 1)
    fld = DisasterField(1, 0.0, 1)
    res = simulate(params, {(0,): 1}, fld, 0.0, 1.0, 1)
    ec = exit_counts(res.events, SpaceTimeBox(3, 1.0, 1), res.horizon)
    assert ec.total_top == 1 and ec.total_face == 0


def test_exit_counts_all_zero_when_everyone_dies_inside():
    # a frozen particle killed before the box ends counts nowhere
    params = BRWParams(0.0, 0.0, (1.0,), 1.0, 1)
    fld = DisasterField(seed=3001, rate=1.0, dimension=1)
    t_hit = fld.first_disaster_after((0,), 0.0, 50.0)
    fld2 = DisasterField(seed=3001, rate=1.0, dimension=1)
    res = simulate(params, {(0,): 1}, fld2, 0.0, t_hit + 1.0, 1)
    ec = exit_counts(res.events, SpaceTimeBox(3, t_hit + 1.0, 1), res.horizon)
    assert ec.total_top == 0 and ec.total_face == 0


def test_exit_counts_log_coverage_check():
    params = BRWParams(0.0, 0.0, (1.0,), 0.0, 1)
    res = simulate(params, {(0,): 1}, DisasterField(1, 0.0, 1), 0.0, 1.0, 1)
    with pytest.raises(ValueError):
        exit_counts(res.events, SpaceTimeBox(3, 2.0, 1), res.horizon)


def test_exit_counts_against_path_replay_oracle():
    params = BRWParams(1.2, 1.0, BINARY, 1.0, 1)
    box = SpaceTimeBox(2, 1.5, 1)
    for i in range(100):
        fld = DisasterField(seed=7000 + i, rate=1.0, dimension=1)
        res = simulate(params, {(0,): 2}, fld, 0.0, 1.5, 7200 + i)
        ec = exit_counts(res.events, box, res.horizon)
        tops, faces = _oracle_exit_counts(res, box)
        assert ec.top == tops, i
        assert ec.face == faces, i


def test_exit_counts_conservation():
    # every lineage contributes at most one first hit; survivors that never
    # touched land on the top
    params = BRWParams(1.5, 1.0, BINARY, 1.0, 2)
    box = SpaceTimeBox(2, 1.0, 2)
    for i in range(30):
        fld = DisasterField(seed=7600 + i, rate=1.0, dimension=2)
        res = simulate(params, {(0, 0): 2}, fld, 0.0, 1.0, 7800 + i)
        ec = exit_counts(res.events, box, res.horizon)
        tops, faces = _oracle_exit_counts(res, box)
        assert ec.total_top + ec.total_face == sum(tops.values()) + sum(faces.values())


def test_truncated_run_matches_untruncated_exit_counts():
    # removing particles at the shell does not change first-hit counters
    params = BRWParams(1.2, 1.0, BINARY, 1.0, 1)
    box = SpaceTimeBox(2, 1.5, 1)
    for i in range(60):
        f1 = DisasterField(seed=8100 + i, rate=1.0, dimension=1)
        f2 = DisasterField(seed=8100 + i, rate=1.0, dimension=1)
        full = simulate(params, {(0,): 1}, f1, 0.0, 1.5, 8300 + i)
        trunc = simulate(params, {(0,): 1}, f2, 0.0, 1.5, 8300 + i,
                         trunc=box.interior_region())
        a = exit_counts(full.events, box, full.horizon)
        b = exit_counts(trunc.events, box, trunc.horizon)
        assert a.top == b.top and a.face == b.face


# -- FKG ---------------------------------------------------------------------------

def test_fkg_constant_functional_zero_covariance():
    params = BRWParams(1.0, 1.0, BINARY, 1.0, 1)
    box = SpaceTimeBox(3, 1.0, 1)
    const = lambda tv, fv: 1.0
    total = lambda tv, fv: float(tv.sum() + fv.sum())
    est = fkg_test(params, {(0,): 1}, {(0,): 1}, box, const, total, 300, 31)
    assert est.cov == 0.0


def test_fkg_no_disasters_independent_trees():
    params = BRWParams(1.0, 1.0, BINARY, 0.0, 1)
    box = SpaceTimeBox(3, 1.0, 1)
    total = lambda tv, fv: float(tv.sum() + fv.sum())
    est = fkg_test(params, {(0,): 1}, {(0,): 1}, box, total, total, 600, 37)
    assert abs(est.cov) <= 3 * est.std_err


def test_fkg_shared_disasters_positive():
    params = BRWParams(1.0, 1.0, BINARY, 1.0, 1)
    box = SpaceTimeBox(3, 1.0, 1)
    total = lambda tv, fv: float(tv.sum() + fv.sum())
    est = fkg_test(params, {(0,): 2}, {(0,): 2}, box, total, total, 600, 41)
    assert est.cov >= -3 * est.std_err
    assert est.cov > 0  # at this scale the positive signal is clear


def test_fkg_rejects_boundary_start():
    params = BRWParams(1.0, 1.0, BINARY, 1.0, 1)
    box = SpaceTimeBox(2, 1.0, 1)
    with pytest.raises(ValueError):
        fkg_test(params, {(2,): 1}, {(0,): 1}, box, lambda *a: 1.0, lambda *a: 1.0, 5, 1)


# -- zero-pattern product bound -------------------------------------------------------

def test_zero_pattern_all_zero_mass():
    joint = {(0, 0): Fraction(1), (0, 1): Fraction(0), (1, 0): Fraction(0), (1, 1): Fraction(0)}
    holds, slack = zero_pattern_product_bound(joint, 1)
    assert holds and slack > 0


def test_zero_pattern_fair_independent_bits():
    joint = {pat: Fraction(1, 4) for pat in product((0, 1), repeat=2)}
    holds, slack = zero_pattern_product_bound(joint, 1)
    assert holds
    assert slack == Fraction(1, 4)  # lhs 1/4, rhs 1/4 + 1/4


def test_zero_pattern_extremal_equality():
    m = 3
    joint = {pat: Fraction(0) for pat in product((0, 1), repeat=m + 1)}
    for i in range(m + 1):
        pat = tuple(1 if j == i else 0 for j in range(m + 1))
        joint[pat] = Fraction(1, m + 1)
    for copies in (1, 2, 3):
        holds, slack = zero_pattern_product_bound(joint, copies)
        assert holds and slack == 0


def test_zero_pattern_random_rational_joints():
    rng = np.random.default_rng(43)
    for _ in range(2000):
        m = int(rng.integers(1, 6))
        copies = int(rng.integers(1, 5))
        raw = [Fraction(int(x)) for x in rng.integers(0, 30, 2 ** (m + 1))]
        total = sum(raw) or Fraction(1)
        joint = {pat: raw[i] / total for i, pat in enumerate(product((0, 1), repeat=m + 1))}
        holds, _ = zero_pattern_product_bound(joint, copies)
        assert holds


def test_zero_pattern_rejects_bad_pmf():
    with pytest.raises(ValueError):
        zero_pattern_product_bound({(0, 0): 0.7, (1, 1): 0.7}, 1)


# -- exit product bounds ---------------------------------------------------------------

def test_exit_product_bounds_one_dimension():
    params = BRWParams(1.0, 1.0, BINARY, 1.0, 1)
    box = SpaceTimeBox(3, 1.0, 1)
    reports = exit_product_bounds_check(params, {(0,): 1}, box, k_top=0, k_face=0,
                                        copies=2, n_reps=3000, seed=47)
    assert {r.name for r in reports} == {"top-orthants", "face-orthants", "combined-totals"}
    for r in reports:
        assert not r.violated, (r.name, r.violation_sigma)
        # in one dimension the printed and derived additive terms coincide
        if r.name != "combined-totals":
            assert r.additive_printed == pytest.approx(r.additive_derived)
