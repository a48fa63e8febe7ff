"""Acceptance gate: one printed PASS/FAIL line per criterion.

Run with `pytest tests/test_acceptance.py -v -s` to see every line. Three
checks fail by design because the measured quantities genuinely contradict
the stated constants they are checked against:

  - criterion 4, first clause: the folded piece count for the doubled-row D
    construction measures 2n-3 on both routes, not the stated 2n-1;
  - criterion 7: the measured decoding error (~0.07 at n=8, decaying slowly
    with n) exceeds the super-exponentially shrinking closed-form bound;
  - criterion 8 at n=8: the measured L1 gap (~0.068) exceeds 2^8/8!.

The tests assert the stated inequality faithfully and are left to fail.
"""
from __future__ import annotations

import math
import time

import numpy as np
import pytest

from latticecpwl import analysis as ana
from latticecpwl import boundary as bnd
from latticecpwl import folding as fld
from latticecpwl import lattices as lat
from latticecpwl import network as net

ALL_INSTANCES = (
    [("an", n) for n in range(2, 9)]
    + [("dn-const-a", n) for n in range(3, 9)]
    + [("dn-second", n) for n in range(3, 9)]
    + [("en", n) for n in range(6, 9)]
)

PIECE_COUNTS = {
    "an": {2: 3, 3: 8, 4: 20, 5: 48, 6: 112, 7: 256, 8: 576},
    "dn-const-a": {3: 5, 4: 18, 5: 56, 6: 160, 7: 432, 8: 1120},
    "dn-second": {3: 6, 4: 20, 5: 57, 6: 151, 7: 383, 8: 943},
}


def report(num: object, ok: bool, detail: str, elapsed: float, budget: float) -> None:
    state = "PASS" if ok else "FAIL"
    print(f"CRITERION {num}: {state} — {detail} [{elapsed:.1f}s / budget {budget:.0f}s]")
    assert elapsed < budget, f"criterion {num} exceeded its {budget:.0f}s budget"
    assert ok, f"criterion {num}: {detail}"


def make(family: str, n: int):
    fid = lat.FamilyId(family, n)
    basis = lat.build_basis(fid)
    f = bnd.build_boundary(basis)
    return fid, basis, f


def test_criterion_1_piece_count_exactness():
    t0 = time.perf_counter()
    bad = []
    for family, counts in PIECE_COUNTS.items():
        for n, expected in counts.items():
            fid, basis, f = make(family, n)
            oracle = bnd.count_pieces_oracle(f)
            formula = bnd.count_pieces_formula(fid)
            if not (oracle == formula == expected):
                bad.append((family, n, formula, oracle, expected))
    detail = "oracle == closed form on all 19 instances" if not bad else f"mismatches {bad}"
    report(1, not bad, detail, time.perf_counter() - t0, 60)


def test_criterion_2_en_reading_adjudication():
    t0 = time.perf_counter()
    named = []
    ok = True
    for n in range(6, 9):
        fid, basis, f = make("en", n)
        oracle = bnd.count_pieces_oracle(f)
        readings = bnd.en_formula_readings(n)
        hits = [name for name, value in readings.items() if value == oracle]
        row = bnd.piece_count_report(fid)
        named.append(f"n={n}: {row['adjudicated_reading']}")
        ok = ok and len(hits) == 1 and hits[0] == row["adjudicated_reading"]
    report(2, ok, "; ".join(named), time.perf_counter() - t0, 60)


def test_criterion_3_fold_invariance():
    t0 = time.perf_counter()
    worst = 0.0
    for family, n in ALL_INSTANCES:
        fid, basis, f = make(family, n)
        sched = fld.build_schedule(fid, basis)
        dev = fld.verify_fold_invariance(basis, f, sched, seed=3, count=10_000)
        worst = max(worst, dev)
    report(
        3,
        worst <= 1e-9,
        f"max |f - f(fold)| = {worst:.3e} over 22 instances at 1e4 samples",
        time.perf_counter() - t0,
        120,
    )


def test_criterion_4_folded_count_stated_constant():
    t0 = time.perf_counter()
    rows = []
    ok = True
    for n in range(3, 9):
        fid, basis, f = make("dn-const-a", n)
        sched = fld.build_schedule(fid, basis)
        oracle = fld.folded_piece_count_oracle(basis, f, sched)
        rows.append(f"n={n}: oracle {oracle} vs stated {2 * n - 1}")
        ok = ok and oracle == 2 * n - 1
    report("4 (doubled-row D, stated 2n-1)", ok, "; ".join(rows), time.perf_counter() - t0, 120)


def test_criterion_4_folded_count_reports_and_stability():
    t0 = time.perf_counter()
    ok = True
    rows = []
    for family, lo in [("dn-second", 3), ("en", 6)]:
        for n in range(lo, 9):
            fid, basis, f = make(family, n)
            sched = fld.build_schedule(fid, basis)
            row = fld.folded_count_report(basis, f, sched)
            rows.append(
                f"{family} n={n}: stated {row['stated']} sketch {row['sketch']} "
                f"measured {row['measured']}"
            )
            ok = ok and row["stable"] and row["match_enum"]
    report(
        "4 (second-basis D and E reports)",
        ok,
        "stable across densities and equal to enumeration; " + "; ".join(rows),
        time.perf_counter() - t0,
        120,
    )


def test_criterion_5_network_equivalence_and_depth():
    t0 = time.perf_counter()
    worst = 0.0
    depth_ok = True
    for family, n in ALL_INSTANCES:
        fid, basis, f = make(family, n)
        sched = fld.build_schedule(fid, basis)
        base = None
        for M in (0, 1, 2):
            nw = net.synthesize(basis, sched, f, M=M)
            if M == 0:
                base = nw.meta["depth"]
                Yt = lat.sample_domain(basis, seed=5, count=10_000)
                out = net.forward(nw, Yt)[:, 0]
                ref, _ = bnd.eval_boundary_batch(f, Yt)
            else:
                depth_ok = depth_ok and nw.meta["depth"] == 3 * M + base
                rng = np.random.default_rng(1000 * M + n)
                alpha = rng.random((12_000, n))
                alpha[:, 1:] *= 2.0**M
                frac = alpha[:, 1:] - np.floor(alpha[:, 1:])
                keep = ((frac > 1e-6) & (frac < 1 - 1e-6)).all(axis=1)
                Y0 = (alpha[keep] @ basis.G)[:10_000]
                out = net.forward(nw, Y0)[:, 0]
                reduced, _ = fld.reduce_to_parallelotope(basis, Y0, M)
                ref, _ = bnd.eval_boundary_batch(f, reduced[:, 1:])
            worst = max(worst, float(np.abs(out - ref).max()))
    ok = worst <= 1e-9 and depth_ok
    report(
        5,
        ok,
        f"max |network - boundary| = {worst:.3e} over 22 instances x M in 0..2; "
        f"depth = 3M + L_base {'holds' if depth_ok else 'violated'}",
        time.perf_counter() - t0,
        300,
    )


def test_criterion_6_decode_bit_oracle_agreement():
    t0 = time.perf_counter()
    disagreements = 0
    for n in range(2, 11):
        fid, basis, f = make("an", n)
        Y = lat.sample_parallelotope(basis, seed=6, count=10_000)
        bits = bnd.decode_bit_batch(f, Y)
        corners = lat.enumerate_corners(basis)
        oracle = corners.z[lat.cvp_corners_batch(basis, Y), 0]
        sure = bits >= 0
        disagreements += int((bits[sure] != oracle[sure]).sum())
    report(
        6,
        disagreements == 0,
        f"{disagreements} disagreements outside the 1e-7 band, n = 2..10",
        time.perf_counter() - t0,
        60,
    )


@pytest.mark.parametrize("n", [8, 12, 16])
def test_criterion_7_decoding_error_bound(n):
    t0 = time.perf_counter()
    basis = lat.build_basis(lat.FamilyId("an", n))
    est = ana.hyperplane_decoding_error_mc(basis, seed=7, samples=1_000_000)
    bound = ana.decoding_error_bound(n)
    value = est.estimate + 3 * est.stderr
    report(
        f"7 (n={n})",
        value < bound,
        f"decode error {est.estimate:.6f} + 3σ = {value:.6f} vs bound {bound:.3e}",
        time.perf_counter() - t0,
        300,
    )


@pytest.mark.parametrize("n", [4, 6, 8])
def test_criterion_8_l1_gap_bound(n):
    t0 = time.perf_counter()
    fid, basis, f = make("an", n)
    est = ana.l1_gap_mc(basis, f, seed=8, samples=1_000_000)
    bound = 2**n / math.factorial(n)
    value = est.estimate + 3 * est.stderr
    report(
        f"8 (n={n})",
        value < bound,
        f"unit-volume L1 gap {est.estimate:.6f} + 3σ = {value:.6f} vs 2^n/n! = {bound:.5g}",
        time.perf_counter() - t0,
        300,
    )


def test_criterion_9_volume_sandwich():
    t0 = time.perf_counter()
    ok = True
    rows = []
    for n in range(3, 9):
        basis = lat.build_basis(lat.FamilyId("an", n))
        lower, upper = ana.simplex_volume_bounds(n)
        exact = ana.exact_simplex_volume(basis)
        inside = lower * (1 - 1e-12) <= exact <= upper * (1 + 1e-12)
        ok = ok and inside
        rows.append(f"n={n}: {lower:.3e} <= {exact:.3e} <= {upper:.3e}")
    report(9, ok, "; ".join(rows), time.perf_counter() - t0, 1)


def test_criterion_10_translation_reduction_and_periodicity():
    t0 = time.perf_counter()
    worst_floor = 0.0
    worst_periodic = 0.0
    for family, n in [("an", 3), ("dn-second", 4)]:
        fid, basis, f = make(family, n)
        for M in (1, 2, 3):
            blocks = []
            for level in range(1, M + 1):
                blocks.extend(net.translation_block(basis, level, M).layers)
            stack = net.Network(layers=tuple(blocks), meta={})
            rng = np.random.default_rng(20 + M)
            alpha = rng.random((1_200, n))
            alpha[:, 1:] *= 2.0**M
            frac = alpha[:, 1:] - np.floor(alpha[:, 1:])
            keep = ((frac > 1e-6) & (frac < 1 - 1e-6)).all(axis=1)
            Y0 = (alpha[keep] @ basis.G)[:1_000]
            got = net.forward(stack, Y0)
            reduced, _ = fld.reduce_to_parallelotope(basis, Y0, M)
            worst_floor = max(worst_floor, float(np.abs(got - reduced).max()))
            # periodicity: shifting by basis multiples inside the extended box
            # must not change the reduced value or the boundary height
            base = lat.sample_parallelotope(basis, seed=30 + M, count=1_000)
            shift = (2**M - 1) * basis.G[1]
            a, _ = fld.reduce_to_parallelotope(basis, base, M)
            b, _ = fld.reduce_to_parallelotope(basis, base + shift, M)
            fa, _ = bnd.eval_boundary_batch(f, a[:, 1:])
            fb, _ = bnd.eval_boundary_batch(f, b[:, 1:])
            worst_periodic = max(worst_periodic, float(np.abs(fa - fb).max()))
    ok = worst_floor <= 1e-9 and worst_periodic <= 1e-9
    report(
        10,
        ok,
        f"max |blocks - floor oracle| = {worst_floor:.3e}; "
        f"max periodic deviation = {worst_periodic:.3e}",
        time.perf_counter() - t0,
        60,
    )
