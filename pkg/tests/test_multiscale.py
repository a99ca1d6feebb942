import numpy as np
import pytest

from qlphase.estimate import OptimizerConfig
from qlphase.field import mse, random_field
from qlphase.multiscale import (UnreliablePhaseError, build_plan, plan_intensities, reconstruct_multiscale,
                                relative_phase, simulate_plan, stitch)


def test_plan_minimal_tree():
    p = build_plan(2**6, 5)
    assert len(p.blocks) == 2 and p.n_levels == 1
    assert [(c.block_a, c.block_b) for c in p.cross_links] == [(0, 1)]


def test_plan_eight_blocks():
    p = build_plan(2**8, 5)
    assert len(p.blocks) == 8 and p.n_levels == 3
    assert p.sibling_pairs(3) == [([0, 1, 2, 3], [4, 5, 6, 7])]
    assert len(p.links_at(1)) == 4 and len(p.links_at(3)) == 4
    covered = np.concatenate([np.arange(a, b) for a, b in p.blocks])
    assert np.array_equal(covered, np.arange(2**8))


def test_plan_links_join_siblings():
    p = build_plan(2**9, 4)
    for c in p.cross_links:
        size = 2 ** (c.level - 1)
        assert c.block_b - c.block_a == size
        assert c.block_a // (2 * size) == c.block_b // (2 * size)


def test_plan_intra_degree():
    p = build_plan(2**7, 5)
    for d in p.intra_designs:
        assert d.l_cols == 2 and d.q_rows == 3
        assert d.degrees().mean() == pytest.approx(2 * 5)


def test_plan_rejects_bad_arguments():
    with pytest.raises(ValueError):
        build_plan(2**5, 6)
    with pytest.raises(ValueError):
        build_plan(100, 3)
    with pytest.raises(ValueError):
        build_plan(64, 3, cross_energy_fraction=1.0)


@pytest.mark.parametrize("n,q", [(2**6, 5), (2**8, 5), (2**8, 2), (2**5, 5)])
def test_energy_audit(n, q):
    p = build_plan(n, q, seed=3)
    x = random_field(n, 1e4, 0)
    intra, cross = plan_intensities(p, x)
    total = sum(I.sum() for I in intra) + sum(I.sum() for I in cross)
    assert abs(total - x.intensity) < 1e-9 * x.intensity
    if p.n_levels:
        assert sum(I.sum() for I in cross) == pytest.approx(0.05 * x.intensity, rel=1e-9)


def two_block_case(phi, seed=0, photons=1e4):
    p = build_plan(2**4, 3, seed=seed)
    x = random_field(16, photons, seed).values
    link = p.cross_links[0]
    xa, xb = x[:8], x[8:]
    return p, link, xa, xb


@pytest.mark.parametrize("phi", [0.0, 0.4, -2.1, np.pi - 1e-3, -np.pi + 1e-3])
def test_relative_phase_noiseless(phi):
    p, link, xa, xb = two_block_case(phi)
    counts = plan_intensities(p, np.concatenate([xa, xb]))[1][0]
    # block B's local estimate carries an extra gauge rotation of -phi
    for w in ("inverse_variance", "unit"):
        est = relative_phase(xa, xb * np.exp(-1j * phi), counts, link.design, weighting=w)
        assert abs(np.angle(np.exp(1j * (est - phi)))) < 1e-6


def test_relative_phase_zero_is_unbiased():
    p, link, xa, xb = two_block_case(0.0)
    x = np.concatenate([xa, xb])
    est = [relative_phase(xa, xb, simulate_plan(p, x, s)[1][0], link.design) for s in range(200)]
    est = np.array(est)
    assert abs(est.mean()) < 3 * est.std() / np.sqrt(est.size) + 1e-12


def test_relative_phase_near_pi_has_no_wrap_bias():
    phi = np.pi - 0.002
    p = build_plan(2**4, 3, seed=1)
    x = random_field(16, 1e6, 1).values
    link = p.cross_links[0]
    errs = []
    for s in range(50):
        counts = simulate_plan(p, x, s)[1][0]
        est = relative_phase(x[:8], x[8:] * np.exp(-1j * phi), counts, link.design)
        errs.append(np.angle(np.exp(1j * (est - phi))))
    assert abs(np.mean(errs)) < 0.01


def test_relative_phase_flags_empty_links():
    p, link, xa, xb = two_block_case(0.0)
    with pytest.raises(UnreliablePhaseError):
        relative_phase(np.zeros(8), xb, np.zeros(link.design.m_rows), link.design)
    with pytest.raises(ValueError):
        relative_phase(xa, xb, np.zeros(link.design.m_rows), link.design, weighting="median")


def exact_block_estimates(p, x, rng):
    return [x[a:b] * np.exp(1j * rng.uniform(-np.pi, np.pi)) for a, b in p.blocks]


@pytest.mark.parametrize("refine", [False, True])
def test_stitch_exact_inputs(refine, rng):
    for n, q in ((2**6, 5), (2**8, 4)):
        p = build_plan(n, q, seed=2)
        x = random_field(n, 1e4, 4)
        cross = plan_intensities(p, x)[1]
        res = stitch(p, exact_block_estimates(p, x.values, rng), cross, refine=refine)
        assert mse(res.field, x).mse_total < 1e-18 * x.intensity


def test_stitch_order_independent(rng):
    p = build_plan(2**8, 5, seed=0)
    x = random_field(2**8, 1e4, 1)
    intra, cross = simulate_plan(p, x, 2)
    ests = [v + 0.5 * (rng.standard_normal(v.size) + 1j * rng.standard_normal(v.size))
            for v in exact_block_estimates(p, x.values, rng)]
    base = stitch(p, ests, cross).field.values
    keys = [(c.level, c.block_a, c.block_b) for c in p.cross_links]
    for perm_seed in range(3):
        r = np.random.default_rng(perm_seed)
        bo = r.permutation(len(ests))
        co = r.permutation(len(keys))
        shuffled = stitch(p, {int(b): ests[b] for b in bo}, {keys[i]: cross[i] for i in co}).field.values
        assert np.array_equal(shuffled, base)


def test_stitch_only_rotates_blocks(rng):
    p = build_plan(2**8, 4, seed=0)
    x = random_field(2**8, 1e4, 1)
    intra, cross = simulate_plan(p, x, 2)
    ests = [v * (1 + 0.1 * rng.standard_normal(v.size)) for v in exact_block_estimates(p, x.values, rng)]
    for refine in (False, True):
        out = stitch(p, ests, cross, refine=refine).field.values
        for (a, b), e in zip(p.blocks, ests):
            ratio = out[a:b] / e
            assert np.allclose(np.abs(ratio), 1, atol=1e-12)
            assert np.allclose(ratio, ratio[0], atol=1e-12)


def test_stitch_log():
    p = build_plan(2**7, 4, seed=0)
    x = random_field(2**7, 1e4, 0)
    res = stitch(p, [x.values[a:b] for a, b in p.blocks], plan_intensities(p, x)[1])
    lines = res.log_csv().splitlines()
    assert lines[0] == "level,block_pair,phase,n_connections"
    assert len(lines) == 1 + 4 + 2 + 1
    assert lines[-1].startswith("3,0-4,")
    assert all(abs(r["phase"]) < 1e-9 for r in res.log)


def test_stitch_reports_failing_link():
    p = build_plan(2**6, 4, seed=0)
    x = random_field(2**6, 1e4, 0).values
    ests = [x[a:b] for a, b in p.blocks]
    ests[3] = np.zeros(16)
    with pytest.raises(UnreliablePhaseError) as info:
        stitch(p, ests, plan_intensities(p, x)[1])
    assert info.value.blocks == (1, 2, 3)


def test_stitch_requires_every_block():
    p = build_plan(2**6, 4, seed=0)
    with pytest.raises(ValueError):
        stitch(p, [np.zeros(16)] * 3, [])


def test_more_cross_energy_helps():
    cfg = OptimizerConfig(max_iters=600, warmup_iters=200, restarts=1)
    n, q, trials = 2**8, 5, 20
    medians = []
    for frac in (0.01, 0.05, 0.10):
        vals = []
        for t in range(trials):
            p = build_plan(n, q, seed=100 + t, cross_energy_fraction=frac)
            x = random_field(n, 1e4, 200 + t)
            intra, cross = simulate_plan(p, x, 300 + t)
            vals.append(mse(reconstruct_multiscale(p, intra, cross, cfg, seed=t).field, x).mse_per_mode)
        medians.append(np.median(vals))
    assert medians[0] > medians[1] > medians[2]
