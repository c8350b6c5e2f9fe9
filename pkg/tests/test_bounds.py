import math

import numpy as np
import pytest

from mfghom.bounds import (BoundReport, ConstantTable, EpsMFBound,
                           HeterEstimate, LipschitzProfile, assemble,
                           c_theorem_scalar, constant_table,
                           eps_heter_generic, eps_heter_parametric,
                           eps_mf_partition_corollary, eps_mf_partition_micp,
                           eps_mf_partition_vanishing, eps_mf_theorem,
                           estimate_lipschitz, flow_deviation_bound,
                           pricing_constants, representative_threshold,
                           write_bound_curves_csv)
from mfghom.game_model import GroupPartition, Spaces, build_mpmfg, to_nplayer
from mfghom.mfg_solver import forward_flow
from mfghom.nplayer_eval import simulate
from mfghom.pricing_scenario import PricingParams, build_n_player, \
    build_pricing_mpmfg, two_type_coefficients

from support import (mirror_bar_c, mirror_constant_tables, random_mft,
                     random_group_policies)


def test_constant_table_matches_mirror_bit_for_bit():
    rng = np.random.default_rng(0)
    for K, T in [(1, 3), (2, 5), (3, 6), (4, 10)]:
        sp = Spaces(n_states=3, n_actions=2, horizon=T)
        lip = LipschitzProfile(w_r=rng.random(K), w_p=0.3 * rng.random(K),
                               rbar_max=2.0)
        table = constant_table(sp, lip)
        c, cs, ct, cst = mirror_constant_tables(sp, lip)
        assert np.array_equal(table.c_pair, c)
        assert np.array_equal(table.c_single, cs)
        assert np.array_equal(table.c_pair_tilde, ct)
        assert np.array_equal(table.c_single_tilde, cst)
        assert np.array_equal(table.bar_c, mirror_bar_c(sp, lip, c, cs, ct))


def test_constant_table_closed_forms_with_zero_coupling():
    # with w_p = 0 the recursions telescope into polynomials in t
    sp = Spaces(n_states=2, n_actions=3, horizon=6)
    lip = LipschitzProfile(w_r=[1.0, 2.0], w_p=[0.0, 0.0], rbar_max=1.0)
    table = constant_table(sp, lip)
    t = np.arange(7, dtype=np.float64)
    root_s = math.sqrt(2.0 * 2 * math.log(2.0))
    root_sa = math.sqrt(2.0 * 2 * 3 * math.log(2.0))
    assert np.allclose(table.c_single, (4.0 * root_s * t)[:, None])
    assert np.array_equal(table.c_single_tilde, (2.0 + 4.0 * t)[:, None]
                          .repeat(2, axis=1))
    # tilde pair: sum_{l<t} (4 + 4l) = 2t^2 + 2t, exact in floats
    want = 2.0 * t * t + 2.0 * t
    assert np.array_equal(table.c_pair_tilde, want[:, None, None]
                          .repeat(2, 1).repeat(2, 2))
    want_pair = 2.0 * root_sa * t + 4.0 * root_s * t * (t - 1) / 2.0
    assert np.allclose(table.c_pair, want_pair[:, None, None])


def test_f_polynomials():
    sp = Spaces(n_states=3, n_actions=2, horizon=4)
    lip = LipschitzProfile(w_r=[1.0], w_p=[0.1], rbar_max=1.0)
    f = constant_table(sp, lip).f
    T = 4
    rs = math.sqrt(2.0 * 3 * math.log(2.0))
    rsa = math.sqrt(2.0 * 3 * 2 * math.log(2.0))
    assert f[0] == pytest.approx(2 * (T + 1) * (T + 2) * rs + 2 * (T + 1) * rsa)
    assert f[1] == pytest.approx(
        T * (T + 1) * (2 * T + 4) / 3 * rs + (T + 1) * (T + 2) * rsa)
    assert f[2] == pytest.approx(T * (T + 1) * (2 * T + 4) / 3
                                 + (T + 1) * (T + 2))
    assert f[3] == f[0]
    assert f[4] == pytest.approx(2 * (T + 1) * (T + 2) + 2 * (T + 1))


def test_constant_table_rejects_mismatched_k():
    sp = Spaces(n_states=2, n_actions=2, horizon=2)
    lip = LipschitzProfile(w_r=[1.0, 1.0], w_p=[0.0, 0.0], rbar_max=1.0)
    with pytest.raises(ValueError):
        constant_table(sp, lip, n_groups=3)


def test_lipschitz_profile_validation():
    with pytest.raises(ValueError):
        LipschitzProfile(w_r=[1.0], w_p=[-0.1], rbar_max=1.0)
    with pytest.raises(ValueError):
        LipschitzProfile(w_r=[1.0, 2.0], w_p=[0.1], rbar_max=1.0)
    with pytest.raises(ValueError):
        LipschitzProfile(w_r=[], w_p=[], rbar_max=1.0)
    with pytest.raises(ValueError):
        LipschitzProfile(w_r=[1.0], w_p=[0.0], rbar_max=-1.0)
    lip = LipschitzProfile(w_r=[1.0, 3.0], w_p=[2.0, 2.5], rbar_max=1.0)
    assert lip.w_max == 4.5
    assert lip.n_groups == 2


def test_eps_mf_monotone_in_lipschitz_constants():
    sp = Spaces(n_states=2, n_actions=2, horizon=3)
    sizes = [10, 40]
    base = LipschitzProfile(w_r=[0.5, 0.2], w_p=[0.1, 0.3], rbar_max=2.0)
    ref = eps_mf_theorem(sp, base, sizes)
    for bump in [
        LipschitzProfile(w_r=[0.9, 0.2], w_p=[0.1, 0.3], rbar_max=2.0),
        LipschitzProfile(w_r=[0.5, 0.2], w_p=[0.1, 0.6], rbar_max=2.0),
        LipschitzProfile(w_r=[0.5, 0.2], w_p=[0.1, 0.3], rbar_max=3.0),
    ]:
        out = eps_mf_theorem(sp, bump, sizes)
        assert out.explicit >= ref.explicit - 1e-15
        assert out.generic >= ref.generic - 1e-15


def test_eps_mf_uniform_doubling_scales_between_half_and_invroot2():
    sp = Spaces(n_states=2, n_actions=2, horizon=3)
    lip = LipschitzProfile(w_r=[0.5, 0.2], w_p=[0.1, 0.3], rbar_max=2.0)
    ns = np.array([9.0, 25.0])
    a = eps_mf_theorem(sp, lip, ns)
    b = eps_mf_theorem(sp, lip, 2.0 * ns)
    for attr in ("explicit", "generic"):
        hi = getattr(a, attr) / math.sqrt(2.0)
        lo = getattr(a, attr) / 2.0
        assert lo - 1e-12 <= getattr(b, attr) <= hi + 1e-12


def test_eps_mf_not_monotone_in_single_group_size():
    # growing one group can grow the bound: the sqrt(N_k)/N term wins
    sp = Spaces(n_states=2, n_actions=2, horizon=3)
    lip = LipschitzProfile(w_r=[1e-3, 1e-3], w_p=[1e-3, 1e-3], rbar_max=1.0)
    small = eps_mf_theorem(sp, lip, [1, 100])
    grown = eps_mf_theorem(sp, lip, [4, 100])
    assert grown.explicit > small.explicit
    assert grown.generic > small.generic


def test_eps_mf_accepts_fractional_sizes_rejects_below_one():
    sp = Spaces(n_states=2, n_actions=2, horizon=2)
    lip = LipschitzProfile(w_r=[1.0, 1.0], w_p=[0.0, 0.0], rbar_max=1.0)
    out = eps_mf_theorem(sp, lip, [2.5, 7.5])
    assert out.explicit > 0
    with pytest.raises(ValueError):
        eps_mf_theorem(sp, lip, [0.5, 7.5])
    with pytest.raises(ValueError):
        eps_mf_theorem(sp, lip, [2.5])


def test_eps_mf_bound_value_provenance():
    sp = Spaces(n_states=2, n_actions=2, horizon=2)
    lip = LipschitzProfile(w_r=[1.0], w_p=[0.1], rbar_max=1.0)
    out = eps_mf_theorem(sp, lip, [16])
    assert out.value("explicit_appendix") == out.explicit
    assert out.value("theorem_generic") == out.generic
    with pytest.raises(ValueError):
        out.value("folklore")
    with pytest.raises(ValueError):
        EpsMFBound(explicit=-1.0, generic=1.0, c_scalar=1.0)


def test_c_theorem_scalar_matches_pricing_group_split():
    # w_p = 0 and equal total w_r make the scalar independent of K
    p = PricingParams(s_cap=2, q_cap=2, h_cap=1, q0=1.0, d=2.0, sigma=0.5,
                      c_max=3.0)
    sp = Spaces(n_states=3, n_actions=6, horizon=4)
    one = c_theorem_scalar(sp, pricing_constants(p))
    two = c_theorem_scalar(sp, pricing_constants(p, alpha=0.3))
    assert one == pytest.approx(two, rel=1e-12)


def test_pricing_constants_closed_forms():
    p = PricingParams(s_cap=2, q_cap=2, h_cap=1, q0=1.0, d=2.0, sigma=0.5,
                      c_max=3.0)
    lip = pricing_constants(p)
    # W = (Q^2/sigma) (d/q0)^(1/sigma - 1) = 8 * 2 = 16
    assert lip.w_r == pytest.approx([16.0])
    assert np.all(lip.w_p == 0.0)
    # rbar = max(price_cap * Q, c_max(Q + Q^2 + H + 2Q + S)) = max(8, 39)
    assert lip.rbar_max == 39.0
    split = pricing_constants(p, alpha=0.25)
    assert split.w_r == pytest.approx([4.0, 12.0])
    assert split.rbar_max == 39.0
    with pytest.raises(ValueError):
        pricing_constants(p, alpha=1.0)


def test_flow_deviation_bound_shape_and_limits():
    sp = Spaces(n_states=3, n_actions=2, horizon=4)
    lip = LipschitzProfile(w_r=[1.0, 0.5], w_p=[0.2, 0.1], rbar_max=1.0)
    table = constant_table(sp, lip)
    sizes = np.array([16.0, 64.0])
    rhs = flow_deviation_bound(table, lip, sizes)
    assert rhs.shape == (5, 2)
    # period 0: no recursion yet, only the sampling term 2*sqrt(2SA ln2)/sqrt(N)
    two_sa = 2.0 * math.sqrt(2.0 * 3 * 2 * math.log(2.0))
    assert np.allclose(rhs[0], two_sa / np.sqrt(sizes))
    assert np.all(np.diff(rhs, axis=0) > 0)  # grows with the horizon
    uni = flow_deviation_bound(table, lip, sizes, unilateral=True)
    assert np.all(uni > rhs)
    bigger = flow_deviation_bound(table, lip, 4.0 * sizes)
    assert np.all(bigger == rhs / 2.0)  # pure 1/sqrt(N) scaling off-unilateral
    with pytest.raises(ValueError):
        flow_deviation_bound(table, lip, [16.0])


def test_flow_deviation_bound_holds_empirically():
    rng = np.random.default_rng(31)
    game, lip = random_mft(rng, n_players=12, n_states=2, n_actions=2,
                           horizon=2, n_groups=2)
    prof = random_group_policies(rng, game)
    mpmfg = build_mpmfg(game)
    flow = forward_flow(mpmfg, prof)
    sim = simulate(game, prof, n_rollouts=400, seed=7, flow=flow)
    table = constant_table(game.spaces, lip)
    sizes = game.partition.group_sizes
    rhs = flow_deviation_bound(table, lip, sizes)
    assert np.all(sim.flow_sample.deviation_l1 <= rhs)


def test_eps_heter_generic_analytic_and_sampled():
    params = PricingParams(s_cap=2, q_cap=1, h_cap=1, q0=1.0, d=2.0,
                           sigma=0.5, c_max=1.0,
                           coeffs=two_type_coefficients(6, 0.5, (0.1, 0.7),
                                                        (0.2, 0.1, 0.1, 0.05)))
    part = GroupPartition(np.zeros(6, dtype=np.int64), 1)
    hat, _, _ = build_pricing_mpmfg(params, part, 2)
    game = build_n_player(params, 2)
    exact = eps_heter_generic(game, hat, mode="analytic")
    assert not exact.sampled
    assert exact.eps_t_r.shape == (3,)
    assert exact.eps_t_p.shape == (2,)
    assert np.all(exact.eps_t_p == 0.0)  # transitions ignore the costs
    assert exact.eps_heter == pytest.approx(2.0 * exact.eps_t_r.sum())

    low = eps_heter_generic(game, hat, mode="sampled", n_samples=32, seed=1)
    assert low.sampled
    assert low.eps_heter <= exact.eps_heter + 1e-12

    with pytest.raises(ValueError):
        eps_heter_generic(game, hat, mode="guess")
    with pytest.raises(ValueError):
        eps_heter_generic(game, hat, mode="sampled", n_samples=0)


def test_eps_heter_analytic_requires_hook():
    rng = np.random.default_rng(37)
    game, _ = random_mft(rng)
    flat = to_nplayer(game)
    # a flattened game certifies exactly against its own homogenization ...
    exact = eps_heter_generic(flat, game, mode="analytic")
    assert exact.eps_heter == 0.0
    # ... and refuses closed forms against anything else
    other, _ = random_mft(np.random.default_rng(38))
    with pytest.raises(ValueError):
        eps_heter_generic(flat, other, mode="analytic")
    # games without a hook must fall back to sampling
    import dataclasses
    bare = dataclasses.replace(flat, analytic_deviations=None)
    with pytest.raises(ValueError, match="sampled"):
        eps_heter_generic(bare, game, mode="analytic")
    est = eps_heter_generic(flat, game, mode="sampled", n_samples=8, seed=0)
    # a game sampled against its own homogenization shows zero deviation
    assert est.eps_heter <= 1e-10


def test_eps_heter_parametric_properties():
    rng = np.random.default_rng(41)
    part = GroupPartition(np.array([0, 0, 0, 1, 1, 1]), 2)
    th = rng.normal(size=(6, 3)) * 0.3
    lip = LipschitzProfile(w_r=[1.0, 1.0], w_p=[0.0, 0.0], rbar_max=1.0,
                           w_d=2.0, d_max=10.0)
    val = eps_heter_parametric(th, part, lip, horizon=4)
    assert val >= 0.0

    # permuting players inside their groups changes nothing
    perm = np.array([2, 0, 1, 5, 3, 4])
    val_perm = eps_heter_parametric(th[perm], part, lip, horizon=4)
    assert val_perm == pytest.approx(val, rel=1e-12)

    # within-group-constant parameters homogenize at (numerically) zero cost
    same = np.vstack([np.tile(rng.normal(size=3), (3, 1)),
                      np.tile(rng.normal(size=3), (3, 1))])
    assert eps_heter_parametric(same, part, lip, horizon=4) < 1e-12

    # scaling the spread scales the bound linearly
    val2 = eps_heter_parametric(2.0 * th, part, lip, horizon=4)
    assert val2 == pytest.approx(2.0 * val, rel=1e-12)

    with pytest.raises(ValueError):
        eps_heter_parametric(th[:, 0], part, lip, horizon=4)
    tight = LipschitzProfile(w_r=[1.0, 1.0], w_p=[0.0, 0.0], rbar_max=1.0,
                             w_d=2.0, d_max=1e-6)
    with pytest.raises(ValueError):
        eps_heter_parametric(th, part, tight, horizon=4)


def test_heter_estimate_validation():
    with pytest.raises(ValueError):
        HeterEstimate(eps_t_r=np.zeros(3), eps_t_p=np.zeros(3), eps_heter=0.0)
    with pytest.raises(ValueError):
        HeterEstimate(eps_t_r=-np.ones(3), eps_t_p=np.zeros(2), eps_heter=0.0)
    ok = HeterEstimate(eps_t_r=np.ones(3), eps_t_p=np.zeros(2), eps_heter=6.0)
    assert not ok.sampled


def test_assemble_and_report_roundtrip(tmp_path):
    sp = Spaces(n_states=2, n_actions=2, horizon=2)
    lip = LipschitzProfile(w_r=[1.0, 0.5], w_p=[0.1, 0.0], rbar_max=2.0)
    heter = HeterEstimate(eps_t_r=np.array([0.1, 0.2, 0.3]),
                          eps_t_p=np.array([0.0, 0.05]), eps_heter=1.0)
    rep = assemble(sp, lip, [10, 20], eps_solver=0.25, heter=heter)
    mf = eps_mf_theorem(sp, lip, [10, 20])
    assert rep.eps_mf == mf.explicit
    assert rep.total == pytest.approx(0.25 + mf.explicit + 1.0)
    assert rep.provenance == "explicit_appendix"
    d = rep.to_dict()
    assert set(d) == {"eps_solver", "eps_mf", "eps_heter", "total",
                      "provenance", "heter_sampled", "eps_t_R", "eps_t_P",
                      "flow_deviation_rhs"}
    assert d["eps_t_R"] == [0.1, 0.2, 0.3]

    gen = assemble(sp, lip, [10, 20], eps_solver=0.0,
                   provenance="theorem_generic")
    assert gen.eps_mf == mf.generic
    assert gen.eps_heter == 0.0

    out = tmp_path / "curves.csv"
    write_bound_curves_csv(rep, out)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "t,eps_t_R,eps_t_P,flow_rhs_0,flow_rhs_1"
    assert len(lines) == 4
    assert lines[3].split(",")[2] == ""  # final period has no transition gap

    with pytest.raises(ValueError):
        assemble(sp, lip, [10, 20], eps_solver=-0.1)
    with pytest.raises(ValueError):
        assemble(sp, lip, [10, 20], eps_solver=0.0, provenance="folklore")
    short = HeterEstimate(eps_t_r=np.zeros(2), eps_t_p=np.zeros(1),
                          eps_heter=0.0)
    with pytest.raises(ValueError):
        assemble(sp, lip, [10, 20], eps_solver=0.0, heter=short)


def test_bound_report_total_consistency_enforced():
    with pytest.raises(ValueError):
        BoundReport(eps_mf=1.0, eps_heter=1.0, eps_solver=1.0, total=4.0,
                    eps_t_r=np.zeros(3), eps_t_p=np.zeros(2),
                    flow_deviation_rhs=np.zeros((3, 1)),
                    provenance="explicit_appendix")


def test_representative_threshold_behaviour():
    p = PricingParams(s_cap=2, q_cap=2, h_cap=1, q0=1.0, d=2.0, sigma=0.5,
                      c_max=3.0)
    n1 = representative_threshold(p, 0.5, (0.5, 1.0), horizon=3)
    assert n1 > 0
    # wider cost gaps and balanced shares both lower the threshold
    assert representative_threshold(p, 0.5, (0.5, 2.0), horizon=3) < n1
    assert representative_threshold(p, 0.1, (0.5, 1.0), horizon=3) > n1
    # quadratic in the gap, inverse in alpha(1-alpha)
    wide = representative_threshold(p, 0.5, (0.5, 1.5), horizon=3)
    assert n1 / wide == pytest.approx(4.0, rel=1e-12)

    with pytest.raises(ValueError):
        representative_threshold(p, 0.0, (0.5, 1.0), horizon=3)
    with pytest.raises(ValueError):
        representative_threshold(p, 0.5, (1.0, 1.0), horizon=3)
    with pytest.raises(ValueError):
        representative_threshold(p, 0.5, (0.5, 5.0), horizon=3)
    weak = PricingParams(s_cap=2, q_cap=2, h_cap=1, q0=1.0, d=2.0,
                         sigma=0.5, c_max=0.1)
    with pytest.raises(ValueError, match="requires"):
        representative_threshold(weak, 0.5, (0.01, 0.05), horizon=3)


def test_partition_forms():
    sp = Spaces(n_states=3, n_actions=6, horizon=3)
    lip = LipschitzProfile(w_r=[16.0], w_p=[0.0], rbar_max=39.0)
    c = c_theorem_scalar(sp, lip)
    root_sa = math.sqrt(18.0)

    val = eps_mf_partition_micp(sp, lip, [4.0, 9.0])
    coef = 39.0 * c * root_sa * (16.0 / 13.0 + 1.0 / math.sqrt(13.0))
    assert val == pytest.approx(coef * 5.0, rel=1e-12)

    # empty groups contribute nothing once N is pinned
    with_empty = eps_mf_partition_micp(sp, lip, [4.0, 0.0, 9.0], n_players=13)
    assert with_empty == pytest.approx(val, rel=1e-12)

    cor = eps_mf_partition_corollary(sp, lip, [4.0, 9.0])
    assert cor > 0
    van = eps_mf_partition_vanishing(sp, lip, n_players=13, n_groups=2)
    assert van > 0
    # vanishing form is monotone in K and decays in N
    assert eps_mf_partition_vanishing(sp, lip, 13, 3) > van
    assert eps_mf_partition_vanishing(sp, lip, 13 * 100, 2) < van

    two = LipschitzProfile(w_r=[1.0, 1.0], w_p=[0.0, 0.0], rbar_max=1.0)
    for fn in (eps_mf_partition_corollary, eps_mf_partition_micp):
        with pytest.raises(ValueError):
            fn(sp, two, [4.0, 9.0])
    with pytest.raises(ValueError):
        eps_mf_partition_vanishing(sp, two, 13, 2)
    with pytest.raises(ValueError):
        eps_mf_partition_micp(sp, lip, [-1.0, 9.0])


def test_estimate_lipschitz_lower_bounds_declared_constants():
    for seed in range(4):
        rng = np.random.default_rng(seed + 100)
        game, lip = random_mft(rng, n_players=5, n_states=2, n_actions=2,
                               horizon=2, n_groups=2)
        w_r_low, w_p_low = estimate_lipschitz(game, n_samples=48, seed=seed)
        assert np.all(w_r_low <= lip.w_r + 1e-9)
        assert np.all(w_p_low <= lip.w_p + 1e-9)
        assert np.any(w_r_low > 0)
    with pytest.raises(ValueError):
        estimate_lipschitz(to_nplayer(game))


def test_constant_table_validation():
    sp = Spaces(n_states=2, n_actions=2, horizon=1)
    lip = LipschitzProfile(w_r=[1.0], w_p=[0.0], rbar_max=1.0)
    good = constant_table(sp, lip)
    with pytest.raises(ValueError):
        ConstantTable(spaces=sp, c_pair=good.c_pair,
                      c_single=good.c_single[:, :0],
                      c_pair_tilde=good.c_pair_tilde,
                      c_single_tilde=good.c_single_tilde,
                      f=good.f, bar_c=good.bar_c)
    bad_init = good.c_pair.copy()
    bad_init[0] = 1.0
    with pytest.raises(ValueError):
        ConstantTable(spaces=sp, c_pair=bad_init, c_single=good.c_single,
                      c_pair_tilde=good.c_pair_tilde,
                      c_single_tilde=good.c_single_tilde,
                      f=good.f, bar_c=good.bar_c)
