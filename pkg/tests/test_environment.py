import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from platoonrl import environment as env
from platoonrl.mdp import Action

from conftest import make_gains

SIGMA_C_MW = 10 ** (-109 / 10)
SIGMA_D_MW = 10 ** (-114 / 10)


def sig(x, digits=4):
    return float(f"{x:.{digits - 1}e}")


def test_unit_round_trip():
    assert env.dbm_to_mw(23.0) == pytest.approx(199.5262315, rel=1e-9)
    for dbm in (-114.0, -100.0, 0.0, 5.0, 23.0):
        assert env.mw_to_dbm(env.dbm_to_mw(dbm)) == pytest.approx(dbm, rel=1e-9)


def test_noise_powers():
    cfg = env.EnvConfig()
    assert cfg.bs_noise_dbm == pytest.approx(-109.0)
    assert env.dbm_to_mw(cfg.bs_noise_dbm) == pytest.approx(SIGMA_C_MW)
    assert cfg.payload_bits == 8 * 1060 * 8
    assert cfg.horizon == 10
    assert cfg.n_actions == 4 * cfg.n_v2n


def test_v2n_sinr_hand_value():
    cfg = env.EnvConfig(n_v2n=1, n_platoons=1)
    g = make_gains(cc=1e-10, dc=1.0)
    a = env.Assignment.from_choices([0], [-np.inf], 1)
    sinr = env.compute_v2n_sinr(cfg, g, a, 0)
    assert sig(sinr) == sig(199.5262315e-10 / SIGMA_C_MW)
    assert sig(sinr) == 1585.0
    np.testing.assert_allclose(env.v2n_sinrs(cfg, g, a), [sinr], rtol=1e-12)


def test_v2v_sinr_hand_value():
    # 23 dBm leader, direct 1e-8, V2N user interference gain 1e-12, noise -114 dBm (3.981e-12 mW)
    cfg = env.EnvConfig(n_v2n=1, n_platoons=1)
    g = make_gains(dd_direct=1e-8, cd=1e-12)
    a = env.Assignment.from_choices([0], [23.0], 1)
    sinr = env.compute_v2v_sinr(cfg, g, a, 0, 0)
    expect = 199.5262315e-8 / (199.5262315e-12 + SIGMA_D_MW)
    assert sig(sinr) == sig(expect) == 9804.0
    np.testing.assert_allclose(env.v2v_sinrs(cfg, g, a)[0], sinr, rtol=1e-12)


def test_silent_level_gives_negligible_rate():
    cfg = env.EnvConfig(n_v2n=1, n_platoons=1)
    g = make_gains(dd_direct=1e-8, cd=1e-12)
    a = env.Assignment.from_choices([0], [-100.0], 1)
    sinr = env.compute_v2v_sinr(cfg, g, a, 0, 0)
    assert sinr < 1e-6
    assert env.achievable_rate(sinr, 1e6) < 1.0


def test_rate_hand_value():
    sinr = 10 ** 3.7
    assert sig(sinr) == 5012.0
    assert sig(float(env.achievable_rate(sinr, 1e6))) == 1.229e7
    assert env.achievable_rate(0.0, 1e6) == 0.0


def test_orthogonal_sub_bands_do_not_interfere():
    cfg = env.EnvConfig(n_v2n=2, n_platoons=2)
    g = make_gains(n_platoons=2, n_v2n=2, dd_direct=1e-8, dd_cross=1e-9, cd=1e-12, dc=1e-11)
    split = env.Assignment.from_choices([0, 1], [23.0, 23.0], 2)
    shared = env.Assignment.from_choices([0, 0], [23.0, 23.0], 2)
    alone = 199.5262315e-8 / (199.5262315e-12 + SIGMA_D_MW)
    assert env.compute_v2v_sinr(cfg, g, split, 0, 0) == pytest.approx(alone)
    assert env.compute_v2v_sinr(cfg, g, shared, 0, 0) < alone
    # an inactive co-channel platoon is ignored
    assert env.compute_v2v_sinr(cfg, g, shared, 0, 0, active=[True, False]) == pytest.approx(alone)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 4), m=st.integers(1, 2))
def test_vectorized_sinr_matches_scalar(seed, n, m):
    cfg = env.EnvConfig(n_v2n=m, n_platoons=n)
    ep = env.reset_episode(cfg, np.random.default_rng(seed))
    rng = np.random.default_rng(seed + 1)
    a = env.Assignment.from_choices(rng.integers(0, m, n), rng.choice(cfg.power_levels_dbm, n), m)
    active = rng.random(n) < 0.7
    vc = env.v2n_sinrs(cfg, ep.gains, a, active)
    vd = env.v2v_sinrs(cfg, ep.gains, a, active)
    for k in range(m):
        assert vc[k] == pytest.approx(env.compute_v2n_sinr(cfg, ep.gains, a, k, active), rel=1e-10)
    for p in range(n):
        for i in range(cfg.members_per_platoon):
            want = env.compute_v2v_sinr(cfg, ep.gains, a, p, i, active) if active[p] else 0.0
            assert vd[p, i] == pytest.approx(want, rel=1e-10)


@settings(max_examples=50, deadline=None)
@given(base=st.floats(1e-14, 1e-9), bump=st.floats(1.01, 100.0))
def test_sinr_decreases_with_interference(base, bump):
    cfg = env.EnvConfig(n_v2n=1, n_platoons=2)
    a = env.Assignment.from_choices([0, 0], [23.0, 10.0], 1)
    lo = make_gains(n_platoons=2, dd_direct=1e-8, dd_cross=base, cd=base, dc=base)
    hi = make_gains(n_platoons=2, dd_direct=1e-8, dd_cross=base * bump, cd=base, dc=base * bump)
    assert env.compute_v2v_sinr(cfg, hi, a, 0, 0) < env.compute_v2v_sinr(cfg, lo, a, 0, 0)
    assert env.compute_v2n_sinr(cfg, hi, a, 0) < env.compute_v2n_sinr(cfg, lo, a, 0)
    louder = env.Assignment.from_choices([0, 0], [23.0, 23.0], 1)
    assert env.compute_v2v_sinr(cfg, lo, louder, 0, 0) < env.compute_v2v_sinr(cfg, lo, a, 0, 0)


@settings(max_examples=50)
@given(sinr=st.floats(0.0, 1e9))
def test_rate_nonnegative_zero_iff_zero(sinr):
    r = float(env.achievable_rate(sinr, 1e6))
    assert r >= 0
    assert (r == 0) == (sinr == 0)


def _crafted_episode(rate_bps):
    """Single platoon, payload 2*1060 bytes, channels fixed so every member sees `rate_bps`."""
    cfg = env.EnvConfig(n_v2n=1, n_platoons=1, payload_bytes=2 * 1060)
    ep = env.reset_episode(cfg, np.random.default_rng(0))
    sinr = 2 ** (rate_bps / cfg.bandwidth_hz) - 1
    gains = make_gains(dd_direct=sinr * SIGMA_D_MW / env.dbm_to_mw(23.0), cd=0.0, cc=1e-10)
    ep.gains = gains
    ep._advance_fading = lambda: None
    return cfg, ep


def test_payload_hand_example():
    cfg, ep = _crafted_episode(12.29e6)
    assert cfg.payload_bits == 16960
    out = env.step(ep, [Action(0, 0)])
    np.testing.assert_allclose(out.v2v_rates, 12.29e6, rtol=1e-9)
    assert sig(out.payload.remaining_bits[0, 0]) == 4670.0
    assert not out.done and not env.delivery_success(out.payload).any()
    out = env.step(ep, [Action(0, 0)])
    assert env.delivery_success(out.payload).all()
    assert out.done and out.payload.steps_elapsed == 2


def test_delivery_success_strict():
    p = env.PayloadState(np.array([[0.0, 1.0, 0.0]]), 10, np.array([True]))
    np.testing.assert_array_equal(env.delivery_success(p), [[True, False, True]])


def test_reset_state_and_determinism():
    cfg = env.EnvConfig(n_v2n=2)
    a = env.reset_episode(cfg, np.random.default_rng(5))
    b = env.reset_episode(cfg, np.random.default_rng(5))
    assert np.all(a.payload.remaining_bits == cfg.payload_bits)
    assert a.payload.steps_elapsed == 0 and a.payload.active.all()
    for f in ("cc", "dc", "dd", "cd"):
        np.testing.assert_array_equal(getattr(a.gains, f), getattr(b.gains, f))


def test_done_after_horizon_and_step_after_done_raises():
    cfg = env.EnvConfig(n_v2n=1, n_platoons=1, payload_bytes=10**7)
    ep = env.reset_episode(cfg, np.random.default_rng(1))
    for _ in range(cfg.horizon):
        assert not ep.done
        out = env.step(ep, [Action(0, 3)])
    assert out.done and out.payload.steps_elapsed == 10
    with pytest.raises(RuntimeError):
        env.step(ep, [Action(0, 3)])


def test_silent_platoons_give_interference_free_v2n():
    cfg = env.EnvConfig(n_v2n=2)
    ep = env.reset_episode(cfg, np.random.default_rng(8))
    out = env.step(ep, [Action(k % 2, 3) for k in range(cfg.n_platoons)])
    clean = ep.clean_v2n_history[-1]
    assert np.all(out.v2n_rates <= clean)
    np.testing.assert_allclose(out.v2n_rates, clean, rtol=1e-9)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), bytes_=st.sampled_from([1060, 2 * 1060, 6 * 1060, 12 * 1060]))
def test_payload_accounting_exact(seed, bytes_):
    cfg = env.EnvConfig(n_v2n=2, payload_bytes=bytes_)
    ep = env.reset_episode(cfg, np.random.default_rng(seed))
    rng = np.random.default_rng(seed + 7)
    while not ep.done:
        before = ep.payload.remaining_bits.copy()
        active = ep.payload.active.copy()
        acts = [Action(int(rng.integers(2)), int(rng.integers(4))) if active[n] else None
                for n in range(cfg.n_platoons)]
        out = env.step(ep, acts)
        expect = np.where(active[:, None], np.maximum(0.0, before - out.v2v_rates * 1e-3), before)
        np.testing.assert_array_equal(out.payload.remaining_bits, expect)
    assert np.all(ep.payload.remaining_bits >= 0)


def test_joint_action_validation():
    cfg = env.EnvConfig(n_v2n=1, n_platoons=2)
    with pytest.raises(ValueError):
        env.joint_action_to_assignment(cfg, [Action(0, 0)], [True, True])
    with pytest.raises(ValueError):
        env.joint_action_to_assignment(cfg, [Action(1, 0), Action(0, 0)], [True, True])
    with pytest.raises(ValueError):
        env.joint_action_to_assignment(cfg, [None, Action(0, 0)], [True, True])
    a = env.joint_action_to_assignment(cfg, [None, Action(0, 1)], [False, True])
    assert a.power_dbm[0] == -np.inf and a.power_dbm[1] == 10.0


def test_drain_covers_full_horizon():
    cfg = env.EnvConfig(n_v2n=1, payload_bytes=100)
    ep = env.reset_episode(cfg, np.random.default_rng(2))
    while not ep.done:
        env.step(ep, [Action(0, 0) if a else None for a in ep.payload.active])
    taken = ep.payload.steps_elapsed
    assert taken < cfg.horizon
    tail = ep.drain()
    assert len(tail) == cfg.horizon - taken
    assert ep.payload.steps_elapsed == cfg.horizon
    assert len(ep.v2n_history) == cfg.horizon
    np.testing.assert_array_equal(tail[-1], ep.clean_v2n_history[-1])
