import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thzhbf.channel import ChannelRealization, generate_channel
from thzhbf.config import Structure, SystemConfig
from thzhbf.evalcore import (ConstraintViolation, HybridPrecoder, PhaseCodebook, RankDeficientError,
                             decoupled_rate, digital_precoder, quantize_phase, spectral_efficiency,
                             check_analog, unit_entries, update_digital)
from thzhbf.solver_fc import init_fc

from conftest import DESK, cofactor_det, crandn


def raw_channel(h, cfg):
    return ChannelRealization(np.asarray(h, dtype=complex), None, cfg)


def random_precoder(cfg, seed):
    ch = generate_channel(cfg.replace(rng_seed=seed))
    f_rf = init_fc(cfg, PhaseCodebook(cfg.bits), seed=seed)
    return ch, HybridPrecoder(f_rf, update_digital(ch, f_rf), Structure.FULLY_CONNECTED)


class TestCodebook:
    @pytest.mark.parametrize("bits", [1, 2, 3, 5])
    def test_layout(self, bits):
        ph = PhaseCodebook(bits).phases
        assert ph[0] == 0 and np.all(np.diff(ph) > 0)
        assert np.allclose(np.diff(ph), 2 * np.pi / 2 ** bits)

    def test_nearest(self):
        assert quantize_phase(0.8 * np.pi, PhaseCodebook(2)) == pytest.approx(np.pi)

    def test_wraparound(self):
        assert quantize_phase(2 * np.pi - 1e-9, PhaseCodebook(2)) == 0.0
        assert quantize_phase(-0.1, PhaseCodebook(2)) == 0.0

    def test_tie_goes_to_smaller(self):
        assert quantize_phase(np.pi / 4, PhaseCodebook(2)) == 0.0
        assert quantize_phase(3 * np.pi / 4, PhaseCodebook(2)) == pytest.approx(np.pi / 2)

    def test_needs_a_bit(self):
        with pytest.raises(ValueError):
            PhaseCodebook(0)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(1, 8), st.floats(-50.0, 50.0))
    def test_member_and_close(self, bits, phi):
        cb = PhaseCodebook(bits)
        q = quantize_phase(phi, cb)
        assert bool(cb.contains(q))
        d = abs(math.remainder(q - phi, 2 * np.pi))
        assert d <= np.pi / 2 ** bits + 1e-12


class TestDigital:
    def test_diagonal_channel(self):
        cfg = SystemConfig(N_t=4, N_r=4, N_rf_t=4, N_rf_r=4, N_s=2, K=1, P_t=1.0)
        h = np.diag([3.0, 1.0, 2.0, 0.5])[None]
        # orthogonal columns with constant modulus: the 4-point DFT
        f_rf = np.exp(2j * np.pi * np.outer(np.arange(4), np.arange(4)) / 4) / 2
        f_bb = digital_precoder(h, f_rf, 2, 1.0)
        w = f_rf @ f_bb[0]
        assert abs(np.linalg.norm(w) ** 2 - 2.0) < 1e-9
        # the combined precoder spans the two strongest antennas, e_1 and e_3
        span = np.abs(w) ** 2
        assert np.allclose(span.sum(axis=1), [1, 0, 1, 0], atol=1e-9)

    def test_single_stream_scalar(self):
        cfg = SystemConfig(N_t=4, N_r=2, N_rf_t=1, N_rf_r=1, N_s=1, K=3, P_t=2.5)
        ch = generate_channel(cfg)
        f_rf = unit_entries(np.zeros((4, 1)), 4)
        f_bb = update_digital(ch, f_rf)
        assert f_bb.shape == (3, 1, 1)
        assert np.allclose(np.sum(np.abs(f_rf @ f_bb) ** 2, axis=(1, 2)), 2.5)

    def test_zero_channel(self):
        cfg = DESK
        f_rf = init_fc(cfg, PhaseCodebook(3))
        ch = raw_channel(np.zeros((cfg.K, cfg.N_r, cfg.N_t)), cfg)
        prec = HybridPrecoder(f_rf, update_digital(ch, f_rf), cfg.structure)
        power = np.sum(np.abs(prec.combined()) ** 2, axis=(1, 2))
        assert np.allclose(power, cfg.N_s * cfg.P_t, atol=1e-9)
        assert spectral_efficiency(ch, prec, PhaseCodebook(3))[0] == 0.0

    def test_rank_deficiency_named(self):
        f = unit_entries(np.zeros((4, 2)), 4)
        with pytest.raises(RankDeficientError, match="column"):
            digital_precoder(np.ones((1, 2, 4)), f, 1, 1.0)
        f[:, 1] = 0
        with pytest.raises(RankDeficientError, match="column 1"):
            digital_precoder(np.ones((1, 2, 4)), f, 1, 1.0)

    @pytest.mark.parametrize("seed", range(10))
    def test_power_constraint(self, seed):
        ch, prec = random_precoder(DESK, seed)
        power = np.sum(np.abs(prec.combined()) ** 2, axis=(1, 2))
        assert np.max(np.abs(power - DESK.N_s * DESK.P_t)) < 1e-9

    @pytest.mark.parametrize("seed", range(5))
    def test_refresh_beats_other_digital(self, seed, rng):
        """Optimal F_BB for fixed F_RF is no worse than any other power-normalized F_BB."""
        cfg = DESK
        ch, prec = random_precoder(cfg, seed)
        best = spectral_efficiency(ch, prec)[0]
        for _ in range(20):
            f_bb = crandn(rng, cfg.K, cfg.N_rf_t, cfg.N_s)
            p = np.sum(np.abs(prec.f_rf @ f_bb) ** 2, axis=(1, 2))
            f_bb *= np.sqrt(cfg.N_s * cfg.P_t / p)[:, None, None]
            other = spectral_efficiency(ch, HybridPrecoder(prec.f_rf, f_bb, prec.structure))[0]
            assert other <= best + 1e-9


class TestRate:
    def test_scalar_shannon(self):
        cfg = SystemConfig(N_t=1, N_r=1, N_rf_t=1, N_rf_r=1, N_s=1, K=1, P_t=1.0)
        ch = raw_channel([[[math.sqrt(3.0)]]], cfg)
        prec = HybridPrecoder(np.ones((1, 1), dtype=complex), np.ones((1, 1, 1), dtype=complex),
                              Structure.FULLY_CONNECTED)
        assert spectral_efficiency(ch, prec, PhaseCodebook(1))[0] == pytest.approx(2.0, abs=1e-12)

    def test_two_by_two_cofactor(self, rng):
        cfg = SystemConfig(N_t=2, N_r=2, N_rf_t=2, N_rf_r=2, N_s=2, K=1, P_t=1.0)
        h = crandn(rng, 1, 2, 2)
        f_rf = unit_entries([[0.0, 0.0], [0.0, np.pi]], 2)
        f_bb = digital_precoder(h, f_rf, 2, 1.0)
        prec = HybridPrecoder(f_rf, f_bb, Structure.FULLY_CONNECTED)
        rate = spectral_efficiency(raw_channel(h, cfg), prec, PhaseCodebook(1))[0]
        w = f_rf @ f_bb[0]
        m = np.eye(2) + cfg.snr * h[0] @ w @ w.conj().T @ h[0].conj().T
        assert abs(rate - np.log2(np.real(cofactor_det(m)))) < 1e-9

    @pytest.mark.parametrize("seed", range(5))
    def test_unitary_invariance(self, seed, rng):
        ch, prec = random_precoder(DESK, seed)
        q, _ = np.linalg.qr(crandn(rng, DESK.N_s, DESK.N_s))
        rot = HybridPrecoder(prec.f_rf, prec.f_bb @ q, prec.structure)
        assert abs(spectral_efficiency(ch, rot)[0] - spectral_efficiency(ch, prec)[0]) < 1e-9

    def test_summation_order(self):
        ch, prec = random_precoder(DESK, 2)
        rate, per_k = spectral_efficiency(ch, prec)
        assert abs(rate - math.fsum(per_k[::-1]) / per_k.size) < 1e-12


class TestConstraints:
    def _prec(self, structure=Structure.FULLY_CONNECTED):
        cfg = DESK.replace(structure=structure)
        ch = generate_channel(cfg)
        if structure is Structure.FULLY_CONNECTED:
            f_rf = init_fc(cfg, PhaseCodebook(3))
        else:
            f_rf = np.zeros((16, 4), dtype=complex)
            for i in range(4):
                f_rf[4 * i:4 * i + 4, i] = 0.25
        return ch, HybridPrecoder(f_rf, update_digital(ch, f_rf), structure)

    def test_modulus(self):
        _, p = self._prec()
        p.f_rf[3, 1] *= 1.01
        with pytest.raises(ConstraintViolation, match="modulus"):
            p.check(PhaseCodebook(3), DESK.P_t)

    def test_codebook(self):
        _, p = self._prec()
        p.f_rf[0, 0] *= np.exp(0.1j)
        with pytest.raises(ConstraintViolation, match="codebook"):
            p.check(PhaseCodebook(3), DESK.P_t)
        check_analog(p.f_rf, p.structure, None)

    def test_block_diagonal(self):
        _, p = self._prec(Structure.PARTIALLY_CONNECTED)
        p.check(PhaseCodebook(3), DESK.P_t)
        p.f_rf[0, 1] = 0.25
        with pytest.raises(ConstraintViolation, match="block-diagonal"):
            p.check(PhaseCodebook(3), DESK.P_t)

    def test_row_norm(self):
        _, p = self._prec(Structure.PARTIALLY_CONNECTED)
        p.structure = Structure.DYNAMIC_SUBARRAY
        p.check(PhaseCodebook(3), DESK.P_t)
        p.f_rf[0, 1] = 0.25
        with pytest.raises(ConstraintViolation, match="row-0-norm"):
            p.check(PhaseCodebook(3), DESK.P_t)

    def test_power(self):
        _, p = self._prec()
        p.f_bb = 1.1 * p.f_bb
        with pytest.raises(ConstraintViolation, match="power"):
            p.check(PhaseCodebook(3), DESK.P_t)


class TestDecoupled:
    @pytest.mark.parametrize("seed", range(10))
    def test_sylvester_identity(self, seed):
        ch, prec = random_precoder(DESK, seed)
        assert abs(decoupled_rate(ch, prec.f_rf, prec.f_bb) - spectral_efficiency(ch, prec)[0]) < 1e-4

    def test_gap_shrinks_linearly(self):
        cfg = SystemConfig(N_t=2, N_r=2, N_rf_t=2, N_rf_r=2, N_s=2, K=1, P_t=1.0)
        ch = generate_channel(cfg.replace(rng_seed=4))
        f_rf = unit_entries([[0.0, 0.0], [0.0, np.pi]], 2)
        f_bb = update_digital(ch, f_rf)
        exact = spectral_efficiency(ch, HybridPrecoder(f_rf, f_bb, cfg.structure), PhaseCodebook(1))[0]
        gaps = [abs(decoupled_rate(ch, f_rf, f_bb, a) - exact) for a in (1e-4, 1e-6, 1e-8)]
        assert gaps[0] > gaps[1] > gaps[2]
        assert 50 < gaps[0] / gaps[1] < 200 and 50 < gaps[1] / gaps[2] < 200

    def test_zero_digital(self):
        cfg = DESK
        ch = generate_channel(cfg)
        f_rf = init_fc(cfg, PhaseCodebook(3))
        f_bb = np.zeros((cfg.K, cfg.N_rf_t, cfg.N_s), dtype=complex)
        alpha = 1e-8
        val = decoupled_rate(ch, f_rf, f_bb, alpha)
        hf = ch.h @ f_rf
        hnorm = np.max(np.linalg.norm(np.swapaxes(hf, -1, -2).conj() @ hf, ord=2, axis=(1, 2)))
        bound = cfg.N_rf_t * np.log2(1 + alpha * cfg.N_rf_t * cfg.snr * hnorm)
        assert 0 <= val <= bound

    def test_scalar(self):
        cfg = SystemConfig(N_t=1, N_r=1, N_rf_t=1, N_rf_r=1, N_s=1, K=1, P_t=1.0)
        ch = raw_channel([[[1.0]]], cfg)
        q = 0.7 ** 2 + 1e-3
        val = decoupled_rate(ch, np.ones((1, 1)), np.full((1, 1, 1), 0.7), 1e-3)
        assert val == pytest.approx(np.log2(q) + np.log2(1 / q + 1), abs=1e-12)

    def test_alpha_positive(self):
        ch, prec = random_precoder(DESK, 0)
        with pytest.raises(ValueError):
            decoupled_rate(ch, prec.f_rf, prec.f_bb, 0.0)
