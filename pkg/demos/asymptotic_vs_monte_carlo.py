"""How close is the large-system MI to the ergodic MI of a small array?

Optimizes a per-group QPSK precoder on random jointly correlated 4x4
Rician statistics, then estimates the exact ergodic MI of the resulting
precoder by Monte Carlo. Takes a couple of minutes on one core.
"""

from fa_precode.channel import random_statistics
from fa_precode.constellation import build_constellation
from fa_precode.metrics import NoiseExpectation, exact_ergodic_mi
from fa_precode.optimize import OptimizeOptions, optimize
from fa_precode.structure import assemble_precoder

qpsk = build_constellation("qpsk")
stats = random_statistics(4, 4, K=1.0, seed=1)
noise = NoiseExpectation(samples=500, seed=5)

print(" SNR   asymptotic   Monte Carlo (+- se)   rel. gap")
for snr_db in (0, 5, 10, 15):
    P = 10 ** (snr_db / 10)
    res = optimize(stats, qpsk, P, N_s=2, opts=OptimizeOptions(restarts=1, seed=1))
    B = assemble_precoder(res.precoder)
    mc = exact_ergodic_mi(stats, B, qpsk, channel_samples=500, ne=noise, seed=7)
    asy = res.mi.total_bits
    print(f"{snr_db:3d} dB  {asy:9.3f}   {mc.mi_bits:9.3f} (+- {mc.std_err:.3f})"
          f"   {abs(asy - mc.mi_bits) / mc.mi_bits:8.2%}")
