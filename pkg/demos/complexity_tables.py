"""Print the candidate-vector counts that per-group precoding saves.

A full N_t-stream precoder needs to sum over M**(2 N_t) pairs of symbol
vectors; splitting the streams into groups of N_s needs S * M**(2 N_s).
"""

from fa_precode.complexity import addition_count, complete_count, format_count

for name, M in (("BPSK", 2), ("QPSK", 4), ("16-QAM", 16)):
    print(f"\n{name}")
    print(f"{'N_t':>5} {'N_s=2':>10} {'N_s=4':>10} {'full':>14}")
    for n_t in (4, 8, 16, 32):
        print(f"{n_t:5d} {addition_count(M, n_t, 2):10d} {addition_count(M, n_t, 4):10d} "
              f"{format_count(complete_count(M, n_t)):>14}")
