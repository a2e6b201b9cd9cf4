"""Recover the reflection regulator of a random walk in [0, 1] from boundary local times."""

from rbsde import local_time_study

for N, err in local_time_study([2**8, 2**10, 2**12], n_paths=100, seed=7):
    print(f"N = {N:5d}  mean relative RMSE = {err:.4f}")
