#!/usr/bin/env python3
"""Independent oracle for the lattice-probe occupancy histogram.

Config: L=16, N=8, T=2^19, N_min=16, N_max=1024, probe resolution 64.

    python3 collision_oracle.py > hash_stats_probe64.csv
"""
from collections import Counter

import numpy as np

L, N, T, NMIN, NMAX, PROBE = 16, 8, 2**19, 16, 1024, 64
PRIMES = (1, 2654435761, 805459861)


def iroot(x, n):
    lo, hi = 0, 1
    while hi**n <= x:
        hi *= 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if mid**n <= x:
            lo = mid
        else:
            hi = mid
    return lo


def resolutions():
    d = L - 1
    return [iroot(NMIN ** (d - e) * NMAX**e, d) for e in range(L)]


def main():
    res = resolutions()
    w = L // N
    side = np.arange(PROBE + 1, dtype=np.uint64)
    k, j, i = np.meshgrid(side, side, side, indexing="ij")
    lattice = [i.ravel(), j.ravel(), k.ravel()]
    print("table,capacity,probes,hits,entries")
    for t in range(N):
        finest = res[t * w + w - 1]
        cap = min(T, (finest + 1) ** 3)
        hits = np.zeros(cap, dtype=np.int64)
        probes = 0
        for lvl in range(t * w, t * w + w):
            r = res[lvl]
            h = np.zeros_like(lattice[0])
            for c, p in zip(lattice, PRIMES):
                corner = c * np.uint64(r) // np.uint64(PROBE)
                moved = corner * np.uint64(finest) // np.uint64(r)
                h ^= (moved * np.uint64(p)) % np.uint64(2**32)
            np.add.at(hits, (h % np.uint64(cap)).astype(np.int64), 1)
            probes += h.size
        for hv, n in sorted(Counter(hits.tolist()).items()):
            print(f"{t + 1},{cap},{probes},{hv},{n}")


if __name__ == "__main__":
    main()
