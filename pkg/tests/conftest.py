"""Shared oracles and fixtures for the sfk test suite.

The oracles here are deliberately naive (triple-loop matmul, mask-then-multiply
references) so kernel tests never compare an implementation against itself.
"""

import numpy as np
import pytest
from hypothesis import settings

import sfk

settings.register_profile("sfk", deadline=None)
settings.load_profile("sfk")


def gemm_naive(a, b):
    """Triple-loop matmul oracle, accumulating along k in index order."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n), dtype=np.float64)
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for kk in range(k):
                acc += a[i, kk] * b[kk, j]
            out[i, j] = acc
    return out


def dealt_bank(d_model, d_ffn, m, num_experts, seed=0):
    """Build an ExpertBank whose column sets are dealt round-robin as 4-column
    packs inside every m-wide window.

    With num_experts == m // 4 every window contains exactly one pack from each
    expert, so any non-empty routed expert set leaves at least 4 allowed
    columns in every window.  That makes the bank usable with moe_to_venom for
    arbitrary routings, which random clustered banks do not guarantee.
    """
    assert d_ffn % m == 0 and m % 4 == 0
    packs_per_window = m // 4
    assert packs_per_window % num_experts == 0 or num_experts % packs_per_window == 0
    column_sets = [[] for _ in range(num_experts)]
    pack = 0
    for start in range(0, d_ffn, 4):
        window = start // m
        expert = (pack + window) % num_experts
        column_sets[expert].extend(range(start, start + 4))
        pack = (pack + 1) % packs_per_window
    means = sfk.rand_matrix(d_model, num_experts, seed=seed)
    means = means / np.linalg.norm(means, axis=0, keepdims=True)
    return sfk.ExpertBank(
        num_experts=num_experts,
        means=means,
        column_sets=[np.asarray(cs, dtype=np.int64) for cs in column_sets],
    )


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))
