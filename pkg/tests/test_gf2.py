import numpy as np
import pytest

from hdpolar import gf2
from hdpolar.gf2 import (BlockSingular, KernelError, LengthMismatch, NotSquare, Singular, encode, kron_power,
                         load_kernel, standard_form, tail_echelon, validate_kernel)


def _np_rank(rows, m):
    # Gaussian elimination on a dense array, independent of the bitmask code
    a = np.array([[(r >> k) & 1 for k in range(m)] for r in rows], dtype=np.uint8)
    rank = 0
    for col in range(m):
        piv = next((r for r in range(rank, a.shape[0]) if a[r, col]), None)
        if piv is None:
            continue
        a[[rank, piv]] = a[[piv, rank]]
        for r in range(a.shape[0]):
            if r != rank and a[r, col]:
                a[r] ^= a[rank]
        rank += 1
    return rank


def test_rank_matches_dense_elimination():
    rng = np.random.default_rng(0)
    for _ in range(300):
        m = int(rng.integers(1, 10))
        rows = [int(rng.integers(0, 1 << m)) for _ in range(int(rng.integers(1, 10)))]
        assert gf2.rank(rows) == _np_rank(rows, m)


def test_inverse_roundtrip_and_singular():
    rng = np.random.default_rng(1)
    for m in range(1, 12):
        G = gf2.random_invertible(m, rng)
        inv = gf2.inverse(G.rows, m)
        assert gf2.matmul(inv, G.rows) == [1 << k for k in range(m)]
        assert gf2.matmul(G.rows, inv) == [1 << k for k in range(m)]
    with pytest.raises(Singular):
        gf2.inverse([0b11, 0b11], 2)


def test_bits_helpers():
    assert gf2.bits_to_int([1, 0, 1]) == 5
    assert gf2.int_to_bits(5, 4) == [1, 0, 1, 0]
    assert gf2.parity(0b1011) == 1
    assert gf2.parity(0b1001) == 0


def test_validate_kernel_errors():
    with pytest.raises(NotSquare):
        validate_kernel([[1, 0], [1]])
    with pytest.raises(NotSquare):
        validate_kernel([])
    with pytest.raises(Singular):
        validate_kernel([[1, 1], [1, 1]])
    with pytest.raises(KernelError):
        validate_kernel([[2, 0], [0, 1]])
    with pytest.raises(KernelError):
        validate_kernel(np.eye(33, dtype=int))


def test_builtin_kernels(G2, G5, G6):
    assert G2.to_array().tolist() == [[1, 0], [1, 1]]
    assert G5.m == 5 and G6.m == 6
    for G in (G2, G5, G6):
        assert G.is_lower_triangular()
    with pytest.raises(KeyError):
        gf2.builtin_kernel("G7")


def test_standard_form_identity_block(G6):
    for i in range(1, 7):
        S = standard_form(G6, i)
        assert S.rows[:i] == G6.rows[:i]
        tail = S.to_array()[i:, i:]
        assert np.array_equal(tail, np.eye(6 - i, dtype=tail.dtype))
        # same row space for the tail rows
        assert gf2.rank(list(G6.rows[i:]) + list(S.rows[i:])) == 6 - i


def test_standard_form_block_singular_and_echelon():
    G = validate_kernel([[0, 1], [1, 0]])
    with pytest.raises(BlockSingular):
        standard_form(G, 1)
    S, piv = tail_echelon(G, 1)
    assert piv == [0]
    assert S.entry(1, 0) == 1
    rng = np.random.default_rng(3)
    for _ in range(100):
        m = int(rng.integers(2, 9))
        G = gf2.random_invertible(m, rng)
        i = int(rng.integers(1, m + 1))
        S, piv = tail_echelon(G, i)
        assert len(piv) == m - i
        assert gf2.rank(list(G.rows[i:]) + list(S.rows[i:])) == m - i
        for r, p in enumerate(piv):
            col = [S.entry(i + t, p) for t in range(m - i)]
            assert col == [int(t == r) for t in range(m - i)]


def test_encode_matches_kron(G2, G6):
    rng = np.random.default_rng(4)
    for G, ns in ((G2, range(0, 6)), (G6, range(0, 3)), (gf2.random_invertible(3, rng), range(0, 4))):
        for n in ns:
            N = G.m**n
            u = rng.integers(0, 2, size=(7, N), dtype=np.uint8)
            ref = (u.astype(np.int64) @ kron_power(G, n).astype(np.int64)) & 1
            assert np.array_equal(encode(u, G, n), ref)
            assert np.array_equal(encode(u[0], G, n), ref[0])
    with pytest.raises(LengthMismatch):
        encode(np.zeros(5), G2, 2)


def test_kernel_file_roundtrip(tmp_path, G6):
    p = tmp_path / "k.txt"
    p.write_text("# comment\n" + gf2.format_kernel_text(G6))
    assert load_kernel(str(p)) == G6
    assert load_kernel("g6") == G6
    p.write_text("3\n1 0 0\n1 1 0\n")
    with pytest.raises(NotSquare):
        load_kernel(str(p))


def test_digest_and_hex(G6):
    assert G6.digest() == validate_kernel(G6.to_array()).digest()
    assert G6.digest() != gf2.builtin_kernel("G5").digest()
    assert len(G6.rows_hex()) == 6


def test_split_known_offsets(G6):
    sp = gf2.split(G6, 4)
    knowns = [1, 0, 1]
    ref = (np.array(knowns) @ G6.to_array()[:3]) % 2
    assert sp.known_offsets(knowns) == ref.tolist()
    with pytest.raises(IndexError):
        gf2.split(G6, 7)


def test_random_lower_triangular():
    rng = np.random.default_rng(5)
    for m in range(1, 10):
        G = gf2.random_lower_triangular(m, rng)
        assert G.is_lower_triangular()
        assert gf2.rank(G.rows) == m
