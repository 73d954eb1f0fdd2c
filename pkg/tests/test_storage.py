import struct
import zlib

import numpy as np
import pytest

from conftest import refine_uniform
from mpcpart.errors import CorruptFile, VersionMismatch
from mpcpart.phase2 import Mode, RefineConfig, partition
from mpcpart.problem import ToleranceConfig
from mpcpart.problems.toy import toy_a, toy_b
from mpcpart.runtime import eval_explicit, eval_semi_explicit
from mpcpart.storage import (_bits, _unbits, dumps, field_count_size, load, loads,
                             reference_size, save)

TOL = ToleranceConfig(eps_a=0.01)


@pytest.fixture(scope="module", params=["semi", "explicit"])
def toy_tree(request):
    return partition(toy_a(), RefineConfig(request.param, TOL))


def test_bitset_roundtrip():
    for delta in [(0,) * 9, (1, 0, 0, 0, 1, 0, 0, 0, 1), (1,) * 9]:
        assert _unbits(_bits(delta, 9), 9) == delta
    assert _bits((1, 0, 0, 0, 0, 0, 0, 0, 1), 9) == bytes([1, 1])


@pytest.mark.parametrize("model", ["M1", "M2"])
def test_roundtrip_toy(toy_tree, model, tmp_path):
    path = tmp_path / "t.mpt"
    n = save(toy_tree, path, model)
    assert n == path.stat().st_size == field_count_size(toy_tree, model)
    back = load(path)
    assert back.mode == toy_tree.mode
    assert back.meta["label"] == "toy_a"
    for th in np.linspace(-1, 1, 1001):
        a, b = toy_tree.locate([th]), back.locate([th])
        assert a.payload.delta == b.payload.delta
        if toy_tree.mode == "explicit":
            xa = eval_explicit(toy_tree, [th]).x
            xb = eval_explicit(back, [th]).x
            if model == "M1":
                assert np.array_equal(xa, xb)
            else:
                assert np.allclose(xa, xb, atol=1e-12)
    if model == "M1":
        assert dumps(back, "M1") == path.read_bytes()


def test_m1_semi_eval_bit_exact(tmp_path):
    tree = partition(toy_a(), RefineConfig(Mode.SEMI_EXPLICIT, TOL))
    save(tree, tmp_path / "t.mpt")
    back = load(tmp_path / "t.mpt")
    for th in np.linspace(-1, 1, 101):
        a = eval_semi_explicit(tree, toy_a(), [th], TOL)
        b = eval_semi_explicit(back, toy_a(), [th], TOL)
        assert a.delta == b.delta and a.value == b.value


def test_corruption_detected(toy_tree):
    data = bytearray(dumps(toy_tree))
    data[len(data) // 2] ^= 0xFF
    with pytest.raises(CorruptFile):
        loads(bytes(data))
    with pytest.raises(CorruptFile):
        loads(b"XXXX" + bytes(dumps(toy_tree))[4:])
    with pytest.raises(CorruptFile):
        loads(b"MPT")


def test_version_mismatch(toy_tree):
    body = bytearray(dumps(toy_tree)[:-4])
    struct.pack_into("<H", body, 4, 99)
    data = bytes(body) + struct.pack("<I", zlib.crc32(bytes(body)))
    with pytest.raises(VersionMismatch):
        loads(data)


def test_open_tree_refused():
    from mpcpart.phase1 import run_phase1

    tree = run_phase1(toy_b(), TOL)
    tree.reopen_all()
    with pytest.raises(ValueError):
        dumps(tree)


def test_deterministic_bytes():
    a = dumps(partition(toy_b(), RefineConfig(Mode.EXPLICIT, TOL)), "M2")
    b = dumps(partition(toy_b(), RefineConfig(Mode.EXPLICIT, TOL)), "M2")
    assert a == b


def test_reference_formulas():
    # idealized sizes for lambda leaves, mu_f = 8, mu_i = 4, one byte per bit
    assert reference_size(100, 2, 9, 1, "M1", "semi") == 100 * (16 + 12 + 9) + 32
    assert reference_size(100, 2, 9, 1, "M1", "explicit") == 100 * (16 + 3 * (6 + 8)) + 32
    assert reference_size(100, 2, 9, 1, "M2", "semi") == 100 * 48 + 900
    assert reference_size(100, 2, 9, 1, "M2", "explicit") == 1.5 * 100 * 48 + 100 * 3 * 8


def test_large_synthetic_tree(cwh_coarse, tmp_path):
    tree = refine_uniform(cwh_coarse.trees["semi"].clone(), 1000)
    for model in ("M1", "M2"):
        n = save(tree, tmp_path / f"{model}.mpt", model)
        assert abs(n - field_count_size(tree, model)) <= 0.1 * n
        back = load(tmp_path / f"{model}.mpt")
        rng = np.random.default_rng(0)
        for th in rng.uniform([-10, -1], [10, 1], size=(300, 2)):
            assert back.locate(th).payload.delta == tree.locate(th).payload.delta
