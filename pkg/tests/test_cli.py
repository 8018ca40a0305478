import json

import numpy as np
import pytest
from click.testing import CliRunner

from hdpolar import plan as P
from hdpolar.cli import main
from hdpolar.decoder import CodeSpec
from hdpolar.gf2 import builtin_kernel, encode


@pytest.fixture
def run(tmp_path):
    runner = CliRunner()

    def go(*args, ok=True):
        res = runner.invoke(main, [str(a) for a in args], catch_exceptions=False)
        if ok:
            assert res.exit_code == 0, res.output
        return res

    return go


def test_kernel_info(run, tmp_path):
    out = run("kernel-info", "G6", "--lengths").output
    assert "m = 6" in out and "L: lengths [1, 1, 1, 2, 1, 1]" in out
    out = run("kernel-info", "G2", "--show").output
    assert "l2 ◇ l1" in out or "l1 ◇ l2" in out
    k = tmp_path / "k.txt"
    k.write_text("2\n0 1\n1 0\n")
    assert "indices needing column pivots = [1]" in run("kernel-info", k).output
    k.write_text("2\n1 1\n1 1\n")
    res = run("kernel-info", k, ok=False)
    assert res.exit_code != 0 and "rank" in res.output


def test_compile_is_deterministic(run, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run("compile", "G6", "--mode", "W", "-o", a)
    run("compile", "G6", "--mode", "W", "--workers", "2", "-o", b)
    assert a.read_bytes() == b.read_bytes()
    G, plans, doc = P.plans_from_json(a.read_text())
    assert G == builtin_kernel("G6") and len(plans) == 6 and doc["max_subset"] == 2


def test_construct_decode_simulate(run, tmp_path):
    plans = tmp_path / "w.json"
    run("compile", "G2", "-o", plans)
    code = tmp_path / "code.json"
    run("construct", "--kernel", "G2", "--n", "4", "--rate", "0.5", "--method", "ga", "--ebn0", "2", "-o", code)
    spec = CodeSpec.from_json(code.read_text())
    assert spec.K == 8 and spec.meta["method"] == "ga" and 0 < spec.meta["union_bound"] <= 1
    mc = tmp_path / "mc.json"
    run("construct", "--kernel", "G2", "--n", "4", "--K", "8", "--method", "mc", "--ebn0", "2",
        "--trials", "2000", "--seed", "3", "--plans", plans, "-o", mc)
    again = tmp_path / "mc2.json"
    run("construct", "--kernel", "G2", "--n", "4", "--K", "8", "--method", "mc", "--ebn0", "2",
        "--trials", "2000", "--seed", "3", "--plans", plans, "-o", again)
    assert mc.read_bytes() == again.read_bytes()
    assert "plan_hash" in json.loads(mc.read_text())

    info = np.array([1, 0, 1, 1, 0, 0, 1, 0], dtype=np.uint8)
    x = encode(spec.place(info), spec.kernel, spec.n)
    obs = tmp_path / "obs.txt"
    obs.write_text("".join(f"{1 - b} {b}\n" for b in x))
    out = tmp_path / "dec.txt"
    run("decode", "--plans", plans, "--code", code, "--obs", obs, "-o", out)
    lines = out.read_text().split()
    assert lines[1] == "".join(map(str, info))

    csv1, csv2, man = tmp_path / "r1.csv", tmp_path / "r2.csv", tmp_path / "m.json"
    args = ["simulate", "--code", code, "--plans", plans, "--ebn0", "1,3", "--max-frames", "600",
            "--min-errors", "30", "--block", "100", "--seed", "4"]
    run(*args, "--csv", csv1, "--manifest", man)
    run(*args, "--csv", csv2)
    assert csv1.read_bytes() == csv2.read_bytes()
    doc = json.loads(man.read_text())
    assert len(doc["points"]) == 2 and doc["kernel_hash"] == spec.kernel.digest()


def test_construct_argument_errors(run, tmp_path):
    res = run("construct", "--kernel", "G2", "--n", "2", "--ebn0", "1", ok=False)
    assert res.exit_code != 0
    res = run("construct", "--kernel", "G2", "--n", "2", "--K", "9", "--ebn0", "1", ok=False)
    assert res.exit_code != 0
    plans = tmp_path / "p.json"
    run("compile", "G6", "-o", plans)
    res = run("construct", "--kernel", "G2", "--n", "2", "--K", "2", "--ebn0", "1", "--method", "mc",
              "--plans", plans, ok=False)
    assert res.exit_code != 0 and "compiled for kernel" in res.output


def test_decode_rejects_bad_obs(run, tmp_path):
    plans, code, obs = tmp_path / "p.json", tmp_path / "c.json", tmp_path / "o.txt"
    run("compile", "G2", "-o", plans)
    run("construct", "--kernel", "G2", "--n", "2", "--K", "2", "--ebn0", "1", "-o", code)
    obs.write_text("1 0\n0 1\n")
    assert run("decode", "--plans", plans, "--code", code, "--obs", obs, ok=False).exit_code != 0
    obs.write_text("0 0\n1 0\n1 0\n1 0\n")
    assert run("decode", "--plans", plans, "--code", code, "--obs", obs, ok=False).exit_code != 0


def test_selftest(run):
    out = run("selftest", "--random-per-m", "1", "--cases", "5").output
    assert "FAIL" not in out and "passed" in out
