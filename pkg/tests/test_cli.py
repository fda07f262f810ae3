from __future__ import annotations

import csv
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from advq import serialization as io
from advq.cli import EXIT_FAIL, EXIT_INFEASIBLE, EXIT_OK, EXIT_SCHEMA, main, parallel_map


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@given(st.complex_numbers(allow_nan=False, allow_infinity=False, max_magnitude=1e12))
def test_complex_roundtrip(z):
    assert io.decode_complex(json.loads(json.dumps(io.encode_complex(z)))) == z


def test_array_roundtrip():
    a = np.array([[1 + 2j, 3], [0, -1j]])
    np.testing.assert_array_equal(io.decode_array(io.encode_array(a)), a)
    with pytest.raises(io.SchemaError):
        io.decode_array([[{"re": 1}, "x"]])


def test_problem_roundtrip(tmp_path, or2):
    p = tmp_path / "p.json"
    io.write_json(p, io.problem_to_dict(or2))
    back = io.load_problem(p)
    assert back.labels == or2.labels and back.n == 2 and back.alphabet == 2
    np.testing.assert_array_equal(back.sigma.matrix, or2.sigma.matrix)


def test_function_problem_expands(or2):
    np.testing.assert_array_equal(or2.rho.matrix, np.ones((3, 3)))
    np.testing.assert_array_equal(or2.sigma.matrix.real, [[1, 0, 0], [0, 1, 1], [0, 1, 1]])


@pytest.mark.parametrize(
    "bad",
    [
        {"inputs": ["0", "1"], "rho": [[{"re": 1}, 0], [0, 1]]},
        {"inputs": ["0", "10"], "rho": [[1, 0], [0, 1]], "sigma": [[1, 0], [0, 1]]},
        {"inputs": ["0", "1"], "rho": [[1, 0], [0, 1]], "sigma": [[1, 2], [2, 1]]},
        {"function": {}},
        {"function": {"0": 0, "2": 1}, "alphabet": 2},
        {"inputs": ["0", "1"], "n": 2, "rho": [[1, 0], [0, 1]], "sigma": [[1, 0], [0, 1]]},
        [1, 2],
    ],
)
def test_problem_schema_errors(tmp_path, bad):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(bad))
    with pytest.raises(io.SchemaError):
        io.load_problem(p)


def test_atomic_write_leaves_no_temp(tmp_path):
    io.write_json(tmp_path / "a.json", {"x": 1})
    assert [f.name for f in tmp_path.iterdir()] == ["a.json"]


def test_oracle_check(tmp_path, capsys):
    assert main(["oracle-check", "--problem", "or2.json", "--out-dir", str(tmp_path)]) == EXIT_OK
    rows = read_csv(tmp_path / "oracle_check.csv")
    assert len(rows) == 3 and all(float(r["residual"]) <= 1e-10 for r in rows)


def test_verify_witness_or2(tmp_path):
    assert main(["verify-witness", "--problem", "or2.json", "--witness", "or2_witness.json",
                 "--out-dir", str(tmp_path)]) == EXIT_OK
    rep = json.loads((tmp_path / "verify_witness.json").read_text())
    assert rep["feasible"] and abs(rep["value"] - 1.41421) <= 0.1 * 1.41421


def test_verify_witness_infeasible(tmp_path, or2):
    w = tmp_path / "w.json"
    from advq.adversary import AdversaryWitness

    io.write_json(w, io.witness_to_dict(AdversaryWitness.zero(or2.labels, 2)))
    assert main(["verify-witness", "--problem", "or2.json", "--witness", str(w)]) == EXIT_INFEASIBLE
    assert main(["run", "--problem", "or2.json", "--witness", str(w), "--out-dir", str(tmp_path)]) == EXIT_INFEASIBLE


def test_schema_exit_codes(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["oracle-check", "--problem", str(bad)]) == EXIT_SCHEMA
    assert main(["oracle-check", "--problem", "missing.json"]) == EXIT_SCHEMA
    assert main(["run", "--problem", "singlebit.json", "--epsilon", "1.5"]) == EXIT_SCHEMA
    assert main(["run", "--problem", "singlebit.json", "--tau-factor", "0"]) == EXIT_SCHEMA
    assert main(["verify-witness", "--problem", "or2.json", "--witness", "singlebit_witness.json"]) == EXIT_SCHEMA


def test_solve_adversary(tmp_path):
    assert main(["solve-adversary", "--problem", "singlebit.json", "--out-dir", str(tmp_path)]) == EXIT_OK
    summary = json.loads((tmp_path / "solve_adversary.json").read_text())
    assert summary["gap"] <= 0.05
    w = io.load_witness(tmp_path / "singlebit_witness.json")
    assert w.value == pytest.approx(summary["upper"])


def test_run_singlebit(tmp_path):
    code = main(["run", "--problem", "singlebit.json", "--witness", "singlebit_witness.json",
                 "--epsilon", "0.3", "--steps", "2048", "--out-dir", str(tmp_path)])
    assert code == EXIT_OK
    rows = read_csv(tmp_path / "overlaps.csv")
    assert len(rows) == 2 and all(float(r["overlap"]) >= 0.43589 for r in rows)
    trace = read_csv(tmp_path / "traces" / "trace_0_eps0.3.csv")
    assert len(trace) == 101
    assert set(trace[0]) == {"s", "t", "overlap_re", "overlap_im", "norm_drift"}


def test_run_is_reproducible(tmp_path):
    args = ["run", "--problem", "singlebit.json", "--epsilon", "0.5", "--steps", "512", "--grid", "11"]
    assert main(args + ["--out-dir", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out-dir", str(tmp_path / "b")]) == EXIT_OK
    assert (tmp_path / "a" / "overlaps.csv").read_bytes() == (tmp_path / "b" / "overlaps.csv").read_bytes()
    assert (tmp_path / "a" / "run.json").read_text() == (tmp_path / "b" / "run.json").read_text().replace(
        str(tmp_path / "b"), str(tmp_path / "a"))


def test_manifest(tmp_path):
    m = tmp_path / "m.json"
    m.write_text(json.dumps({"problem": "singlebit.json", "witness": "singlebit_witness.json",
                             "epsilon": 0.2, "grid": 11, "out_dir": str(tmp_path / "out")}))
    assert main(["verify-proposition", "--manifest", str(m)]) == EXIT_OK
    rep = json.loads((tmp_path / "out" / "proposition.json").read_text())
    assert rep["passed"] and rep["points"] == 2 * 11


def test_verify_proposition_or2(tmp_path):
    assert main(["verify-proposition", "--problem", "or2.json", "--witness", "or2_witness.json",
                 "--epsilon", "0.1", "--epsilon", "0.3", "--out-dir", str(tmp_path)]) == EXIT_OK
    assert len(read_csv(tmp_path / "proposition.csv")) == 2 * 3 * 101


def test_sweep_tau(tmp_path, monkeypatch):
    monkeypatch.setenv("ADVQ_THREADS", "2")
    code = main(["sweep-tau", "--problem", "singlebit.json", "--witness", "singlebit_witness.json",
                 "--epsilon", "0.5", "--steps", "1024", "--grid", "11", "--out-dir", str(tmp_path)])
    assert code == EXIT_OK
    rows = read_csv(tmp_path / "sweep_tau.csv")
    assert sorted({float(r["tau_factor"]) for r in rows}) == [0.25, 0.5, 1.0, 2.0]
    for r in rows:
        if float(r["tau_factor"]) >= 1:
            assert float(r["eps_ap"]) <= 0.5


def test_lower_bound(tmp_path):
    cert = tmp_path / "c.json"
    from advq.adversary import AdversaryCertificate
    from conftest import SINGLEBIT_GAMMA, SINGLEBIT_V

    io.write_json(cert, io.certificate_to_dict(AdversaryCertificate(SINGLEBIT_GAMMA, SINGLEBIT_V, 1.0)))
    code = main(["lower-bound", "--problem", "singlebit.json", "--witness", "singlebit_witness.json",
                 "--certificate", str(cert), "--epsilon", "0.5", "--dt", "0.05", "--out-dir", str(tmp_path)])
    assert code == EXIT_OK
    rep = json.loads((tmp_path / "lower_bound.json").read_text())["reports"][0]
    assert rep["implied_t"] == pytest.approx(0.5)
    assert rep["horizon"] >= rep["implied_t"]
    rows = read_csv(tmp_path / "progress_eps0.5.csv")
    assert set(rows[0]) == {"t", "W", "dWdt", "bound"}


def test_lower_bound_rejects_invalid_certificate(tmp_path):
    cert = tmp_path / "c.json"
    from advq.adversary import AdversaryCertificate
    from conftest import SINGLEBIT_GAMMA, SINGLEBIT_V

    io.write_json(cert, io.certificate_to_dict(AdversaryCertificate(3 * SINGLEBIT_GAMMA, SINGLEBIT_V, 3.0)))
    assert main(["lower-bound", "--problem", "singlebit.json", "--certificate", str(cert),
                 "--out-dir", str(tmp_path)]) == EXIT_FAIL


def test_random_problem(tmp_path):
    out = tmp_path / "r.json"
    assert main(["random-problem", "--size", "4", "--n", "3", "--seed", "7", "--out", str(out)]) == EXIT_OK
    p = io.load_problem(out)
    assert p.rho.size == 4 and p.n == 3
    out2 = tmp_path / "r2.json"
    main(["random-problem", "--size", "4", "--n", "3", "--seed", "7", "--out", str(out2)])
    assert out.read_bytes() == out2.read_bytes()
    assert main(["random-problem", "--size", "9", "--n", "3", "--out", str(out)]) == EXIT_SCHEMA


def test_parallel_map_order(monkeypatch):
    monkeypatch.setenv("ADVQ_THREADS", "4")
    assert parallel_map(lambda x: x * x, list(range(10))) == [x * x for x in range(10)]
