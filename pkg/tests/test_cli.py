"""Command-line interface: each subcommand, exit codes, and file plumbing."""

import json
from importlib.metadata import entry_points

import numpy as np
import pytest

import sfk
from sfk.cli import main


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    sfk.save_matrix(sfk.rand_matrix(8, 16, seed=1), "a.sfk")
    sfk.save_matrix(sfk.rand_matrix(16, 4, seed=2), "b.sfk")
    return tmp_path


def test_console_script_is_declared():
    eps = entry_points()
    scripts = eps.select(group="console_scripts") if hasattr(eps, "select") else eps["console_scripts"]
    assert any(ep.name == "sfk" and ep.value == "sfk.cli:main" for ep in scripts)


def test_sparsify24_check_spmm_pipeline(workdir, capsys):
    assert main(["sparsify24", "--in", "a.sfk", "--out", "a.s24", "--mode", "soft"]) == 0
    assert main(["check", "--in", "a.s24"]) == 0
    assert main(["spmm", "--a", "a.s24", "--b", "b.sfk", "--out", "c.sfk"]) == 0
    out = capsys.readouterr().out
    assert "OK 2:4" in out and "multiplies" in out
    want = sfk.spmm24(sfk.load_s24("a.s24"), sfk.load_matrix("b.sfk"))
    assert np.array_equal(sfk.load_matrix("c.sfk"), want)
    lib = sfk.sparsify24(sfk.load_matrix("a.sfk"), sfk.SOFT_THRESHOLD)
    assert np.array_equal(sfk.decode24(sfk.load_s24("a.s24")), sfk.decode24(lib))


def test_sparsify24_transpose_flag(workdir):
    assert main(["sparsify24", "--in", "a.sfk", "--out", "at.s24", "--mode", "greedy",
                 "--transpose"]) == 0
    st = sfk.load_s24("at.s24")
    assert (st.rows, st.cols) == (16, 8)
    lib = sfk.sparsify24_transposed(sfk.load_matrix("a.sfk"), sfk.GREEDY_MAGNITUDE)
    assert np.array_equal(sfk.decode24(st), sfk.decode24(lib))


def test_venom_encode_check_spmm(workdir, capsys):
    assert main(["venom-encode", "--in", "a.sfk", "--out", "a.vnm", "--venom", "4,2,8"]) == 0
    assert main(["check", "--in", "a.vnm"]) == 0
    assert main(["spmm", "--a", "a.vnm", "--b", "b.sfk", "--out", "c.sfk"]) == 0
    out = capsys.readouterr().out
    assert "pattern sparsity 0.750000" in out
    assert "OK venom" in out
    vm = sfk.load_venom("a.vnm")
    assert np.array_equal(sfk.load_matrix("c.sfk"), sfk.venom_spmm(vm, sfk.load_matrix("b.sfk")))


def test_check_reports_dense_and_rejects_junk(workdir, capsys):
    assert main(["check", "--in", "a.sfk"]) == 0
    assert "OK dense 8x16" in capsys.readouterr().out
    (workdir / "junk.bin").write_bytes(b"ZZZZ====")
    assert main(["check", "--in", "junk.bin"]) == 2
    assert main(["check", "--in", "missing.bin"]) == 2


def test_spmm_dense_fallback_counts_full_multiplies(workdir, capsys):
    assert main(["spmm", "--a", "a.sfk", "--b", "b.sfk", "--out", "c.sfk"]) == 0
    out = capsys.readouterr().out
    assert f"{8 * 16 * 4} multiplies" in out
    assert np.array_equal(
        sfk.load_matrix("c.sfk"), sfk.gemm(sfk.load_matrix("a.sfk"), sfk.load_matrix("b.sfk"))
    )


def test_gradcheck_command_json_and_guard(workdir, capsys):
    assert main(["gradcheck", "--policy", "w1", "--shape", "4,8,8", "--seed", "1"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["policy"] == "w1" and doc["max_rel"] < 1e-4
    assert main(["gradcheck", "--policy", "dense", "--shape", "4,8,100"]) == 3


def test_gradcheck_policy_json_flag(workdir, capsys):
    (workdir / "pol.json").write_text(sfk.policy_to_json(sfk.ablation_policy("act24")))
    assert main(["gradcheck", "--policy-json", "pol.json", "--shape", "4,8,8"]) == 0
    assert json.loads(capsys.readouterr().out)["policy"] == "act24"


@pytest.fixture
def config_file(workdir):
    doc = [{"model": "1b", "num_layers": 22, "d_model": 2048, "d_ffn": 8192,
            "num_heads": 16, "batch_size": 2, "seq_len": 8192}]
    (workdir / "configs.json").write_text(json.dumps(doc))
    return "configs.json"


def test_roofline_report(config_file, capsys):
    assert main(["roofline", "--config", config_file]) == 0
    out = capsys.readouterr().out
    assert "total_flops 145135534866432" in out
    assert "ffn_fraction 0.750000" in out
    assert "2.800000" in out


def test_roofline_sweep_and_overhead(config_file, capsys):
    assert main(["roofline", "--config", config_file, "--sweep"]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "model,params,ffn_frac,attn_linear_frac,sdpa_frac"
    assert main(["roofline", "--config", config_file, "--overhead",
                 "--venom", "64,2,16", "--experts", "16"]) == 0
    out = capsys.readouterr().out
    assert "routing: 268435456 bytes" in out and "memory-bound" in out
    assert "expert_matmul" in out and "compute-bound" in out


def test_schedule_command(workdir, capsys):
    assert main(["schedule", "--total", "1000", "--sparse", "500", "--warmup", "0",
                 "--per-iter-speedup", "2.2", "--out", "sched.json"]) == 0
    out = capsys.readouterr().out
    assert "dense [0, 0), sparse [0, 500), dense [500, 1000)" in out
    assert "1.375000" in out
    back = sfk.schedule_from_json((workdir / "sched.json").read_text())
    assert back.total_steps == 1000 and back.sparse_range == (0, 500)


def test_train_command_writes_csv_and_summary(workdir, capsys):
    assert main(["train", "--steps", "12", "--sparse", "4", "--warmup", "4", "--lr", "0.05",
                 "--dims", "8,16,8", "--batch-size", "8", "--seed", "0", "--csv", "run.csv"]) == 0
    out = capsys.readouterr().out
    doc = json.loads(out[out.index("{"):])
    assert doc["steps"] == 12
    lines = (workdir / "run.csv").read_text().strip().splitlines()
    assert lines[0] == "step,loss,act_zero_frac,policy_tag"
    assert len(lines) == 13
    # the CLI run reproduces the library run exactly
    task = sfk.ToyTask(input_dim=8, hidden_dim=16, output_dim=8, batch_size=8, seed=0)
    sched = sfk.build_schedule(total=12, sparse=4, warmup=4)
    rep = sfk.run_training(task, sched, lr=0.05, steps=12)
    assert doc["final_loss"] == rep.final_loss


def test_train_rejects_bad_dims(workdir):
    assert main(["train", "--steps", "4", "--lr", "0.05", "--dims", "6,16,8"]) == 2


def test_bench_reports_ceiling_ratios(workdir, capsys):
    assert main(["bench", "--shape", "32,64,16", "--format", "s24"]) == 0
    out = capsys.readouterr().out
    assert "multiply-count ratio 2 (theoretical ceiling 2)" in out
    assert "not comparable to GPU" in out
    assert main(["bench", "--shape", "32,64,16", "--format", "venom", "--venom", "4,2,8"]) == 0
    out = capsys.readouterr().out
    assert "multiply-count ratio 4 (theoretical ceiling 4)" in out


def test_bench_guards_oversized_problems(workdir, capsys):
    assert main(["bench", "--shape", "4096,4096,1024", "--format", "s24"]) == 3
    assert "guard:" in capsys.readouterr().err


def test_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
