from __future__ import annotations

import pytest

from trajanon.cli import main
from trajanon.data.dataset import load_published, read_csv, save_published
from test_verify import tamper


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["gen", "--output", str(d / "raw.csv"), "--users", "30", "--seed", "4"]) == 0
    assert main(["anonymize", "--input", str(d / "raw.csv"), "--output", str(d / "anon.csv"),
                 "--k", "2", "--tau-min", "60", "--epsilon-min", "60", "--seed", "4",
                 "--report", str(d / "run.txt")]) == 0
    return d


def test_gen_writes_raw_csv(workdir):
    ds = read_csv(workdir / "raw.csv")
    assert len(ds.users) == 30 and ds.n_slots == 1440


def test_gen_time_noise(tmp_path):
    out = tmp_path / "noisy.csv"
    assert main(["gen", "--output", str(out), "--users", "5", "--time-noise", "3"]) == 0
    assert read_csv(out).n_slots == 1440


def test_anonymize_outputs(workdir):
    assert (workdir / "anon.suppressed.csv").exists()
    report = (workdir / "run.txt").read_text()
    for key in ("total_cost", "median_spatial_m", "median_temporal_min", "suppression_pct", "epochs", "users"):
        assert f"{key}: " in report
    pub = load_published(workdir / "anon.csv")
    assert pub.meta["k"] == 2 and pub.meta["slots"] == 1440


def test_verify_passes(workdir, capsys):
    assert main(["verify", "--raw", str(workdir / "raw.csv"), "--anon", str(workdir / "anon.csv")]) == 0
    out = capsys.readouterr().out
    assert "pass: True" in out and "failures: 0" in out


def test_verify_fails_on_tampered_output(workdir, tmp_path):
    raw = read_csv(workdir / "raw.csv")
    bad, _ = tamper(load_published(workdir / "anon.csv"), raw)
    save_published(bad, tmp_path / "bad.csv")
    code = main(["verify", "--raw", str(workdir / "raw.csv"), "--anon", str(tmp_path / "bad.csv"),
                 "--output", str(tmp_path / "rep.txt"), "--failures", str(tmp_path / "fail.csv")])
    assert code == 1
    assert "pass: False" in (tmp_path / "rep.txt").read_text()
    assert len((tmp_path / "fail.csv").read_text().splitlines()) > 1


def test_verify_sampled_mode(workdir, capsys):
    assert main(["verify", "--raw", str(workdir / "raw.csv"), "--anon", str(workdir / "anon.csv"),
                 "--mode", "sampled", "--probes", "50"]) == 0
    assert "mode: sampled" in capsys.readouterr().out


def test_stats(workdir, tmp_path):
    out = tmp_path / "hourly.csv"
    assert main(["stats", "--input", str(workdir / "raw.csv"), "--anon", str(workdir / "anon.csv"),
                 "--output", str(out), "--report", str(tmp_path / "r.txt")]) == 0
    assert len(out.read_text().splitlines()) == 25
    assert "suppression_pct:" in (tmp_path / "r.txt").read_text()


def test_merge(tmp_path, capsys):
    raw = tmp_path / "pair.csv"
    raw.write_text("user_id,t,x,y\na,0,0,0\na,10,0,0\nb,1,0,0\nb,11,0,0\n")
    assert main(["merge", "--input", str(raw), "--output", str(tmp_path / "m.csv")]) == 0
    assert "cost: 8" in capsys.readouterr().out
    rows = (tmp_path / "m.csv").read_text().splitlines()
    assert rows[1:] == ["a,0,1,0,0,0,0", "a,10,11,0,0,0,0", "b,0,1,0,0,0,0", "b,10,11,0,0,0,0"]


def test_bad_input_exits_nonzero(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("user_id,t,x,y\nu1,zero,0,0\n")
    assert main(["anonymize", "--input", str(bad), "--output", str(tmp_path / "o.csv")]) == 2
    assert ":2:" in capsys.readouterr().err
