import json
import os
import subprocess
import sys

import jsonschema
import numpy as np
import pytest

from dgmeval.cli import main
from dgmeval.store import EmbeddingSet, read_embeddings, write_embeddings
from dgmeval.synth import gaussian_cloud

from conftest import make_set

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SCHEMA_PATH = os.path.join(ROOT, "docs", "report.schema.json")


def run_cli(argv):
    """main() exits via SystemExit on argparse errors; fold that into a code."""
    try:
        return main(argv)
    except SystemExit as exc:
        return exc.code


@pytest.fixture
def dgme_pair(tmp_path):
    real = gaussian_cloud(60, 4, seed=1)
    gen = gaussian_cloud(50, 4, mean_offset=0.2, seed=2)
    rp = str(tmp_path / "real.dgme")
    gp = str(tmp_path / "gen.dgme")
    write_embeddings(real, rp)
    write_embeddings(gen, gp)
    return rp, gp


def load_report(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


class TestCompute:
    def test_basic_metrics_and_schema(self, dgme_pair, tmp_path):
        rp, gp = dgme_pair
        out = str(tmp_path / "report.json")
        code = run_cli(["compute", "--real", rp, "--gen", gp,
                        "--metrics", "fd,kd,prdc", "--out", out])
        assert code == 0
        rep = load_report(out)
        assert set(rep["values"]) == {"fd", "kd", "precision", "recall",
                                      "density", "coverage"}
        assert all(isinstance(v, float) for v in rep["values"].values())
        assert rep["model_id"] == "gen"
        assert rep["dataset_id"] == "real"
        assert rep["errors"] == {}
        assert rep["hyperparameters"]["kd"]["kernel"]["degree"] == 3
        assert rep["hyperparameters"]["precision"]["k"] == 5
        with open(SCHEMA_PATH, "r", encoding="utf-8") as fh:
            jsonschema.validate(rep, json.load(fh))

    def test_schema_copies_match(self):
        shipped = os.path.join(ROOT, "src", "dgmeval", "schemas",
                               "report.schema.json")
        with open(shipped, "rb") as a, open(SCHEMA_PATH, "rb") as b:
            assert a.read() == b.read()

    def test_csv_format(self, dgme_pair, tmp_path):
        rp, gp = dgme_pair
        out = str(tmp_path / "report.csv")
        code = run_cli(["compute", "--real", rp, "--gen", gp,
                        "--metrics", "fd,asw", "--out", out,
                        "--format", "csv"])
        assert code == 0
        lines = open(out).read().splitlines()
        assert lines[0] == "metric,value"
        assert [ln.split(",")[0] for ln in lines[1:]] == ["asw", "fd"]
        assert all(float(ln.split(",")[1]) >= 0 for ln in lines[1:])

    def test_missing_role_exits_2(self, dgme_pair, tmp_path, capsys):
        rp, gp = dgme_pair
        code = run_cli(["compute", "--real", rp, "--gen", gp,
                        "--metrics", "ct", "--out", str(tmp_path / "r.json")])
        assert code == 2
        assert "error" in capsys.readouterr().err

    def test_bad_metric_arguments_exit_2(self, dgme_pair, tmp_path):
        rp, gp = dgme_pair
        out = str(tmp_path / "r.json")
        base = ["compute", "--real", rp, "--gen", gp, "--out", out]
        assert run_cli(base + ["--metrics", "frechet"]) == 2
        assert run_cli(base + ["--metrics", ""]) == 2
        assert run_cli(base + ["--metrics", "fd", "--frobble"]) == 2

    def test_all_metrics_failing_exits_3(self, tmp_path):
        rp = str(tmp_path / "real.dgme")
        gp = str(tmp_path / "gen.dgme")
        write_embeddings(gaussian_cloud(30, 4, seed=1), rp)
        write_embeddings(gaussian_cloud(30, 3, seed=2), gp)  # d mismatch
        out = str(tmp_path / "r.json")
        code = run_cli(["compute", "--real", rp, "--gen", gp,
                        "--metrics", "fd,kd", "--out", out])
        assert code == 3
        rep = load_report(out)
        assert rep["values"] == {}
        assert set(rep["errors"]) == {"fd", "kd"}

    def test_partial_failure_exits_0(self, dgme_pair, tmp_path):
        rp, gp = dgme_pair
        out = str(tmp_path / "r.json")
        code = run_cli(["compute", "--real", rp, "--gen", gp,
                        "--metrics", "fd,vendi_per_class", "--out", out])
        assert code == 0  # vendi_per_class fails (no labels), fd succeeds
        rep = load_report(out)
        assert rep["values"]["fd"] > 0
        assert "vendi_per_class" in rep["errors"]

    def test_inception_style_from_csv(self, tmp_path):
        probs = tmp_path / "probs.csv"
        probs.write_text("f0,f1\n" + "1,0\n0,1\n" * 2)
        out = str(tmp_path / "r.json")
        code = run_cli(["compute", "--probs", str(probs),
                        "--metrics", "is", "--out", out])
        assert code == 0
        rep = load_report(out)
        assert rep["values"]["is"] == pytest.approx(2.0, rel=1e-6)
        assert rep["hyperparameters"]["is"]["classes"] == 2

    def test_is_train_frequency_mode(self, tmp_path):
        probs = tmp_path / "probs.csv"
        probs.write_text("f0,f1\n1,0\n1,0\n")
        freqs = tmp_path / "freqs.csv"
        freqs.write_text("f0,f1\n0.5,0.5\n")
        out = str(tmp_path / "r.json")
        code = run_cli(["compute", "--probs", str(probs), "--metrics", "is",
                        "--is-mode", "train_frequencies",
                        "--train-freqs", str(freqs), "--out", out])
        assert code == 0
        assert load_report(out)["values"]["is"] == pytest.approx(2.0, rel=1e-6)

        bad = tmp_path / "bad_freqs.csv"
        bad.write_text("f0,f1\n0.5,0.5\n0.5,0.5\n")
        code = run_cli(["compute", "--probs", str(probs), "--metrics", "is",
                        "--is-mode", "train_frequencies",
                        "--train-freqs", str(bad), "--out", out])
        assert code == 2

    def test_mem_ratio_flow(self, tmp_path):
        train = gaussian_cloud(80, 3, seed=3)
        gen = EmbeddingSet(data=train.data[:10].copy(), encoder_id="e",
                           source_id="s")
        rp = str(tmp_path / "train.dgme")
        gp = str(tmp_path / "gen.dgme")
        write_embeddings(train, rp)
        write_embeddings(gen, gp)
        out = str(tmp_path / "r.json")
        assert run_cli(["compute", "--real", rp, "--gen", gp,
                        "--metrics", "mem_ratio", "--out", out]) == 2
        assert run_cli(["compute", "--real", rp, "--gen", gp, "--tau", "-1",
                        "--metrics", "mem_ratio", "--out", out]) == 2
        code = run_cli(["compute", "--real", rp, "--gen", gp, "--tau", "0.5",
                        "--metrics", "mem_ratio", "--out", out])
        assert code == 0
        rep = load_report(out)
        assert rep["values"]["mem_ratio"] == 1.0  # every gen row is a copy
        deciles = rep["details"]["mem_ratio"]["l_deciles"]
        assert sorted(deciles) == sorted(f"p{p}" for p in range(0, 101, 10))
        assert rep["hyperparameters"]["mem_ratio"]["k"] == 50

    def test_fls_pair_shares_one_kde_fit(self, dgme_pair, tmp_path, monkeypatch):
        from dgmeval import cli as climod

        rp, gp = dgme_pair
        tp = str(tmp_path / "test.dgme")
        write_embeddings(gaussian_cloud(40, 4, seed=9), tp)
        calls = []
        real_fit = climod.memorization.fit_mog_kde

        def counting_fit(*a, **kw):
            calls.append(1)
            return real_fit(*a, **kw)

        monkeypatch.setattr(climod.memorization, "fit_mog_kde", counting_fit)
        out = str(tmp_path / "r.json")
        code = run_cli(["compute", "--real", rp, "--gen", gp, "--test", tp,
                        "--metrics", "fls,fls_pog", "--out", out])
        assert code == 0
        assert len(calls) == 1
        rep = load_report(out)
        assert np.isfinite(rep["values"]["fls"])
        assert 0.0 <= rep["values"]["fls_pog"] <= 100.0

    def test_reproducible_with_source_date_epoch(self, dgme_pair, tmp_path,
                                                 monkeypatch):
        rp, gp = dgme_pair
        monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
        outs = []
        for name in ("a.json", "b.json"):
            out = str(tmp_path / name)
            assert run_cli(["compute", "--real", rp, "--gen", gp,
                            "--metrics", "fd,kd,vendi", "--out", out]) == 0
            outs.append(open(out, "rb").read())
        assert outs[0] == outs[1]
        assert load_report(str(tmp_path / "a.json"))["timestamp"] \
            == "1970-01-01T00:00:00+00:00"


class TestSynth:
    def test_writes_stages_and_manifest(self, tmp_path):
        out = str(tmp_path / "scen")
        code = run_cli(["synth", "--scenario", "memorized", "--seed", "4",
                        "--n-train", "200", "--n-test", "150",
                        "--n-gen", "100", "--out", out])
        assert code == 0
        train = read_embeddings(os.path.join(out, "train.dgme"))
        gen = read_embeddings(os.path.join(out, "gen.dgme"))
        assert (train.n, gen.n) == (200, 100)
        rows = {r.tobytes() for r in train.data}
        assert all(r.tobytes() in rows for r in gen.data)
        manifest = json.load(open(os.path.join(out, "manifest.json")))
        assert manifest["kind"] == "memorized"
        assert manifest["seed"] == 4
        assert manifest["components"] == 5 and manifest["dim"] == 2
        assert np.asarray(manifest["means"]).shape == (5, 2)
        diag = np.asarray(manifest["cov_diagonals"])
        assert np.all(diag > 0.01) and np.all(diag < 0.09)
        assert manifest["files"] == {"train": "train.dgme",
                                     "test": "test.dgme", "gen": "gen.dgme"}

    def test_underfit_scale_validation(self, tmp_path, capsys):
        out = str(tmp_path / "scen")
        base = ["synth", "--scenario", "underfit", "--out", out,
                "--n-train", "20", "--n-test", "20", "--n-gen", "20"]
        assert run_cli(base + ["--scale", "2.0"]) == 2
        assert "--scale-unchecked" in capsys.readouterr().err
        assert run_cli(base) == 2  # no scale at all
        assert run_cli(base + ["--scale", "2.0", "--scale-unchecked"]) == 0
        assert run_cli(base + ["--scale", "3.0"]) == 0


class TestMemcheck:
    def test_report_files(self, tmp_path):
        train = gaussian_cloud(60, 3, seed=5)
        gen = EmbeddingSet(data=train.data[:8].copy(), encoder_id="e",
                           source_id="s")
        rp = str(tmp_path / "train.dgme")
        gp = str(tmp_path / "gen.dgme")
        write_embeddings(train, rp)
        write_embeddings(gen, gp)
        out = str(tmp_path / "mem")
        code = run_cli(["memcheck", "--gen", gp, "--train", rp,
                        "--tau", "0.5", "--out", out])
        assert code == 0
        lines = open(os.path.join(out, "matches.csv")).read().splitlines()
        assert lines[0] == "gen_index,train_index,l,memorized"
        assert len(lines) == 9
        for i, line in enumerate(lines[1:]):
            g, t, l, memo = line.split(",")
            assert (int(g), int(t), float(l), memo) == (i, i, 0.0, "1")
        summary = json.load(open(os.path.join(out, "summary.json")))
        assert summary["ratio"] == 1.0
        assert summary["tau"] == 0.5
        assert summary["k"] == 50
        assert summary["n_gen"] == 8 and summary["n_train"] == 60
        assert summary["l_deciles"]["p0"] == 0.0

    def test_tau_required_and_positive(self, tmp_path):
        p = str(tmp_path / "x.dgme")
        write_embeddings(gaussian_cloud(60, 2, seed=1), p)
        out = str(tmp_path / "mem")
        assert run_cli(["memcheck", "--gen", p, "--train", p,
                        "--out", out]) == 2
        assert run_cli(["memcheck", "--gen", p, "--train", p,
                        "--tau", "0", "--out", out]) == 2

    def test_intra_class_needs_labels(self, tmp_path):
        p = str(tmp_path / "x.dgme")
        write_embeddings(gaussian_cloud(60, 2, seed=1), p)
        code = run_cli(["memcheck", "--gen", p, "--train", p, "--tau", "0.5",
                        "--intra-class", "--out", str(tmp_path / "mem")])
        assert code == 2


def _write_reports(tmp_path, dataset="cifar", n=5, start=0):
    paths = []
    from dgmeval.reporting import MetricReport

    for i in range(start, start + n):
        rep = MetricReport(
            model_id=f"m{i}", dataset_id=dataset,
            values={"fd": float(i + 1), "kd": float(-i),
                    "sparse": float(i) if i - start < 2 else None})
        path = tmp_path / f"{dataset}_m{i}.json"
        path.write_text(rep.to_json())
        paths.append(str(path))
    return paths


def _write_human(tmp_path, n=8):
    lines = ["model,error_rate,stderr,participants"]
    for i in range(n):
        lines.append(f"m{i},{0.5 - 0.05 * i},0.01,12")
    path = tmp_path / "human.csv"
    path.write_text("\n".join(lines) + "\n")
    return str(path)


class TestCorrelate:
    def test_end_to_end(self, tmp_path):
        reports = _write_reports(tmp_path)
        human = _write_human(tmp_path)
        out = str(tmp_path / "corr")
        code = run_cli(["correlate", "--reports", *reports,
                        "--human", human, "--out", out])
        assert code == 0
        lines = open(os.path.join(out, "cifar_correlation.csv")).read().splitlines()
        assert lines[0] == "metric_a,metric_b,r,p,n,strong_and_significant"
        rows = {tuple(ln.split(",")[:2]): ln.split(",") for ln in lines[1:]}
        fd_h = rows[("fd", "human_error_rate")]
        assert float(fd_h[2]) == -1.0 and float(fd_h[3]) == 0.0
        assert fd_h[4] == "5" and fd_h[5] == "1"
        fd_kd = rows[("fd", "kd")]
        assert float(fd_kd[2]) == -1.0
        # sparse metric: too few shared models, blank cell with n = 0
        assert rows[("sparse", "human_error_rate")] == \
            ["sparse", "human_error_rate", "", "", "0", ""]
        flags = json.load(open(os.path.join(out, "cifar_flags.json")))
        assert flags["models"] == [f"m{i}" for i in range(5)]
        assert flags["vs_human"]["fd"]["strong_and_significant"] is True
        assert flags["matrix"]["fd|sparse"] is None

    def test_too_few_models_exits_2(self, tmp_path, capsys):
        reports = _write_reports(tmp_path, n=2)
        human = _write_human(tmp_path)
        code = run_cli(["correlate", "--reports", *reports,
                        "--human", human, "--out", str(tmp_path / "corr")])
        assert code == 2
        assert "overlap" in capsys.readouterr().err

    def test_datasets_grouped_separately(self, tmp_path):
        a = _write_reports(tmp_path, dataset="cifar", n=5)
        b = _write_reports(tmp_path, dataset="ffhq", n=4, start=1)
        c = _write_reports(tmp_path, dataset="tiny", n=2, start=5)
        human = _write_human(tmp_path)
        out = str(tmp_path / "corr")
        code = run_cli(["correlate", "--reports", *a, *b, *c,
                        "--human", human, "--out", out])
        assert code == 0  # tiny only warns; the other groups are written
        names = sorted(os.listdir(out))
        assert names == ["cifar_correlation.csv", "cifar_flags.json",
                         "ffhq_correlation.csv", "ffhq_flags.json"]

    def test_bad_human_header(self, tmp_path):
        reports = _write_reports(tmp_path)
        bad = tmp_path / "human.csv"
        bad.write_text("model,err\nm0,0.5\n")
        code = run_cli(["correlate", "--reports", *reports,
                        "--human", str(bad), "--out", str(tmp_path / "corr")])
        assert code == 2


class TestInfo:
    def test_prints_header_fields(self, tmp_path, capsys):
        es = make_set(np.arange(8.0).reshape(4, 2), labels=[0, 1, 0, 1],
                      encoder_id="enc-a", source_id="src-b")
        path = str(tmp_path / "x.dgme")
        write_embeddings(es, path)
        assert run_cli(["info", path]) == 0
        out = capsys.readouterr().out.splitlines()
        got = dict(line.split(": ", 1) for line in out)
        assert got["path"] == path
        assert got["version"] == "1"
        assert got["n"] == "4" and got["d"] == "2"
        assert got["dtype"] == "float32"
        assert got["labels"] == "yes"
        assert got["encoder_id"] == "enc-a"
        assert got["source_id"] == "src-b"
        assert len(out) == 8

    def test_missing_file_exits_2(self, tmp_path):
        assert run_cli(["info", str(tmp_path / "absent.dgme")]) == 2


def test_module_entrypoint(tmp_path):
    path = str(tmp_path / "x.dgme")
    write_embeddings(gaussian_cloud(3, 2, seed=1), path)
    proc = subprocess.run([sys.executable, "-m", "dgmeval", "info", path],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "n: 3" in proc.stdout
