import csv

import numpy as np
import pytest

from binembed.cli import main, resolve_config
from binembed.core import BinembedError, SeedTree
from binembed.embedders import fit
from binembed.evaluation import RETRIEVAL_COLUMNS, SWEEP_COLUMNS
from binembed.fileio import read_codes, read_dataset, read_vectors

BEMB_HEADER = 24


def rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


@pytest.fixture
def points(tmp_path):
    path = tmp_path / "x.bemb"
    assert main(["gen", "--n", "300", "--p", "512", "--seed", "1", "--out", str(path)]) == 0
    return path


class TestGen:
    def test_layout_and_determinism(self, points, tmp_path, capsys):
        assert points.stat().st_size == BEMB_HEADER + 4 * 300 * 512
        again = tmp_path / "y.bemb"
        main(["gen", "--n", "300", "--p", "512", "--seed", "1", "--out", str(again)])
        assert again.read_bytes() == points.read_bytes()
        assert "sha256=" in capsys.readouterr().out
        v = read_vectors(points)
        np.testing.assert_allclose(np.linalg.norm(v, axis=1), 1, atol=1e-6)

    def test_bad_count(self, tmp_path):
        assert main(["gen", "--n", "0", "--p", "4", "--out", str(tmp_path / "z")]) == 2


class TestEmbed:
    def test_fbe_round_trip(self, points, tmp_path, capsys):
        out = tmp_path / "c.bcod"
        assert main(["embed", "--in", str(points), "--out", str(out), "--algo", "fbe",
                     "--m", "960", "--b", "16", "--seed", "4"]) == 0
        codes = read_codes(out)
        assert codes.n_bits == 960 and codes.n_blocks == 16 and len(codes) == 300
        assert "n=1248" in capsys.readouterr().out
        cfg = resolve_config("fbe", 512, 960, 300, b=16, seed=4)
        assert fit(cfg).embed_batch(read_dataset(points)) == codes

    def test_urp_one_block(self, points, tmp_path):
        out = tmp_path / "u.bcod"
        assert main(["embed", "--in", str(points), "--out", str(out), "--algo", "URP",
                     "--m", "100"]) == 0
        assert read_codes(out).n_blocks == 1

    def test_indivisible_blocks(self, points, tmp_path):
        out = tmp_path / "f.bcod"
        args = ["embed", "--in", str(points), "--out", str(out), "--algo", "fbe",
                "--m", "100", "--b", "3"]
        assert main(args) == 2
        assert not out.exists()
        assert main(args + ["--round-m"]) == 0
        assert read_codes(out).n_bits == 102

    def test_missing_input(self, tmp_path):
        assert main(["embed", "--in", str(tmp_path / "nope"), "--out", str(tmp_path / "o"),
                     "--algo", "urp", "--m", "8"]) == 2


def test_resolve_config_defaults():
    cfg = resolve_config("fbe", 512, 1000, 300, seed=2)
    assert cfg.intermediate_dim == 1300 and 1000 % cfg.blocks == 0
    assert cfg.seed == SeedTree(2)
    # shared flags: B and n only apply to the algorithms that use them
    urp = resolve_config("urp", 512, 1000, 300, n=2000, b=4)
    assert urp.blocks == 1 and urp.intermediate_dim is None
    with pytest.raises(BinembedError):
        resolve_config("fbe", 512, 1000, 300, b=3)


def test_sweep_and_slice(tmp_path, capsys):
    sweep = tmp_path / "s.csv"
    assert main(["sweep", "--algos", "urp,fbe2", "--N", "20,40", "--m", "8,64,256",
                 "--p", "16", "--trials", "2", "--out", str(sweep)]) == 0
    recs = rows(sweep)
    assert list(recs[0]) == SWEEP_COLUMNS and len(recs) == 2 * 2 * 2 * 3
    sliced = tmp_path / "m.csv"
    assert main(["slice", "--in", str(sweep), "--delta", "0.3", "--algo", "urp",
                 "--out", str(sliced)]) == 0
    out = rows(sliced)
    assert [r["N"] for r in out] == ["20", "40"]
    assert all(8 < float(r["m"]) < 256 for r in out)
    # the slice error is a usage error, not a crash
    assert main(["slice", "--in", str(sweep), "--delta", "0.001", "--algo", "urp"]) == 2


def test_retrieve(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["retrieve", "--algos", "urp,fbe", "--m", "64", "--n-base", "200",
                 "--n-queries", "10", "--p", "16", "--k", "5", "--out", str(out)]) == 0
    got = rows(out)
    assert list(got[0]) == RETRIEVAL_COLUMNS
    assert [r["algorithm"] for r in got] == ["urp", "fbe"]
    assert all(0 <= float(r["recall"]) <= 1 for r in got)
    assert main(["retrieve", "--m", "1", "--metric", "geodesic", "--n-base", "50",
                 "--n-queries", "5", "--p", "8", "--out", str(out)]) == 0
    assert float(rows(out)[0]["recall"]) == 1.0


def test_verify_quick(capsys):
    assert main(["verify", "--trials", "20000", "--jl-reps", "5"]) == 0
    assert "checks passed" in capsys.readouterr().out
