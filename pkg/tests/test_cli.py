import numpy as np
import pytest

from obsfmm import storage
from obsfmm.cli import EXIT_ARGS, EXIT_NUMERICAL, EXIT_OK, main


@pytest.fixture
def workdir(tmp_path):
    obs = tmp_path / "obs.csv"
    assert main(["grid", "--lat-count", "16", "--lon-count", "16", "-o", str(obs)]) == EXIT_OK
    return tmp_path


def test_grid_stdout(capsys):
    assert main(["grid", "--lat-count", "2", "--lon-count", "3"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "index,lat,lon" and len(lines) == 7


def test_pipeline(workdir, capsys):
    w = workdir
    obs = str(w / "obs.csv")
    assert main(["build-cov", "--obs", obs, "--kind", "soar", "--lengthscale", "80", "-o", str(w / "R.bin")]) == 0
    assert main(["recondition", str(w / "R.bin"), "--method", "rr", "--kappa", "500", "-o", str(w / "Rr.bin")]) == 0
    assert main(["invert", str(w / "Rr.bin"), "-o", str(w / "A.bin")]) == 0
    assert main(["plan", "--matrix", str(w / "A.bin"), "--obs", obs, "-p", "16", "-o", str(w / "plan.bin")]) == 0
    d = np.random.default_rng(0).standard_normal(256)
    np.savetxt(w / "d.txt", d)
    assert main(["apply", str(w / "plan.bin"), str(w / "d.txt"), "-o", str(w / "q.txt")]) == 0
    A = storage.load_covariance(w / "A.bin").matrix
    q = np.loadtxt(w / "q.txt")
    # rank 16 covers every box of a 16x16 grid exactly
    np.testing.assert_allclose(q, A @ d, rtol=1e-10, atol=1e-10)
    assert main(["apply", str(w / "plan.bin"), str(w / "d.txt"), "--part", "near", "-o", str(w / "n.txt")]) == 0
    assert main(["apply", str(w / "plan.bin"), str(w / "d.txt"), "--part", "far", "-o", str(w / "f.txt")]) == 0
    np.testing.assert_allclose(np.loadtxt(w / "n.txt") + np.loadtxt(w / "f.txt"), q, rtol=1e-14, atol=1e-14)


def test_tree_table(workdir, capsys):
    assert main(["tree", "--obs", str(workdir / "obs.csv")]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("#box") and len(out) == 85


def test_cost_model(capsys):
    assert main(["cost-model", "--ts", "1", "--tw", "0", "--scheme", "row-wise"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out == ["scheme,operation,participants,message_size,time_seconds,upper_bound",
                   "row-wise,all-to-all broadcast,64,54,6.0,0"]


def test_experiment_seed_override(tmp_path, capsys):
    cfg = tmp_path / "sc.cfg"
    cfg.write_text("scenario = rank-sweep\nfamilies = soar\nranks = 1-2\nrealizations = 3\n"
                   "lat_count = 12\nlon_count = 12\nseed = 1\n")
    assert main(["experiment", str(cfg), "-o", str(tmp_path / "a.csv")]) == EXIT_OK
    assert main(["experiment", str(cfg), "--seed", "1", "-o", str(tmp_path / "b.csv")]) == EXIT_OK
    assert main(["experiment", str(cfg), "--seed", "2", "-o", str(tmp_path / "c.csv")]) == EXIT_OK
    a, b, c = ((tmp_path / f"{n}.csv").read_text() for n in "abc")
    assert a == b != c
    assert ",2,ok" in c


def test_numerical_failure_exit(tmp_path, capsys):
    obs = tmp_path / "obs.csv"
    main(["grid", "--lat-count", "20", "--lon-count", "20", "-o", str(obs)])
    assert main(["build-cov", "--obs", str(obs), "--kind", "gaussian", "--lengthscale", "300",
                 "-o", str(tmp_path / "R.bin")]) == EXIT_OK
    assert main(["invert", str(tmp_path / "R.bin"), "-o", str(tmp_path / "A.bin")]) == EXIT_NUMERICAL
    assert "numerical failure" in capsys.readouterr().err


def test_argument_errors(tmp_path, capsys):
    assert main(["invert", str(tmp_path / "missing.bin"), "-o", str(tmp_path / "x")]) == EXIT_ARGS
    (tmp_path / "junk.bin").write_bytes(b"nonsense")
    assert main(["apply", str(tmp_path / "junk.bin"), "-"]) == EXIT_ARGS
    with pytest.raises(SystemExit) as exc:
        main(["build-cov", "--kind", "soar"])
    assert exc.value.code == EXIT_ARGS


def test_mismatched_plan_inputs(workdir):
    w = workdir
    main(["grid", "--lat-count", "4", "--lon-count", "4", "-o", str(w / "small.csv")])
    main(["build-cov", "--obs", str(w / "obs.csv"), "--kind", "foar", "--lengthscale", "50", "-o", str(w / "R.bin")])
    assert main(["plan", "--matrix", str(w / "R.bin"), "--obs", str(w / "small.csv"), "-p", "2",
                 "-o", str(w / "p.bin")]) == EXIT_ARGS
