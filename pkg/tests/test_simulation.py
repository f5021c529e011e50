import time

import numpy as np
import pytest

from debiased_lasso.simulation import (SimConfig, grid_csv, grid_text, load_grid, run_config,
                                       run_grid, standard_grid, write_grid)


def test_metric_identities():
    cfg = SimConfig(150, 40, 4, 1.0, realizations=5, seed=3)
    m = run_config(cfg)
    p, s0 = 40, 4
    assert m.ell == pytest.approx((s0 * m.ell_S + (p - s0) * m.ell_Sc) / p)
    assert m.cov == pytest.approx((s0 * m.cov_S + (p - s0) * m.cov_Sc) / p)
    for v in (m.cov, m.cov_S, m.cov_Sc, m.fp, m.tp):
        assert 0 <= v <= 1
    # every rate is a multiple of 1 / (R * |set|)
    assert (m.tp * 5 * s0) == pytest.approx(round(m.tp * 5 * s0))
    assert (m.fp * 5 * (p - s0)) == pytest.approx(round(m.fp * 5 * (p - s0)))
    assert len(m.sigma_hats) == 5 and np.all(np.isfinite(m.delta_inf))
    assert m.max_slack_excess <= 1e-8 and not m.fallback_identity


def test_global_null_row():
    m = run_config(SimConfig(200, 50, 0, 1.0, realizations=20, seed=1))
    assert m.tp is None and m.ell_S is None and m.cov_S is None
    # 1000 null tests: 0.05 +- 3 binomial s.d.
    assert abs(m.fp - 0.05) <= 3 * np.sqrt(0.05 * 0.95 / 1000)


def test_tiny_row_runtime():
    t0 = time.perf_counter()
    run_config(SimConfig(120, 40, 3, 1.0, realizations=10, seed=0))
    assert time.perf_counter() - t0 < 10


def test_deterministic_and_order_preserving():
    cfgs = [SimConfig(100, 30, 2, 1.0, realizations=3, seed=s) for s in (1, 2, 3)]
    a = run_grid(cfgs, workers=1)
    b = run_grid(cfgs, workers=3)
    assert grid_csv(a) == grid_csv(b)
    assert [r.config for r in a] == cfgs


def test_stream_isolation():
    base = [SimConfig(100, 30, 0, 1.0, realizations=3, seed=5),
            SimConfig(120, 30, 3, 0.5, realizations=3, seed=6)]
    both = run_grid(base)
    alone = run_grid(base[1:])
    assert grid_csv(both).splitlines()[2] == grid_csv(alone).splitlines()[1]


def test_failure_is_reported_per_row():
    good = SimConfig(50, 20, 2, 1.0, realizations=2)
    slow = SimConfig(50, 20, 2, 1.0, realizations=3, timeout=1e-9)
    rows = run_grid([good, slow, good])
    assert rows[0].ok and rows[2].ok and not rows[1].ok
    assert "realization 0" in rows[1].error and "1/3 realizations" in rows[1].error
    lines = grid_csv(rows).splitlines()
    assert lines[1].endswith(",ok") and lines[2].endswith(",failed")
    assert lines[2].split(",")[5:13] == [""] * 8
    assert "FAILED" in grid_text(rows)


def test_csv_layout(tmp_path):
    rows = run_grid([SimConfig(100, 30, 2, 1.0, realizations=2)])
    csv_path, txt_path = write_grid(rows, tmp_path)
    raw = csv_path.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "n,p,s0,b,method,ell,ell_S,ell_Sc,cov,cov_S,cov_Sc,fp,tp,status"
    fields = lines[1].split(",")
    assert fields[:5] == ["100", "30", "2", "1", "jm"] and fields[-1] == "ok"
    assert float(fields[5]) == rows[0].metrics.ell  # 17 digits round-trip
    assert "(100,30,2,1)" in txt_path.read_text()


def test_load_grid(tmp_path):
    path = tmp_path / "grid.toml"
    path.write_text("[defaults]\nrealizations = 4\nseed = 9\n\n"
                    "[[config]]\nn = 100\np = 30\ns0 = 2\nb = 0.5\n\n"
                    "[[config]]\nn = 120\np = 30\ns0 = 0\nb = 1.0\nmethod = 'nodewise'\n")
    cfgs = load_grid(path)
    assert [c.n for c in cfgs] == [100, 120]
    assert cfgs[0].realizations == 4 and cfgs[1].seed == 9
    assert cfgs[1].method == "nodewise"
    assert all(c.method == "jm" for c in load_grid(path, method="jm"))


def test_load_grid_rejects_unknown_keys(tmp_path):
    path = tmp_path / "grid.toml"
    path.write_text("[[config]]\nn = 100\np = 30\ns0 = 2\nb = 0.5\nreps = 3\n")
    with pytest.raises(ValueError, match="reps"):
        load_grid(path)


def test_standard_grid_order():
    g = standard_grid()
    assert [(c.n, c.p, c.s0, c.b) for c in g] == [
        (1000, 600, 10, 0.5), (1000, 600, 10, 0.25), (1000, 600, 10, 0.1),
        (1000, 600, 30, 0.5), (1000, 600, 30, 0.25), (1000, 600, 30, 0.1)]


@pytest.mark.parametrize("kw", [dict(s0=50), dict(alpha=0.0), dict(realizations=0),
                                dict(method="ols"), dict(sigma=-1.0)])
def test_config_validation(kw):
    base = dict(n=100, p=30, s0=2, b=1.0)
    base.update(kw)
    with pytest.raises(ValueError):
        SimConfig(**base)


def test_bias_term_summary(capsys):
    m = run_config(SimConfig(1000, 600, 10, 0.1, realizations=20, seed=0))
    d = np.array(m.delta_inf)
    assert np.all(np.isfinite(d))
    print(f"\n||Delta||_inf over 20 noise draws: median {np.median(d):.4f}, max {d.max():.4f}")
